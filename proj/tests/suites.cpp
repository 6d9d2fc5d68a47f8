#include "suites.hpp"

#include "mcfd/expectation.hpp"
#include "mcfd/sde.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace suites {

using namespace mcfd;

namespace {

// p(x) = sum c_ij x0^i x1^j with i + j <= 4 (x1 ignored in d = 1)
struct Poly {
    double c[5][5] = {};
    std::size_t d = 1;

    static double pw(double x, int k) { return k < 0 ? 0.0 : std::pow(x, k); }

    double value(const Vec& x) const {
        double s = 0.0;
        for (int i = 0; i <= 4; ++i)
            for (int j = 0; i + j <= 4; ++j) s += c[i][j] * pw(x[0], i) * (d > 1 ? pw(x[1], j) : (j == 0));
        return s;
    }
    // derivative of order (a, b)
    double deriv(const Vec& x, int a, int b) const {
        double s = 0.0;
        for (int i = a; i <= 4; ++i)
            for (int j = b; i + j <= 4; ++j) {
                double f = c[i][j];
                for (int k = 0; k < a; ++k) f *= i - k;
                for (int k = 0; k < b; ++k) f *= j - k;
                s += f * pw(x[0], i - a) * (d > 1 ? pw(x[1], j - b) : (j - b == 0));
            }
        return s;
    }
};

Poly random_poly(std::mt19937_64& rng, std::size_t d) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Poly p;
    p.d = d;
    for (int i = 0; i <= 4; ++i)
        for (int j = 0; i + j <= 4; ++j) p.c[i][j] = (d == 1 && j > 0) ? 0.0 : u(rng);
    return p;
}

}  // namespace


double hermite_identity_error(std::uint64_t seed, std::size_t trials) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t d : {1, 2}) {
        const auto dd = static_cast<Eigen::Index>(d);
        const QuadratureRule rule = gauss_hermite_rule(8, d);
        for (std::size_t trial = 0; trial < trials; ++trial) {
            const Poly p = random_poly(rng, d);
            Mat s = Mat::Identity(dd, dd);
            s(0, 0) = 0.8;
            if (d == 2) {
                s(0, 1) = 0.3;
                s(1, 1) = 1.4;
            }
            Vec mu = Vec::Constant(dd, 0.2);
            Vec x = Vec::Constant(dd, -0.3);
            const double h = 0.05 * static_cast<double>(1 + trial % 3);
            const DiffusionSpec spec = constant_diffusion(mu, s);
            const auto psi = [&p](double, const Vec& y) { return p.value(y); };
            const OneStepMoments m = one_step_moments(psi, spec, 0.0, x, h, rule);
            Vec g = Vec::Zero(dd);
            Mat hess = Mat::Zero(dd, dd);
            for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
                const Vec y = x + mu * h + s * (std::sqrt(h) * rule.nodes[j]);
                const double w = rule.weights[j];
                g[0] += w * p.deriv(y, 1, 0);
                hess(0, 0) += w * p.deriv(y, 2, 0);
                if (d == 2) {
                    g[1] += w * p.deriv(y, 0, 1);
                    hess(1, 1) += w * p.deriv(y, 0, 2);
                    hess(0, 1) += w * p.deriv(y, 1, 1);
                    hess(1, 0) += w * p.deriv(y, 1, 1);
                }
            }
            worst = std::max({worst, (m.d1 - g).cwiseAbs().maxCoeff(), (m.d2 - hess).cwiseAbs().maxCoeff()});
        }
    }
    return worst;
}

NonlinearOperator bellman_f(double a_lo, double a_hi, double b, double beta) {
    NonlinearOperator f;
    f.name = "bellman";
    f.dim = 1;
    f.eval = [=](double, const Vec&, double r, const Vec& p, const Mat& g) {
        return std::max(a_lo * g(0, 0), a_hi * g(0, 0)) + b * std::abs(p[0]) - beta * r;
    };
    f.partials = [=](double, const Vec&, double, const Vec& p, const Mat& g) {
        Partials out{-beta, Vec::Constant(1, p[0] >= 0.0 ? b : -b), Mat::Constant(1, 1, g(0, 0) >= 0.0 ? a_hi : a_lo)};
        return out;
    };
    f.bounds.f_at_zero = 0.0;
    f.bounds.fr_sup = beta;
    f.bounds.c1 = bellman_c1(a_lo, b, beta);
    return f;
}

double bellman_c1(double a_lo, double b, double beta) { return 0.25 * b * b / a_lo + std::abs(beta); }

namespace {

GridAxes axes() {
    GridAxes a;
    a.nodes = {201};
    a.lo = Vec::Constant(1, -5.0);
    a.hi = Vec::Constant(1, 5.0);
    a.interpolation = Interpolation::kMultilinear;
    return a;
}

// sum of a few random waves plus a random jump, bounded by 3
void random_profile(std::mt19937_64& rng, std::vector<double>& out, const GridLayer& layer) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double a1 = u(rng), a2 = u(rng), w1 = 3.0 * u(rng), w2 = 6.0 * u(rng), ph = 3.0 * u(rng);
    const double jump = u(rng), at = 4.0 * u(rng);
    out.resize(layer.size());
    for (std::size_t q = 0; q < layer.size(); ++q) {
        const double x = layer.node(q)[0];
        out[q] = a1 * std::sin(w1 * x + ph) + a2 * std::cos(w2 * x) * std::exp(-0.1 * x * x) + (x > at ? jump : 0.0);
    }
}

double sup_abs_diff(const GridLayer& a, const GridLayer& b) {
    return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

}  // namespace

GridState random_layer(std::uint64_t seed, bool ordered_above, const GridState* below) {
    std::mt19937_64 rng(seed);
    GridState s;
    s.t = 1.0;
    s.value = GridLayer(axes());
    std::vector<double> v;
    random_profile(rng, v, s.value);
    for (std::size_t q = 0; q < v.size(); ++q) {
        double x = v[q];
        if (ordered_above && below) x = below->value.values()[static_cast<Eigen::Index>(q)] + 0.5 * std::abs(x);
        s.value.values()[static_cast<Eigen::Index>(q)] = x;
    }
    return s;
}

PairReport stability(const NonlinearOperator& f, double c1, double h, std::size_t pairs, std::uint64_t seed) {
    const DiffusionSpec spec = constant_diffusion(Vec::Zero(1), Mat::Identity(1, 1));
    const QuadratureRule rule = gauss_hermite_rule(8, 1);
    PairReport rep;
    for (std::size_t k = 0; k < pairs; ++k) {
        const GridState phi = random_layer(child_seed(seed, 2 * k), false);
        const GridState psi = random_layer(child_seed(seed, 2 * k + 1), false);
        const GridState tphi = apply_one_step(phi, f, spec, 1.0 - h, h, 1, rule);
        const GridState tpsi = apply_one_step(psi, f, spec, 1.0 - h, h, 1, rule);
        const double before = sup_abs_diff(phi.value, psi.value);
        const double after = sup_abs_diff(tphi.value, tpsi.value);
        const double ratio = after / before;
        rep.worst_ratio = std::max(rep.worst_ratio, ratio);
        if (after > (1.0 + c1 * h) * before + 1e-8) ++rep.violations;
        ++rep.pairs;
    }
    return rep;
}

PairReport monotonicity(const NonlinearOperator& f, double h, std::size_t pairs, std::uint64_t seed) {
    const DiffusionSpec spec = constant_diffusion(Vec::Zero(1), Mat::Identity(1, 1));
    const QuadratureRule rule = gauss_hermite_rule(8, 1);
    PairReport rep;
    for (std::size_t k = 0; k < pairs; ++k) {
        const GridState phi = random_layer(child_seed(seed, 2 * k), false);
        const GridState psi = random_layer(child_seed(seed, 2 * k + 1), true, &phi);
        const GridState tphi = apply_one_step(phi, f, spec, 1.0 - h, h, 1, rule);
        const GridState tpsi = apply_one_step(psi, f, spec, 1.0 - h, h, 1, rule);
        const double gap = (tphi.value.values() - tpsi.value.values()).maxCoeff();
        rep.worst_ratio = std::max(rep.worst_ratio, gap);
        if (gap > 1e-12) ++rep.violations;
        ++rep.pairs;
    }
    return rep;
}

std::size_t cir_negative_outputs(std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::size_t negative = 0;
    for (std::size_t i = 0; i < draws; ++i) {
        double k, m, c;
        if (i % 2 == 0) {
            k = 0.1;  // the Heston parameters
            m = 0.3;
            c = 0.2;
        } else {
            k = 0.01 + 2.0 * u(rng);
            m = 0.01 + u(rng);
            c = std::sqrt(4.0 * k * m) * u(rng);  // inside the positivity regime
        }
        const double y = (i % 3 == 0) ? 1e-6 * u(rng) : 2.0 * u(rng);
        const double xi = (i % 5 == 0) ? -10.0 + 20.0 * u(rng) : 3.0 * g(rng);
        const double h = 1e-4 + u(rng);
        if (cir_implicit_milstein_step(k, m, c, y, xi, h) < 0.0) ++negative;
    }
    return negative;
}

}  // namespace suites
