#include "doctest.h"

#include "mcfd/experiments.hpp"
#include "mcfd/nonlinearity.hpp"
#include "mcfd/sde.hpp"

#include <cmath>
#include <random>

using namespace mcfd;

namespace {

Mat random_sym(std::mt19937_64& rng, Eigen::Index d, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    Mat g(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i; j < d; ++j) g(i, j) = g(j, i) = n(rng);
    return g;
}

Vec random_vec(std::mt19937_64& rng, Eigen::Index d, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    Vec v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = n(rng);
    return v;
}

// max over a coarse grid, then over a fine grid around the coarse argmax
template <class Q>
double grid_sup(const Q& q, double lo, double hi, int coarse = 20000, int fine = 20000) {
    const double step = (hi - lo) / coarse;
    double best = -INFINITY, arg = lo;
    for (int i = 0; i <= coarse; ++i) {
        const double th = lo + step * i;
        const double v = q(th);
        if (v > best) {
            best = v;
            arg = th;
        }
    }
    const double a = std::max(lo, arg - step), b = std::min(hi, arg + step);
    for (int i = 0; i <= fine; ++i) best = std::max(best, q(a + (b - a) * i / fine));
    return best;
}

// Heston G by brute force over theta in [eps, M]
double heston_grid(const HestonParams& p, const Vec& x, const Vec& z, const Mat& g) {
    const double y = std::max(x[1], p.eps);
    const auto q = [&](double th) { return 0.5 * th * th * y * g(0, 0) + th * (p.mu * z[0] + p.rho * p.c * y * g(0, 1)); };
    return 0.5 * p.sigma * p.sigma * g(0, 0) - grid_sup(q, p.eps, p.M);
}

// Two-asset Hamiltonian, sup over eps <= |theta_i| <= M coordinate-wise
double hjb5d_hamiltonian(const Hjb5dParams& p, const Vec& x, const Vec& z, const Mat& g, double t1, double t2) {
    const auto& m = p.market;
    const double s1 = std::max(x[2], p.eps), y1 = std::max(x[3], p.eps), y2 = std::max(x[4], p.eps);
    return t1 * (m.mu1 - x[1]) * z[0] + t2 * (m.mu2 - x[1]) * z[0] +
           t1 * m.sigma1 * m.sigma1 * y1 * std::pow(s1, 2.0 * m.beta1 - 1.0) * g(0, 2) +
           0.5 * (t1 * t1 * m.sigma1 * m.sigma1 * y1 * std::pow(s1, 2.0 * m.beta1 - 2.0) +
                  t2 * t2 * m.sigma2 * m.sigma2 * y2) * g(0, 0);
}

double hjb5d_grid(const Hjb5dParams& p, const Vec& x, const Vec& z, const Mat& g) {
    // the Hamiltonian separates into theta1 and theta2 parts
    auto part = [&](int which) {
        auto q = [&](double th) {
            return which == 0 ? hjb5d_hamiltonian(p, x, z, g, th, 0.0) : hjb5d_hamiltonian(p, x, z, g, 0.0, th);
        };
        return std::max(grid_sup(q, p.eps, p.M), grid_sup([&](double s) { return q(-s); }, p.eps, p.M));
    };
    return 0.5 * p.sigma * p.sigma * g(0, 0) - x[0] * x[1] * z[0] - (part(0) + part(1));
}

Hjb5dParams five_d() {
    Hjb5dParams p;
    p.market.kappa = 0.1;
    p.sigma = 0.4;
    return p;
}

}  // namespace

TEST_SUITE("nonlinearity") {

TEST_CASE("linear operator") {
    const Mat g = Mat::Constant(1, 1, 2.0);
    CHECK(linear_f(0.0)(0.0, Vec::Zero(1), 1.0, Vec::Ones(1), g) == 0.0);
    CHECK(linear_f(0.25)(0.0, Vec::Zero(1), 1.0, Vec::Ones(1), g) == doctest::Approx(0.5));
    const Partials part = linear_f(0.25).partials(0.0, Vec::Zero(1), 0.0, Vec::Zero(1), g);
    CHECK(part.fr == 0.0);
    CHECK(part.fp[0] == 0.0);
    CHECK(part.fgamma(0, 0) == 0.25);
    CHECK_THROWS_AS(linear_f(-1.0), Error);
}

TEST_CASE("mean curvature term") {
    Vec e1 = Vec::Zero(3);
    e1[0] = 1.0;
    CHECK(mcf_level_set_term(std::sqrt(2.0), e1, Mat::Identity(3, 3)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mcf_level_set_term(1.0, Vec::Zero(3), Mat::Identity(3, 3)) == doctest::Approx(-1.5));
    // generator form is the negated, capped term
    const NonlinearOperator f = mcf_f(1.0, 200.0, 3);
    CHECK(f(0.0, Vec::Zero(3), 0.0, Vec::Zero(3), Mat::Identity(3, 3)) == doctest::Approx(1.5));
    // sigma = 1: G = -tr(gamma)/2 + gamma_11, so G = +-1000 for gamma = -+2000 I
    CHECK(f(0.0, Vec::Zero(3), 0.0, e1, Mat::Identity(3, 3) * -2000.0) == -200.0);
    CHECK(f(0.0, Vec::Zero(3), 0.0, e1, Mat::Identity(3, 3) * 2000.0) == 200.0);
    CHECK(*f.cap == 200.0);
}

TEST_CASE("mean curvature term is homogeneous in gamma below the cap") {
    std::mt19937_64 rng(3);
    const NonlinearOperator f = mcf_f(1.0, 200.0, 3);
    for (int k = 0; k < 200; ++k) {
        const Vec z = random_vec(rng, 3, 1.0);
        const Mat g = random_sym(rng, 3, 1.0);
        for (double lambda : {0.1, 2.0, 7.5}) {
            CHECK(mcf_level_set_term(1.0, z, lambda * g) == doctest::Approx(lambda * mcf_level_set_term(1.0, z, g)).epsilon(1e-12));
            CHECK(f(0.0, z, 0.0, z, lambda * g) == doctest::Approx(lambda * f(0.0, z, 0.0, z, g)).epsilon(1e-12));
        }
    }
}

TEST_CASE("quadratic sup") {
    CHECK(sup_quadratic(-2.0, 1.0, 0.0, 10.0).argmax == doctest::Approx(0.5));
    CHECK(sup_quadratic(-2.0, 1.0, 0.0, 10.0).value == doctest::Approx(0.25));
    CHECK(sup_quadratic(-2.0, 100.0, 0.0, 10.0).argmax == 10.0);
    CHECK(sup_quadratic(1.0, -1.0, 0.0, 10.0).argmax == 10.0);
    CHECK(sup_quadratic_symmetric(-1.0, -3.0, 0.5, 10.0).argmax == doctest::Approx(-3.0));
}

TEST_CASE("heston closed form sup examples") {
    HestonParams p;
    p.sigma = 0.4;
    Vec x(2);
    x << 1.0, 0.3;
    Vec z(2);
    z << 0.5, 0.0;
    Mat g = Mat::Zero(2, 2);
    g(0, 0) = -0.4;
    // interior optimum theta* = -(mu z1) / (y g11)
    const double th = -(p.mu * z[0]) / (0.3 * g(0, 0));
    CHECK(th > p.eps);
    CHECK(th < p.M);
    const double expected = 0.5 * p.sigma * p.sigma * g(0, 0) + (p.mu * z[0]) * (p.mu * z[0]) / (2.0 * 0.3 * g(0, 0));
    CHECK(heston_printed_form(p, x, z, g) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(heston_f(p)(0.0, x, 0.0, z, g) == doctest::Approx(-expected).epsilon(1e-12));
    CHECK(std::abs(heston_printed_form(p, x, z, g) - heston_grid(p, x, z, g)) < 1e-8);

    // no gradient: the optimizer sits at eps
    z.setZero();
    const double boundary = 0.5 * p.sigma * p.sigma * g(0, 0) - 0.5 * p.eps * p.eps * 0.3 * g(0, 0);
    CHECK(heston_printed_form(p, x, z, g) == doctest::Approx(boundary).epsilon(1e-12));
    CHECK(std::abs(heston_printed_form(p, x, z, g) - heston_grid(p, x, z, g)) < 1e-8);

    // large gradient: the cap M binds
    z << 1000.0, 0.0;
    const double capped = 0.5 * p.sigma * p.sigma * g(0, 0) - (0.5 * 1600.0 * 0.3 * g(0, 0) + 40.0 * p.mu * 1000.0);
    CHECK(heston_printed_form(p, x, z, g) == doctest::Approx(capped).epsilon(1e-12));
    CHECK_THROWS_AS(heston_f(HestonParams{0.15, 0.1, 0.3, 0.2, 0.0, 1.0, 0.0, 40.0}), Error);
}

TEST_CASE("hjb5d examples") {
    const Hjb5dParams p = five_d();
    Vec x(5);
    x << 1.0, 0.07, 1.0, 1.0, 0.3;
    Vec z = Vec::Zero(5);
    z[0] = 1.0;
    Mat g = Mat::Zero(5, 5);
    // with gamma = 0 the Hamiltonian is linear in theta; the rate term is -x1 x2 z1
    const double pure = hjb5d_printed_form(p, x, z, g);
    const double sup = 40.0 * std::abs(p.market.mu1 - 0.07) + 40.0 * std::abs(p.market.mu2 - 0.07);
    CHECK(pure == doctest::Approx(-0.07 - sup).epsilon(1e-12));

    // z1 = 0, g11 < 0, g13 = 0: boundary |theta| = eps
    z.setZero();
    g(0, 0) = -1.0;
    CHECK(std::abs(hjb5d_printed_form(p, x, z, g) - hjb5d_grid(p, x, z, g)) < 1e-6);
    const auto& m = p.market;
    const double at_eps = 0.5 * p.sigma * p.sigma * -1.0 -
                          0.5 * p.eps * p.eps * (m.sigma1 * m.sigma1 * 1.0 + m.sigma2 * m.sigma2 * 0.3) * -1.0;
    CHECK(hjb5d_printed_form(p, x, z, g) == doctest::Approx(at_eps).epsilon(1e-12));
}

TEST_CASE("hjb5d on a dense two-dimensional theta grid") {
    const Hjb5dParams p = five_d();
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.2, 1.5);
    for (int k = 0; k < 3; ++k) {
        Vec x(5);
        x << u(rng), 0.07, u(rng), u(rng), u(rng);
        Vec z = random_vec(rng, 5, 1.0);
        Mat g = random_sym(rng, 5, 1.0);
        g(0, 0) = -std::abs(g(0, 0)) - 0.5;
        // 1000 x 1000 points per sign quadrant, refined around the best one
        double best = -INFINITY, b1 = 0.0, b2 = 0.0;
        const int n = 1000;
        for (int s1 : {-1, 1})
            for (int s2 : {-1, 1})
                for (int i = 0; i <= n; ++i)
                    for (int j = 0; j <= n; ++j) {
                        const double t1 = s1 * (p.eps + (p.M - p.eps) * i / n);
                        const double t2 = s2 * (p.eps + (p.M - p.eps) * j / n);
                        const double v = hjb5d_hamiltonian(p, x, z, g, t1, t2);
                        if (v > best) {
                            best = v;
                            b1 = t1;
                            b2 = t2;
                        }
                    }
        const double w = (p.M - p.eps) / n;
        for (int i = -200; i <= 200; ++i)
            for (int j = -200; j <= 200; ++j) {
                const double t1 = b1 + w * i / 200.0, t2 = b2 + w * j / 200.0;
                if (std::abs(t1) < p.eps || std::abs(t1) > p.M || std::abs(t2) < p.eps || std::abs(t2) > p.M) continue;
                best = std::max(best, hjb5d_hamiltonian(p, x, z, g, t1, t2));
            }
        const double oracle = 0.5 * p.sigma * p.sigma * g(0, 0) - x[0] * x[1] * z[0] - best;
        CHECK(std::abs(hjb5d_printed_form(p, x, z, g) - oracle) < 1e-6);
    }
}

TEST_CASE("closed-form sups match brute force over 1000 random probes") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    HestonParams hp;
    hp.sigma = 0.4;
    hp.rho = 0.3;
    const Hjb5dParams fp = five_d();
    double worst_h = 0.0, worst_5 = 0.0;
    for (int k = 0; k < 1000; ++k) {
        Vec x(2);
        x << 2.0 * u(rng), u(rng);
        const Vec z = random_vec(rng, 2, 1.0);
        const Mat g = random_sym(rng, 2, 1.0);
        worst_h = std::max(worst_h, std::abs(heston_printed_form(hp, x, z, g) - heston_grid(hp, x, z, g)) /
                                        std::max(1.0, std::abs(heston_grid(hp, x, z, g))));
        Vec x5(5);
        x5 << 2.0 * u(rng), 0.2 * u(rng), 0.3 + u(rng), 2.0 * u(rng), u(rng);
        const Vec z5 = random_vec(rng, 5, 1.0);
        const Mat g5 = random_sym(rng, 5, 1.0);
        worst_5 = std::max(worst_5, std::abs(hjb5d_printed_form(fp, x5, z5, g5) - hjb5d_grid(fp, x5, z5, g5)) /
                                        std::max(1.0, std::abs(hjb5d_grid(fp, x5, z5, g5))));
    }
    CHECK(worst_h < 1e-5);
    CHECK(worst_5 < 1e-5);
}

TEST_CASE("declared partials match central differences") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    HestonParams hp;
    hp.sigma = 0.4;
    hp.rho = 0.2;
    const std::vector<NonlinearOperator> ops = {
        linear_f(0.25), linear_f(0.1, 2), mcf_f(1.0, 200.0, 2), mcf_f(1.8, 200.0, 3), heston_f(hp), hjb5d_f(five_d()),
        monotonicity_transform(heston_f(hp), 0.7, 1.0)};
    for (const auto& f : ops) {
        const auto d = static_cast<Eigen::Index>(f.dim);
        int checked = 0;
        for (int k = 0; k < 100; ++k) {
            Probe pr;
            pr.t = 0.3 * u(rng);
            pr.x = Vec::Constant(d, 0.5) + random_vec(rng, d, 0.2).cwiseAbs();
            pr.r = u(rng);
            pr.p = random_vec(rng, d, 1.0);
            pr.gamma = random_sym(rng, d, 1.0);
            const Partials fd = finite_difference_partials(f, pr);
            const Partials an = f.partials(pr.t, pr.x, pr.r, pr.p, pr.gamma);
            auto close = [](double a, double b) { return std::abs(a - b) <= 1e-4 * std::max(1.0, std::abs(b)); };
            CHECK(close(an.fr, fd.fr));
            for (Eigen::Index i = 0; i < d; ++i) {
                CHECK(close(an.fp[i], fd.fp[i]));
                for (Eigen::Index j = 0; j < d; ++j) CHECK(close(an.fgamma(i, j), fd.fgamma(i, j)));
            }
            ++checked;
        }
        CHECK(checked == 100);
    }
}

TEST_CASE("monotonicity transform") {
    const NonlinearOperator lin = linear_f(0.3);
    const Vec x = Vec::Zero(1), p = Vec::Constant(1, 0.4);
    const Mat g = Mat::Constant(1, 1, -1.2);
    CHECK(monotonicity_transform(lin, 0.0, 1.0)(0.2, x, 0.5, p, g) == lin(0.2, x, 0.5, p, g));
    CHECK(monotonicity_transform(lin, 2.0, 1.0)(0.2, x, 0.5, p, g) == doctest::Approx(0.3 * -1.2 + 2.0 * 0.5).epsilon(1e-14));

    HestonParams hp;
    hp.sigma = 0.4;
    const NonlinearOperator f = heston_f(hp);
    const double theta = 1.3, T = 1.0;
    const NonlinearOperator fb = monotonicity_transform(f, theta, T);
    std::mt19937_64 rng(8);
    for (int k = 0; k < 100; ++k) {
        Probe pr;
        pr.t = 0.5;
        pr.x = Vec::Constant(2, 0.3) + random_vec(rng, 2, 0.1).cwiseAbs();
        pr.r = 0.7;
        pr.p = random_vec(rng, 2, 1.0);
        pr.gamma = random_sym(rng, 2, 1.0);
        // undo the scaling: F = e^{-th tau} (Fbar(e^{th tau} .) - th e^{th tau} r)
        const double grow = std::exp(theta * (T - pr.t));
        const double back =
            (fb(pr.t, pr.x, grow * pr.r, grow * pr.p, grow * pr.gamma) - theta * grow * pr.r) / grow;
        const double direct = f(pr.t, pr.x, pr.r, pr.p, pr.gamma);
        CHECK(std::abs(back - direct) <= 1e-13 * std::max(1.0, std::abs(direct)));
        // Fbar_r = F_r + theta
        CHECK(finite_difference_partials(fb, pr).fr == doctest::Approx(theta).epsilon(1e-6));
    }
    CHECK_THROWS_AS(monotonicity_transform(lin, -1.0, 1.0), Error);
}

TEST_CASE("domination check examples") {
    Probe pr;
    pr.x = Vec::Zero(1);
    pr.p = Vec::Zero(1);
    pr.gamma = Mat::Constant(1, 1, 0.5);
    const DiffusionSpec unit = constant_diffusion(Vec::Zero(1), Mat::Identity(1, 1));
    const DominationReport ok = check_domination(linear_f(0.5), unit, {pr});
    CHECK(ok.passed());
    CHECK(ok.elliptic());
    CHECK(ok.worst_domination == doctest::Approx(-0.5).epsilon(1e-6));

    const DiffusionSpec small = constant_diffusion(Vec::Zero(1), Mat::Constant(1, 1, 0.5));
    const DominationReport bad = check_domination(linear_f(1.0), small, {pr});
    CHECK_FALSE(bad.passed());
    CHECK(bad.worst_domination == doctest::Approx(1.0 - 0.25).epsilon(1e-6));
    CHECK(bad.min_mf >= 0.0);
    CHECK_THROWS_AS(check_domination(linear_f(1.0), small, {}), Error);
}

TEST_CASE("heston domination: small diffusion is flagged, sigma = 0.4 passes") {
    HestonParams hp;
    hp.sigma = 0.2;
    const auto probes = heston_probes(1.0);
    const DominationReport weak = check_domination(heston_f(hp), heston_diffusion(0.2, hp.k, hp.m, hp.c), probes);
    CHECK_FALSE(weak.passed());
    CHECK(weak.worst_domination > 0.0);
    hp.sigma = 0.4;
    const DominationReport strong = check_domination(heston_f(hp), heston_diffusion(0.4, hp.k, hp.m, hp.c), probes);
    CHECK(strong.passed());
}

}  // TEST_SUITE
