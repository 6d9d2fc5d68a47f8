#include "mcfd/oracles.hpp"

#include "mcfd/expectation.hpp"
#include "mcfd/sde.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mcfd {

double linear_exact(const std::function<double(double)>& g, double c, double t, double x,
                    double T, std::size_t order) {
    if (c < 0.0) throw Error("linear_exact: c must be nonnegative");
    if (t > T) throw Error("linear_exact: t must not exceed T");
    if (t == T) return g(x);
    if (order < 40) throw Error("linear_exact: quadrature order must be >= 40");
    const QuadratureRule rule = gauss_hermite_1d(order);
    const double s = std::sqrt((1.0 + 2.0 * c) * (T - t));
    double acc = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) acc += rule.weights[j] * g(x + s * rule.nodes[j][0]);
    return acc;
}

double sphere_radius(double t, double R) {
    if (t < 0.0) throw Error("sphere_radius: t must be nonnegative");
    if (t >= R * R) throw Error("sphere_radius: the surface is extinct for t >= R^2");
    return 2.0 * std::sqrt(R * R - t);
}

ZariphopoulouResult zariphopoulou_value(const HestonParams& p, double eta, double x, double y,
                                        double t, double T, std::size_t paths,
                                        std::uint64_t seed, std::size_t steps) {
    if (!(p.rho * p.rho < 1.0)) throw Error("zariphopoulou_value: need rho^2 < 1");
    if (!(p.k > 0.0) || p.m < 0.0 || p.c < 0.0 || y < 0.0)
        throw Error("zariphopoulou_value: parameters must be positive");
    if (paths < 2 || steps < 1) throw Error("zariphopoulou_value: need paths >= 2 and steps >= 1");
    if (t > T) throw Error("zariphopoulou_value: t must not exceed T");

    ZariphopoulouResult out;
    const double scale = -std::exp(-eta * x);
    if (p.mu == 0.0 || t == T) {
        out.value = scale;
        return out;
    }
    const double level = p.m - p.mu * p.c * p.rho / p.k;
    const double h = (T - t) / static_cast<double>(steps);
    const double power = 1.0 - p.rho * p.rho;
    const double mu2 = p.mu * p.mu;
    auto floor = [&](double v) {
        if (v < 1e-8) {
            ++out.guarded;
            return 1e-8;
        }
        return v;
    };

    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t j = 0; j < paths; ++j) {
        std::mt19937_64 rng(child_seed(seed, j));
        std::normal_distribution<double> normal;
        double cur = y;
        double integral = 0.5 * mu2 / floor(cur);
        for (std::size_t s = 0; s < steps; ++s) {
            cur = std::max(cir_implicit_milstein_step(p.k, level, p.c, cur, normal(rng), h), 0.0);
            const double term = mu2 / floor(cur);
            integral += s + 1 == steps ? 0.5 * term : term;
        }
        integral *= h;
        const double z = std::exp(-0.5 * power * integral);
        sum += z;
        sum_sq += z * z;
    }
    const double n = static_cast<double>(paths);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq / n - mean * mean) * n / (n - 1.0));
    const double se = std::sqrt(var / n);
    const double norm = std::pow(mean, 1.0 / power);
    out.value = scale * norm;
    // delta method: d norm / d mean = norm / (power mean)
    out.std_error = std::abs(scale) * norm / (power * mean) * se;
    return out;
}

}  // namespace mcfd
