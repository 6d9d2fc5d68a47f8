#pragma once

#include "mcfd/nonlinearity.hpp"
#include "mcfd/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>

namespace mcfd {

/// Solution of -v_t - (1 + 2c) v_xx / 2 = 0, v(T) = g in one dimension:
/// E[g(x + sqrt(1 + 2c) W_{T-t})] by Gauss-Hermite quadrature.
double linear_exact(const std::function<double(double)>& g, double c, double t, double x,
                    double T, std::size_t order = 60);

/// Radius 2 sqrt(R^2 - t) of the shrinking sphere; throws once it is extinct.
double sphere_radius(double t, double R);

struct ZariphopoulouResult {
    double value = 0.0;
    double std_error = 0.0;  // of the inner expectation, propagated to value
    std::size_t guarded = 0;  // variance samples floored at 1e-8
};

/// Quasi-explicit value of the Heston exponential-utility problem,
/// -exp(-eta x) || exp(-1/2 int_t^T mu^2 / Y_s ds) ||_{L^{1 - rho^2}}, with Y a
/// CIR process of drift k(m - Y) - mu c rho simulated by the implicit
/// Milstein step and the time integral by the trapezoid rule.
ZariphopoulouResult zariphopoulou_value(const HestonParams& p, double eta, double x, double y,
                                        double t, double T, std::size_t paths,
                                        std::uint64_t seed, std::size_t steps = 200);

}  // namespace mcfd
