#pragma once

#include "mcfd/sde.hpp"
#include "mcfd/types.hpp"

#include <cstddef>
#include <functional>
#include <variant>
#include <vector>

namespace mcfd {

/// Tensor Gauss-Hermite rule for the standard normal law on R^d.
struct QuadratureRule {
    std::vector<Vec> nodes;
    std::vector<double> weights;  // positive, sum to one
    std::size_t order = 0;         // nodes per axis
    std::size_t dim = 0;
};

/// One-dimensional probabilists' Gauss-Hermite nodes and weights (weights
/// normalized to sum to one), via Golub-Welsch.
QuadratureRule gauss_hermite_1d(std::size_t order);

/// Tensor rule; d <= 3 (order^d nodes).
QuadratureRule gauss_hermite_rule(std::size_t order, std::size_t dim);

/// Expectation of f(G), G standard normal in R^rule.dim.
double gaussian_expectation(const std::function<double(const Vec&)>& f,
                            const QuadratureRule& rule);

enum class WeightKind { kNone, kGrad, kHess };

/// E[psi(X) w] for the Euler transition X = x + mu h + sigma sqrt(h) G, with
/// w = 1, H1 or H2. Returns a scalar, a d-vector or a d x d matrix.
using OneStepResult = std::variant<double, Vec, Mat>;

using SpaceTimeFn = std::function<double(double t, const Vec& x)>;

OneStepResult gh_expectation(const SpaceTimeFn& psi, WeightKind weight,
                             const DiffusionSpec& spec, double t, const Vec& x, double h,
                             const QuadratureRule& rule);

/// All three weighted expectations in one pass over the quadrature nodes.
struct OneStepMoments {
    double d0 = 0.0;
    Vec d1;
    Mat d2;
};

OneStepMoments one_step_moments(const SpaceTimeFn& psi, const DiffusionSpec& spec, double t,
                                const Vec& x, double h, const QuadratureRule& rule);

}  // namespace mcfd
