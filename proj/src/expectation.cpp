#include "mcfd/expectation.hpp"

#include "mcfd/weights.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mcfd {

QuadratureRule gauss_hermite_1d(std::size_t order) {
    if (order < 1) throw Error("gauss_hermite_1d: order must be positive");
    const auto n = static_cast<Eigen::Index>(order);
    // Jacobi matrix of the monic probabilists' Hermite recurrence:
    // He_{k+1} = x He_k - k He_{k-1}.
    Mat jacobi = Mat::Zero(n, n);
    for (Eigen::Index k = 1; k < n; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(jacobi);
    QuadratureRule rule;
    rule.order = order;
    rule.dim = 1;
    for (Eigen::Index k = 0; k < n; ++k) {
        Vec node(1);
        node[0] = eig.eigenvalues()[k];
        rule.nodes.push_back(node);
        const double v = eig.eigenvectors()(0, k);
        rule.weights.push_back(v * v);
    }
    // Symmetrize: exact odd moments matter for the derivative identities.
    for (std::size_t k = 0; k < order / 2; ++k) {
        const std::size_t j = order - 1 - k;
        const double node = 0.5 * (rule.nodes[j][0] - rule.nodes[k][0]);
        const double w = 0.5 * (rule.weights[j] + rule.weights[k]);
        rule.nodes[k][0] = -node;
        rule.nodes[j][0] = node;
        rule.weights[k] = rule.weights[j] = w;
    }
    if (order % 2 == 1) rule.nodes[order / 2][0] = 0.0;
    const double total = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
    for (auto& w : rule.weights) w /= total;
    return rule;
}

QuadratureRule gauss_hermite_rule(std::size_t order, std::size_t dim) {
    if (dim < 1 || dim > 3) throw Error("gauss_hermite_rule: tensor rules support 1 <= d <= 3");
    const QuadratureRule base = gauss_hermite_1d(order);
    QuadratureRule rule;
    rule.order = order;
    rule.dim = dim;
    std::size_t total = 1;
    for (std::size_t k = 0; k < dim; ++k) total *= order;
    for (std::size_t flat = 0; flat < total; ++flat) {
        Vec node(static_cast<Eigen::Index>(dim));
        double w = 1.0;
        std::size_t rest = flat;
        for (std::size_t k = 0; k < dim; ++k) {
            const std::size_t idx = rest % order;
            rest /= order;
            node[static_cast<Eigen::Index>(k)] = base.nodes[idx][0];
            w *= base.weights[idx];
        }
        rule.nodes.push_back(std::move(node));
        rule.weights.push_back(w);
    }
    return rule;
}

double gaussian_expectation(const std::function<double(const Vec&)>& f,
                            const QuadratureRule& rule) {
    double acc = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) acc += rule.weights[j] * f(rule.nodes[j]);
    return acc;
}

OneStepMoments one_step_moments(const SpaceTimeFn& psi, const DiffusionSpec& spec, double t,
                                const Vec& x, double h, const QuadratureRule& rule) {
    if (rule.order < 2) throw Error("one_step_moments: quadrature order must be >= 2");
    if (rule.dim != spec.dim) throw Error("one_step_moments: rule dimension mismatch");
    const Mat sigma = spec.sigma(t, x);
    const InverseDiffusion inv(sigma, t, x);
    const Vec mean = x + spec.mu(t, x) * h;
    const double sh = std::sqrt(h);
    const auto d = static_cast<Eigen::Index>(spec.dim);

    OneStepMoments out{0.0, Vec::Zero(d), Mat::Zero(d, d)};
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
        const Vec dW = sh * rule.nodes[j];
        const double value = psi(t + h, mean + sigma * dW);
        const double w = rule.weights[j] * value;
        out.d0 += w;
        out.d1 += w * inv.first_order(dW, h);
        out.d2 += w * inv.second_order(dW, h);
    }
    return out;
}

OneStepResult gh_expectation(const SpaceTimeFn& psi, WeightKind weight,
                             const DiffusionSpec& spec, double t, const Vec& x, double h,
                             const QuadratureRule& rule) {
    const OneStepMoments m = one_step_moments(psi, spec, t, x, h, rule);
    switch (weight) {
        case WeightKind::kNone: return m.d0;
        case WeightKind::kGrad: return m.d1;
        case WeightKind::kHess: return m.d2;
    }
    return m.d0;
}

}  // namespace mcfd
