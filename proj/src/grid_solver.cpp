#include "mcfd/solver.hpp"
#include "mcfd/weights.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mcfd {

GridLayer::GridLayer(GridAxes axes) : axes_(std::move(axes)) {
    const std::size_t d = axes_.nodes.size();
    if (d < 1) throw Error("grid: at least one axis is required");
    if (static_cast<std::size_t>(axes_.lo.size()) != d || static_cast<std::size_t>(axes_.hi.size()) != d)
        throw Error("grid: bounds must have one entry per axis");
    stride_.resize(d);
    std::size_t total = 1;
    for (std::size_t k = 0; k < d; ++k) {
        if (axes_.nodes[k] < 2) throw Error("grid: need at least two nodes per axis");
        if (!(axes_.hi[static_cast<Eigen::Index>(k)] > axes_.lo[static_cast<Eigen::Index>(k)]))
            throw Error("grid: empty axis range");
        stride_[k] = total;
        total *= axes_.nodes[k];
    }
    values_ = Vec::Zero(static_cast<Eigen::Index>(total));
}

Vec GridLayer::node(std::size_t flat) const {
    const std::size_t d = dim();
    Vec x(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const std::size_t i = (flat / stride_[k]) % axes_.nodes[k];
        const double dx = (axes_.hi[kk] - axes_.lo[kk]) / static_cast<double>(axes_.nodes[k] - 1);
        x[kk] = axes_.lo[kk] + static_cast<double>(i) * dx;
    }
    return x;
}

double GridLayer::interpolate(std::size_t axis, std::size_t base, const std::size_t* cell,
                              const double* frac) const {
    if (axis == dim()) return values_[static_cast<Eigen::Index>(base)];
    const std::size_t n = axes_.nodes[axis];
    const std::size_t i = cell[axis];
    const double u = frac[axis];
    auto at = [&](std::ptrdiff_t j) {
        const auto jj = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(n) - 1));
        return interpolate(axis + 1, base + jj * stride_[axis], cell, frac);
    };
    const auto ii = static_cast<std::ptrdiff_t>(i);
    if (axes_.interpolation == Interpolation::kMultilinear) {
        if (u == 0.0) return at(ii);
        return (1.0 - u) * at(ii) + u * at(ii + 1);
    }
    // Catmull-Rom through i-1, i, i+1, i+2
    const double u2 = u * u, u3 = u2 * u;
    return 0.5 * ((-u3 + 2.0 * u2 - u) * at(ii - 1) + (3.0 * u3 - 5.0 * u2 + 2.0) * at(ii) +
                  (-3.0 * u3 + 4.0 * u2 + u) * at(ii + 1) + (u3 - u2) * at(ii + 2));
}

double GridLayer::evaluate(const Vec& x) const {
    const std::size_t d = dim();
    if (static_cast<std::size_t>(x.size()) != d) throw Error("grid: query dimension mismatch");
    std::size_t cell[8];
    double frac[8];
    if (d > 8) throw Error("grid: at most 8 axes");
    bool clamped = false;
    for (std::size_t k = 0; k < d; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const double lo = axes_.lo[kk], hi = axes_.hi[kk];
        double v = x[kk];
        if (v < lo || v > hi) {
            clamped = true;
            v = std::clamp(v, lo, hi);
        }
        const std::size_t n = axes_.nodes[k];
        const double s = (v - lo) / (hi - lo) * static_cast<double>(n - 1);
        std::size_t i = static_cast<std::size_t>(std::floor(s));
        if (i >= n - 1) i = n - 2;
        cell[k] = i;
        frac[k] = std::clamp(s - static_cast<double>(i), 0.0, 1.0);
    }
    if (clamped) ++clamped_;
    return interpolate(0, 0, cell, frac);
}

GridState apply_one_step(const GridState& next, const NonlinearOperator& f,
                         const DiffusionSpec& spec, double t, double h, int scheme,
                         const QuadratureRule& rule) {
    const std::size_t d = next.value.dim();
    const auto dd = static_cast<Eigen::Index>(d);
    if (spec.dim != d || rule.dim != d) throw Error("apply_one_step: dimension mismatch");
    if (scheme == 2 && next.gradient.size() != d)
        throw Error("apply_one_step: scheme 2 needs gradient layers");
    if (!(h > 0.0)) throw Error("apply_one_step: h must be positive");

    GridState out;
    out.t = t;
    out.value = GridLayer(next.value.axes());
    out.gradient.assign(d, GridLayer(next.value.axes()));
    const double sh = std::sqrt(h);

    for (std::size_t q = 0; q < out.value.size(); ++q) {
        const Vec x = out.value.node(q);
        const Mat sigma = spec.sigma(t, x);
        const InverseDiffusion inv(sigma, t, x);
        const Vec mean = x + spec.mu(t, x) * h;
        double d0 = 0.0;
        Vec d1 = Vec::Zero(dd);
        Mat d2 = Mat::Zero(dd, dd);
        Vec z(dd);
        for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
            const Vec dW = sh * rule.nodes[j];
            const Vec y = mean + sigma * dW;
            const double w = rule.weights[j];
            const double psi = next.value.evaluate(y);
            const Vec h1 = inv.first_order(dW, h);
            d0 += w * psi;
            d1 += (w * psi) * h1;
            if (scheme == 1) {
                d2 += (w * psi) * inv.second_order(dW, h);
            } else {
                for (std::size_t k = 0; k < d; ++k) z[static_cast<Eigen::Index>(k)] = next.gradient[k].evaluate(y);
                d2 += w * z * h1.transpose();
            }
        }
        if (scheme == 2) d2 = 0.5 * (d2 + d2.transpose()).eval();
        const double fv = f(t, x, d0, d1, d2);
        if (!std::isfinite(fv)) {
            std::ostringstream os;
            os << "nonlinearity '" << f.name << "' returned " << fv << " at t=" << t
               << " x=" << format_point(x);
            throw Error(os.str());
        }
        out.value.values()[static_cast<Eigen::Index>(q)] = d0 + h * fv;
        for (std::size_t k = 0; k < d; ++k)
            out.gradient[k].values()[static_cast<Eigen::Index>(q)] = d1[static_cast<Eigen::Index>(k)];
    }
    return out;
}

GridSolution backward_solve_grid(const SolverConfig& cfg, const NonlinearOperator& f,
                                 const DiffusionSpec& spec, const TerminalCondition& g) {
    cfg.validate();
    const std::size_t n = cfg.steps();
    const std::size_t d = cfg.grid.nodes.size();
    if (d != spec.dim || d > 3) throw Error("backward_solve_grid: grid and diffusion dimensions differ");
    if (cfg.scheme == 2 && !g.gradient)
        throw Error("backward_solve_grid: scheme 2 needs the terminal gradient");

    const NonlinearOperator op = cfg.theta > 0.0 ? monotonicity_transform(f, cfg.theta, cfg.T) : f;
    const QuadratureRule rule = gauss_hermite_rule(cfg.quadrature_order, d);
    std::optional<ResolvedTruncation> trunc;
    if (cfg.truncation) trunc = resolve_truncation(*cfg.truncation, op);

    GridSolution sol;
    sol.h = cfg.h;
    sol.layers.resize(n + 1);
    GridState& last = sol.layers[n];
    last.t = cfg.T;
    last.value = GridLayer(cfg.grid);
    last.gradient.assign(d, GridLayer(cfg.grid));
    for (std::size_t q = 0; q < last.value.size(); ++q) {
        const Vec x = last.value.node(q);
        last.value.values()[static_cast<Eigen::Index>(q)] = g.value(x);
        if (g.gradient) {
            const Vec dg = g.gradient(x);
            for (std::size_t k = 0; k < d; ++k)
                last.gradient[k].values()[static_cast<Eigen::Index>(q)] = dg[static_cast<Eigen::Index>(k)];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        const double t = static_cast<double>(i) * cfg.h;
        sol.layers[i] = apply_one_step(sol.layers[i + 1], op, spec, t, cfg.h, cfg.scheme, rule);
        if (trunc) {
            const double sup = sol.layers[i + 1].value.values().cwiseAbs().maxCoeff();
            const double k = truncation_bound(sup, trunc->c1, trunc->c2, cfg.h);
            Vec& v = sol.layers[i].value.values();
            v = v.cwiseMax(-k).cwiseMin(k);
        }
    }

    for (std::size_t i = 0; i <= n; ++i) {
        GridState& layer = sol.layers[i];
        sol.clamped_queries += layer.value.clamped_queries();
        for (const auto& gl : layer.gradient) sol.clamped_queries += gl.clamped_queries();
        if (cfg.theta > 0.0) {
            const double scale = std::exp(-cfg.theta * (cfg.T - layer.t));
            layer.value.values() *= scale;
            for (auto& gl : layer.gradient) gl.values() *= scale;
        }
    }
    if (sol.clamped_queries > 0) {
        std::ostringstream os;
        os << "grid: " << sol.clamped_queries << " interpolation queries fell outside the box";
        sol.warnings.push_back(os.str());
    }
    return sol;
}

}  // namespace mcfd
