#include "mcfd/solver.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace mcfd {

GridAxes default_grid(const Vec& x0, double scale, double horizon, std::size_t nodes_per_axis,
                      double width) {
    GridAxes axes;
    const double half = width * scale * std::sqrt(horizon);
    axes.nodes.assign(static_cast<std::size_t>(x0.size()), nodes_per_axis);
    axes.lo = x0.array() - half;
    axes.hi = x0.array() + half;
    return axes;
}

std::size_t SolverConfig::steps() const {
    if (!(T > 0.0) || !(h > 0.0)) throw Error("solver: T and h must be positive");
    const double ratio = T / h;
    const double n = std::round(ratio);
    if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio))
        throw Error("solver: T / h must be a positive integer");
    return static_cast<std::size_t>(n);
}

void SolverConfig::validate() const {
    steps();
    if (scheme != 1 && scheme != 2) throw Error("solver: scheme must be 1 or 2");
    if (theta < 0.0) throw Error("solver: theta must be nonnegative");
    if (truncation) {
        if ((truncation->c1 && *truncation->c1 < 0.0) || (truncation->c2 && *truncation->c2 < 0.0))
            throw Error("solver: truncation constants must be nonnegative");
        if (truncation->g_sup && *truncation->g_sup < 0.0)
            throw Error("solver: g_sup must be nonnegative");
    }
    if (backend == Backend::kParticles && particles < 1)
        throw Error("solver: at least one particle is required");
    if (increment_controls > 0 && regression != RegressionKind::kLocalBasis)
        throw Error("solver: increment controls need the local-basis regression");
    if (backend == Backend::kGrid && quadrature_order < 2)
        throw Error("solver: quadrature order must be >= 2");
}

ResolvedTruncation resolve_truncation(const TruncationConfig& cfg, const NonlinearOperator& f) {
    ResolvedTruncation out;
    if (cfg.c1) {
        out.c1 = *cfg.c1;
    } else if (f.bounds.c1) {
        out.c1 = *f.bounds.c1;
    } else {
        throw Error("truncation: operator '" + f.name + "' declares no finite C1; set it explicitly");
    }
    if (cfg.c2) {
        out.c2 = *cfg.c2;
    } else {
        // A capped operator moves values by at most h * cap per step.
        out.c2 = f.cap ? std::max(f.bounds.f_at_zero, *f.cap) : f.bounds.f_at_zero;
    }
    return out;
}

double truncation_bound(double psi_sup, double c1, double c2, double h) {
    if (psi_sup < 0.0 || c1 < 0.0 || c2 < 0.0 || h < 0.0)
        throw Error("truncation_bound: inputs must be nonnegative");
    return psi_sup * (1.0 + c1 * h) + c2 * h;
}

RateFit estimate_rate(const std::vector<double>& h, const std::vector<double>& err) {
    if (h.size() != err.size()) throw Error("estimate_rate: h and err lengths differ");
    RateFit fit;
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < h.size(); ++k) {
        if (!(h[k] > 0.0)) throw Error("estimate_rate: steps must be positive");
        if (!(err[k] > 0.0)) {
            std::ostringstream os;
            os << "estimate_rate: skipping nonpositive error at h=" << h[k];
            fit.warnings.push_back(os.str());
            continue;
        }
        lx.push_back(std::log(h[k]));
        ly.push_back(std::log(err[k]));
    }
    if (lx.size() < 3) throw Error("estimate_rate: need at least three positive errors");
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        mx += lx[k];
        my += ly[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxx += (lx[k] - mx) * (lx[k] - mx);
        sxy += (lx[k] - mx) * (ly[k] - my);
    }
    if (!(sxx > 0.0)) throw Error("estimate_rate: steps must not all be equal");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.used = lx.size();
    return fit;
}

void write_grid_csv(std::ostream& os, const GridSolution& sol) {
    if (sol.layers.empty()) return;
    const std::size_t d = sol.layers.front().value.dim();
    os << "step,t";
    for (std::size_t k = 0; k < d; ++k) os << ",x" << k;
    os << ",value\n";
    for (std::size_t i = 0; i < sol.layers.size(); ++i) {
        const GridLayer& layer = sol.layers[i].value;
        for (std::size_t q = 0; q < layer.size(); ++q) {
            const Vec x = layer.node(q);
            os << i << ',' << sol.layers[i].t;
            for (Eigen::Index k = 0; k < x.size(); ++k) os << ',' << x[k];
            os << ',' << layer.values()[static_cast<Eigen::Index>(q)] << '\n';
        }
    }
}

void write_particle_csv(std::ostream& os, const ParticleSolution& sol, const ParticleCloud& cloud) {
    os << "step,t,particle";
    for (std::size_t k = 0; k < cloud.dim; ++k) os << ",x" << k;
    os << ",value\n";
    for (std::size_t i = 0; i < sol.layers.size(); ++i) {
        const auto& layer = sol.layers[i];
        for (Eigen::Index j = 0; j < layer.values.size(); ++j) {
            os << i << ',' << layer.t << ',' << j;
            for (Eigen::Index k = 0; k < cloud.states[i].rows(); ++k) os << ',' << cloud.states[i](k, j);
            os << ',' << layer.values[j] << '\n';
        }
    }
}

}  // namespace mcfd
