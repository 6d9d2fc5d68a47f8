#pragma once

#include "mcfd/expectation.hpp"
#include "mcfd/nonlinearity.hpp"
#include "mcfd/regression.hpp"
#include "mcfd/sde.hpp"
#include "mcfd/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mcfd {

enum class Backend { kGrid, kParticles };
enum class Interpolation { kMultilinear, kCubic };
enum class RegressionKind { kLocalBasis, kMalliavin };

/// Tensor grid: per-axis node counts and bounds. Queries outside the box
/// are clamped to it (and counted).
struct GridAxes {
    std::vector<std::size_t> nodes;
    Vec lo;
    Vec hi;
    /// Multilinear keeps the interpolant monotone; cubic (Catmull-Rom) is
    /// used for accuracy studies.
    Interpolation interpolation = Interpolation::kMultilinear;
};

/// x0 +- width * scale * sqrt(T) on every axis.
GridAxes default_grid(const Vec& x0, double scale, double horizon, std::size_t nodes_per_axis,
                      double width = 5.0);

/// Truncation K_h[psi] = |psi|(1 + C1 h) + C2 h. Unset constants default to
/// the operator's declared bounds.
struct TruncationConfig {
    std::optional<double> c1;
    std::optional<double> c2;
    /// Sup of the terminal data; unset means the sup over the terminal
    /// particles (or grid nodes).
    std::optional<double> g_sup;
};

struct SolverConfig {
    double T = 1.0;
    double h = 0.1;
    int scheme = 1;
    Backend backend = Backend::kGrid;
    std::optional<TruncationConfig> truncation;
    double theta = 0.0;

    // grid backend
    GridAxes grid;
    std::size_t quadrature_order = 8;

    // particle backend
    std::size_t particles = 10000;
    std::uint64_t seed = 1;
    RegressionKind regression = RegressionKind::kLocalBasis;
    LocalBasisConfig local_basis;
    std::optional<Vec> eta;  // Malliavin localization; default 5 / sqrt(h)
    /// Fit each step on residuals: the value regression on Y - V_{i+1}(X_i)
    /// and the weighted regressions on what is left after the previous
    /// layer's fitted derivatives and a second-order Taylor term, adding the
    /// known expectations back. Off: plain regressions of the responses,
    /// centered by their fitted means.
    bool residual_fits = true;
    /// Highest total degree of the Hermite products of the normalized
    /// increment dW / sqrt(h) added to every cell fit as zero-mean control
    /// variates (local basis only). 0 disables them.
    std::size_t increment_controls = 0;

    /// n = T / h; throws unless it is a positive integer (to 1e-9).
    std::size_t steps() const;
    void validate() const;
};

struct TerminalCondition {
    std::function<double(const Vec&)> value;
    /// Needed by scheme 2.
    std::function<Vec(const Vec&)> gradient;
    /// Optional; seeds the control variates of the last step.
    std::function<Mat(const Vec&)> hessian;
};

struct ResolvedTruncation {
    double c1 = 0.0;
    double c2 = 0.0;
};

ResolvedTruncation resolve_truncation(const TruncationConfig& cfg, const NonlinearOperator& f);

double truncation_bound(double psi_sup, double c1, double c2, double h);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t used = 0;
    std::vector<std::string> warnings;
};

/// Least-squares slope of log(err) against log(h); nonpositive errors are
/// skipped with a warning. At least three usable points are required.
RateFit estimate_rate(const std::vector<double>& h, const std::vector<double>& err);

// --- grid backend -------------------------------------------------------------

class GridLayer {
public:
    GridLayer() = default;
    explicit GridLayer(GridAxes axes);

    std::size_t dim() const { return axes_.nodes.size(); }
    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
    const GridAxes& axes() const { return axes_; }
    Vec node(std::size_t flat) const;
    Vec& values() { return values_; }
    const Vec& values() const { return values_; }

    /// Interpolated value; clamps x into the box.
    double evaluate(const Vec& x) const;
    /// Queries that needed clamping since construction.
    std::size_t clamped_queries() const { return clamped_; }

private:
    double interpolate(std::size_t axis, std::size_t base, const std::size_t* cell,
                       const double* frac) const;

    GridAxes axes_;
    std::vector<std::size_t> stride_;  // axis 0 varies fastest
    Vec values_;
    mutable std::size_t clamped_ = 0;
};

/// Value and (for scheme 2) gradient layers at one time.
struct GridState {
    double t = 0.0;
    GridLayer value;
    std::vector<GridLayer> gradient;  // one layer per axis
};

/// T_h[psi](t, .) on the nodes of next.value. Scheme 1 uses the second-order
/// weight; scheme 2 chains the gradient layers of next.
GridState apply_one_step(const GridState& next, const NonlinearOperator& f,
                         const DiffusionSpec& spec, double t, double h, int scheme,
                         const QuadratureRule& rule);

struct GridSolution {
    double h = 0.0;
    std::vector<GridState> layers;  // layers[i] at t_i, i = 0..n
    std::size_t clamped_queries = 0;
    std::vector<std::string> warnings;

    double value(std::size_t step, const Vec& x) const { return layers.at(step).value.evaluate(x); }
};

GridSolution backward_solve_grid(const SolverConfig& cfg, const NonlinearOperator& f,
                                 const DiffusionSpec& spec, const TerminalCondition& g);

// --- particle backend -----------------------------------------------------------

struct ParticleLayer {
    double t = 0.0;
    Vec values;     // N
    Mat gradients;  // d x N (fitted D1; terminal layer holds grad g)
    double bound = 0.0;  // iterated K_h bound; +inf when truncation is off
    double clip = 0.0;   // K_h[Y_{i+1}] applied at this step; +inf when off
    std::size_t truncated = 0;
    /// E[Y_{i+1} | X_i] (and E[Z_{i+1} | X_i] for plain scheme 2), or with
    /// residual fits the correction to the next layer's value field.
    EstimatorPtr mean_fit;
    /// D1 and D2 responses, or their corrections.
    EstimatorPtr weighted_fit;
    double scale = 1.0;  // e^{-theta (T - t)}
    std::size_t fallback_cells = 0;
};

/// Value and derivative fields of one layer at a batch of points, on the
/// transformed scale. gradient is Q x d, hessian Q x d^2 (row-major).
struct LayerFields {
    Vec value;
    Mat gradient;
    Mat hessian;
};

struct ParticleSolution {
    double v0 = 0.0;
    double h = 0.0;
    int scheme = 1;
    bool residual_fits = false;
    std::vector<ParticleLayer> layers;  // layers[i] at t_i
    std::size_t bound_violations = 0;
    std::size_t unreliable_queries = 0;
    NonlinearOperator f;  // the operator actually solved (after the transform)
    TerminalCondition terminal;

    /// v and its fitted gradient at an arbitrary point of time step i < n.
    std::pair<double, Vec> evaluate(std::size_t step, const Vec& x) const;
    /// Fields of layer `step` (0..n) at the columns of x, before rescaling.
    LayerFields fields(std::size_t step, const Mat& x) const;
};

ParticleSolution backward_solve_particles(const SolverConfig& cfg, const NonlinearOperator& f,
                                          const DiffusionSpec& spec, const TerminalCondition& g,
                                          const ParticleCloud& cloud);

/// Simulates the cloud from x0 with cfg.seed first.
ParticleSolution backward_solve_particles(const SolverConfig& cfg, const NonlinearOperator& f,
                                          const DiffusionSpec& spec, const TerminalCondition& g,
                                          const Vec& x0);

// --- export ------------------------------------------------------------------------

/// Columns: step,t,x0..x{d-1},value
void write_grid_csv(std::ostream& os, const GridSolution& sol);
/// Columns: step,t,particle,x0..x{d-1},value
void write_particle_csv(std::ostream& os, const ParticleSolution& sol, const ParticleCloud& cloud);

}  // namespace mcfd
