#pragma once

#include "mcfd/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

namespace mcfd {

// --- component steppers ----------------------------------------------------

/// Generic Euler update for one component: x_k + mu_k h + (sigma dW)_k.
struct EulerRule {};

/// Exact Ornstein-Uhlenbeck transition driven by the component's own noise.
struct OuExactRule {
    double kappa = 0.0;
    double level = 0.0;
    double vol = 0.0;
};

/// Implicit Milstein step for a CIR variance process driven by the
/// component's own noise. Construction rejects 4km < c^2 unless clamping
/// is requested.
struct CirMilsteinRule {
    double rate = 0.0;
    double level = 0.0;
    double vol = 0.0;
    bool clamp_at_zero = false;
};

/// Log-Euler step for a CEV price whose instantaneous variance is read from
/// another component of the state.
struct CevLogRule {
    double drift = 0.0;
    double vol = 0.0;
    double exponent = 1.0;
    std::size_t variance_index = 0;
};

using ComponentStepper = std::variant<EulerRule, OuExactRule, CirMilsteinRule, CevLogRule>;

using DriftFn = std::function<Vec(double t, const Vec& x)>;
using DiffusionFn = std::function<Mat(double t, const Vec& x)>;

/// Drift and diffusion of the linearizing operator plus the rule used to
/// advance each component of the forward process.
struct DiffusionSpec {
    std::size_t dim = 1;
    DriftFn drift;
    DiffusionFn diffusion;
    /// One entry per component; empty means Euler for every component.
    std::vector<ComponentStepper> steppers;
    /// When set, |mu|_inf and |sigma|_inf must stay below this on every
    /// queried point.
    std::optional<double> coefficient_bound;

    Vec mu(double t, const Vec& x) const;
    Mat sigma(double t, const Vec& x) const;
};

/// Validates the stepper table (dimension, CIR positivity regime).
void validate(const DiffusionSpec& spec);

DiffusionSpec constant_diffusion(const Vec& drift, const Mat& diffusion);

/// Forward dynamics of the two-dimensional Heston portfolio problem:
/// X1 = sigma W1 (Euler), X2 CIR(k, m, c) via implicit Milstein.
DiffusionSpec heston_diffusion(double sigma, double k, double m, double c);

struct Hjb5dMarket {
    double kappa = 0.0;  // rate mean reversion, no default in the model
    double b = 0.07;
    double zeta = 0.3;
    double mu1 = 0.10;
    double sigma1 = 0.3;
    double beta1 = 0.5;
    double k1 = 0.1;
    double m1 = 1.0;
    double c1 = 0.1;
    double mu2 = 0.15;
    double sigma2 = 1.0;
    double k2 = 0.1;
    double m2 = 0.3;
    double c2 = 0.2;
};

/// Forward dynamics of the five-dimensional portfolio problem. State is
/// (wealth proxy, short rate, price S1, variance Y1, variance Y2).
DiffusionSpec hjb5d_diffusion(double sigma, const Hjb5dMarket& market);

// --- single steps ------------------------------------------------------------

Vec euler_step(const DiffusionSpec& spec, double t, const Vec& x, const Vec& dW, double h);

double cir_implicit_milstein_step(double k, double m, double c, double y, double xi, double h);

double ou_exact_step(double kappa, double b, double zeta, double r, double xi, double h);

double cev_log_step(double mu1, double sigma1, double beta1, double s, double y, double dW,
                    double h);

/// Applies the configured per-component steppers.
Vec step(const DiffusionSpec& spec, double t, const Vec& x, const Vec& dW, double h);

// --- particle clouds -----------------------------------------------------------

/// Forward-simulated ensemble. states[i] is d x N at time t_i; increments[i]
/// is d x N and holds W_{t_{i+1}} - W_{t_i}.
struct ParticleCloud {
    std::size_t dim = 0;
    std::size_t particles = 0;
    std::size_t steps = 0;
    double h = 0.0;
    std::uint64_t seed = 0;
    std::vector<Mat> states;
    std::vector<Mat> increments;

    double time(std::size_t i) const { return static_cast<double>(i) * h; }
};

/// Simulates N paths from x0. Particle j draws its normals from its own
/// engine seeded by child_seed(seed, j), so results do not depend on the
/// evaluation order.
ParticleCloud simulate_cloud(const DiffusionSpec& spec, const Vec& x0, std::size_t n_steps,
                             double h, std::size_t particles, std::uint64_t seed);

/// Recomputes states from states[0] and the stored increments.
ParticleCloud replay_cloud(const DiffusionSpec& spec, const ParticleCloud& cloud);

/// CSV layout: header "particle,step,x0..x{d-1},dw0..dw{d-1}"; one row per
/// (particle, step) with step in [0, n]; the dw columns of the last step are
/// empty. A leading comment line "# h=<h> seed=<seed>" carries the metadata.
void write_cloud_csv(std::ostream& os, const ParticleCloud& cloud);
ParticleCloud read_cloud_csv(std::istream& is);

}  // namespace mcfd
