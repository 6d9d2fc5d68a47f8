#pragma once

#include "mcfd/config.hpp"
#include "mcfd/frontprop.hpp"
#include "mcfd/nonlinearity.hpp"
#include "mcfd/oracles.hpp"
#include "mcfd/solver.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mcfd {

/// Presets: linear_rate, mcf_sphere, mcf_two_disks, heston2d, hjb5d.
std::vector<std::string> preset_names();

/// Checks every key of `user` against the schema of its preset, fills in
/// the defaults and returns the complete configuration. Throws ConfigError
/// on unknown keys, malformed values and missing mandatory keys.
Config resolve_config(const Config& user);

/// "key = default  # help" lines of one preset; mandatory keys show "<required>".
std::string describe_preset(const std::string& preset);

// --- linear_rate -------------------------------------------------------------

struct LinearRateRow {
    double h = 0.0;
    double v_hat = 0.0;
    double v_exact = 0.0;
    double abs_err = 0.0;
    std::size_t clamped_queries = 0;
};

struct LinearRateResult {
    std::vector<LinearRateRow> rows;
    RateFit fit;
    std::vector<std::string> warnings;
};

/// g(x) = cos(x), smoothly cut off between |x| = cutoff and cutoff + 1.
double linear_rate_terminal(double x, double cutoff);

LinearRateResult run_linear_rate(const Config& cfg);

// --- mean curvature flow fronts ----------------------------------------------------

struct FrontRow {
    double tau = 0.0;  // flow time T - t
    std::size_t step = 0;
    std::size_t points = 0;
    std::size_t unresolved = 0;
    double mean_radius = 0.0;
    double sd_radius = 0.0;
    std::optional<double> exact_radius;  // sphere only
    FrontResult front;
};

struct FrontRunResult {
    std::vector<FrontRow> rows;
    ParticleSolution solution;
};

/// mcf_sphere and mcf_two_disks.
FrontRunResult run_front(const Config& cfg);

// --- seed batches (heston2d, hjb5d) --------------------------------------------------

struct StepDiagnostics {
    std::size_t step = 0;
    double t = 0.0;
    std::size_t truncated = 0;
    std::size_t fallback_cells = 0;
    double clip = 0.0;
    double bound = 0.0;
};

std::vector<StepDiagnostics> step_diagnostics(const ParticleSolution& sol);

struct BatchRun {
    double h = 0.0;
    std::size_t run = 0;
    std::uint64_t seed = 0;
    double v0 = 0.0;
    std::size_t truncated = 0;
    std::size_t bound_violations = 0;
    std::vector<StepDiagnostics> steps;
};

struct BatchSummary {
    double h = 0.0;
    std::size_t runs = 0;
    double mean = 0.0;
    double std_dev = 0.0;  // sample standard deviation, 0 for one run
};

struct BatchResult {
    std::vector<BatchRun> runs;
    std::vector<BatchSummary> summary;
    std::optional<ZariphopoulouResult> reference;  // heston2d
    DominationReport domination;
};

BatchResult run_seed_batch(const Config& cfg);

/// Probe states of the domination check for heston2d: wealth in
/// {0, 0.5, .., 2}, variance in {0.1, .., 0.6}, derivatives of -exp(-eta x).
std::vector<Probe> heston_probes(double eta);
/// hjb5d: the initial state with the rate, variances and wealth moved by
/// one standard deviation, derivatives of -exp(-eta x).
std::vector<Probe> hjb5d_probes(const Config& cfg);

// --- dispatcher ----------------------------------------------------------------------

struct RunOutcome {
    std::vector<std::string> files;
    std::vector<std::string> warnings;
    double seconds = 0.0;
};

/// Runs a resolved configuration and writes results.csv, diagnostics.csv,
/// summary.csv, metadata.cfg (and front_*.csv) into outdir, which is created.
RunOutcome run_experiment(const Config& resolved, const std::string& outdir);

}  // namespace mcfd
