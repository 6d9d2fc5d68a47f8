#include "mcfd/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace mcfd {

namespace {

struct KeySpec {
    const char* key;
    const char* fallback;  // nullptr: mandatory
    const char* help;
};

// clang-format off
const std::vector<KeySpec> kCommon = {
    {"preset", nullptr, "linear_rate | mcf_sphere | mcf_two_disks | heston2d | hjb5d"},
};

const std::vector<KeySpec> kParticles = {
    {"solver.scheme", "2", "1: second-order weight, 2: gradient chain"},
    {"solver.particles", "100000", "N"},
    {"solver.regression", "local_basis", "local_basis | malliavin (d <= 2)"},
    {"solver.residual_fits", "true", "fit corrections to the previous layer's fields"},
    {"solver.increment_controls", "0", "Hermite degree of the increment control variates"},
    {"solver.theta", "0", "monotonicity transform (0: off)"},
    {"solver.truncation", "true", "clamp every layer to K_h"},
    {"truncation.c1", "auto", "auto: the operator's declared bound"},
    {"truncation.c2", "auto", "auto: |F(.,0,0,0)|, or the cap for capped operators"},
    {"truncation.g_sup", "auto", "auto: sup over the terminal particles"},
};

const std::vector<KeySpec> kLinear = {
    {"seed", "1", "unused; kept for a uniform schema"},
    {"model.c", "0.25", "F = c tr(gamma)"},
    {"model.x0", "0", "evaluation point"},
    {"model.cutoff", "10", "g = cos(x) on |x| <= cutoff, smoothly zero past cutoff + 1"},
    {"solver.T", "1", "horizon"},
    {"solver.h_list", "0.1,0.05,0.025,0.0125", "time steps"},
    {"grid.nodes", "201", "nodes"},
    {"grid.width", "5", "half-width in units of sqrt(T)"},
    {"grid.interpolation", "cubic", "multilinear | cubic"},
    {"grid.quadrature_order", "8", "Gauss-Hermite points per axis"},
};

const std::vector<KeySpec> kSphere = {
    {"seed", "1", "top-level seed"},
    {"model.sigma", "1", "diffusion of the Monte Carlo step"},
    {"model.R", "0.5", "initial sphere radius 2R, horizon T = R^2"},
    {"model.cap", "200", "|G| is capped at this value"},
    {"solver.h", "0.0125", "time step"},
    {"solver.cells", "10,10,10", "local-basis cells per axis"},
    {"front.times", "0.1,0.2", "flow times of the extracted fronts"},
    {"front.rays", "256", "seed rays"},
    {"front.seed_radius", "0.3", "distance of the seeds from the center"},
    {"front.tol", "0.01", "final bracket width"},
    {"front.step", "0.05", "marching step"},
};

const std::vector<KeySpec> kTwoDisks = {
    {"seed", "1", "top-level seed"},
    {"model.sigma", "1", "diffusion of the Monte Carlo step"},
    {"model.cap", "200", "|G| is capped at this value"},
    {"model.center", "1.5", "disk centers at (+-center, 0)"},
    {"model.radius", "1", "disk radius"},
    {"model.half_width", "0.5", "stripe half width"},
    {"solver.T", "1", "horizon"},
    {"solver.h", "0.0125", "time step"},
    {"solver.cells", "20,20", "local-basis cells per axis"},
    {"front.times", "0.05,0.1,0.2", "flow times of the extracted fronts"},
    {"front.rays", "256", "seed rays"},
    {"front.seed_radius", "0.2", "distance of the seeds from the origin"},
    {"front.tol", "0.01", "final bracket width"},
    {"front.step", "0.05", "marching step"},
};

const std::vector<KeySpec> kHeston = {
    {"seed", "42", "top-level seed; run k uses child_seed(seed, k)"},
    {"seeds", "10", "independent runs per step size"},
    {"model.eta", nullptr, "risk aversion (documented value: 1)"},
    {"model.mu", "0.15", "drift of the risky asset"},
    {"model.c", "0.2", "volatility of the variance"},
    {"model.k", "0.1", "variance mean reversion"},
    {"model.m", "0.3", "variance mean level"},
    {"model.rho", "0", "correlation"},
    {"model.x0", "1", "initial wealth"},
    {"model.y0", "0.3", "initial variance"},
    {"model.M", "40", "upper bound of the control"},
    {"model.eps", "0.0001", "lower bound of the control and variance floor"},
    {"model.sigma", "0.4", "wealth diffusion of the Monte Carlo step"},
    {"solver.T", "1", "horizon"},
    {"solver.h_list", "0.05", "time steps"},
    {"solver.increment_controls", "3", "Hermite degree of the increment control variates"},
    {"truncation.c1", "1", "bound on |F_r|; the operator declares none"},
    {"solver.cells", "40,10", "local-basis cells per axis"},
    {"oracle.paths", "100000", "paths of the reference value (0: skip)"},
    {"oracle.steps", "200", "time steps of the reference value"},
};

const std::vector<KeySpec> kHjb5d = {
    {"seed", "5", "top-level seed; run k uses child_seed(seed, k)"},
    {"seeds", "3", "independent runs per step size"},
    {"model.eta", nullptr, "risk aversion (documented value: 1)"},
    {"model.kappa", nullptr, "rate mean reversion (documented value: 0.1)"},
    {"model.b", "0.07", "rate mean level"},
    {"model.zeta", "0.3", "rate volatility"},
    {"model.mu1", "0.1", "drift of asset 1"},
    {"model.sigma1", "0.3", "CEV volatility of asset 1"},
    {"model.beta1", "0.5", "CEV exponent of asset 1"},
    {"model.k1", "0.1", "variance 1 mean reversion"},
    {"model.m1", "1", "variance 1 mean level"},
    {"model.c1", "0.1", "variance 1 volatility"},
    {"model.mu2", "0.15", "drift of asset 2"},
    {"model.sigma2", "1", "volatility scale of asset 2"},
    {"model.k2", "0.1", "variance 2 mean reversion"},
    {"model.m2", "0.3", "variance 2 mean level"},
    {"model.c2", "0.2", "variance 2 volatility"},
    {"model.x0", "1", "initial wealth"},
    {"model.r0", "0.07", "initial rate"},
    {"model.s0", "1", "initial price of asset 1"},
    {"model.y1", "1", "initial variance 1"},
    {"model.y2", "0.3", "initial variance 2"},
    {"model.M", "40", "bound on |theta_i|"},
    {"model.eps", "0.0001", "lower bound on |theta_i| and state floor"},
    {"model.sigma", "0.4", "wealth diffusion of the Monte Carlo step"},
    {"solver.T", "1", "horizon"},
    {"solver.h_list", "0.1", "time steps"},
    {"solver.cells", "5,3,3,3,2", "local-basis cells per axis"},
    {"truncation.c1", "1", "bound on |F_r|; the operator declares none"},
};
// clang-format on

std::vector<KeySpec> schema(const std::string& preset) {
    std::vector<KeySpec> out = kCommon;
    auto add = [&](const std::vector<KeySpec>& more) { out.insert(out.end(), more.begin(), more.end()); };
    if (preset == "linear_rate") {
        add(kLinear);
    } else if (preset == "mcf_sphere") {
        add(kParticles);
        add(kSphere);
    } else if (preset == "mcf_two_disks") {
        add(kParticles);
        add(kTwoDisks);
    } else if (preset == "heston2d") {
        add(kParticles);
        add(kHeston);
    } else if (preset == "hjb5d") {
        add(kParticles);
        add(kHjb5d);
    } else {
        throw ConfigError("config: unknown preset '" + preset + "'");
    }
    // Preset tables override the shared particle defaults.
    std::vector<KeySpec> merged;
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
        const bool seen = std::any_of(merged.begin(), merged.end(),
                                      [&](const KeySpec& k) { return std::string(k.key) == it->key; });
        if (!seen) merged.push_back(*it);
    }
    std::reverse(merged.begin(), merged.end());
    return merged;
}

std::optional<double> optional_real(const Config& cfg, const std::string& key) {
    if (cfg.text(key) == "auto") return std::nullopt;
    return cfg.real(key);
}

std::size_t positive_count(const Config& cfg, const std::string& key) {
    const std::uint64_t v = cfg.unsigned_integer(key);
    if (v < 1) throw ConfigError("config: '" + key + "' must be at least 1");
    return static_cast<std::size_t>(v);
}

/// Checks the values that every run relies on; the solvers check the rest.
void validate_values(const Config& cfg) {
    const std::string preset = cfg.text("preset");
    cfg.unsigned_integer("seed");
    if (preset == "linear_rate") {
        for (double h : cfg.reals("solver.h_list"))
            if (!(h > 0.0)) throw ConfigError("config: solver.h_list entries must be positive");
        if (cfg.reals("solver.h_list").size() < 3)
            throw ConfigError("config: solver.h_list needs at least three steps for a rate");
        positive_count(cfg, "grid.nodes");
        positive_count(cfg, "grid.quadrature_order");
        const std::string interp = cfg.text("grid.interpolation");
        if (interp != "multilinear" && interp != "cubic")
            throw ConfigError("config: grid.interpolation must be multilinear or cubic");
        cfg.real("model.c");
        cfg.real("model.x0");
        cfg.real("model.cutoff");
        cfg.real("grid.width");
        cfg.real("solver.T");
        return;
    }
    const std::int64_t scheme = cfg.integer("solver.scheme");
    if (scheme != 1 && scheme != 2) throw ConfigError("config: solver.scheme must be 1 or 2");
    positive_count(cfg, "solver.particles");
    const std::string reg = cfg.text("solver.regression");
    if (reg != "local_basis" && reg != "malliavin")
        throw ConfigError("config: solver.regression must be local_basis or malliavin");
    cfg.flag("solver.residual_fits");
    cfg.flag("solver.truncation");
    cfg.unsigned_integer("solver.increment_controls");
    if (cfg.real("solver.theta") < 0.0) throw ConfigError("config: solver.theta must be nonnegative");
    for (const char* k : {"truncation.c1", "truncation.c2", "truncation.g_sup"}) {
        const auto v = optional_real(cfg, k);
        if (v && *v < 0.0) throw ConfigError(std::string("config: ") + k + " must be nonnegative");
    }
    for (auto c : cfg.counts("solver.cells"))
        if (c < 1) throw ConfigError("config: solver.cells entries must be positive");
    if (cfg.has("seeds")) positive_count(cfg, "seeds");
    if (cfg.has("solver.h_list"))
        for (double h : cfg.reals("solver.h_list"))
            if (!(h > 0.0)) throw ConfigError("config: solver.h_list entries must be positive");
    if (cfg.has("front.times"))
        for (double t : cfg.reals("front.times"))
            if (!(t >= 0.0)) throw ConfigError("config: front.times must be nonnegative");
    for (const auto& [key, value] : cfg.entries())
        if (key.rfind("model.", 0) == 0) cfg.real(key);
}

SolverConfig particle_solver(const Config& cfg, double T, double h, std::uint64_t seed) {
    SolverConfig s;
    s.T = T;
    s.h = h;
    s.scheme = static_cast<int>(cfg.integer("solver.scheme"));
    s.backend = Backend::kParticles;
    s.particles = positive_count(cfg, "solver.particles");
    s.seed = seed;
    s.regression = cfg.text("solver.regression") == "malliavin" ? RegressionKind::kMalliavin
                                                                 : RegressionKind::kLocalBasis;
    s.local_basis.cells_per_axis = cfg.counts("solver.cells");
    s.residual_fits = cfg.flag("solver.residual_fits");
    s.increment_controls = static_cast<std::size_t>(cfg.unsigned_integer("solver.increment_controls"));
    s.theta = cfg.real("solver.theta");
    if (cfg.flag("solver.truncation")) {
        TruncationConfig t;
        t.c1 = optional_real(cfg, "truncation.c1");
        t.c2 = optional_real(cfg, "truncation.c2");
        t.g_sup = optional_real(cfg, "truncation.g_sup");
        s.truncation = t;
    }
    return s;
}

std::size_t step_of(double T, double h, double t) {
    const double s = t / h;
    const double r = std::round(s);
    if (std::abs(s - r) > 1e-9 * std::max(1.0, s) || r < 0.0 || r > T / h + 1e-9)
        throw ConfigError("config: front time " + format_real(T - t) + " is not on the time grid");
    return static_cast<std::size_t>(r);
}

HestonParams heston_params(const Config& cfg) {
    HestonParams p;
    p.mu = cfg.real("model.mu");
    p.k = cfg.real("model.k");
    p.m = cfg.real("model.m");
    p.c = cfg.real("model.c");
    p.rho = cfg.real("model.rho");
    p.sigma = cfg.real("model.sigma");
    p.eps = cfg.real("model.eps");
    p.M = cfg.real("model.M");
    return p;
}

Hjb5dParams hjb5d_params(const Config& cfg) {
    Hjb5dParams p;
    auto& q = p.market;
    q.kappa = cfg.real("model.kappa");
    q.b = cfg.real("model.b");
    q.zeta = cfg.real("model.zeta");
    q.mu1 = cfg.real("model.mu1");
    q.sigma1 = cfg.real("model.sigma1");
    q.beta1 = cfg.real("model.beta1");
    q.k1 = cfg.real("model.k1");
    q.m1 = cfg.real("model.m1");
    q.c1 = cfg.real("model.c1");
    q.mu2 = cfg.real("model.mu2");
    q.sigma2 = cfg.real("model.sigma2");
    q.k2 = cfg.real("model.k2");
    q.m2 = cfg.real("model.m2");
    q.c2 = cfg.real("model.c2");
    p.sigma = cfg.real("model.sigma");
    p.eps = cfg.real("model.eps");
    p.M = cfg.real("model.M");
    return p;
}

TerminalCondition exponential_utility(double eta, std::size_t d) {
    const auto dd = static_cast<Eigen::Index>(d);
    TerminalCondition g;
    g.value = [eta](const Vec& x) { return -std::exp(-eta * x[0]); };
    g.gradient = [eta, dd](const Vec& x) {
        Vec out = Vec::Zero(dd);
        out[0] = eta * std::exp(-eta * x[0]);
        return out;
    };
    g.hessian = [eta, dd](const Vec& x) {
        Mat out = Mat::Zero(dd, dd);
        out(0, 0) = -eta * eta * std::exp(-eta * x[0]);
        return out;
    };
    return g;
}

Probe utility_probe(double eta, const Vec& x) {
    const auto d = x.size();
    Probe p;
    p.x = x;
    const double e = std::exp(-eta * x[0]);
    p.r = -e;
    p.p = Vec::Zero(d);
    p.p[0] = eta * e;
    p.gamma = Mat::Zero(d, d);
    p.gamma(0, 0) = -eta * eta * e;
    return p;
}

void write_real(std::ostream& os, double v) { os << format_real(v); }

}  // namespace

std::vector<std::string> preset_names() {
    return {"linear_rate", "mcf_sphere", "mcf_two_disks", "heston2d", "hjb5d"};
}

Config resolve_config(const Config& user) {
    const std::string preset = user.text("preset");
    const auto keys = schema(preset);
    std::set<std::string> known;
    for (const auto& k : keys) known.insert(k.key);
    for (const auto& [key, value] : user.entries())
        if (!known.count(key))
            throw ConfigError("config: unknown key '" + key + "' for preset '" + preset + "'");
    Config out;
    for (const auto& k : keys) {
        if (user.has(k.key)) {
            out.set(k.key, user.text(k.key));
        } else if (k.fallback) {
            out.set(k.key, k.fallback);
        } else {
            throw ConfigError("config: preset '" + preset + "' requires '" + k.key + "' (" + k.help + ")");
        }
    }
    validate_values(out);
    return out;
}

std::string describe_preset(const std::string& preset) {
    std::ostringstream os;
    for (const auto& k : schema(preset))
        os << k.key << " = " << (k.fallback ? k.fallback : "<required>") << "  # " << k.help << '\n';
    return os.str();
}

// --- linear_rate -------------------------------------------------------------

double linear_rate_terminal(double x, double cutoff) {
    const double a = std::abs(x);
    double w = 1.0;
    if (a >= cutoff + 1.0) {
        w = 0.0;
    } else if (a > cutoff) {
        const double s = a - cutoff;
        w = 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    }
    return std::cos(x) * w;
}

LinearRateResult run_linear_rate(const Config& cfg) {
    const double c = cfg.real("model.c");
    const double x0 = cfg.real("model.x0");
    const double cutoff = cfg.real("model.cutoff");
    const double T = cfg.real("solver.T");
    auto g1 = [cutoff](double x) { return linear_rate_terminal(x, cutoff); };
    const DiffusionSpec spec = constant_diffusion(Vec::Zero(1), Mat::Identity(1, 1));
    TerminalCondition g;
    g.value = [g1](const Vec& x) { return g1(x[0]); };
    const double exact = linear_exact(g1, c, 0.0, x0, T);

    LinearRateResult out;
    std::vector<double> hs, errs;
    for (double h : cfg.reals("solver.h_list")) {
        SolverConfig s;
        s.T = T;
        s.h = h;
        s.backend = Backend::kGrid;
        s.quadrature_order = positive_count(cfg, "grid.quadrature_order");
        s.grid = default_grid(Vec::Constant(1, x0), 1.0, T, positive_count(cfg, "grid.nodes"),
                              cfg.real("grid.width"));
        s.grid.interpolation = cfg.text("grid.interpolation") == "cubic" ? Interpolation::kCubic
                                                                         : Interpolation::kMultilinear;
        const GridSolution sol = backward_solve_grid(s, linear_f(c), spec, g);
        LinearRateRow row;
        row.h = h;
        row.v_hat = sol.value(0, Vec::Constant(1, x0));
        row.v_exact = exact;
        row.abs_err = std::abs(row.v_hat - exact);
        row.clamped_queries = sol.clamped_queries;
        for (const auto& w : sol.warnings) out.warnings.push_back("h=" + format_real(h) + ": " + w);
        out.rows.push_back(row);
        hs.push_back(h);
        errs.push_back(row.abs_err);
    }
    out.fit = estimate_rate(hs, errs);
    for (const auto& w : out.fit.warnings) out.warnings.push_back(w);
    return out;
}

// --- fronts --------------------------------------------------------------------

FrontRunResult run_front(const Config& cfg) {
    const std::string preset = cfg.text("preset");
    const bool sphere = preset == "mcf_sphere";
    const std::size_t d = sphere ? 3 : 2;
    const double sigma = cfg.real("model.sigma");
    const double h = cfg.real("solver.h");
    double T = 0.0, R = 0.0;
    TerminalCondition g;
    if (sphere) {
        R = cfg.real("model.R");
        T = R * R;
        // v(T, x) = 4R^2 - |x|^2: positive inside the sphere of radius 2R
        g.value = [R](const Vec& x) { return 4.0 * R * R - x.squaredNorm(); };
        g.gradient = [](const Vec& x) { return Vec(-2.0 * x); };
        g.hessian = [d](const Vec&) { return Mat(-2.0 * Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))); };
    } else {
        T = cfg.real("solver.T");
        const TwoDisksProfile prof = two_disks_initial(cfg.real("model.center"), cfg.real("model.radius"),
                                                       cfg.real("model.half_width"), cfg.real("model.center"));
        g.value = [prof](const Vec& x) { return prof(x); };
        g.gradient = [prof](const Vec& x) { return prof.gradient(x); };
    }
    const auto dd = static_cast<Eigen::Index>(d);
    const DiffusionSpec spec = constant_diffusion(Vec::Zero(dd), sigma * Mat::Identity(dd, dd));
    const SolverConfig s = particle_solver(cfg, T, h, cfg.unsigned_integer("seed"));
    if (s.local_basis.cells_per_axis.size() != d)
        throw ConfigError("config: solver.cells needs " + std::to_string(d) + " entries");
    const NonlinearOperator f = mcf_f(sigma, cfg.real("model.cap"), d);

    FrontRunResult out;
    out.solution = backward_solve_particles(s, f, spec, g, Vec::Zero(dd));
    FrontOptions opts;
    opts.tol = cfg.real("front.tol");
    opts.step = cfg.real("front.step");
    const auto seeds = ray_seeds(Vec::Zero(dd), cfg.real("front.seed_radius"), positive_count(cfg, "front.rays"));
    for (double tau : cfg.reals("front.times")) {
        FrontRow row;
        row.tau = tau;
        row.step = step_of(T, h, T - tau);
        if (row.step == 0 || row.step >= out.solution.layers.size() - 1)
            throw ConfigError("config: front time " + format_real(tau) +
                              " must lie strictly between 0 and the horizon");
        const ParticleSolution& sol = out.solution;
        const std::size_t step = row.step;
        row.front = extract_zero_level([&sol, step](const Vec& x) { return sol.evaluate(step, x); },
                                       seeds, opts);
        row.points = row.front.points.size();
        row.unresolved = row.front.unresolved.size();
        double sum = 0.0, sq = 0.0;
        for (const auto& p : row.front.points) {
            sum += p.norm();
            sq += p.squaredNorm();
        }
        if (row.points > 0) {
            const double n = static_cast<double>(row.points);
            row.mean_radius = sum / n;
            row.sd_radius = std::sqrt(std::max(0.0, sq / n - row.mean_radius * row.mean_radius));
        } else {
            row.mean_radius = std::numeric_limits<double>::quiet_NaN();
            row.sd_radius = std::numeric_limits<double>::quiet_NaN();
        }
        if (sphere) row.exact_radius = sphere_radius(tau, R);
        out.rows.push_back(std::move(row));
    }
    return out;
}

// --- seed batches --------------------------------------------------------------------

std::vector<StepDiagnostics> step_diagnostics(const ParticleSolution& sol) {
    std::vector<StepDiagnostics> out;
    for (std::size_t i = 0; i < sol.layers.size(); ++i) {
        const auto& l = sol.layers[i];
        out.push_back({i, l.t, l.truncated, l.fallback_cells, l.clip, l.bound});
    }
    return out;
}

std::vector<Probe> heston_probes(double eta) {
    std::vector<Probe> out;
    for (int i = 0; i <= 4; ++i)
        for (int j = 1; j <= 6; ++j) {
            Vec x(2);
            x << 0.5 * i, 0.1 * j;
            out.push_back(utility_probe(eta, x));
        }
    return out;
}

std::vector<Probe> hjb5d_probes(const Config& cfg) {
    const double T = cfg.real("solver.T");
    const double eta = cfg.real("model.eta");
    const double zeta = cfg.real("model.zeta");
    const double y1 = cfg.real("model.y1"), y2 = cfg.real("model.y2");
    const double c1 = cfg.real("model.c1"), c2 = cfg.real("model.c2");
    std::vector<Probe> out;
    for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b)
            for (int e = -1; e <= 1; ++e) {
                Vec x(5);
                x << cfg.real("model.x0") + a, cfg.real("model.r0") + b * zeta * std::sqrt(T),
                    cfg.real("model.s0"), std::max(y1 + e * c1 * std::sqrt(y1 * T), 0.01),
                    std::max(y2 + e * c2 * std::sqrt(y2 * T), 0.01);
                out.push_back(utility_probe(eta, x));
            }
    return out;
}

BatchResult run_seed_batch(const Config& cfg) {
    const std::string preset = cfg.text("preset");
    const bool heston = preset == "heston2d";
    const double T = cfg.real("solver.T");
    const double eta = cfg.real("model.eta");
    const std::uint64_t seed = cfg.unsigned_integer("seed");
    const std::size_t runs = positive_count(cfg, "seeds");

    NonlinearOperator f;
    DiffusionSpec spec;
    Vec x0;
    std::vector<Probe> probes;
    BatchResult out;
    if (heston) {
        const HestonParams p = heston_params(cfg);
        f = heston_f(p);
        spec = heston_diffusion(p.sigma, p.k, p.m, p.c);
        x0 = Vec(2);
        x0 << cfg.real("model.x0"), cfg.real("model.y0");
        probes = heston_probes(eta);
        const std::uint64_t paths = cfg.unsigned_integer("oracle.paths");
        if (paths > 0)
            out.reference = zariphopoulou_value(p, eta, x0[0], x0[1], 0.0, T, paths,
                                                child_seed(seed, 0xffffffffULL),
                                                positive_count(cfg, "oracle.steps"));
    } else {
        const Hjb5dParams p = hjb5d_params(cfg);
        f = hjb5d_f(p);
        spec = hjb5d_diffusion(p.sigma, p.market);
        x0 = Vec(5);
        x0 << cfg.real("model.x0"), cfg.real("model.r0"), cfg.real("model.s0"), cfg.real("model.y1"),
            cfg.real("model.y2");
        probes = hjb5d_probes(cfg);
    }
    out.domination = check_domination(f, spec, probes);
    const TerminalCondition g = exponential_utility(eta, spec.dim);
    if (cfg.counts("solver.cells").size() != spec.dim)
        throw ConfigError("config: solver.cells needs " + std::to_string(spec.dim) + " entries");

    for (double h : cfg.reals("solver.h_list")) {
        BatchSummary sum;
        sum.h = h;
        double acc = 0.0, acc2 = 0.0;
        for (std::size_t k = 0; k < runs; ++k) {
            BatchRun r;
            r.h = h;
            r.run = k;
            r.seed = child_seed(seed, k);
            const SolverConfig s = particle_solver(cfg, T, h, r.seed);
            const ParticleSolution sol = backward_solve_particles(s, f, spec, g, x0);
            r.v0 = sol.v0;
            r.bound_violations = sol.bound_violations;
            r.steps = step_diagnostics(sol);
            for (const auto& st : r.steps) r.truncated += st.truncated;
            acc += r.v0;
            out.runs.push_back(std::move(r));
        }
        sum.runs = runs;
        sum.mean = acc / static_cast<double>(runs);
        for (std::size_t k = out.runs.size() - runs; k < out.runs.size(); ++k)
            acc2 += (out.runs[k].v0 - sum.mean) * (out.runs[k].v0 - sum.mean);
        sum.std_dev = runs > 1 ? std::sqrt(acc2 / static_cast<double>(runs - 1)) : 0.0;
        out.summary.push_back(sum);
    }
    return out;
}

// --- dispatcher ----------------------------------------------------------------------

RunOutcome run_experiment(const Config& resolved, const std::string& outdir) {
    namespace fs = std::filesystem;
    const auto start = std::chrono::steady_clock::now();
    const std::string preset = resolved.text("preset");
    RunOutcome outcome;

    // Compute first: a failed run leaves no partial outputs behind.
    std::ostringstream results, diagnostics, summary;
    std::vector<std::pair<std::string, std::string>> extra;
    summary << "key,value\n";
    if (preset == "linear_rate") {
        const LinearRateResult r = run_linear_rate(resolved);
        results << "h,v_hat,v_exact,abs_err\n";
        diagnostics << "h,clamped_queries\n";
        for (const auto& row : r.rows) {
            write_real(results, row.h);
            results << ',';
            write_real(results, row.v_hat);
            results << ',';
            write_real(results, row.v_exact);
            results << ',';
            write_real(results, row.abs_err);
            results << '\n';
            write_real(diagnostics, row.h);
            diagnostics << ',' << row.clamped_queries << '\n';
        }
        results << "# slope=" << format_real(r.fit.slope) << " intercept=" << format_real(r.fit.intercept)
                << " points=" << r.fit.used << '\n';
        summary << "slope," << format_real(r.fit.slope) << "\nintercept," << format_real(r.fit.intercept) << '\n';
        outcome.warnings = r.warnings;
    } else if (preset == "mcf_sphere" || preset == "mcf_two_disks") {
        const FrontRunResult r = run_front(resolved);
        results << "tau,step,points,unresolved,mean_radius,sd_radius,exact_radius,rel_err\n";
        for (const auto& row : r.rows) {
            write_real(results, row.tau);
            results << ',' << row.step << ',' << row.points << ',' << row.unresolved << ',';
            write_real(results, row.mean_radius);
            results << ',';
            write_real(results, row.sd_radius);
            results << ',';
            if (row.exact_radius) {
                write_real(results, *row.exact_radius);
                results << ',';
                write_real(results, row.mean_radius / *row.exact_radius - 1.0);
            } else {
                results << ',';
            }
            results << '\n';
            std::ostringstream front;
            write_front_csv(front, row.tau, row.front);
            extra.emplace_back("front_tau_" + format_real(row.tau) + ".csv", front.str());
            if (row.unresolved > 0)
                outcome.warnings.push_back("front at tau=" + format_real(row.tau) + ": " +
                                           std::to_string(row.unresolved) + " unresolved seeds");
        }
        diagnostics << "step,t,truncated,fallback_cells,clip,bound\n";
        for (const auto& st : step_diagnostics(r.solution)) {
            diagnostics << st.step << ',';
            write_real(diagnostics, st.t);
            diagnostics << ',' << st.truncated << ',' << st.fallback_cells << ',';
            write_real(diagnostics, st.clip);
            diagnostics << ',';
            write_real(diagnostics, st.bound);
            diagnostics << '\n';
        }
        summary << "v0," << format_real(r.solution.v0) << "\nbound_violations," << r.solution.bound_violations
                << '\n';
    } else {
        const BatchResult r = run_seed_batch(resolved);
        results << "h,run,seed,v0,truncated,bound_violations\n";
        diagnostics << "h,run,step,t,truncated,fallback_cells,clip,bound\n";
        for (const auto& run : r.runs) {
            write_real(results, run.h);
            results << ',' << run.run << ',' << run.seed << ',';
            write_real(results, run.v0);
            results << ',' << run.truncated << ',' << run.bound_violations << '\n';
            for (const auto& st : run.steps) {
                write_real(diagnostics, run.h);
                diagnostics << ',' << run.run << ',' << st.step << ',';
                write_real(diagnostics, st.t);
                diagnostics << ',' << st.truncated << ',' << st.fallback_cells << ',';
                write_real(diagnostics, st.clip);
                diagnostics << ',';
                write_real(diagnostics, st.bound);
                diagnostics << '\n';
            }
            if (run.bound_violations > 0)
                outcome.warnings.push_back("run " + std::to_string(run.run) + ": " +
                                           std::to_string(run.bound_violations) + " bound violations");
        }
        for (const auto& s : r.summary) {
            write_real(results, s.h);
            results << ",mean,,";
            write_real(results, s.mean);
            results << ",,\n";
            write_real(results, s.h);
            results << ",std,,";
            write_real(results, s.std_dev);
            results << ",,\n";
        }
        if (r.reference) {
            summary << "reference," << format_real(r.reference->value) << "\nreference_std_error,"
                    << format_real(r.reference->std_error) << '\n';
        }
        summary << "domination_passed," << (r.domination.passed() ? "true" : "false")
                << "\nworst_domination," << format_real(r.domination.worst_domination)
                << "\ndomination_violations," << r.domination.dominated_violations << '\n';
        if (!r.domination.passed())
            outcome.warnings.push_back("the Monte Carlo diffusion does not dominate the nonlinearity at " +
                                       std::to_string(r.domination.dominated_violations) + " of " +
                                       std::to_string(r.domination.probes) + " probes");
    }
    outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    fs::create_directories(outdir);
    auto write = [&](const std::string& name, const std::string& text) {
        const fs::path path = fs::path(outdir) / name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot write '" + path.string() + "'");
        os << text;
        outcome.files.push_back(path.string());
    };
    write("results.csv", results.str());
    write("diagnostics.csv", diagnostics.str());
    write("summary.csv", summary.str());
    for (const auto& [name, text] : extra) write(name, text);
    std::ostringstream meta;
    meta << "# mcfd run metadata; rerun with: mcfd <this file> <outdir>\n";
    std::ostringstream secs;
    secs.precision(3);
    secs << std::fixed << outcome.seconds;
    meta << "# runtime_seconds: " << secs.str() << '\n';
    for (const auto& w : outcome.warnings) meta << "# warning: " << w << '\n';
    resolved.write(meta);
    write("metadata.cfg", meta.str());
    return outcome;
}

}  // namespace mcfd
