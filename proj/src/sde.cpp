#include "mcfd/sde.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace mcfd {

std::string format_point(const Vec& x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (i) os << ", ";
        os << x[i];
    }
    os << ')';
    return os.str();
}

namespace {

void check_bound(const DiffusionSpec& spec, double t, const Vec& x, double value,
                 const char* what) {
    if (spec.coefficient_bound && !(std::abs(value) <= *spec.coefficient_bound)) {
        std::ostringstream os;
        os << what << " exceeds the configured bound " << *spec.coefficient_bound
           << " at t=" << t << ", x=" << format_point(x);
        throw Error(os.str());
    }
}

double sqrt_pos(double y) { return std::sqrt(std::max(y, 0.0)); }

}  // namespace

Vec DiffusionSpec::mu(double t, const Vec& x) const {
    Vec out = drift ? drift(t, x) : Vec::Zero(static_cast<Eigen::Index>(dim));
    if (coefficient_bound) check_bound(*this, t, x, out.cwiseAbs().maxCoeff(), "drift");
    return out;
}

Mat DiffusionSpec::sigma(double t, const Vec& x) const {
    Mat out = diffusion(t, x);
    if (coefficient_bound) check_bound(*this, t, x, out.cwiseAbs().maxCoeff(), "diffusion");
    return out;
}

void validate(const DiffusionSpec& spec) {
    if (spec.dim == 0) throw Error("diffusion dimension must be positive");
    if (!spec.diffusion) throw Error("diffusion coefficient is not set");
    if (!spec.steppers.empty() && spec.steppers.size() != spec.dim)
        throw Error("stepper table must have one entry per component");
    for (const auto& rule : spec.steppers) {
        if (const auto* cir = std::get_if<CirMilsteinRule>(&rule)) {
            if (4.0 * cir->rate * cir->level < cir->vol * cir->vol && !cir->clamp_at_zero) {
                throw Error(
                    "CIR implicit Milstein step requires 4km >= c^2 (enable clamp_at_zero to "
                    "override)");
            }
        }
        if (const auto* cev = std::get_if<CevLogRule>(&rule)) {
            if (cev->variance_index >= spec.dim) throw Error("CEV variance index out of range");
        }
    }
}

DiffusionSpec constant_diffusion(const Vec& drift, const Mat& diffusion) {
    DiffusionSpec spec;
    spec.dim = static_cast<std::size_t>(drift.size());
    spec.drift = [drift](double, const Vec&) { return drift; };
    spec.diffusion = [diffusion](double, const Vec&) { return diffusion; };
    return spec;
}

DiffusionSpec heston_diffusion(double sigma, double k, double m, double c) {
    DiffusionSpec spec;
    spec.dim = 2;
    spec.drift = [k, m](double, const Vec& x) {
        Vec mu(2);
        mu << 0.0, k * (m - x[1]);
        return mu;
    };
    spec.diffusion = [sigma, c](double, const Vec& x) {
        Mat s = Mat::Zero(2, 2);
        s(0, 0) = sigma;
        s(1, 1) = c * sqrt_pos(x[1]);
        return s;
    };
    spec.steppers = {EulerRule{}, CirMilsteinRule{k, m, c, false}};
    validate(spec);
    return spec;
}

DiffusionSpec hjb5d_diffusion(double sigma, const Hjb5dMarket& p) {
    DiffusionSpec spec;
    spec.dim = 5;
    spec.drift = [p](double, const Vec& x) {
        Vec mu(5);
        mu << 0.0, p.kappa * (p.b - x[1]), p.mu1 * x[2], p.k1 * (p.m1 - x[3]),
            p.k2 * (p.m2 - x[4]);
        return mu;
    };
    spec.diffusion = [sigma, p](double, const Vec& x) {
        Mat s = Mat::Zero(5, 5);
        s(0, 0) = sigma;
        s(1, 1) = p.zeta;
        s(2, 2) = p.sigma1 * sqrt_pos(x[3]) * std::pow(std::max(x[2], 0.0), p.beta1);
        s(3, 3) = p.c1 * sqrt_pos(x[3]);
        s(4, 4) = p.c2 * sqrt_pos(x[4]);
        return s;
    };
    spec.steppers = {EulerRule{}, OuExactRule{p.kappa, p.b, p.zeta},
                     CevLogRule{p.mu1, p.sigma1, p.beta1, 3},
                     CirMilsteinRule{p.k1, p.m1, p.c1, false},
                     CirMilsteinRule{p.k2, p.m2, p.c2, false}};
    validate(spec);
    return spec;
}

Vec euler_step(const DiffusionSpec& spec, double t, const Vec& x, const Vec& dW, double h) {
    return x + spec.mu(t, x) * h + spec.sigma(t, x) * dW;
}

double cir_implicit_milstein_step(double k, double m, double c, double y, double xi, double h) {
    const double sy = sqrt_pos(y);
    const double sh = std::sqrt(h);
    const double num = y + k * m * h + c * sy * xi * sh + 0.25 * c * c * h * (xi * xi - 1.0);
    return num / (1.0 + k * h);
}

double ou_exact_step(double kappa, double b, double zeta, double r, double xi, double h) {
    const double kh = kappa * h;
    double var;
    if (std::abs(kh) < 1e-8) {
        // (1 - e^{-2kh}) / (2k) = h (1 - kh + 2(kh)^2/3 + ...)
        var = h * (1.0 - kh + 2.0 * kh * kh / 3.0);
    } else {
        var = -std::expm1(-2.0 * kh) / (2.0 * kappa);
    }
    return b + std::exp(-kh) * (r - b) + zeta * std::sqrt(var) * xi;
}

double cev_log_step(double mu1, double sigma1, double beta1, double s, double y, double dW,
                    double h) {
    const double y_pos = std::max(y, 0.0);
    const double local = sigma1 * std::pow(s, beta1 - 1.0);
    const double log_next =
        std::log(s) + (mu1 - 0.5 * local * local * y_pos) * h + local * std::sqrt(y_pos) * dW;
    return std::exp(log_next);
}

Vec step(const DiffusionSpec& spec, double t, const Vec& x, const Vec& dW, double h) {
    if (spec.steppers.empty()) return euler_step(spec, t, x, dW, h);

    Vec next(x.size());
    bool have_euler = false;
    Vec euler;
    const double sh = std::sqrt(h);
    for (std::size_t k = 0; k < spec.dim; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const auto& rule = spec.steppers[k];
        if (std::holds_alternative<EulerRule>(rule)) {
            if (!have_euler) {
                euler = euler_step(spec, t, x, dW, h);
                have_euler = true;
            }
            next[i] = euler[i];
        } else if (const auto* ou = std::get_if<OuExactRule>(&rule)) {
            next[i] = ou_exact_step(ou->kappa, ou->level, ou->vol, x[i], dW[i] / sh, h);
        } else if (const auto* cir = std::get_if<CirMilsteinRule>(&rule)) {
            double y = cir_implicit_milstein_step(cir->rate, cir->level, cir->vol, x[i],
                                                  dW[i] / sh, h);
            if (cir->clamp_at_zero) y = std::max(y, 0.0);
            next[i] = y;
        } else if (const auto* cev = std::get_if<CevLogRule>(&rule)) {
            const auto vi = static_cast<Eigen::Index>(cev->variance_index);
            next[i] = cev_log_step(cev->drift, cev->vol, cev->exponent, x[i], x[vi], dW[i], h);
        }
    }
    return next;
}

ParticleCloud simulate_cloud(const DiffusionSpec& spec, const Vec& x0, std::size_t n_steps,
                             double h, std::size_t particles, std::uint64_t seed) {
    if (particles < 1) throw Error("simulate_cloud: need at least one particle");
    if (n_steps < 1) throw Error("simulate_cloud: need at least one step");
    if (!(h > 0.0)) throw Error("simulate_cloud: step must be positive");
    if (static_cast<std::size_t>(x0.size()) != spec.dim)
        throw Error("simulate_cloud: initial state has the wrong dimension");
    validate(spec);

    const auto d = static_cast<Eigen::Index>(spec.dim);
    const auto n = static_cast<Eigen::Index>(particles);
    ParticleCloud cloud;
    cloud.dim = spec.dim;
    cloud.particles = particles;
    cloud.steps = n_steps;
    cloud.h = h;
    cloud.seed = seed;
    cloud.states.assign(n_steps + 1, Mat(d, n));
    cloud.increments.assign(n_steps, Mat(d, n));

    const double sh = std::sqrt(h);
    Vec x(d), dW(d);
    for (Eigen::Index j = 0; j < n; ++j) {
        std::mt19937_64 engine(child_seed(seed, static_cast<std::uint64_t>(j)));
        std::normal_distribution<double> normal;
        x = x0;
        cloud.states[0].col(j) = x;
        for (std::size_t i = 0; i < n_steps; ++i) {
            for (Eigen::Index k = 0; k < d; ++k) dW[k] = sh * normal(engine);
            cloud.increments[i].col(j) = dW;
            x = step(spec, cloud.time(i), x, dW, h);
            cloud.states[i + 1].col(j) = x;
        }
    }
    return cloud;
}

ParticleCloud replay_cloud(const DiffusionSpec& spec, const ParticleCloud& cloud) {
    ParticleCloud out = cloud;
    const auto n = static_cast<Eigen::Index>(cloud.particles);
    for (Eigen::Index j = 0; j < n; ++j) {
        Vec x = cloud.states[0].col(j);
        for (std::size_t i = 0; i < cloud.steps; ++i) {
            x = step(spec, cloud.time(i), x, cloud.increments[i].col(j), cloud.h);
            out.states[i + 1].col(j) = x;
        }
    }
    return out;
}

void write_cloud_csv(std::ostream& os, const ParticleCloud& cloud) {
    os.precision(17);
    os << "# h=" << cloud.h << " seed=" << cloud.seed << '\n';
    os << "particle,step";
    for (std::size_t k = 0; k < cloud.dim; ++k) os << ",x" << k;
    for (std::size_t k = 0; k < cloud.dim; ++k) os << ",dw" << k;
    os << '\n';
    const auto d = static_cast<Eigen::Index>(cloud.dim);
    for (std::size_t j = 0; j < cloud.particles; ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        for (std::size_t i = 0; i <= cloud.steps; ++i) {
            os << j << ',' << i;
            for (Eigen::Index k = 0; k < d; ++k) os << ',' << cloud.states[i](k, col);
            for (Eigen::Index k = 0; k < d; ++k) {
                os << ',';
                if (i < cloud.steps) os << cloud.increments[i](k, col);
            }
            os << '\n';
        }
    }
}

ParticleCloud read_cloud_csv(std::istream& is) {
    ParticleCloud cloud;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# h=", 0) != 0)
        throw Error("cloud csv: missing metadata line");
    {
        std::istringstream meta(line.substr(4));
        std::string seed_part;
        meta >> cloud.h >> seed_part;
        if (seed_part.rfind("seed=", 0) != 0) throw Error("cloud csv: malformed metadata line");
        cloud.seed = std::stoull(seed_part.substr(5));
    }
    if (!std::getline(is, line)) throw Error("cloud csv: missing header");
    std::size_t columns = 1;
    for (char ch : line) columns += (ch == ',');
    if (columns < 4 || (columns - 2) % 2 != 0) throw Error("cloud csv: malformed header");
    cloud.dim = (columns - 2) / 2;

    struct Row {
        std::size_t particle, step;
        std::vector<double> x, dw;
    };
    std::vector<Row> rows;
    std::size_t max_particle = 0, max_step = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        while (cells.size() < columns) cells.emplace_back();
        Row row;
        row.particle = std::stoull(cells[0]);
        row.step = std::stoull(cells[1]);
        for (std::size_t k = 0; k < cloud.dim; ++k) row.x.push_back(std::stod(cells[2 + k]));
        for (std::size_t k = 0; k < cloud.dim; ++k) {
            const auto& c = cells[2 + cloud.dim + k];
            row.dw.push_back(c.empty() ? 0.0 : std::stod(c));
        }
        max_particle = std::max(max_particle, row.particle);
        max_step = std::max(max_step, row.step);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error("cloud csv: no rows");
    cloud.particles = max_particle + 1;
    cloud.steps = max_step;
    if (rows.size() != cloud.particles * (cloud.steps + 1)) throw Error("cloud csv: ragged table");
    const auto d = static_cast<Eigen::Index>(cloud.dim);
    const auto n = static_cast<Eigen::Index>(cloud.particles);
    cloud.states.assign(cloud.steps + 1, Mat(d, n));
    cloud.increments.assign(cloud.steps, Mat(d, n));
    for (const auto& row : rows) {
        const auto col = static_cast<Eigen::Index>(row.particle);
        for (Eigen::Index k = 0; k < d; ++k) {
            cloud.states[row.step](k, col) = row.x[static_cast<std::size_t>(k)];
            if (row.step < cloud.steps)
                cloud.increments[row.step](k, col) = row.dw[static_cast<std::size_t>(k)];
        }
    }
    return cloud;
}

}  // namespace mcfd
