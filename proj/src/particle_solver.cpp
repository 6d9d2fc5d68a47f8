#include "mcfd/solver.hpp"
#include "mcfd/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mcfd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t weighted_columns(std::size_t d, int scheme) {
    return scheme == 1 ? d + d * (d + 1) / 2 : d + d * d;
}

/// Splits one row of weighted-regression output into D1 and the symmetric
/// Hessian estimate.
void unpack(const Eigen::Ref<const Eigen::RowVectorXd>& row, std::size_t d, int scheme, Vec& d1,
            Mat& gamma) {
    const auto dd = static_cast<Eigen::Index>(d);
    d1 = row.head(dd).transpose();
    gamma.resize(dd, dd);
    Eigen::Index col = dd;
    if (scheme == 1) {
        for (Eigen::Index k = 0; k < dd; ++k)
            for (Eigen::Index l = k; l < dd; ++l) gamma(k, l) = gamma(l, k) = row[col++];
    } else {
        for (Eigen::Index k = 0; k < dd; ++k)
            for (Eigen::Index l = 0; l < dd; ++l) gamma(k, l) = row[col++];
        gamma = (0.5 * (gamma + gamma.transpose())).eval();
    }
}

double checked_f(const NonlinearOperator& f, double t, const Vec& x, double r, const Vec& p,
                 const Mat& gamma) {
    const double v = f(t, x, r, p, gamma);
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "nonlinearity '" << f.name << "' returned " << v << " at t=" << t
           << " x=" << format_point(x);
        throw Error(os.str());
    }
    return v;
}

struct Fitter {
    const SolverConfig& cfg;
    const DiffusionSpec& spec;
    const ParticleCloud& cloud;
    Vec sigma_diag;  // Malliavin only
    std::size_t unreliable = 0;

    EstimatorPtr fit(std::size_t i, const Mat& values, const Mat* controls) {
        const Mat& x = cloud.states[i];
        if (cfg.regression == RegressionKind::kLocalBasis) {
            auto est = std::make_shared<LocalBasisEstimator>(
                LocalBasisEstimator::fit(x, values, cfg.local_basis, controls));
            if (est->fallback_cells() == est->cells() && est->cells() > 1)
                throw Error("backward_solve_particles: every regression cell is degenerate at step " +
                            std::to_string(i));
            return est;
        }
        MalliavinSlice slice;
        slice.states = x;
        slice.brownian = Mat::Zero(x.rows(), x.cols());
        for (std::size_t k = 0; k < i; ++k) slice.brownian += cloud.increments[k];
        slice.increments = cloud.increments[i];
        slice.scale = sigma_diag;
        slice.t = cloud.time(i);
        slice.h = cloud.h;
        const Vec eta = cfg.eta ? *cfg.eta : MalliavinEstimator::default_eta(cloud.dim, cloud.h);
        return std::make_shared<MalliavinEstimator>(MalliavinEstimator::fit(slice, values, eta));
    }

    Mat evaluate(const EstimatorPtr& est, const Mat& x) {
        Mat out = est->evaluate_batch(x);
        if (auto m = std::dynamic_pointer_cast<const MalliavinEstimator>(est)) {
            unreliable = std::max(unreliable, m->unreliable_queries());
        }
        return out;
    }
};

/// The Malliavin estimator assumes X_t = x0 + mu t + s W_t with constant
/// diagonal s; reject anything else.
Vec malliavin_scale(const DiffusionSpec& spec, const ParticleCloud& cloud) {
    if (cloud.dim > 2) throw Error("backward_solve_particles: Malliavin regression supports d <= 2");
    const Vec x0 = cloud.states[0].col(0);
    const Mat s0 = spec.sigma(0.0, x0);
    const Vec mu0 = spec.mu(0.0, x0);
    if (!s0.isDiagonal()) throw Error("backward_solve_particles: Malliavin regression needs diagonal sigma");
    Vec w = Vec::Zero(static_cast<Eigen::Index>(cloud.dim));
    const Eigen::Index probes = std::min<Eigen::Index>(8, static_cast<Eigen::Index>(cloud.particles));
    for (std::size_t i = 0; i <= cloud.steps; i += std::max<std::size_t>(1, cloud.steps / 4)) {
        for (Eigen::Index j = 0; j < probes; ++j) {
            Vec wj = Vec::Zero(w.size());
            for (std::size_t k = 0; k < i; ++k) wj += cloud.increments[k].col(j);
            const Vec x = cloud.states[i].col(j);
            const Vec expect = x0 + mu0 * cloud.time(i) + s0.diagonal().cwiseProduct(wj);
            if ((x - expect).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + x.cwiseAbs().maxCoeff()) ||
                (spec.sigma(cloud.time(i), x) - s0).cwiseAbs().maxCoeff() > 1e-12)
                throw Error("backward_solve_particles: Malliavin regression needs constant coefficients");
        }
    }
    return s0.diagonal();
}

/// Normalized Hermite products He_a(xi) / sqrt(a!) of xi = dW / sqrt(h), one
/// column per multi-index with 1 <= |a| <= degree.
Mat increment_controls(const Mat& dw, double h, std::size_t degree) {
    const Eigen::Index d = dw.rows(), n = dw.cols();
    const auto deg = static_cast<Eigen::Index>(degree);
    // he[k](a, j) = He_a(xi_kj) / sqrt(a!)
    std::vector<Mat> he(static_cast<std::size_t>(d), Mat(deg + 1, n));
    const double s = 1.0 / std::sqrt(h);
    for (Eigen::Index k = 0; k < d; ++k) {
        Mat& t = he[static_cast<std::size_t>(k)];
        for (Eigen::Index j = 0; j < n; ++j) {
            const double xi = dw(k, j) * s;
            double prev = 1.0, cur = xi;
            t(0, j) = 1.0;
            if (deg >= 1) t(1, j) = xi;
            for (Eigen::Index a = 1; a < deg; ++a) {
                const double next = xi * cur - static_cast<double>(a) * prev;
                prev = cur;
                cur = next;
                t(a + 1, j) = next;
            }
        }
        for (Eigen::Index a = 2; a <= deg; ++a) t.row(a) /= std::sqrt(std::tgamma(static_cast<double>(a) + 1.0));
    }
    std::vector<std::vector<Eigen::Index>> multi;
    std::vector<Eigen::Index> a(static_cast<std::size_t>(d), 0);
    for (;;) {
        Eigen::Index total = 0;
        for (auto v : a) total += v;
        if (total >= 1 && total <= deg) multi.push_back(a);
        std::size_t k = 0;
        while (k < a.size() && ++a[k] > deg) a[k++] = 0;
        if (k == a.size()) break;
    }
    Mat out = Mat::Ones(n, static_cast<Eigen::Index>(multi.size()));
    for (std::size_t c = 0; c < multi.size(); ++c)
        for (Eigen::Index k = 0; k < d; ++k)
            if (multi[c][static_cast<std::size_t>(k)] > 0)
                out.col(static_cast<Eigen::Index>(c)) = out.col(static_cast<Eigen::Index>(c)).cwiseProduct(
                    he[static_cast<std::size_t>(k)].row(multi[c][static_cast<std::size_t>(k)]).transpose());
    return out;
}

/// Adds one row of weighted-fit output to the batch fields at row q.
void accumulate(LayerFields& out, Eigen::Index q, const Eigen::Ref<const Eigen::RowVectorXd>& row,
                std::size_t d, int scheme) {
    Vec d1;
    Mat gamma;
    unpack(row, d, scheme, d1, gamma);
    const auto dd = static_cast<Eigen::Index>(d);
    out.gradient.row(q) += d1.transpose();
    for (Eigen::Index k = 0; k < dd; ++k) out.hessian.block(q, k * dd, 1, dd) += gamma.row(k);
}

Mat hessian_at(const LayerFields& fl, Eigen::Index q, Eigen::Index d) {
    Mat g(d, d);
    for (Eigen::Index k = 0; k < d; ++k) g.row(k) = fl.hessian.block(q, k * d, 1, d);
    return g;
}

}  // namespace

LayerFields ParticleSolution::fields(std::size_t step, const Mat& x) const {
    if (layers.empty() || step >= layers.size()) throw Error("ParticleSolution::fields: step out of range");
    const std::size_t n = layers.size() - 1;
    const auto d = static_cast<std::size_t>(x.rows());
    const auto dd = static_cast<Eigen::Index>(d);
    const Eigen::Index nq = x.cols();
    LayerFields out{Vec(nq), Mat::Zero(nq, dd), Mat::Zero(nq, dd * dd)};

    if (!residual_fits) {
        if (step == n) throw Error("ParticleSolution::fields: plain fits hold no terminal field");
        const ParticleLayer& layer = layers[step];
        const Mat means = layer.mean_fit->evaluate_batch(x);
        const Mat weighted = layer.weighted_fit->evaluate_batch(x);
        for (Eigen::Index q = 0; q < nq; ++q) {
            accumulate(out, q, weighted.row(q), d, scheme);
            const double e0 = means(q, 0);
            const double v = e0 + h * checked_f(f, layer.t, x.col(q), e0,
                                                out.gradient.row(q).transpose(), hessian_at(out, q, dd));
            out.value[q] = std::clamp(v, -layer.clip, layer.clip);
        }
        return out;
    }

    for (Eigen::Index q = 0; q < nq; ++q) {
        const Vec xq = x.col(q);
        out.value[q] = terminal.value(xq);
        if (terminal.gradient) out.gradient.row(q) = terminal.gradient(xq).transpose();
        if (terminal.hessian) {
            const Mat hq = terminal.hessian(xq);
            for (Eigen::Index k = 0; k < dd; ++k) out.hessian.block(q, k * dd, 1, dd) = hq.row(k);
        }
    }
    for (std::size_t k = n; k-- > step;) {
        const ParticleLayer& layer = layers[k];
        const Mat means = layer.mean_fit->evaluate_batch(x);
        const Mat weighted = layer.weighted_fit->evaluate_batch(x);
        for (Eigen::Index q = 0; q < nq; ++q) {
            accumulate(out, q, weighted.row(q), d, scheme);
            const double e0 = out.value[q] + means(q, 0);
            const double v = e0 + h * checked_f(f, layer.t, x.col(q), e0,
                                                out.gradient.row(q).transpose(), hessian_at(out, q, dd));
            out.value[q] = std::clamp(v, -layer.clip, layer.clip);
        }
    }
    return out;
}

std::pair<double, Vec> ParticleSolution::evaluate(std::size_t step, const Vec& x) const {
    if (step + 1 >= layers.size()) throw Error("ParticleSolution::evaluate: step out of range");
    const LayerFields fl = fields(step, Mat(x));
    const double scale = layers[step].scale;
    return {scale * fl.value[0], scale * fl.gradient.row(0).transpose()};
}

ParticleSolution backward_solve_particles(const SolverConfig& cfg, const NonlinearOperator& f,
                                          const DiffusionSpec& spec, const TerminalCondition& g,
                                          const Vec& x0) {
    const ParticleCloud cloud =
        simulate_cloud(spec, x0, cfg.steps(), cfg.h, cfg.particles, cfg.seed);
    return backward_solve_particles(cfg, f, spec, g, cloud);
}

ParticleSolution backward_solve_particles(const SolverConfig& cfg, const NonlinearOperator& f,
                                          const DiffusionSpec& spec, const TerminalCondition& g,
                                          const ParticleCloud& cloud) {
    cfg.validate();
    const std::size_t n = cfg.steps();
    const std::size_t d = spec.dim;
    const auto dd = static_cast<Eigen::Index>(d);
    const auto np = static_cast<Eigen::Index>(cloud.particles);
    if (cloud.steps != n || std::abs(cloud.h - cfg.h) > 1e-12 || cloud.dim != d)
        throw Error("backward_solve_particles: cloud does not match the configuration");
    if (!g.value) throw Error("backward_solve_particles: terminal value is required");
    if (cfg.scheme == 2 && !g.gradient)
        throw Error("backward_solve_particles: scheme 2 needs the terminal gradient");
    if (cfg.regression == RegressionKind::kLocalBasis && cfg.local_basis.cells_per_axis.size() != d)
        throw Error("backward_solve_particles: cells_per_axis must have one entry per dimension");

    ParticleSolution sol;
    sol.h = cfg.h;
    sol.scheme = cfg.scheme;
    sol.residual_fits = cfg.residual_fits;
    sol.terminal = g;
    sol.f = cfg.theta > 0.0 ? monotonicity_transform(f, cfg.theta, cfg.T) : f;
    std::optional<ResolvedTruncation> trunc;
    if (cfg.truncation) trunc = resolve_truncation(*cfg.truncation, sol.f);

    Fitter fitter{cfg, spec, cloud, Vec(), 0};
    if (cfg.regression == RegressionKind::kMalliavin) fitter.sigma_diag = malliavin_scale(spec, cloud);

    sol.layers.resize(n + 1);
    {
        ParticleLayer& last = sol.layers[n];
        last.t = cfg.T;
        last.values.resize(np);
        last.gradients = Mat::Zero(dd, np);
        for (Eigen::Index j = 0; j < np; ++j) {
            const Vec x = cloud.states[n].col(j);
            last.values[j] = g.value(x);
            if (g.gradient) last.gradients.col(j) = g.gradient(x);
        }
        last.clip = kInf;
        last.bound = kInf;
        if (trunc) {
            last.bound = cfg.truncation->g_sup ? *cfg.truncation->g_sup
                                               : last.values.cwiseAbs().maxCoeff();
            if (last.values.cwiseAbs().maxCoeff() > last.bound)
                throw Error("backward_solve_particles: terminal values exceed g_sup");
        }
    }

    const bool residual = cfg.residual_fits;
    const auto wcols = static_cast<Eigen::Index>(weighted_columns(d, cfg.scheme));
    const Eigen::Index mcols = !residual && cfg.scheme == 2 ? 1 + dd : 1;
    Mat means(np, mcols), weighted(np, wcols);
    Vec d1, sdw, taylor(np), taylor_mean(np);
    Mat gamma, p2;

    for (std::size_t i = n; i-- > 0;) {
        const ParticleLayer& next = sol.layers[i + 1];
        ParticleLayer& cur = sol.layers[i];
        const double t = cloud.time(i);
        cur.t = t;
        const Mat& x = cloud.states[i];
        const Mat& dw = cloud.increments[i];

        // The next layer's fields at X_i: offsets for the value regression and
        // Taylor terms for the weighted ones.
        LayerFields prior;
        if (residual) {
            prior = sol.fields(i + 1, x);
            for (Eigen::Index j = 0; j < np; ++j) {
                const Mat sig = spec.sigma(t, x.col(j));
                sdw = sig * dw.col(j);
                p2 = hessian_at(prior, j, dd);
                const double linear = prior.gradient.row(j).dot(sdw);
                const double quad = 0.5 * sdw.dot(p2 * sdw);
                taylor[j] = linear + quad;
                // E[taylor | X_i] = h tr(p2 sig sig^T) / 2
                taylor_mean[j] = 0.5 * cfg.h * (p2 * sig * sig.transpose()).trace();
            }
        }

        means.col(0) = next.values;
        if (residual) {
            means.col(0) -= prior.value + taylor - taylor_mean;
        } else if (cfg.scheme == 2) {
            means.rightCols(dd) = next.gradients.transpose();
        }
        Mat controls;
        if (cfg.increment_controls > 0) controls = increment_controls(dw, cfg.h, cfg.increment_controls);
        const Mat* cv = cfg.increment_controls > 0 ? &controls : nullptr;
        cur.mean_fit = fitter.fit(i, means, cv);
        const Mat fitted = fitter.evaluate(cur.mean_fit, x);
        Vec e0 = fitted.col(0);
        if (residual) e0 += prior.value;

        for (Eigen::Index j = 0; j < np; ++j) {
            const Vec xj = x.col(j);
            const Mat sig = spec.sigma(t, xj);
            const InverseDiffusion inv(sig, t, xj);
            const Vec h1 = inv.first_order(dw.col(j), cfg.h);
            double y = next.values[j] - e0[j];
            if (residual) {
                // centering by the offset itself; its error is O(h^2) where a
                // fitted mean would add its basis misfit times the weights
                sdw = sig * dw.col(j);
                p2 = hessian_at(prior, j, dd);
                y = next.values[j] - prior.value[j] - taylor[j];
            }
            weighted.row(j).head(dd) = y * h1.transpose();
            Eigen::Index col = dd;
            if (cfg.scheme == 1) {
                const Mat h2 = inv.second_order(dw.col(j), cfg.h);
                for (Eigen::Index k = 0; k < dd; ++k)
                    for (Eigen::Index l = k; l < dd; ++l) weighted(j, col++) = y * h2(k, l);
            } else {
                Vec z = next.gradients.col(j);
                if (residual) {
                    z -= prior.gradient.row(j).transpose() + p2 * sdw;
                } else {
                    z -= fitted.row(j).segment(1, dd).transpose();
                }
                for (Eigen::Index k = 0; k < dd; ++k)
                    for (Eigen::Index l = 0; l < dd; ++l) weighted(j, col++) = z[k] * h1[l];
            }
        }
        cur.weighted_fit = fitter.fit(i, weighted, cv);
        const Mat derivs = fitter.evaluate(cur.weighted_fit, x);

        cur.values.resize(np);
        cur.gradients.resize(dd, np);
        for (Eigen::Index j = 0; j < np; ++j) {
            unpack(derivs.row(j), d, cfg.scheme, d1, gamma);
            if (residual) {
                d1 += prior.gradient.row(j).transpose();
                gamma += hessian_at(prior, j, dd);
            }
            const Vec xj = x.col(j);
            cur.values[j] = e0[j] + cfg.h * checked_f(sol.f, t, xj, e0[j], d1, gamma);
            cur.gradients.col(j) = d1;
        }

        cur.clip = kInf;
        cur.bound = kInf;
        if (trunc) {
            cur.clip = truncation_bound(next.values.cwiseAbs().maxCoeff(), trunc->c1, trunc->c2, cfg.h);
            cur.bound = truncation_bound(next.bound, trunc->c1, trunc->c2, cfg.h);
            for (Eigen::Index j = 0; j < np; ++j) {
                const double v = cur.values[j];
                if (std::abs(v) > cur.clip) {
                    cur.values[j] = std::clamp(v, -cur.clip, cur.clip);
                    ++cur.truncated;
                }
                if (std::abs(cur.values[j]) > cur.bound * (1.0 + 1e-12)) ++sol.bound_violations;
            }
        }
        if (auto lb = std::dynamic_pointer_cast<const LocalBasisEstimator>(cur.mean_fit))
            cur.fallback_cells = lb->fallback_cells();
    }

    for (auto& layer : sol.layers) {
        layer.scale = std::exp(-cfg.theta * (cfg.T - layer.t));
        if (cfg.theta > 0.0) {
            layer.values *= layer.scale;
            layer.gradients *= layer.scale;
        }
    }
    sol.unreliable_queries = fitter.unreliable;
    sol.v0 = sol.layers[0].values.mean();
    return sol;
}

}  // namespace mcfd
