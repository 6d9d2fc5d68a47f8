#include "mcfd/nonlinearity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace mcfd {

namespace {

double clamp_cap(double value, double cap) { return std::clamp(value, -cap, cap); }

}  // namespace

NonlinearOperator linear_f(double c, std::size_t dim) {
    if (!(c >= 0.0)) throw Error("linear_f: c must be nonnegative");
    NonlinearOperator f;
    f.name = "linear";
    f.dim = dim;
    f.eval = [c](double, const Vec&, double, const Vec&, const Mat& gamma) {
        return c * gamma.trace();
    };
    f.partials = [c, dim](double, const Vec&, double, const Vec&, const Mat&) {
        const auto d = static_cast<Eigen::Index>(dim);
        return Partials{0.0, Vec::Zero(d), c * Mat::Identity(d, d)};
    };
    f.bounds.f_at_zero = 0.0;
    f.bounds.fr_sup = 0.0;
    f.bounds.lipschitz = c * static_cast<double>(dim);
    f.bounds.c1 = 0.0;
    return f;
}

double mcf_level_set_term(double sigma, const Vec& z, const Mat& gamma) {
    double value = gamma.trace() * (0.5 * sigma * sigma - 1.0);
    const double zz = z.squaredNorm();
    if (zz > 0.0) value += z.dot(gamma * z) / zz;
    return value;
}

NonlinearOperator mcf_f(double sigma, double cap, std::size_t dim) {
    if (!(sigma > 0.0) || !(cap > 0.0)) throw Error("mcf_f: sigma and cap must be positive");
    NonlinearOperator f;
    f.name = "mcf";
    f.dim = dim;
    f.cap = cap;
    f.eval = [sigma, cap](double, const Vec&, double, const Vec& p, const Mat& gamma) {
        return -clamp_cap(mcf_level_set_term(sigma, p, gamma), cap);
    };
    f.partials = [sigma, cap, dim](double, const Vec&, double, const Vec& z, const Mat& gamma) {
        const auto d = static_cast<Eigen::Index>(dim);
        Partials out{0.0, Vec::Zero(d), Mat::Zero(d, d)};
        const double raw = mcf_level_set_term(sigma, z, gamma);
        if (std::abs(raw) >= cap) return out;
        out.fgamma = -(0.5 * sigma * sigma - 1.0) * Mat::Identity(d, d);
        const double zz = z.squaredNorm();
        if (zz > 0.0) {
            const Vec gz = gamma * z;
            out.fgamma -= z * z.transpose() / zz;
            out.fp = -(2.0 * gz / zz - 2.0 * z.dot(gz) * z / (zz * zz));
        }
        return out;
    };
    // |F| <= cap, so one step adds at most h * cap.
    f.bounds.f_at_zero = 0.0;
    f.bounds.c1 = 0.0;
    return f;
}

QuadraticSup sup_quadratic(double a, double b, double lo, double hi) {
    auto q = [&](double th) { return 0.5 * a * th * th + b * th; };
    QuadraticSup best{q(lo), lo};
    if (const double v = q(hi); v > best.value) best = {v, hi};
    if (a < 0.0) {
        const double th = std::clamp(-b / a, lo, hi);
        if (const double v = q(th); v > best.value) best = {v, th};
    }
    return best;
}

QuadraticSup sup_quadratic_symmetric(double a, double b, double lo, double hi) {
    const QuadraticSup pos = sup_quadratic(a, b, lo, hi);
    // theta in [-hi, -lo]: substitute theta = -s
    QuadraticSup neg = sup_quadratic(a, -b, lo, hi);
    neg.argmax = -neg.argmax;
    return neg.value > pos.value ? neg : pos;
}

namespace {

struct HestonTerms {
    double y;
    double a;
    double b;
};

HestonTerms heston_terms(const HestonParams& p, const Vec& x, const Vec& z, const Mat& gamma) {
    const double y = std::max(x[1], p.eps);
    return {y, y * gamma(0, 0), p.mu * z[0] + p.rho * p.c * y * gamma(0, 1)};
}

}  // namespace

double heston_printed_form(const HestonParams& p, const Vec& x, const Vec& z, const Mat& gamma) {
    const auto terms = heston_terms(p, x, z, gamma);
    const auto s = sup_quadratic(terms.a, terms.b, p.eps, p.M);
    return 0.5 * p.sigma * p.sigma * gamma(0, 0) - s.value;
}

NonlinearOperator heston_f(const HestonParams& p) {
    if (!(p.eps > 0.0) || !(p.M >= p.eps)) throw Error("heston_f: need 0 < eps <= M");
    NonlinearOperator f;
    f.name = "heston";
    f.dim = 2;
    f.eval = [p](double, const Vec& x, double, const Vec& z, const Mat& gamma) {
        return -heston_printed_form(p, x, z, gamma);
    };
    f.partials = [p](double, const Vec& x, double, const Vec& z, const Mat& gamma) {
        const auto terms = heston_terms(p, x, z, gamma);
        const double th = sup_quadratic(terms.a, terms.b, p.eps, p.M).argmax;
        Partials out{0.0, Vec::Zero(2), Mat::Zero(2, 2)};
        out.fp[0] = th * p.mu;
        out.fgamma(0, 0) = 0.5 * th * th * terms.y - 0.5 * p.sigma * p.sigma;
        out.fgamma(0, 1) = out.fgamma(1, 0) = 0.5 * th * p.rho * p.c * terms.y;
        return out;
    };
    f.bounds.f_at_zero = 0.0;
    return f;
}

namespace {

struct Hjb5dTerms {
    std::array<double, 2> a;
    std::array<double, 2> b;
    double cross;  // coefficient of theta1 * g13 / 1
};

Hjb5dTerms hjb5d_terms(const Hjb5dParams& p, const Vec& x, const Vec& z, const Mat& gamma) {
    const auto& q = p.market;
    const double s1 = std::max(x[2], p.eps);
    const double y1 = std::max(x[3], p.eps);
    const double y2 = std::max(x[4], p.eps);
    const double var1 = q.sigma1 * q.sigma1 * y1 * std::pow(s1, 2.0 * q.beta1 - 2.0);
    const double cross = q.sigma1 * q.sigma1 * y1 * std::pow(s1, 2.0 * q.beta1 - 1.0);
    const double var2 = q.sigma2 * q.sigma2 * y2;
    Hjb5dTerms t;
    t.a = {var1 * gamma(0, 0), var2 * gamma(0, 0)};
    t.b = {(q.mu1 - x[1]) * z[0] + cross * gamma(0, 2), (q.mu2 - x[1]) * z[0]};
    t.cross = cross;
    return t;
}

}  // namespace

double hjb5d_printed_form(const Hjb5dParams& p, const Vec& x, const Vec& z, const Mat& gamma) {
    const auto t = hjb5d_terms(p, x, z, gamma);
    double sup = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
        sup += sup_quadratic_symmetric(t.a[i], t.b[i], p.eps, p.M).value;
    return 0.5 * p.sigma * p.sigma * gamma(0, 0) - x[0] * x[1] * z[0] - sup;
}

NonlinearOperator hjb5d_f(const Hjb5dParams& p) {
    if (!(p.eps > 0.0) || !(p.M >= p.eps)) throw Error("hjb5d_f: need 0 < eps <= M");
    NonlinearOperator f;
    f.name = "hjb5d";
    f.dim = 5;
    f.eval = [p](double, const Vec& x, double, const Vec& z, const Mat& gamma) {
        return -hjb5d_printed_form(p, x, z, gamma);
    };
    f.partials = [p](double, const Vec& x, double, const Vec& z, const Mat& gamma) {
        const auto t = hjb5d_terms(p, x, z, gamma);
        const double th1 = sup_quadratic_symmetric(t.a[0], t.b[0], p.eps, p.M).argmax;
        const double th2 = sup_quadratic_symmetric(t.a[1], t.b[1], p.eps, p.M).argmax;
        const auto& q = p.market;
        Partials out{0.0, Vec::Zero(5), Mat::Zero(5, 5)};
        out.fp[0] = x[0] * x[1] + th1 * (q.mu1 - x[1]) + th2 * (q.mu2 - x[1]);
        const double g00 = gamma(0, 0);
        // a_i is linear in g11: a_i = coef_i * g11
        const double coef1 = g00 != 0.0 ? t.a[0] / g00 : 0.0;
        const double coef2 = g00 != 0.0 ? t.a[1] / g00 : 0.0;
        out.fgamma(0, 0) = -0.5 * p.sigma * p.sigma + 0.5 * th1 * th1 * coef1 +
                           0.5 * th2 * th2 * coef2;
        out.fgamma(0, 2) = out.fgamma(2, 0) = 0.5 * th1 * t.cross;
        return out;
    };
    f.bounds.f_at_zero = 0.0;
    return f;
}

NonlinearOperator monotonicity_transform(const NonlinearOperator& f, double theta,
                                         double horizon) {
    if (!(theta >= 0.0)) throw Error("monotonicity_transform: theta must be nonnegative");
    if (theta == 0.0) return f;
    NonlinearOperator out;
    out.name = f.name + "+transform";
    out.dim = f.dim;
    out.eval = [f, theta, horizon](double t, const Vec& x, double r, const Vec& p,
                                   const Mat& gamma) {
        const double grow = std::exp(theta * (horizon - t));
        const double shrink = 1.0 / grow;
        return grow * f.eval(t, x, shrink * r, shrink * p, shrink * gamma) + theta * r;
    };
    if (f.partials) {
        out.partials = [f, theta, horizon](double t, const Vec& x, double r, const Vec& p,
                                           const Mat& gamma) {
            const double shrink = std::exp(-theta * (horizon - t));
            Partials inner = f.partials(t, x, shrink * r, shrink * p, shrink * gamma);
            inner.fr += theta;
            return inner;
        };
    }
    out.bounds.f_at_zero = std::exp(theta * horizon) * f.bounds.f_at_zero;
    out.bounds.fr_sup = f.bounds.fr_sup + theta;
    if (f.bounds.c1) out.bounds.c1 = *f.bounds.c1 + theta;
    return out;
}

Partials finite_difference_partials(const NonlinearOperator& f, const Probe& probe) {
    const auto d = static_cast<Eigen::Index>(f.dim);
    double scale = 1.0;
    scale = std::max(scale, std::abs(probe.r));
    if (probe.p.size()) scale = std::max(scale, probe.p.cwiseAbs().maxCoeff());
    if (probe.gamma.size()) scale = std::max(scale, probe.gamma.cwiseAbs().maxCoeff());
    const double step = 1e-5 * scale;

    auto eval = [&](double r, const Vec& p, const Mat& g) {
        return f.eval(probe.t, probe.x, r, p, g);
    };
    Partials out{0.0, Vec::Zero(d), Mat::Zero(d, d)};
    out.fr = (eval(probe.r + step, probe.p, probe.gamma) -
              eval(probe.r - step, probe.p, probe.gamma)) /
             (2.0 * step);
    for (Eigen::Index i = 0; i < d; ++i) {
        Vec up = probe.p, dn = probe.p;
        up[i] += step;
        dn[i] -= step;
        out.fp[i] = (eval(probe.r, up, probe.gamma) - eval(probe.r, dn, probe.gamma)) /
                    (2.0 * step);
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j) {
            Mat up = probe.gamma, dn = probe.gamma;
            up(i, j) += step;
            dn(i, j) -= step;
            if (i != j) {
                up(j, i) += step;
                dn(j, i) -= step;
            }
            const double deriv =
                (eval(probe.r, probe.p, up) - eval(probe.r, probe.p, dn)) / (2.0 * step);
            if (i == j) {
                out.fgamma(i, i) = deriv;
            } else {
                out.fgamma(i, j) = out.fgamma(j, i) = 0.5 * deriv;
            }
        }
    }
    return out;
}

namespace {

// Directions for the m_F grid: coordinate axes, diagonals and a fixed
// pseudo-random set; radii log-spaced over [1e-2, 1e2].
std::vector<Vec> mf_grid(Eigen::Index d) {
    std::vector<Vec> dirs;
    for (Eigen::Index i = 0; i < d; ++i) {
        Vec e = Vec::Zero(d);
        e[i] = 1.0;
        dirs.push_back(e);
        dirs.push_back(-e);
    }
    std::uint64_t state = 12345;
    for (int k = 0; k < 64; ++k) {
        Vec v(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            state = mix_seed(state);
            v[i] = static_cast<double>(state >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        }
        if (v.norm() > 1e-3) dirs.push_back(v.normalized());
    }
    std::vector<Vec> grid;
    for (const auto& u : dirs) {
        for (int k = 0; k <= 16; ++k) grid.push_back(std::pow(10.0, -2.0 + 0.25 * k) * u);
    }
    return grid;
}

}  // namespace

DominationReport check_domination(const NonlinearOperator& f, const DiffusionSpec& spec,
                                  const std::vector<Probe>& probes) {
    if (probes.empty()) throw Error("check_domination: no probes");
    DominationReport report;
    report.probes = probes.size();
    const auto grid = mf_grid(static_cast<Eigen::Index>(f.dim));
    for (std::size_t k = 0; k < probes.size(); ++k) {
        const Probe& probe = probes[k];
        const Partials part = finite_difference_partials(f, probe);
        const Mat sig = spec.sigma(probe.t, probe.x);
        const Mat a = sig * sig.transpose();
        const Mat fg = 0.5 * (part.fgamma + part.fgamma.transpose());
        const double tol = 1e-6 * (1.0 + a.cwiseAbs().maxCoeff());

        Eigen::SelfAdjointEigenSolver<Mat> dom(fg - a, Eigen::EigenvaluesOnly);
        const double dom_margin = dom.eigenvalues().maxCoeff();
        Eigen::SelfAdjointEigenSolver<Mat> ell(fg, Eigen::EigenvaluesOnly);
        const double ell_margin = -ell.eigenvalues().minCoeff();

        if (dom_margin > tol) ++report.dominated_violations;
        if (ell_margin > tol) ++report.ellipticity_violations;
        if (dom_margin > report.worst_domination) {
            report.worst_domination = dom_margin;
            report.worst_probe = k;
        }
        report.worst_ellipticity = std::max(report.worst_ellipticity, ell_margin);
        for (const auto& w : grid) {
            report.min_mf = std::min(report.min_mf, part.fp.dot(w) + w.dot(fg * w));
        }
    }
    return report;
}

}  // namespace mcfd
