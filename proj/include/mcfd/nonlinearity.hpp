#pragma once

#include "mcfd/sde.hpp"
#include "mcfd/types.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mcfd {

// Sign convention: every NonlinearOperator is the generator-form remainder F
// of  -L^X v - F(t, x, v, Dv, D^2 v) = 0,  so the backward step is
// E[psi] + h F(D_h psi). Several models are usually written as
// -L^X v + G = 0; their operators here are F = -G and the G expressions
// are exposed separately (mcf_level_set_term, heston_printed_form, ...).

using FEval = std::function<double(double t, const Vec& x, double r, const Vec& p,
                                   const Mat& gamma)>;

struct Partials {
    double fr = 0.0;
    Vec fp;
    Mat fgamma;
};

using FPartials = std::function<Partials(double t, const Vec& x, double r, const Vec& p,
                                         const Mat& gamma)>;

/// Sup-norm information declared by an operator. c1/c2 feed the
/// truncation bound K_h[psi] = |psi|(1 + C1 h) + C2 h.
struct DeclaredBounds {
    double f_at_zero = 0.0;  // |F(., ., 0, 0, 0)|_inf  (C2)
    double fr_sup = 0.0;     // |F_r|_inf
    std::optional<double> lipschitz;
    std::optional<double> c1;  // 1/4 |F_p^T F_gamma^- F_p|_inf + |F_r|_inf when finite
};

struct NonlinearOperator {
    std::string name;
    std::size_t dim = 1;
    FEval eval;
    FPartials partials;  // optional
    DeclaredBounds bounds;
    std::optional<double> cap;

    double operator()(double t, const Vec& x, double r, const Vec& p, const Mat& gamma) const {
        return eval(t, x, r, p, gamma);
    }
};

/// F = c tr(gamma).
NonlinearOperator linear_f(double c, std::size_t dim = 1);

/// Level-set curvature term of the time-reversed mean curvature flow,
/// G = tr(gamma)(sigma^2/2 - 1) + z.gamma z / |z|^2 (zero curvature term at
/// z = 0), before capping.
double mcf_level_set_term(double sigma, const Vec& z, const Mat& gamma);

/// Generator form of the capped mean curvature nonlinearity:
/// F = -clamp(G, -cap, cap).
NonlinearOperator mcf_f(double sigma, double cap, std::size_t dim);

struct HestonParams {
    double mu = 0.15;
    double k = 0.1;
    double m = 0.3;
    double c = 0.2;
    double rho = 0.0;
    double sigma = 1.0;  // diffusion of the wealth component in L^X
    double eps = 1e-4;
    double M = 40.0;
};

/// Maximizer and value of 0.5 a th^2 + b th over [lo, hi].
struct QuadraticSup {
    double value;
    double argmax;
};
QuadraticSup sup_quadratic(double a, double b, double lo, double hi);

/// Same, over [-hi, -lo] U [lo, hi].
QuadraticSup sup_quadratic_symmetric(double a, double b, double lo, double hi);

/// Printed (G) form of the truncated Heston HJB nonlinearity,
/// G = sigma^2 g11 / 2 - sup_{eps<=th<=M} (th^2 (y v eps) g11 / 2 + th (mu z1 + rho c (y v eps) g12)).
double heston_printed_form(const HestonParams& p, const Vec& x, const Vec& z, const Mat& gamma);

/// Generator form F = -G of the truncated Heston nonlinearity. State is
/// (wealth, variance).
NonlinearOperator heston_f(const HestonParams& p);

struct Hjb5dParams {
    Hjb5dMarket market;
    double sigma = 1.0;
    double eps = 1e-4;
    double M = 40.0;
};

/// Printed (G) form of the truncated five-dimensional HJB nonlinearity:
/// G = sigma^2 g11 / 2 - x1 x2 z1 - sup_theta Q(theta), theta_i in
/// [-M, -eps] U [eps, M], where Q is the two-asset Hamiltonian quadratic.
double hjb5d_printed_form(const Hjb5dParams& p, const Vec& x, const Vec& z, const Mat& gamma);

/// Generator form F = -G.
NonlinearOperator hjb5d_f(const Hjb5dParams& p);

/// Fbar(t,x,r,p,g) = e^{th(T-t)} F(t, x, e^{-th(T-t)} r, e^{-th(T-t)} p,
/// e^{-th(T-t)} g) + th r.
NonlinearOperator monotonicity_transform(const NonlinearOperator& f, double theta,
                                         double horizon);

struct Probe {
    double t = 0.0;
    Vec x;
    double r = 0.0;
    Vec p;
    Mat gamma;
};

/// Central-difference partials of F; the step is 1e-5 relative to the probe
/// magnitude.
Partials finite_difference_partials(const NonlinearOperator& f, const Probe& probe);

struct DominationReport {
    std::size_t probes = 0;
    /// max over probes of lambda_max(F_gamma - a); the probe passes when <= 0.
    double worst_domination = -std::numeric_limits<double>::infinity();
    /// max over probes of -lambda_min(F_gamma); positive means not elliptic.
    double worst_ellipticity = -std::numeric_limits<double>::infinity();
    /// min over probes and the w-grid of F_p.w + w^T F_gamma w.
    double min_mf = std::numeric_limits<double>::infinity();
    std::size_t worst_probe = 0;
    std::size_t dominated_violations = 0;
    std::size_t ellipticity_violations = 0;

    bool dominated() const { return dominated_violations == 0; }
    bool elliptic() const { return ellipticity_violations == 0; }
    /// The gate used by callers: F_gamma <= a at every probe.
    bool passed() const { return dominated(); }
};

DominationReport check_domination(const NonlinearOperator& f, const DiffusionSpec& spec,
                                  const std::vector<Probe>& probes);

}  // namespace mcfd
