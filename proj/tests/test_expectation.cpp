#include "doctest.h"

#include "mcfd/expectation.hpp"

#include <cmath>

using namespace mcfd;

namespace {

double gaussian_moment(int k) {
    if (k % 2) return 0.0;
    double m = 1.0;
    for (int j = k - 1; j > 0; j -= 2) m *= j;
    return m;
}

}  // namespace

TEST_SUITE("expectation") {

TEST_CASE("rule normalization") {
    for (std::size_t order : {2, 5, 8, 20}) {
        const QuadratureRule r = gauss_hermite_1d(order);
        double s = 0.0;
        for (double w : r.weights) {
            CHECK(w > 0.0);
            s += w;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(gauss_hermite_rule(4, 3).nodes.size() == 64);
    CHECK_THROWS_AS(gauss_hermite_rule(4, 4), Error);
}

TEST_CASE("Gaussian monomials are exact up to degree 2 order - 1") {
    for (std::size_t order : {4, 6, 8}) {
        const QuadratureRule r = gauss_hermite_rule(order, 1);
        for (int k = 0; k <= static_cast<int>(2 * order - 1); ++k) {
            const double e = gaussian_expectation([k](const Vec& g) { return std::pow(g[0], k); }, r);
            // odd moments cancel terms of size E[G^(k+1)]
            CHECK(std::abs(e - gaussian_moment(k)) <= 1e-12 * (1.0 + gaussian_moment(k + k % 2)));
        }
    }
    const QuadratureRule r2 = gauss_hermite_rule(4, 2);
    for (int a = 0; a <= 6; ++a)
        for (int b = 0; a + b <= 6; ++b) {
            const double e = gaussian_expectation([a, b](const Vec& g) { return std::pow(g[0], a) * std::pow(g[1], b); }, r2);
            CHECK(e == doctest::Approx(gaussian_moment(a) * gaussian_moment(b)).epsilon(1e-12).scale(1.0));
        }
}

TEST_CASE("one-step examples") {
    const QuadratureRule rule = gauss_hermite_rule(8, 1);
    const DiffusionSpec spec = constant_diffusion(Vec::Zero(1), Mat::Identity(1, 1));
    const Vec x = Vec::Constant(1, 0.7);
    CHECK(std::get<double>(gh_expectation([](double, const Vec&) { return 1.0; }, WeightKind::kNone, spec, 0.0, x, 0.1, rule)) ==
          doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::get<double>(gh_expectation([](double, const Vec& y) { return y[0]; }, WeightKind::kNone, spec, 0.0, x, 0.1, rule)) ==
          doctest::Approx(0.7).epsilon(1e-14));
    for (double h : {0.01, 0.1, 1.0})
        for (double x0 : {-2.0, 0.0, 3.0}) {
            const Mat m = std::get<Mat>(gh_expectation([](double, const Vec& y) { return y[0] * y[0]; }, WeightKind::kHess,
                                                       spec, 0.0, Vec::Constant(1, x0), h, gauss_hermite_rule(3, 1)));
            CHECK(m(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
        }
}

TEST_CASE("psi is evaluated at t + h") {
    const QuadratureRule rule = gauss_hermite_rule(4, 1);
    const DiffusionSpec spec = constant_diffusion(Vec::Zero(1), Mat::Identity(1, 1));
    const double v = std::get<double>(
        gh_expectation([](double t, const Vec&) { return t; }, WeightKind::kNone, spec, 0.3, Vec::Zero(1), 0.2, rule));
    CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("integration by parts is exact for quartic psi") {
    Mat s(2, 2);
    s << 1.1, 0.0, 0.4, 0.6;
    Vec mu(2);
    mu << 0.3, -0.2;
    const DiffusionSpec spec = constant_diffusion(mu, s);
    auto psi = [](double, const Vec& y) { return y[0] * y[0] * y[1] * y[1] - 2.0 * y[0] * y[0] * y[0] + y[1]; };
    auto grad = [](const Vec& y) {
        Vec g(2);
        g << 2.0 * y[0] * y[1] * y[1] - 6.0 * y[0] * y[0], 2.0 * y[0] * y[0] * y[1] + 1.0;
        return g;
    };
    const QuadratureRule rule = gauss_hermite_rule(8, 2);
    Vec x(2);
    x << 0.5, -1.0;
    const double h = 0.08;
    const Vec d1 = std::get<Vec>(gh_expectation(psi, WeightKind::kGrad, spec, 0.0, x, h, rule));
    Vec expect = Vec::Zero(2);
    for (std::size_t j = 0; j < rule.nodes.size(); ++j)
        expect += rule.weights[j] * grad(x + mu * h + s * (std::sqrt(h) * rule.nodes[j]));
    CHECK((d1 - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("raising the order does not change polynomial results") {
    const DiffusionSpec spec = constant_diffusion(Vec::Zero(1), Mat::Constant(1, 1, 0.8));
    auto psi = [](double, const Vec& y) { return std::pow(y[0], 7) - y[0] * y[0]; };
    const Vec x = Vec::Constant(1, 0.3);
    const OneStepMoments a = one_step_moments(psi, spec, 0.0, x, 0.2, gauss_hermite_rule(4, 1));
    for (std::size_t order : {5, 8, 12}) {
        const OneStepMoments b = one_step_moments(psi, spec, 0.0, x, 0.2, gauss_hermite_rule(order, 1));
        CHECK(std::abs(a.d0 - b.d0) < 1e-10);
    }
}

TEST_CASE("moments agree with the single-weight calls") {
    const DiffusionSpec spec = heston_diffusion(0.5, 0.1, 0.3, 0.2);
    const QuadratureRule rule = gauss_hermite_rule(6, 2);
    auto psi = [](double, const Vec& y) { return std::exp(-y[0]) * (1.0 + y[1]); };
    Vec x(2);
    x << 1.0, 0.3;
    const OneStepMoments m = one_step_moments(psi, spec, 0.0, x, 0.05, rule);
    CHECK(m.d0 == doctest::Approx(std::get<double>(gh_expectation(psi, WeightKind::kNone, spec, 0.0, x, 0.05, rule))));
    CHECK((m.d1 - std::get<Vec>(gh_expectation(psi, WeightKind::kGrad, spec, 0.0, x, 0.05, rule))).norm() < 1e-12);
    CHECK((m.d2 - std::get<Mat>(gh_expectation(psi, WeightKind::kHess, spec, 0.0, x, 0.05, rule))).norm() < 1e-10);
}

}  // TEST_SUITE
