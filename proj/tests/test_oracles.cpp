#include "doctest.h"

#include "mcfd/oracles.hpp"

#include <cmath>

using namespace mcfd;

TEST_SUITE("oracles") {

TEST_CASE("linear exact") {
    auto g = [](double x) { return std::cos(x); };
    CHECK(linear_exact(g, 0.25, 1.0, 0.4, 1.0) == doctest::Approx(std::cos(0.4)).epsilon(1e-14));
    for (double c : {0.0, 0.25, 1.0})
        for (double x : {-1.0, 0.0, 2.5})
            for (double t : {0.0, 0.5}) {
                const double closed = std::cos(x) * std::exp(-(1.0 + 2.0 * c) * (1.0 - t) / 2.0);
                CHECK(std::abs(linear_exact(g, c, t, x, 1.0) - closed) < 1e-10);
            }
}

TEST_CASE("linear exact solves its PDE") {
    auto g = [](double x) { return std::exp(-0.25 * x * x) + 0.3 * std::sin(2.0 * x); };
    const double c = 0.25, T = 1.0, dt = 1e-3, dx = 1e-3;
    double worst = 0.0;
    for (double t : {0.0, 0.3, 0.6})
        for (double x = -2.0; x <= 2.0; x += 0.25) {
            const double vt = (linear_exact(g, c, t + dt, x, T) - linear_exact(g, c, t - (t > 0 ? dt : 0.0), x, T)) /
                              (t > 0 ? 2.0 * dt : dt);
            const double vxx = (linear_exact(g, c, t, x + dx, T) - 2.0 * linear_exact(g, c, t, x, T) +
                                linear_exact(g, c, t, x - dx, T)) / (dx * dx);
            if (t > 0) worst = std::max(worst, std::abs(vt + 0.5 * (1.0 + 2.0 * c) * vxx));
        }
    CHECK(worst < 1e-4);
}

TEST_CASE("sphere radius") {
    CHECK(sphere_radius(0.0, 0.5) == doctest::Approx(1.0));
    CHECK(sphere_radius(0.15, 0.5) == doctest::Approx(0.632456).epsilon(1e-6));
    CHECK(sphere_radius(0.25 - 1e-10, 0.5) < 1e-4);
    CHECK_THROWS_AS(sphere_radius(0.25, 0.5), Error);
    CHECK_THROWS_AS(sphere_radius(0.3, 0.5), Error);
}

TEST_CASE("zariphopoulou value without drift is the terminal utility") {
    HestonParams p;
    p.mu = 0.0;
    const ZariphopoulouResult r = zariphopoulou_value(p, 1.0, 1.0, 0.3, 0.0, 1.0, 1000, 1);
    CHECK(r.value == doctest::Approx(-std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("zariphopoulou value with deterministic variance") {
    HestonParams p;
    p.c = 0.0;
    const double y0 = 0.5, k = p.k, m = p.m, a = y0 - m, T = 1.0;
    // int_0^T ds / (m + a e^{-ks}) = ln((m e^{kT} + a) / (m + a)) / (k m)
    const double integral = std::log((m * std::exp(k * T) + a) / (m + a)) / (k * m);
    const double closed = -std::exp(-1.0) * std::exp(-0.5 * p.mu * p.mu * integral);
    const ZariphopoulouResult r = zariphopoulou_value(p, 1.0, 1.0, y0, 0.0, T, 100, 2, 400);
    CHECK(std::abs(r.value - closed) < 1e-3 * std::abs(closed));
    CHECK(r.guarded == 0);
}

TEST_CASE("zariphopoulou value at the documented parameters") {
    HestonParams p;
    const ZariphopoulouResult r = zariphopoulou_value(p, 1.0, 1.0, 0.3, 0.0, 1.0, 100000, 3);
    MESSAGE("reference " << r.value << " +- " << r.std_error);
    CHECK(std::abs(r.value + 0.3534) < 3.0 * r.std_error + 5e-4);
}

TEST_CASE("zariphopoulou value rises with wealth and with risk aversion") {
    // v = -exp(-eta x) K with K in (0, 1] independent of x and eta: v increases
    // in x, and in eta for x > 0.
    HestonParams p;
    double prev = -INFINITY;
    for (double x : {0.0, 0.5, 1.0, 2.0}) {
        const double v = zariphopoulou_value(p, 1.0, x, 0.3, 0.0, 1.0, 2000, 4).value;
        CHECK(v > prev);
        prev = v;
    }
    prev = -INFINITY;
    for (double eta : {0.5, 1.0, 2.0}) {
        const double v = zariphopoulou_value(p, eta, 1.0, 0.3, 0.0, 1.0, 2000, 4).value;
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("correlated case uses the L^{1 - rho^2} norm") {
    HestonParams p;
    p.rho = 0.3;
    const ZariphopoulouResult r = zariphopoulou_value(p, 1.0, 1.0, 0.3, 0.0, 1.0, 5000, 5);
    CHECK(std::isfinite(r.value));
    CHECK(r.value < 0.0);
    p.rho = 1.0;
    CHECK_THROWS_AS(zariphopoulou_value(p, 1.0, 1.0, 0.3, 0.0, 1.0, 10, 5), Error);
}

}  // TEST_SUITE
