#pragma once

#include "mcfd/types.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

namespace mcfd {

/// x -> (v(x), estimate of grad v(x)).
using ValueGradientFn = std::function<std::pair<double, Vec>(const Vec&)>;

struct FrontOptions {
    double tol = 0.01;              // final bracket width
    double step = 0.05;             // marching step along the descent direction
    std::size_t max_iterations = 200;  // value evaluations per seed
};

struct FrontResult {
    std::vector<Vec> points;
    std::vector<std::size_t> seed_of_point;
    std::vector<std::size_t> unresolved;  // seed indices without a bracket
};

/// From each seed, march along -sign(v) grad v / |grad v| until v changes
/// sign, then halve the bracket until it is shorter than tol and emit its
/// midpoint.
FrontResult extract_zero_level(const ValueGradientFn& value, const std::vector<Vec>& seeds,
                               const FrontOptions& opts = {});

/// Central-difference gradient wrapper for a value-only field.
ValueGradientFn with_fd_gradient(std::function<double(const Vec&)> value, double step = 1e-4);

/// `count` points at distance `radius` from `center`: uniform angles in 2D,
/// a Fibonacci lattice on the sphere in 3D, +-1 in 1D.
std::vector<Vec> ray_seeds(const Vec& center, double radius, std::size_t count);

/// Signed profile of two unit disks centred at (+-1.5, 0) joined by the
/// stripe |x| <= 1.5, |y| <= 0.5: the max of 1 - |p - c| for each disk and
/// min(0.5 - |y|, 1.5 - |x|) for the stripe.
struct TwoDisksProfile {
    double center = 1.5;
    double radius = 1.0;
    double half_width = 0.5;
    double half_length = 1.5;

    double operator()(const Vec& p) const;
    /// A one-sided (sub)gradient of the active piece.
    Vec gradient(const Vec& p) const;
};

TwoDisksProfile two_disks_initial(double center = 1.5, double radius = 1.0,
                                  double half_width = 0.5, double half_length = 1.5);

/// Columns: t,x0..x{d-1}
void write_front_csv(std::ostream& os, double t, const FrontResult& front);

}  // namespace mcfd
