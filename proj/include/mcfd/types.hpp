#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mcfd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised for contract violations detected at run time: singular diffusion,
/// invalid configurations, NaN in the nonlinearity and similar.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Formats a point as "(a, b, ...)" for error messages.
std::string format_point(const Vec& x);

/// Deterministic 64-bit mixer (splitmix64 finalizer). Used to derive
/// per-particle and per-run child seeds from a single top-level seed.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
    return mix_seed(mix_seed(seed) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

}  // namespace mcfd
