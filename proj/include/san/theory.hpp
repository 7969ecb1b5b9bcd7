#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "san/aggregation.hpp"

namespace san {

// Samples of b -> sum_i relu(v*s_i + b) for a one-dimensional set. The
// profile fully characterizes the set along direction v: its second
// derivative is a unit mass at b = -v*s_i per element.
struct ProfileReport {
    double direction = 1.0;
    std::vector<double> bias_grid;  // ascending
    std::vector<double> values;
};

ProfileReport relu_profile(std::span<const double> set, double direction,
                           std::vector<double> bias_grid);

// Inverts a profile sampled on a uniform grid with step h: discrete second
// differences (f(b-h) - 2 f(b) + f(b+h)) / h give the element count at -b.
// Returns each estimated element repeated by its rounded multiplicity.
std::vector<double> recover_1d_set(const ProfileReport& profile, double grid_step);

struct CollisionReport {
    std::size_t neuron_count = 0;
    std::size_t trials = 0;        // sets embedded
    std::size_t pairs_tested = 0;
    std::size_t collisions = 0;    // pairs closer than the threshold
    double min_pair_distance = 0.0;
};

inline constexpr double kCollisionThreshold = 1e-9;

// Embeds every set in the universe with one seeded random ReLU layer
// (weights standard normal, biases uniform over the data range) and counts
// embedding collisions between distinct sets. Neurons are drawn once for
// the largest requested M; smaller M reuse a prefix, so collision counts
// are non-increasing in M by construction.
CollisionReport injectivity_check(const std::vector<std::vector<double>>& universe,
                                  std::size_t neuron_count, std::uint64_t seed,
                                  std::size_t neuron_pool = 0);

// |power_max_approx(values, p) - max(values)| along an ascending exponent
// schedule. Power mode obeys error <= max*(n^(1/p) - 1), log-sum-exp mode
// error <= log(n)/p.
std::vector<double> maxlimit_convergence_check(std::span<const double> values,
                                               std::span<const double> p_schedule,
                                               MaxApproxMode mode);

}  // namespace san
