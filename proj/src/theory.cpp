#include "san/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "san/errors.hpp"

namespace san {

ProfileReport relu_profile(std::span<const double> set, double direction,
                           std::vector<double> bias_grid) {
    if (set.empty()) throw contract_error("relu_profile: empty set");
    for (std::size_t i = 1; i < bias_grid.size(); ++i) {
        if (!(bias_grid[i] > bias_grid[i - 1])) {
            throw contract_error("relu_profile: bias grid must be strictly ascending");
        }
    }
    ProfileReport report;
    report.direction = direction;
    report.values.reserve(bias_grid.size());
    for (double b : bias_grid) {
        double acc = 0.0;
        for (double s : set) acc += std::max(0.0, direction * s + b);
        report.values.push_back(acc);
    }
    report.bias_grid = std::move(bias_grid);
    return report;
}

std::vector<double> recover_1d_set(const ProfileReport& profile, double grid_step) {
    if (!(grid_step > 0.0)) throw contract_error("recover_1d_set: grid step must be positive");
    if (profile.direction == 0.0) {
        throw contract_error("recover_1d_set: degenerate direction, set is not observable");
    }
    const std::vector<double>& grid = profile.bias_grid;
    const std::vector<double>& f = profile.values;
    if (grid.size() < 3 || f.size() != grid.size()) {
        throw contract_error("recover_1d_set: profile needs at least 3 uniform grid points");
    }
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (std::abs((grid[i] - grid[i - 1]) - grid_step) > 1e-9 * std::max(1.0, grid_step)) {
            throw contract_error("recover_1d_set: non-uniform grid between points " +
                                 std::to_string(i - 1) + " and " + std::to_string(i));
        }
    }
    std::vector<double> elements;
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
        double mass = (f[i - 1] - 2.0 * f[i] + f[i + 1]) / grid_step;
        long mult = std::lround(mass);
        for (long m = 0; m < mult; ++m) elements.push_back(-grid[i] / profile.direction);
    }
    return elements;
}

CollisionReport injectivity_check(const std::vector<std::vector<double>>& universe,
                                  std::size_t neuron_count, std::uint64_t seed,
                                  std::size_t neuron_pool) {
    if (neuron_count == 0) throw contract_error("injectivity_check: need at least one neuron");
    if (neuron_pool < neuron_count) neuron_pool = neuron_count;

    double radius = 1.0;
    for (const auto& set : universe) {
        if (set.empty()) throw contract_error("injectivity_check: empty set in universe");
        for (double s : set) radius = std::max(radius, std::abs(s));
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> weight(0.0, 1.0);
    std::uniform_real_distribution<double> bias(-radius, radius);
    std::vector<double> w(neuron_pool), b(neuron_pool);
    for (std::size_t m = 0; m < neuron_pool; ++m) {
        w[m] = weight(rng);
        b[m] = bias(rng);
    }

    std::vector<std::vector<double>> embeddings;
    embeddings.reserve(universe.size());
    for (const auto& set : universe) {
        std::vector<double> e(neuron_count, 0.0);
        for (double s : set)
            for (std::size_t m = 0; m < neuron_count; ++m)
                e[m] += std::max(0.0, w[m] * s + b[m]);
        embeddings.push_back(std::move(e));
    }

    CollisionReport report;
    report.neuron_count = neuron_count;
    report.trials = universe.size();
    report.min_pair_distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t m = 0; m < neuron_count; ++m) {
                double diff = embeddings[i][m] - embeddings[j][m];
                d2 += diff * diff;
            }
            double d = std::sqrt(d2);
            report.min_pair_distance = std::min(report.min_pair_distance, d);
            ++report.pairs_tested;
            if (d < kCollisionThreshold) ++report.collisions;
        }
    }
    if (report.pairs_tested == 0) report.min_pair_distance = 0.0;
    return report;
}

std::vector<double> maxlimit_convergence_check(std::span<const double> values,
                                               std::span<const double> p_schedule,
                                               MaxApproxMode mode) {
    for (std::size_t i = 1; i < p_schedule.size(); ++i) {
        if (!(p_schedule[i] > p_schedule[i - 1])) {
            throw contract_error("maxlimit_convergence_check: exponent schedule must ascend");
        }
    }
    if (values.empty()) throw contract_error("maxlimit_convergence_check: empty value set");
    double true_max = *std::max_element(values.begin(), values.end());
    std::vector<double> errors;
    errors.reserve(p_schedule.size());
    for (double p : p_schedule) {
        errors.push_back(std::abs(power_max_approx(values, p, mode) - true_max));
    }
    return errors;
}

}  // namespace san
