#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "san/tape.hpp"
#include "san/tensor.hpp"

namespace san {

// Variable-cardinality collection of feature vectors, stored as an n x K'
// matrix. Rows are set elements; aggregator outputs must not depend on
// their order (up to summation round-off).
class FeatureSet {
  public:
    explicit FeatureSet(Tensor elements,
                        std::optional<std::array<std::size_t, 2>> source_shape = std::nullopt);

    std::size_t cardinality() const { return elements_.rows(); }
    std::size_t feature_dim() const { return elements_.cols(); }
    const Tensor& elements() const { return elements_; }
    const std::optional<std::array<std::size_t, 2>>& source_shape() const { return source_shape_; }

  private:
    Tensor elements_;
    std::optional<std::array<std::size_t, 2>> source_shape_;
};

enum class Activation { relu, tanh, sigmoid };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Single trainable aggregation layer: one weight row and bias per output
// neuron; the set embedding is the per-neuron activation summed over all
// set elements.
struct SanLayer {
    Tensor weights;  // M x K'
    Tensor bias;     // M
    Activation activation = Activation::relu;

    std::size_t output_dim() const { return weights.rows(); }
    std::size_t input_dim() const { return weights.cols(); }

    // uniform in [-sqrt(6/(K'+M)), +sqrt(6/(K'+M))], biases 0
    static SanLayer glorot(std::size_t outputs, std::size_t inputs, Activation act,
                           std::uint64_t seed);
};

// e_m = sum_i act(v_m . x_i + b_m); output length M for any cardinality.
Tensor san_aggregate(const FeatureSet& set, const SanLayer& layer);

// Differentiable route: elements is an n x K' node, weights M x K', bias M.
Tape::NodeId san_aggregate(Tape& tape, Tape::NodeId elements, Tape::NodeId weights,
                           Tape::NodeId bias, Activation act);

enum class PoolKind { max, avg, sum };

// Coordinatewise parameter-free reduction over rows.
Tensor pool(const FeatureSet& set, PoolKind kind);
Tape::NodeId pool(Tape& tape, Tape::NodeId elements, PoolKind kind);

// Order-sensitive baselines. Both require a dataset-constant cardinality;
// that contract is enforced by the model layer, which knows the trained n.
Tensor flatten_set(const FeatureSet& set);
Tensor conv1x1_set(const FeatureSet& set, std::span<const double> w, double b0);

enum class PositionalMode { none, normalized_index, normalized_2d, sinusoidal };

PositionalMode positional_mode_from_string(const std::string& name);
std::string to_string(PositionalMode m);

// Appends position columns to every element. normalized_index appends
// i/(n-1) (0 for a singleton); normalized_2d appends (row/(H-1), col/(W-1))
// from source_shape; sinusoidal appends d_pos interleaved
// sin(i/10000^(2k/d_pos)), cos(i/10000^(2k/d_pos)) values.
FeatureSet attach_positions(const FeatureSet& set, PositionalMode mode, std::size_t d_pos = 0);

// The raw position columns appended by attach_positions, as an n x E
// matrix (E = 1, 2 or d_pos depending on the mode).
Tensor position_columns(std::size_t n, PositionalMode mode, std::size_t d_pos,
                        const std::optional<std::array<std::size_t, 2>>& source_shape);

enum class MaxApproxMode { power, log_sum_exp };

// Smooth approximations of max: (sum x^p)^(1/p) for positive values, or
// (1/p) log sum exp(p x) for arbitrary reals (max-subtracted for stability).
double power_max_approx(std::span<const double> values, double p, MaxApproxMode mode);

}  // namespace san
