#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "san/aggregation.hpp"
#include "san/data_io.hpp"
#include "san/tape.hpp"

namespace san {

enum class AggregatorKind { san, max_pool, avg_pool, sum_pool, flatten, conv1x1 };

AggregatorKind aggregator_from_string(const std::string& name);
std::string to_string(AggregatorKind k);

inline bool is_order_sensitive(AggregatorKind k) {
    return k == AggregatorKind::flatten || k == AggregatorKind::conv1x1;
}

enum class ExtractorKind { identity, mlp, conv };

// Extractor -> aggregate -> head classifier description.
struct ModelConfig {
    ExtractorKind extractor = ExtractorKind::mlp;
    std::size_t input_dim = 2;  // element feature dim for sets, channels for images
    std::vector<std::size_t> mlp_widths = {16};      // per-layer outputs, ReLU after each
    std::vector<std::size_t> conv_channels = {8, 16};  // 3x3 convs, 2x2 maxpool between

    AggregatorKind aggregator = AggregatorKind::san;
    std::size_t san_outputs = 16;
    Activation san_activation = Activation::relu;
    PositionalMode positional = PositionalMode::none;
    std::size_t sinusoidal_dims = 0;

    std::vector<std::size_t> head_widths;  // hidden widths; final dense maps to class_count
    bool identity_head = false;            // logits = aggregator output, no head parameters
    std::size_t class_count = 2;

    // required (and enforced) for the order-sensitive aggregators
    std::optional<std::size_t> fixed_cardinality;

    std::size_t extractor_output_dim() const;
    std::size_t aggregator_input_dim() const;   // extractor output + positional columns
    std::size_t aggregator_output_dim() const;  // head input
};

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
};

// Row-major depth vectors of an HxWxC feature map as a FeatureSet with
// source_shape (H, W).
FeatureSet image_to_set(const Tensor& feature_map);

class Model {
  public:
    Model(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }

    // Registers every parameter as a tape leaf, in parameter order.
    std::vector<Tape::NodeId> bind_parameters(Tape& tape) const;

    // Builds the full pipeline on the tape and returns the logits node
    // (length class_count).
    Tape::NodeId forward_on_tape(Tape& tape, const Sample& input,
                                 const std::vector<Tape::NodeId>& param_nodes) const;

    // Convenience non-training forward.
    Tensor forward(const Sample& input) const;

  private:
    ModelConfig config_;
    std::vector<Parameter> params_;
};

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    double validation_fraction = 0.0;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Adam on mean softmax cross-entropy. Shuffling, validation split and
// initialization are all derived from config.seed; identical seeds give
// bit-identical parameters and metrics.
std::vector<MetricsRecord> train(Model& model, const LabeledDataset& dataset,
                                 const TrainConfig& config);

// accuracy = fraction with argmax(logits) == label, argmax ties resolved
// to the lowest class index
EvalResult evaluate(const Model& model, const LabeledDataset& dataset);

}  // namespace san
