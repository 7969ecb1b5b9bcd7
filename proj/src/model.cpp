#include "san/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "san/errors.hpp"

namespace san {

AggregatorKind aggregator_from_string(const std::string& name) {
    if (name == "san") return AggregatorKind::san;
    if (name == "max") return AggregatorKind::max_pool;
    if (name == "avg") return AggregatorKind::avg_pool;
    if (name == "sum") return AggregatorKind::sum_pool;
    if (name == "flatten") return AggregatorKind::flatten;
    if (name == "conv1x1") return AggregatorKind::conv1x1;
    throw contract_error("unknown aggregator '" + name + "'");
}

std::string to_string(AggregatorKind k) {
    switch (k) {
        case AggregatorKind::san: return "san";
        case AggregatorKind::max_pool: return "max";
        case AggregatorKind::avg_pool: return "avg";
        case AggregatorKind::sum_pool: return "sum";
        case AggregatorKind::flatten: return "flatten";
        case AggregatorKind::conv1x1: return "conv1x1";
    }
    return "?";
}

std::size_t ModelConfig::extractor_output_dim() const {
    switch (extractor) {
        case ExtractorKind::identity: return input_dim;
        case ExtractorKind::mlp: return mlp_widths.empty() ? input_dim : mlp_widths.back();
        case ExtractorKind::conv: return conv_channels.empty() ? input_dim : conv_channels.back();
    }
    return input_dim;
}

std::size_t ModelConfig::aggregator_input_dim() const {
    std::size_t k = extractor_output_dim();
    switch (positional) {
        case PositionalMode::none: return k;
        case PositionalMode::normalized_index: return k + 1;
        case PositionalMode::normalized_2d: return k + 2;
        case PositionalMode::sinusoidal: return k + sinusoidal_dims;
    }
    return k;
}

std::size_t ModelConfig::aggregator_output_dim() const {
    switch (aggregator) {
        case AggregatorKind::san: return san_outputs;
        case AggregatorKind::max_pool:
        case AggregatorKind::avg_pool:
        case AggregatorKind::sum_pool: return aggregator_input_dim();
        case AggregatorKind::flatten:
            return fixed_cardinality.value_or(0) * aggregator_input_dim();
        case AggregatorKind::conv1x1: return fixed_cardinality.value_or(0);
    }
    return 0;
}

FeatureSet image_to_set(const Tensor& feature_map) {
    if (feature_map.rank() != 3) {
        throw dimension_error("image_to_set: expected an HxWxC tensor, got " +
                              shape_string(feature_map.shape()));
    }
    std::size_t h = feature_map.shape()[0], w = feature_map.shape()[1],
                c = feature_map.shape()[2];
    // row-major layout is already (H*W) x C
    return FeatureSet(Tensor({h * w, c}, feature_map.data()),
                      std::array<std::size_t, 2>{h, w});
}

namespace {

Tensor glorot_matrix(std::size_t out, std::size_t in, std::mt19937_64& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({out, in});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
    return w;
}

Parameter make_param(std::string name, Tensor value) {
    Tensor zeros(value.shape());
    return Parameter{std::move(name), std::move(value), zeros, zeros, zeros};
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    if (config_.class_count < 1) throw contract_error("Model: class_count must be >= 1");
    if (is_order_sensitive(config_.aggregator) && !config_.fixed_cardinality) {
        throw contract_error("Model: " + to_string(config_.aggregator) +
                             " aggregator requires a fixed cardinality");
    }
    if (config_.aggregator == AggregatorKind::san && config_.san_outputs == 0) {
        throw contract_error("Model: san_outputs must be >= 1");
    }
    if (config_.identity_head && config_.aggregator_output_dim() != config_.class_count) {
        throw contract_error("Model: identity head needs aggregator output dim " +
                             std::to_string(config_.aggregator_output_dim()) +
                             " to equal class count " + std::to_string(config_.class_count));
    }

    std::mt19937_64 rng(seed);
    std::size_t in = config_.input_dim;
    if (config_.extractor == ExtractorKind::mlp) {
        for (std::size_t l = 0; l < config_.mlp_widths.size(); ++l) {
            std::size_t out = config_.mlp_widths[l];
            params_.push_back(make_param("psi.w" + std::to_string(l), glorot_matrix(out, in, rng)));
            params_.push_back(make_param("psi.b" + std::to_string(l), Tensor({out})));
            in = out;
        }
    } else if (config_.extractor == ExtractorKind::conv) {
        for (std::size_t l = 0; l < config_.conv_channels.size(); ++l) {
            std::size_t out = config_.conv_channels[l];
            params_.push_back(
                make_param("psi.conv" + std::to_string(l), glorot_matrix(out, 9 * in, rng)));
            params_.push_back(make_param("psi.cb" + std::to_string(l), Tensor({out})));
            in = out;
        }
    }

    std::size_t k_prime = config_.aggregator_input_dim();
    if (config_.aggregator == AggregatorKind::san) {
        params_.push_back(
            make_param("san.v", glorot_matrix(config_.san_outputs, k_prime, rng)));
        params_.push_back(make_param("san.b", Tensor({config_.san_outputs})));
    } else if (config_.aggregator == AggregatorKind::conv1x1) {
        params_.push_back(make_param("conv1x1.w", glorot_matrix(1, k_prime, rng)));
        params_.push_back(make_param("conv1x1.b", Tensor({1})));
    }

    if (!config_.identity_head) {
        std::size_t hin = config_.aggregator_output_dim();
        for (std::size_t l = 0; l < config_.head_widths.size(); ++l) {
            std::size_t out = config_.head_widths[l];
            params_.push_back(
                make_param("phi.w" + std::to_string(l), glorot_matrix(out, hin, rng)));
            params_.push_back(make_param("phi.b" + std::to_string(l), Tensor({out})));
            hin = out;
        }
        params_.push_back(make_param("phi.out.w", glorot_matrix(config_.class_count, hin, rng)));
        params_.push_back(make_param("phi.out.b", Tensor({config_.class_count})));
    }
}

std::vector<Tape::NodeId> Model::bind_parameters(Tape& tape) const {
    std::vector<Tape::NodeId> ids;
    ids.reserve(params_.size());
    for (const Parameter& p : params_) ids.push_back(tape.leaf(p.value));
    return ids;
}

Tape::NodeId Model::forward_on_tape(Tape& tape, const Sample& input,
                                    const std::vector<Tape::NodeId>& param_nodes) const {
    std::size_t cursor = 0;
    auto next_param = [&]() { return param_nodes.at(cursor++); };

    Tape::NodeId features;  // n x K node after the extractor
    std::size_t n;
    std::optional<std::array<std::size_t, 2>> source_shape;

    if (std::holds_alternative<Tensor>(input)) {
        const Tensor& image = std::get<Tensor>(input);
        if (image.rank() != 3) {
            throw dimension_error("model_forward: expected an HxWxC image, got " +
                                  shape_string(image.shape()));
        }
        if (image.shape()[2] != config_.input_dim) {
            throw dimension_error("model_forward: image has " +
                                  std::to_string(image.shape()[2]) + " channels, model expects " +
                                  std::to_string(config_.input_dim));
        }
        std::size_t h = image.shape()[0], w = image.shape()[1];
        Tape::NodeId node = tape.leaf(image);
        if (config_.extractor == ExtractorKind::conv) {
            for (std::size_t l = 0; l < config_.conv_channels.size(); ++l) {
                Tape::NodeId wts = next_param();
                Tape::NodeId bias = next_param();
                Tape::NodeId patches = tape.im2col(node, 3, 3);
                Tape::NodeId z =
                    tape.relu(tape.add(tape.matmul(patches, tape.transpose(wts)), bias));
                node = tape.reshape(z, {h, w, config_.conv_channels[l]});
                if (l + 1 < config_.conv_channels.size()) {
                    node = tape.maxpool2x2(node);
                    h /= 2;
                    w /= 2;
                }
            }
            n = h * w;
            features = tape.reshape(node, {n, config_.conv_channels.back()});
            source_shape = {{h, w}};
        } else {
            n = h * w;
            features = tape.reshape(node, {n, config_.input_dim});
            source_shape = {{h, w}};
            if (config_.extractor == ExtractorKind::mlp) {
                for (std::size_t l = 0; l < config_.mlp_widths.size(); ++l) {
                    Tape::NodeId wts = next_param();
                    Tape::NodeId bias = next_param();
                    features =
                        tape.relu(tape.add(tape.matmul(features, tape.transpose(wts)), bias));
                }
            }
        }
    } else {
        const FeatureSet& set = std::get<FeatureSet>(input);
        if (config_.extractor == ExtractorKind::conv) {
            throw contract_error("model_forward: conv extractor requires image input");
        }
        if (set.feature_dim() != config_.input_dim) {
            throw dimension_error("model_forward: set feature dim " +
                                  std::to_string(set.feature_dim()) + " vs model input dim " +
                                  std::to_string(config_.input_dim));
        }
        n = set.cardinality();
        source_shape = set.source_shape();
        features = tape.leaf(set.elements());
        if (config_.extractor == ExtractorKind::mlp) {
            for (std::size_t l = 0; l < config_.mlp_widths.size(); ++l) {
                Tape::NodeId wts = next_param();
                Tape::NodeId bias = next_param();
                features = tape.relu(tape.add(tape.matmul(features, tape.transpose(wts)), bias));
            }
        }
    }

    if (config_.positional != PositionalMode::none) {
        features = tape.append_cols(
            features, position_columns(n, config_.positional, config_.sinusoidal_dims,
                                       source_shape));
    }

    if (is_order_sensitive(config_.aggregator) && n != *config_.fixed_cardinality) {
        throw contract_error("model_forward: " + to_string(config_.aggregator) +
                             " aggregator was built for cardinality " +
                             std::to_string(*config_.fixed_cardinality) + ", sample has " +
                             std::to_string(n));
    }

    Tape::NodeId agg = features;
    switch (config_.aggregator) {
        case AggregatorKind::san: {
            Tape::NodeId v = next_param();
            Tape::NodeId b = next_param();
            agg = san_aggregate(tape, features, v, b, config_.san_activation);
            break;
        }
        case AggregatorKind::max_pool: agg = pool(tape, features, PoolKind::max); break;
        case AggregatorKind::avg_pool: agg = pool(tape, features, PoolKind::avg); break;
        case AggregatorKind::sum_pool: agg = pool(tape, features, PoolKind::sum); break;
        case AggregatorKind::flatten:
            agg = tape.reshape(features, {n * config_.aggregator_input_dim()});
            break;
        case AggregatorKind::conv1x1: {
            Tape::NodeId w = next_param();
            Tape::NodeId b = next_param();
            agg = tape.reshape(tape.add(tape.matmul(features, tape.transpose(w)), b), {n});
            break;
        }
    }

    if (config_.identity_head) return agg;

    Tape::NodeId h = tape.reshape(agg, {1, config_.aggregator_output_dim()});
    for (std::size_t l = 0; l < config_.head_widths.size(); ++l) {
        Tape::NodeId wts = next_param();
        Tape::NodeId bias = next_param();
        h = tape.relu(tape.add(tape.matmul(h, tape.transpose(wts)), bias));
    }
    Tape::NodeId wts = next_param();
    Tape::NodeId bias = next_param();
    h = tape.add(tape.matmul(h, tape.transpose(wts)), bias);
    return tape.reshape(h, {config_.class_count});
}

Tensor Model::forward(const Sample& input) const {
    Tape tape;
    std::vector<Tape::NodeId> params = bind_parameters(tape);
    return tape.value(forward_on_tape(tape, input, params));
}

namespace {

EvalResult evaluate_indices(const Model& model, const LabeledDataset& dataset,
                            const std::vector<std::size_t>& indices) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i : indices) {
        Tensor logits = model.forward(dataset.samples[i]);
        int label = dataset.labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
            throw contract_error("evaluate: label " + std::to_string(label) +
                                 " outside logits dimension " + std::to_string(logits.size()));
        }
        double m = logits[0];
        std::size_t arg = 0;
        for (std::size_t c = 1; c < logits.size(); ++c) {
            if (logits[c] > m) {  // ties resolve to the lowest class index
                m = logits[c];
                arg = c;
            }
        }
        double z = 0.0;
        for (std::size_t c = 0; c < logits.size(); ++c) z += std::exp(logits[c] - m);
        loss += m + std::log(z) - logits[static_cast<std::size_t>(label)];
        if (arg == static_cast<std::size_t>(label)) ++correct;
    }
    std::size_t count = indices.size();
    return EvalResult{loss / static_cast<double>(count),
                      static_cast<double>(correct) / static_cast<double>(count)};
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

}  // namespace

EvalResult evaluate(const Model& model, const LabeledDataset& dataset) {
    if (dataset.size() == 0) throw contract_error("evaluate: empty dataset");
    return evaluate_indices(model, dataset, all_indices(dataset.size()));
}

std::vector<MetricsRecord> train(Model& model, const LabeledDataset& dataset,
                                 const TrainConfig& config) {
    if (dataset.size() == 0) throw contract_error("train: empty dataset");
    if (!(config.lr > 0.0)) throw contract_error("train: learning rate must be positive");
    if (config.batch_size < 1) throw contract_error("train: batch size must be >= 1");
    if (config.validation_fraction < 0.0 || config.validation_fraction >= 1.0) {
        throw contract_error("train: validation_fraction must lie in [0, 1)");
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        int y = dataset.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= model.config().class_count) {
            throw contract_error("train: label " + std::to_string(y) + " of sample " +
                                 std::to_string(i) + " outside [0, " +
                                 std::to_string(model.config().class_count) + ")");
        }
    }

    std::vector<MetricsRecord> metrics;
    if (config.epochs == 0) return metrics;

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order = all_indices(dataset.size());
    std::shuffle(order.begin(), order.end(), rng);

    // validation carved from the front of the shuffled order
    std::size_t val_count = static_cast<std::size_t>(
        std::floor(config.validation_fraction * static_cast<double>(dataset.size())));
    std::vector<std::size_t> valid(order.begin(),
                                   order.begin() + static_cast<std::ptrdiff_t>(val_count));
    std::vector<std::size_t> pool(order.begin() + static_cast<std::ptrdiff_t>(val_count),
                                  order.end());
    if (pool.empty()) throw contract_error("train: validation split leaves no training samples");

    std::vector<Parameter>& params = model.parameters();
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(pool.begin(), pool.end(), rng);
        double epoch_loss = 0.0;
        std::size_t epoch_correct = 0;

        for (std::size_t start = 0; start < pool.size(); start += config.batch_size) {
            std::size_t end = std::min(start + config.batch_size, pool.size());
            std::size_t batch = end - start;
            for (Parameter& p : params)
                std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0);

            for (std::size_t j = start; j < end; ++j) {
                std::size_t i = pool[j];
                Tape tape;
                std::vector<Tape::NodeId> ids = model.bind_parameters(tape);
                Tape::NodeId logits;
                try {
                    logits = model.forward_on_tape(tape, dataset.samples[i], ids);
                } catch (const contract_error& e) {
                    throw contract_error(std::string(e.what()) + " (sample " + std::to_string(i) +
                                         ")");
                }
                int label = dataset.labels[i];
                Tape::NodeId loss = tape.softmax_cross_entropy(logits, {&label, 1});
                double loss_value = tape.value(loss)[0];
                if (!std::isfinite(loss_value)) {
                    throw training_error("train: loss diverged at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(start / config.batch_size));
                }
                tape.backward(loss);
                for (std::size_t p = 0; p < params.size(); ++p) {
                    const Tensor& g = tape.grad(ids[p]);
                    for (std::size_t q = 0; q < g.size(); ++q) params[p].grad[q] += g[q];
                }
                epoch_loss += loss_value;
                const Tensor& lv = tape.value(logits);
                std::size_t arg = 0;
                for (std::size_t c = 1; c < lv.size(); ++c)
                    if (lv[c] > lv[arg]) arg = c;
                if (arg == static_cast<std::size_t>(label)) ++epoch_correct;
            }

            // Adam step on the batch-mean gradient
            ++step;
            double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            double inv_batch = 1.0 / static_cast<double>(batch);
            for (Parameter& p : params) {
                for (std::size_t q = 0; q < p.value.size(); ++q) {
                    double g = p.grad[q] * inv_batch;
                    p.adam_m[q] = config.beta1 * p.adam_m[q] + (1.0 - config.beta1) * g;
                    p.adam_v[q] = config.beta2 * p.adam_v[q] + (1.0 - config.beta2) * g * g;
                    double mh = p.adam_m[q] / bc1;
                    double vh = p.adam_v[q] / bc2;
                    p.value[q] -= config.lr * mh / (std::sqrt(vh) + config.epsilon);
                }
                if (!p.value.all_finite()) {
                    throw training_error("train: parameter " + p.name +
                                         " diverged at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(start / config.batch_size));
                }
            }
        }

        metrics.push_back(MetricsRecord{epoch, Split::train,
                                        epoch_loss / static_cast<double>(pool.size()),
                                        static_cast<double>(epoch_correct) /
                                            static_cast<double>(pool.size())});
        if (!valid.empty()) {
            EvalResult v = evaluate_indices(model, dataset, valid);
            metrics.push_back(MetricsRecord{epoch, Split::valid, v.loss, v.accuracy});
        }
    }
    return metrics;
}

}  // namespace san
