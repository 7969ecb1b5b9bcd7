#include "san/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "san/errors.hpp"

namespace san {

FeatureSet::FeatureSet(Tensor elements, std::optional<std::array<std::size_t, 2>> source_shape)
    : elements_(std::move(elements)), source_shape_(source_shape) {
    if (elements_.rank() != 2) {
        throw dimension_error("FeatureSet: expected an n x K matrix, got " +
                              shape_string(elements_.shape()));
    }
    if (elements_.rows() == 0) {
        throw contract_error("FeatureSet: empty sets are rejected");
    }
    if (!elements_.all_finite()) {
        throw domain_error("FeatureSet: elements must be finite");
    }
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw contract_error("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

SanLayer SanLayer::glorot(std::size_t outputs, std::size_t inputs, Activation act,
                          std::uint64_t seed) {
    if (outputs == 0 || inputs == 0) {
        throw contract_error("SanLayer: output and input dims must be positive");
    }
    std::mt19937_64 rng(seed);
    double bound = std::sqrt(6.0 / static_cast<double>(inputs + outputs));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({outputs, inputs});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
    return SanLayer{std::move(w), Tensor({outputs}), act};
}

namespace {

double activate(double x, Activation act) {
    switch (act) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return 0.0;
}

}  // namespace

Tensor san_aggregate(const FeatureSet& set, const SanLayer& layer) {
    if (layer.input_dim() != set.feature_dim()) {
        throw dimension_error("san_aggregate: layer expects K'=" +
                              std::to_string(layer.input_dim()) + ", set has K'=" +
                              std::to_string(set.feature_dim()));
    }
    const Tensor& x = set.elements();
    std::size_t n = set.cardinality(), k = set.feature_dim(), m = layer.output_dim();
    Tensor out({m});
    // rows summed in ascending row-index order
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double pre = layer.bias[j];
            for (std::size_t c = 0; c < k; ++c) pre += layer.weights.at(j, c) * x.at(i, c);
            out[j] += activate(pre, layer.activation);
        }
    }
    return out;
}

Tape::NodeId san_aggregate(Tape& tape, Tape::NodeId elements, Tape::NodeId weights,
                           Tape::NodeId bias, Activation act) {
    if (tape.value(weights).cols() != tape.value(elements).cols()) {
        throw dimension_error("san_aggregate: layer expects K'=" +
                              std::to_string(tape.value(weights).cols()) + ", set has K'=" +
                              std::to_string(tape.value(elements).cols()));
    }
    Tape::NodeId pre = tape.add(tape.matmul(elements, tape.transpose(weights)), bias);
    Tape::NodeId post;
    switch (act) {
        case Activation::relu: post = tape.relu(pre); break;
        case Activation::tanh: post = tape.tanh_act(pre); break;
        case Activation::sigmoid: post = tape.sigmoid(pre); break;
        default: throw contract_error("san_aggregate: unknown activation");
    }
    return tape.reduce_sum(post, 0);
}

Tensor pool(const FeatureSet& set, PoolKind kind) {
    const Tensor& x = set.elements();
    std::size_t n = set.cardinality(), k = set.feature_dim();
    Tensor out({k});
    switch (kind) {
        case PoolKind::max:
            for (std::size_t c = 0; c < k; ++c) out[c] = x.at(0, c);
            for (std::size_t i = 1; i < n; ++i)
                for (std::size_t c = 0; c < k; ++c) out[c] = std::max(out[c], x.at(i, c));
            break;
        case PoolKind::sum:
        case PoolKind::avg:
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < k; ++c) out[c] += x.at(i, c);
            if (kind == PoolKind::avg)
                for (std::size_t c = 0; c < k; ++c) out[c] /= static_cast<double>(n);
            break;
    }
    return out;
}

Tape::NodeId pool(Tape& tape, Tape::NodeId elements, PoolKind kind) {
    switch (kind) {
        case PoolKind::max: return tape.reduce_max_rows(elements);
        case PoolKind::sum: return tape.reduce_sum(elements, 0);
        case PoolKind::avg:
            return tape.scale(tape.reduce_sum(elements, 0),
                              1.0 / static_cast<double>(tape.value(elements).rows()));
    }
    throw contract_error("pool: unknown kind");
}

Tensor flatten_set(const FeatureSet& set) {
    return Tensor({set.cardinality() * set.feature_dim()}, set.elements().data());
}

Tensor conv1x1_set(const FeatureSet& set, std::span<const double> w, double b0) {
    if (w.size() != set.feature_dim()) {
        throw dimension_error("conv1x1: weight length " + std::to_string(w.size()) +
                              " vs feature dim " + std::to_string(set.feature_dim()));
    }
    const Tensor& x = set.elements();
    Tensor out({set.cardinality()});
    for (std::size_t i = 0; i < set.cardinality(); ++i) {
        double acc = b0;
        for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * x.at(i, c);
        out[i] = acc;
    }
    return out;
}

PositionalMode positional_mode_from_string(const std::string& name) {
    if (name == "none") return PositionalMode::none;
    if (name == "normalized-index") return PositionalMode::normalized_index;
    if (name == "normalized-2d") return PositionalMode::normalized_2d;
    if (name == "sinusoidal") return PositionalMode::sinusoidal;
    throw contract_error("unknown positional mode '" + name + "'");
}

std::string to_string(PositionalMode m) {
    switch (m) {
        case PositionalMode::none: return "none";
        case PositionalMode::normalized_index: return "normalized-index";
        case PositionalMode::normalized_2d: return "normalized-2d";
        case PositionalMode::sinusoidal: return "sinusoidal";
    }
    return "?";
}

Tensor position_columns(std::size_t n, PositionalMode mode, std::size_t d_pos,
                        const std::optional<std::array<std::size_t, 2>>& source_shape) {
    switch (mode) {
        case PositionalMode::none:
            throw contract_error("position_columns: mode 'none' appends nothing");
        case PositionalMode::normalized_index: {
            Tensor out({n, 1});
            for (std::size_t i = 0; i < n; ++i)
                out.at(i, 0) = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
            return out;
        }
        case PositionalMode::normalized_2d: {
            if (!source_shape) {
                throw contract_error("attach_positions: normalized-2d requires a source shape");
            }
            auto [h, w] = *source_shape;
            if (h * w != n) {
                throw contract_error("attach_positions: source shape " + std::to_string(h) + "x" +
                                     std::to_string(w) + " does not cover cardinality " +
                                     std::to_string(n));
            }
            Tensor out({n, 2});
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t r = i / w, c = i % w;
                out.at(i, 0) = h > 1 ? static_cast<double>(r) / static_cast<double>(h - 1) : 0.0;
                out.at(i, 1) = w > 1 ? static_cast<double>(c) / static_cast<double>(w - 1) : 0.0;
            }
            return out;
        }
        case PositionalMode::sinusoidal: {
            if (d_pos == 0 || d_pos % 2 != 0) {
                throw contract_error("attach_positions: sinusoidal requires an even positive d_pos");
            }
            Tensor out({n, d_pos});
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t pair = 0; pair < d_pos / 2; ++pair) {
                    double freq = std::pow(10000.0, 2.0 * static_cast<double>(pair) /
                                                        static_cast<double>(d_pos));
                    double arg = static_cast<double>(i) / freq;
                    out.at(i, 2 * pair) = std::sin(arg);
                    out.at(i, 2 * pair + 1) = std::cos(arg);
                }
            }
            return out;
        }
    }
    throw contract_error("position_columns: unknown mode");
}

FeatureSet attach_positions(const FeatureSet& set, PositionalMode mode, std::size_t d_pos) {
    if (mode == PositionalMode::none) return set;
    std::size_t n = set.cardinality(), k = set.feature_dim();
    const Tensor& x = set.elements();
    Tensor cols = position_columns(n, mode, d_pos, set.source_shape());
    Tensor out({n, k + cols.cols()});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) out.at(i, c) = x.at(i, c);
        for (std::size_t c = 0; c < cols.cols(); ++c) out.at(i, k + c) = cols.at(i, c);
    }
    return FeatureSet(std::move(out), set.source_shape());
}

double power_max_approx(std::span<const double> values, double p, MaxApproxMode mode) {
    if (values.empty()) {
        throw contract_error("power_max_approx: empty value set");
    }
    if (!(p >= 1.0)) {
        throw contract_error("power_max_approx: exponent must be >= 1");
    }
    if (mode == MaxApproxMode::power) {
        double m = 0.0;
        for (double v : values) {
            if (!(v > 0.0)) {
                throw domain_error("power_max_approx: power mode requires strictly positive "
                                   "values, got " + std::to_string(v));
            }
            m = std::max(m, v);
        }
        // factor out the max so x^p never overflows and singletons are exact
        double acc = 0.0;
        for (double v : values) acc += std::pow(v / m, p);
        return m * std::pow(acc, 1.0 / p);
    }
    // log-sum-exp with max-subtraction, valid for any reals
    double m = *std::max_element(values.begin(), values.end());
    double acc = 0.0;
    for (double v : values) acc += std::exp(p * (v - m));
    return m + std::log(acc) / p;
}

}  // namespace san
