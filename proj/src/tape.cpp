#include "san/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace san {

namespace {

bool is_integer(double x) { return x == std::floor(x); }

}  // namespace

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tape::NodeId Tape::push(Tensor value, std::function<void()> back) {
    Tensor grad(value.shape());
    nodes_.push_back(Node{std::move(value), std::move(grad), std::move(back)});
    return nodes_.size() - 1;
}

void Tape::check_finite(NodeId id, const char* op) const {
    if (!nodes_[id].value.all_finite()) {
        throw domain_error(std::string(op) + " produced a non-finite value");
    }
}

Tape::NodeId Tape::leaf(Tensor value) {
    NodeId id = push(std::move(value), {});
    check_finite(id, "leaf");
    return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& x = nodes_[a].value;
    const Tensor& y = nodes_[b].value;
    bool bias_broadcast = x.rank() == 2 && y.rank() == 1 && y.size() == x.cols();
    if (!bias_broadcast && !x.same_shape(y)) {
        throw dimension_error("add: shapes " + shape_string(x.shape()) + " and " +
                              shape_string(y.shape()) + " do not conform");
    }
    Tensor out(x.shape());
    if (bias_broadcast) {
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(r, c) + y[c];
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    }
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a, b, bias_broadcast]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        Tensor& gb = nodes_[b].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (bias_broadcast) {
            std::size_t cols = nodes_[a].value.cols();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
        } else {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    };
    check_finite(id, "add");
    return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& x = nodes_[a].value;
    const Tensor& y = nodes_[b].value;
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows()) {
        throw dimension_error("matmul: shapes " + shape_string(x.shape()) + " and " +
                              shape_string(y.shape()) + " do not conform");
    }
    std::size_t n = x.rows(), k = x.cols(), m = y.cols();
    Tensor out({n, m});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += x.at(r, j) * y.at(j, c);
            out.at(r, c) = acc;
        }
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a, b, n, k, m]() {
        const Tensor& g = nodes_[id].grad;
        const Tensor& x = nodes_[a].value;
        const Tensor& y = nodes_[b].value;
        Tensor& ga = nodes_[a].grad;
        Tensor& gb = nodes_[b].grad;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < k; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < m; ++c) acc += g.at(r, c) * y.at(j, c);
                ga.at(r, j) += acc;
            }
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < m; ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < n; ++r) acc += x.at(r, j) * g.at(r, c);
                gb.at(j, c) += acc;
            }
    };
    check_finite(id, "matmul");
    return id;
}

Tape::NodeId Tape::transpose(NodeId a) {
    const Tensor& x = nodes_[a].value;
    if (x.rank() != 2) {
        throw dimension_error("transpose: expected a matrix, got " + shape_string(x.shape()));
    }
    std::size_t n = x.rows(), m = x.cols();
    Tensor out({m, n});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) out.at(c, r) = x.at(r, c);
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a, n, m]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) ga.at(r, c) += g.at(c, r);
    };
    return id;
}

Tape::NodeId Tape::relu(NodeId a) {
    const Tensor& x = nodes_[a].value;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    NodeId id = push(std::move(out), {});
    // subgradient 0 at exactly 0
    nodes_[id].back = [this, id, a]() {
        const Tensor& g = nodes_[id].grad;
        const Tensor& x = nodes_[a].value;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    };
    return id;
}

Tape::NodeId Tape::tanh_act(NodeId a) {
    const Tensor& x = nodes_[a].value;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a]() {
        const Tensor& g = nodes_[id].grad;
        const Tensor& y = nodes_[id].value;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    };
    return id;
}

Tape::NodeId Tape::sigmoid(NodeId a) {
    const Tensor& x = nodes_[a].value;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a]() {
        const Tensor& g = nodes_[id].grad;
        const Tensor& y = nodes_[id].value;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
    return id;
}

Tape::NodeId Tape::scale(NodeId a, double factor) {
    const Tensor& x = nodes_[a].value;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a, factor]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    };
    check_finite(id, "scale");
    return id;
}

Tape::NodeId Tape::pow_elem(NodeId a, double exponent) {
    const Tensor& x = nodes_[a].value;
    if (!is_integer(exponent)) {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] <= 0.0)
                throw domain_error("pow: non-integer exponent requires strictly positive input, got " +
                                   std::to_string(x[i]));
    }
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::pow(x[i], exponent);
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a, exponent]() {
        const Tensor& g = nodes_[id].grad;
        const Tensor& x = nodes_[a].value;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * exponent * std::pow(x[i], exponent - 1.0);
    };
    check_finite(id, "pow");
    return id;
}

Tape::NodeId Tape::exp_elem(NodeId a) {
    const Tensor& x = nodes_[a].value;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a]() {
        const Tensor& g = nodes_[id].grad;
        const Tensor& y = nodes_[id].value;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    };
    check_finite(id, "exp");
    return id;
}

Tape::NodeId Tape::log_elem(NodeId a) {
    const Tensor& x = nodes_[a].value;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] <= 0.0)
            throw domain_error("log: input must be strictly positive, got " + std::to_string(x[i]));
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::log(x[i]);
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a]() {
        const Tensor& g = nodes_[id].grad;
        const Tensor& x = nodes_[a].value;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    };
    return id;
}

Tape::NodeId Tape::reduce_sum(NodeId a, std::size_t axis) {
    const Tensor& x = nodes_[a].value;
    if (x.rank() != 2 || axis > 1) {
        throw dimension_error("reduce_sum: expected a matrix and axis 0 or 1, got " +
                              shape_string(x.shape()) + " axis " + std::to_string(axis));
    }
    std::size_t n = x.rows(), m = x.cols();
    Tensor out({axis == 0 ? m : n});
    // fixed left-to-right order over the stored layout
    if (axis == 0) {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) out[c] += x.at(r, c);
    } else {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) out[r] += x.at(r, c);
    }
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a, axis, n, m]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) ga.at(r, c) += g[axis == 0 ? c : r];
    };
    check_finite(id, "reduce_sum");
    return id;
}

Tape::NodeId Tape::sum_all(NodeId a) {
    const Tensor& x = nodes_[a].value;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    NodeId id = push(Tensor::scalar(acc), {});
    nodes_[id].back = [this, id, a]() {
        double g = nodes_[id].grad[0];
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    check_finite(id, "sum_all");
    return id;
}

Tape::NodeId Tape::reduce_max_rows(NodeId a) {
    const Tensor& x = nodes_[a].value;
    if (x.rank() != 2) {
        throw dimension_error("reduce_max_rows: expected a matrix, got " + shape_string(x.shape()));
    }
    std::size_t n = x.rows(), m = x.cols();
    Tensor out({m});
    std::vector<std::size_t> argmax(m, 0);
    for (std::size_t c = 0; c < m; ++c) {
        double best = x.at(0, c);
        for (std::size_t r = 1; r < n; ++r) {
            if (x.at(r, c) > best) {
                best = x.at(r, c);
                argmax[c] = r;
            }
        }
        out[c] = best;
    }
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a, argmax = std::move(argmax)]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t c = 0; c < g.size(); ++c) ga.at(argmax[c], c) += g[c];
    };
    return id;
}

Tape::NodeId Tape::reshape(NodeId a, std::vector<std::size_t> shape) {
    const Tensor& x = nodes_[a].value;
    if (Tensor::count(shape) != x.size()) {
        throw dimension_error("reshape: " + shape_string(x.shape()) + " has " +
                              std::to_string(x.size()) + " elements, target " +
                              shape_string(shape) + " needs " +
                              std::to_string(Tensor::count(shape)));
    }
    Tensor out(std::move(shape), x.data());
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return id;
}

Tape::NodeId Tape::append_cols(NodeId a, const Tensor& constant_cols) {
    const Tensor& x = nodes_[a].value;
    if (x.rank() != 2 || constant_cols.rank() != 2 || constant_cols.rows() != x.rows()) {
        throw dimension_error("append_cols: shapes " + shape_string(x.shape()) + " and " +
                              shape_string(constant_cols.shape()) + " do not conform");
    }
    std::size_t n = x.rows(), k = x.cols(), e = constant_cols.cols();
    Tensor out({n, k + e});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < k; ++c) out.at(r, c) = x.at(r, c);
        for (std::size_t c = 0; c < e; ++c) out.at(r, k + c) = constant_cols.at(r, c);
    }
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, a, n, k]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < k; ++c) ga.at(r, c) += g.at(r, c);
    };
    check_finite(id, "append_cols");
    return id;
}

Tape::NodeId Tape::im2col(NodeId image, std::size_t kh, std::size_t kw) {
    const Tensor& x = nodes_[image].value;
    if (x.rank() != 3) {
        throw dimension_error("im2col: expected an HxWxC tensor, got " + shape_string(x.shape()));
    }
    std::size_t h = x.shape()[0], w = x.shape()[1], ch = x.shape()[2];
    std::size_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    Tensor out({h * w, kh * kw * ch});
    auto src = [&](std::size_t r, std::size_t c, std::size_t k) {
        return x[(r * w + c) * ch + k];
    };
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            std::size_t row = r * w + c;
            std::size_t col = 0;
            for (std::size_t dr = 0; dr < kh; ++dr)
                for (std::size_t dc = 0; dc < kw; ++dc)
                    for (std::size_t k = 0; k < ch; ++k, ++col) {
                        std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r + dr) -
                                            static_cast<std::ptrdiff_t>(ph);
                        std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c + dc) -
                                            static_cast<std::ptrdiff_t>(pw);
                        bool inside = rr >= 0 && rr < static_cast<std::ptrdiff_t>(h) &&
                                      cc >= 0 && cc < static_cast<std::ptrdiff_t>(w);
                        out.at(row, col) = inside ? src(static_cast<std::size_t>(rr),
                                                        static_cast<std::size_t>(cc), k)
                                                  : 0.0;
                    }
        }
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, image, kh, kw, h, w, ch, ph, pw]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[image].grad;
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                std::size_t row = r * w + c;
                std::size_t col = 0;
                for (std::size_t dr = 0; dr < kh; ++dr)
                    for (std::size_t dc = 0; dc < kw; ++dc)
                        for (std::size_t k = 0; k < ch; ++k, ++col) {
                            std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r + dr) -
                                                static_cast<std::ptrdiff_t>(ph);
                            std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c + dc) -
                                                static_cast<std::ptrdiff_t>(pw);
                            if (rr >= 0 && rr < static_cast<std::ptrdiff_t>(h) && cc >= 0 &&
                                cc < static_cast<std::ptrdiff_t>(w)) {
                                ga[(static_cast<std::size_t>(rr) * w +
                                    static_cast<std::size_t>(cc)) * ch + k] += g.at(row, col);
                            }
                        }
            }
    };
    return id;
}

Tape::NodeId Tape::maxpool2x2(NodeId image) {
    const Tensor& x = nodes_[image].value;
    if (x.rank() != 3) {
        throw dimension_error("maxpool2x2: expected an HxWxC tensor, got " +
                              shape_string(x.shape()));
    }
    std::size_t h = x.shape()[0], w = x.shape()[1], ch = x.shape()[2];
    std::size_t oh = h / 2, ow = w / 2;
    if (oh == 0 || ow == 0) {
        throw dimension_error("maxpool2x2: input " + shape_string(x.shape()) + " too small");
    }
    Tensor out({oh, ow, ch});
    std::vector<std::size_t> argmax(oh * ow * ch);
    for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c)
            for (std::size_t k = 0; k < ch; ++k) {
                std::size_t best_idx = (2 * r * w + 2 * c) * ch + k;
                double best = x[best_idx];
                for (std::size_t dr = 0; dr < 2; ++dr)
                    for (std::size_t dc = 0; dc < 2; ++dc) {
                        std::size_t idx = ((2 * r + dr) * w + (2 * c + dc)) * ch + k;
                        if (x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                std::size_t o = (r * ow + c) * ch + k;
                out[o] = best;
                argmax[o] = best_idx;
            }
    NodeId id = push(std::move(out), {});
    nodes_[id].back = [this, id, image, argmax = std::move(argmax)]() {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[image].grad;
        for (std::size_t o = 0; o < g.size(); ++o) ga[argmax[o]] += g[o];
    };
    return id;
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId logits, std::span<const int> labels) {
    const Tensor& x = nodes_[logits].value;
    std::size_t batch, classes;
    if (x.rank() == 2) {
        batch = x.rows();
        classes = x.cols();
    } else if (x.rank() == 1) {
        batch = 1;
        classes = x.size();
    } else {
        throw dimension_error("softmax_cross_entropy: expected logits of rank 1 or 2, got " +
                              shape_string(x.shape()));
    }
    if (labels.size() != batch) {
        throw dimension_error("softmax_cross_entropy: " + std::to_string(batch) +
                              " logit rows vs " + std::to_string(labels.size()) + " labels");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw contract_error("softmax_cross_entropy: label " + std::to_string(y) +
                                 " outside [0, " + std::to_string(classes) + ")");
        }
    }
    double loss = 0.0;
    Tensor softmax({batch, classes});
    for (std::size_t r = 0; r < batch; ++r) {
        double m = x[r * classes];
        for (std::size_t c = 1; c < classes; ++c) m = std::max(m, x[r * classes + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(x[r * classes + c] - m);
        double log_z = m + std::log(z);
        loss += log_z - x[r * classes + labels[r]];
        for (std::size_t c = 0; c < classes; ++c)
            softmax[r * classes + c] = std::exp(x[r * classes + c] - log_z);
    }
    loss /= static_cast<double>(batch);
    NodeId id = push(Tensor::scalar(loss), {});
    std::vector<int> labels_copy(labels.begin(), labels.end());
    nodes_[id].back = [this, id, logits, softmax = std::move(softmax),
                       labels = std::move(labels_copy), batch, classes]() {
        double g = nodes_[id].grad[0];
        Tensor& ga = nodes_[logits].grad;
        double inv_b = 1.0 / static_cast<double>(batch);
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < classes; ++c) {
                double onehot = (static_cast<std::size_t>(labels[r]) == c) ? 1.0 : 0.0;
                ga[r * classes + c] += g * inv_b * (softmax[r * classes + c] - onehot);
            }
    };
    check_finite(id, "softmax_cross_entropy");
    return id;
}

void Tape::backward(NodeId loss) {
    if (!nodes_[loss].value.is_scalar()) {
        throw contract_error("backward: loss must be scalar, got shape " +
                             shape_string(nodes_[loss].value.shape()));
    }
    for (Node& n : nodes_) std::fill(n.grad.data().begin(), n.grad.data().end(), 0.0);
    nodes_[loss].grad[0] = 1.0;
    for (std::size_t i = loss + 1; i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back();
    }
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h) {
    if (!(h > 0.0)) {
        throw contract_error("finite_diff_gradient: step size must be positive");
    }
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        double fp = f(probe);
        probe[i] = x[i] - h;
        double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw domain_error("finite_diff_gradient: non-finite function evaluation at coordinate " +
                               std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace san
