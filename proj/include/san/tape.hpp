#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "san/tensor.hpp"

namespace san {

// Reverse-mode differentiation tape. Nodes are appended in topological
// order during the forward pass; backward() walks them once in reverse.
// A tape is rebuilt per forward pass and confined to one thread.
class Tape {
  public:
    using NodeId = std::size_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    NodeId leaf(Tensor value);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // elementwise, same shape; or bias add broadcasting a 1-D b over the
    // leading dimension of a 2-D a
    NodeId add(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId relu(NodeId a);
    NodeId tanh_act(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId scale(NodeId a, double factor);
    NodeId pow_elem(NodeId a, double exponent);
    NodeId exp_elem(NodeId a);
    NodeId log_elem(NodeId a);
    NodeId reduce_sum(NodeId a, std::size_t axis);  // 2-D only
    NodeId sum_all(NodeId a);                       // any shape -> scalar
    NodeId reduce_max_rows(NodeId a);  // 2-D, max over axis 0, ties to first row
    NodeId reshape(NodeId a, std::vector<std::size_t> shape);
    // appends constant columns to a 2-D node; gradient flows to the
    // original columns only
    NodeId append_cols(NodeId a, const Tensor& constant_cols);

    // {H,W,C} image -> {H*W, kh*kw*C} patch matrix, zero-padded so every
    // spatial position yields a patch (stride 1, "same" geometry)
    NodeId im2col(NodeId image, std::size_t kh, std::size_t kw);
    // {H,W,C} -> {H/2, W/2, C}, ties routed to the first element in scan order
    NodeId maxpool2x2(NodeId image);

    // mean softmax cross-entropy over rows of a 2-D logits matrix (or a
    // single 1-D logit vector); returns a scalar node
    NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels);

    // Resets every gradient to zero, seeds d(loss)/d(loss) = 1 and runs the
    // chain rule over the whole tape.
    void backward(NodeId loss);

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> back;  // empty for leaves
    };

    NodeId push(Tensor value, std::function<void()> back);
    void check_finite(NodeId id, const char* op) const;

    std::vector<Node> nodes_;
};

// Central finite differences of a scalar-valued function, coordinate by
// coordinate. Independent oracle for Tape::backward.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h);

}  // namespace san
