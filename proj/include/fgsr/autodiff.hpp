#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fgsr/tensor.hpp"

namespace fgsr {

// Reverse-mode tape. Each op allocates a Node whose backward closure scatters
// the node's gradient into its parents. Graphs are rebuilt every forward pass
// and freed when the last Var handle drops.
class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_op;  // may be empty for leaves
    std::int64_t id = 0;

    void ensure_grad() {
        if (!grad_ready) {
            grad = Tensor::zeros(value.shape());
            grad_ready = true;
        }
    }
    void zero_grad() {
        grad = Tensor::zeros(value.shape());
        grad_ready = true;
    }
};

// Leaves
Var make_param(Tensor value);            // requires_grad = true
Var make_constant(Tensor value);         // requires_grad = false
Var detach(const Var& x);                // value alias as a fresh constant leaf

// Elementwise / arithmetic
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var abs_op(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
// log(max(x, floor)); gradient is zero inside the clamped region
Var log_clamped(const Var& a, double floor = 1e-12);

// a - s and s broadcast over a, where s is a scalar (numel 1) variable
Var sub_broadcast_scalar(const Var& a, const Var& s);

// Shape / structure
Var reshape(const Var& a, std::vector<int> shape);
Var concat_channels(const Var& a, const Var& b);          // NCHW, along C
Var reflect_pad2d(const Var& a, int top, int bottom, int left, int right);
Var crop2d(const Var& a, int top, int left, int height, int width);

// Neural ops (NCHW)
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int pad = 1);
Var linear(const Var& x, const Var& w, const Var& b);      // x: {N,D}, w: {O,D}
Var maxpool2x(const Var& x);
Var upsample_nearest2x(const Var& x);

// Reductions (result shape {1})
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// Runs reverse-mode accumulation from a scalar root.
void backward(const Var& root);

// Raw forward-only conv used by frozen feature extractors and oracles lives in
// the tests; this is the only conv the library itself uses.

}  // namespace fgsr
