#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "glamap/nn/tensor.hpp"
#include "glamap/random.hpp"

namespace glamap::nn {

/// One node of the reverse-mode autodiff graph.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    /// Propagates this->grad into the parents' grads. Null for leaves.
    std::function<void(Node&)> backward_fn;

    void accumulate(const Tensor& g);
    Tensor& grad_ref();  // allocates zeros if needed
};

/// Handle to a graph node. Cheap to copy; ops on Vars extend the graph.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    /// Leaf holding `v` (storage shared, not copied).
    static Var leaf(Tensor v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& val() const { return node_->value; }
    Tensor& mutable_val() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    /// Gradient accumulated by the last backward() pass (zeros if untouched).
    Tensor grad() const;
    void zero_grad();

    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar root. `seed` is the root's incoming
/// gradient (1 for a plain loss; 1/batch when accumulating a mean over a
/// batch of separately built graphs).
void backward(const Var& root, double seed = 1.0);

namespace op {

// -- elementwise / scalar --------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var log(const Var& a);          // natural log; caller clamps first
Var pow_const(const Var& a, double p);
Var clamp_min(const Var& a, double lo);
Var gelu(const Var& a);
Var sigmoid(const Var& a);

// -- reductions --------------------------------------------------------------
Var sum_all(const Var& a);   // -> shape {1}
Var mean_all(const Var& a);  // -> shape {1}

// -- shape -------------------------------------------------------------------
Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<int>& axes);
Var concat_channels(const std::vector<Var>& xs);  // (Ci,H,W) -> (sum Ci,H,W)

// -- linear algebra ----------------------------------------------------------
Var matmul(const Var& a, const Var& b);              // (M,K)x(K,N)
Var bmm(const Var& a, const Var& b);                 // (B,M,K)x(B,K,N)
Var linear(const Var& x, const Var& w, const Var& b);  // (N,D)x(D,M)+(M)

// -- image ops (C,H,W) ---------------------------------------------------------
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_bilinear(const Var& x, int factor);
Var global_avg_pool(const Var& x);               // -> (C)
Var scale_channels(const Var& x, const Var& s);  // y[c,h,w] = x[c,h,w]*s[c]
Var add_channel_bias(const Var& x, const Var& b);
Var patchify(const Var& x, int patch);    // -> (T, C*patch*patch)
Var softmax_dim0(const Var& x);           // softmax over axis 0 of (C,H,W)

// -- token ops ---------------------------------------------------------------
Var softmax_lastdim(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// -- regularization ------------------------------------------------------------
Var dropout(const Var& x, double rate, Rng& rng);

}  // namespace op

/// max |a-b| / max(|a|,|b|,floor) over all elements.
double max_rel_err(const Tensor& a, const Tensor& b, double floor = 1e-3);

}  // namespace glamap::nn
