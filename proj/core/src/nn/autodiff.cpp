#include "glamap/nn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace glamap::nn {

void Node::accumulate(const Tensor& g) {
    if (!grad.defined()) grad = Tensor(value.shape());
    grad.add_inplace(g);
}

Tensor& Node::grad_ref() {
    if (!grad.defined()) grad = Tensor(value.shape());
    return grad;
}

Var Var::leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

Tensor Var::grad() const {
    if (node_->grad.defined()) return node_->grad;
    return Tensor(node_->value.shape());
}

void Var::zero_grad() {
    if (node_->grad.defined()) node_->grad.fill(0.0);
}

void backward(const Var& root, double seed) {
    if (!root.defined()) throw std::invalid_argument("backward: undefined root");
    if (root.val().numel() != 1) throw std::invalid_argument("backward: root must be scalar");

    // Depth-first topological order over the subgraph that requires grad.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root.node()->accumulate(Tensor::from({seed}, {1}));
    // `order` is post-order (parents before children), so walk it backwards.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
    }
}

double max_rel_err(const Tensor& a, const Tensor& b, double floor) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_rel_err: shape mismatch");
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, d / denom);
    }
    return worst;
}

}  // namespace glamap::nn
