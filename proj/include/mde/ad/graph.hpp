#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mde/core/tensor.hpp"

namespace mde::ad {

// Reverse-mode tape node. Graphs are rebuilt per forward pass; a node owns
// its value, a lazily-allocated gradient, and a closure that scatters its
// gradient into its parents.
class Node {
public:
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.numel() != value.numel())
            grad = Tensor(value.shape());
        return grad;
    }
};

using Var = std::shared_ptr<Node>;

// Gradient recording is on by default; NoGradGuard suspends it for the
// current thread (pure sampling paths skip all closure captures).
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Leaf that participates in differentiation (when recording is on).
Var leaf(Tensor value);
// Leaf that never takes gradients.
Var constant(Tensor value);

// Runs reverse accumulation from a scalar root (numel()==1).
void backward(const Var& root);

}  // namespace mde::ad
