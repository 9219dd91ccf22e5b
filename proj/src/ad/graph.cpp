#include "mde/ad/graph.hpp"

#include <stdexcept>
#include <unordered_set>

namespace mde::ad {

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Var leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = grad_enabled();
    return n;
}

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

void backward(const Var& root) {
    if (!root || root->value.numel() != 1)
        throw std::logic_error("backward() requires a scalar root");
    if (!root->requires_grad)
        return;

    // Iterative post-order DFS; recursion depth would track graph depth
    // (hundreds of nodes for a full denoiser forward).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        bool descended = false;
        while (next_child < node->parents.size()) {
            Node* p = node->parents[next_child].get();
            ++next_child;
            if (p->requires_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    root->ensure_grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad.numel() == node->value.numel())
            node->backward_fn(*node);
    }
}

}  // namespace mde::ad
