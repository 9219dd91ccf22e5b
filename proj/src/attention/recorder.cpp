#include "mde/attention/recorder.hpp"

#include "mde/core/errors.hpp"

namespace mde {

const char* branch_name(Branch b) {
    return b == Branch::reconstruction ? "reconstruction" : "editing";
}

AttentionStack StackCollector::to_stack(int n_tokens) const {
    AttentionStack stack;
    stack.n_tokens = n_tokens;
    stack.maps.reserve(captures_.size());
    for (const auto& c : captures_)
        stack.maps.push_back({c.layer_id, c.head, c.h, c.w, c.map->value});
    return stack;
}

const Tensor& InjectionPlan::map_for(int layer_id, int head) const {
    if (!recon)
        throw Error("injection plan has no reconstruction stack");
    for (const auto& entry : recon->maps)
        if (entry.layer_id == layer_id && entry.head == head)
            return entry.map;
    throw Error("reconstruction stack lacks layer " + std::to_string(layer_id) + " head " +
                std::to_string(head));
}

void AttentionRecorder::record(Branch branch, int step_index, AttentionStack stack) {
    const auto key = std::make_pair(static_cast<int>(branch), step_index);
    if (stacks_.count(key))
        throw Error("attention stack already recorded for step " + std::to_string(step_index));
    stacks_.emplace(key, std::move(stack));
}

bool AttentionRecorder::has(Branch branch, int step_index) const {
    return stacks_.count({static_cast<int>(branch), step_index}) != 0;
}

const AttentionStack& AttentionRecorder::stack(Branch branch, int step_index) const {
    auto it = stacks_.find({static_cast<int>(branch), step_index});
    if (it == stacks_.end())
        throw Error(std::string("no recorded stack: branch ") + branch_name(branch) + ", step " +
                    std::to_string(step_index));
    return it->second;
}

int AttentionRecorder::recorded_steps(Branch branch) const {
    int count = 0;
    for (const auto& [key, stack] : stacks_)
        if (key.first == static_cast<int>(branch))
            ++count;
    return count;
}

void AttentionRecorder::validate_all(double tol) const {
    for (const auto& [key, stack] : stacks_)
        stack.validate(tol);
}

}  // namespace mde
