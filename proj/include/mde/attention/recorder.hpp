#pragma once

#include <map>
#include <utility>

#include "mde/attention/sink.hpp"
#include "mde/core/types.hpp"

namespace mde {

enum class Branch { reconstruction, editing };

const char* branch_name(Branch b);

// Immutable per-branch, per-step attention archive for one sampling or
// editing run. Owned by a single pipeline instance; never shared across
// concurrent sessions.
class AttentionRecorder {
public:
    void record(Branch branch, int step_index, AttentionStack stack);
    bool has(Branch branch, int step_index) const;
    const AttentionStack& stack(Branch branch, int step_index) const;
    int recorded_steps(Branch branch) const;
    // Validates row normalization of every recorded stack.
    void validate_all(double tol = 1e-6) const;

private:
    std::map<std::pair<int, int>, AttentionStack> stacks_;  // (branch, step)
};

}  // namespace mde
