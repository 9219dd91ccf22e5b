#pragma once

#include <vector>

#include "mde/ad/graph.hpp"
#include "mde/core/types.hpp"

namespace mde {

// One cross-attention map captured during a forward pass. The map is kept
// as a graph variable so losses built on it can differentiate back through
// the pass; pure-sampling forwards capture constants.
struct AttnCapture {
    int layer_id = 0;
    int head = 0;
    int h = 0;
    int w = 0;
    ad::Var map;  // [h*w, n_tokens], softmax output (pre-injection)
};

class AttnSink {
public:
    virtual ~AttnSink() = default;
    virtual void capture(AttnCapture capture) = 0;
};

// Collects every capture of one forward; convertible to a plain stack.
class StackCollector : public AttnSink {
public:
    void capture(AttnCapture c) override { captures_.push_back(std::move(c)); }
    const std::vector<AttnCapture>& captures() const { return captures_; }
    AttentionStack to_stack(int n_tokens) const;

private:
    std::vector<AttnCapture> captures_;
};

// Column substitution request applied inside every cross-attention layer of
// an editing-branch forward: `sources` routes each target-prompt column,
// `recon` supplies the reconstruction-branch maps for the same step.
struct InjectionPlan {
    std::vector<ColumnSource> sources;
    const AttentionStack* recon = nullptr;

    const Tensor& map_for(int layer_id, int head) const;
};

}  // namespace mde
