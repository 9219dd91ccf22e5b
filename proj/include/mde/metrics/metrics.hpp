#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mde/core/types.hpp"
#include "mde/core/vocab.hpp"
#include "mde/metrics/classifier.hpp"

namespace mde {

// Per-pixel structural similarity (11x11 Gaussian window, sigma 1.5,
// C1=(0.01L)^2, C2=(0.03L)^2, L=1, replicate padding), channel-averaged.
Tensor ssim_map(const Tensor& a, const Tensor& b);
// SSIM map averaged over pixels where the mask is set.
double bg_ssim(const Tensor& original, const Tensor& edited, const Tensor& background_mask);

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual Tensor features(const Tensor& image01) const = 0;
    virtual std::string name() const = 0;
};

// Penultimate classifier activations as a perceptual embedding.
class ClassifierFeatureExtractor : public FeatureExtractor {
public:
    explicit ClassifierFeatureExtractor(const ToyClassifier& clf) : clf_(clf) {}
    Tensor features(const Tensor& image01) const override { return clf_.features(image01); }
    std::string name() const override { return "toy-classifier-penultimate"; }

private:
    const ToyClassifier& clf_;
};

// Mean squared feature distance between the background-masked images;
// throws MissingExtractorError on a null extractor.
double bg_perceptual(const Tensor& original, const Tensor& edited,
                     const Tensor& background_mask, const FeatureExtractor* extractor);

struct AlignmentResult {
    double score = 0.0;  // fraction of satisfied edits
    std::vector<bool> per_edit;
};

// Classifier-based text-image agreement: each edit region's predicted
// (shape, color) must match every target token of that edit. Throws
// MissingClassifierError on a null classifier.
AlignmentResult alignment_score(const Tensor& edited01, const std::vector<EditSpec>& edits,
                                const std::vector<int>& tgt_ids, const Vocabulary& vocab,
                                const ToyClassifier* classifier);

struct EvalReport {
    double bg_ssim = 0.0;
    std::optional<double> bg_perceptual;
    std::string bg_perceptual_unavailable_reason;
    std::optional<double> alignment;
    std::string alignment_unavailable_reason;
    std::vector<bool> per_edit_success;
    nlohmann::json metadata;

    nlohmann::json to_json() const;
};

EvalReport evaluate_pair(const Tensor& original, const Tensor& edited,
                         const std::vector<EditSpec>& edits, const std::vector<int>& tgt_ids,
                         const Vocabulary& vocab, const ToyClassifier* classifier,
                         const FeatureExtractor* extractor);

// Batch summary CSV: id, bg_ssim, bg_perceptual, alignment, success_rate.
void write_summary_csv(const std::string& path, const std::vector<std::string>& ids,
                       const std::vector<EvalReport>& reports);

}  // namespace mde
