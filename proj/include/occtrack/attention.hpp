#pragma once

#include "occtrack/tensor.hpp"
#include "occtrack/weights.hpp"

namespace occtrack {

// Attention projection layers placed on a tape. When trainable, gradients are
// tracked for every kernel and bias.
struct AttentionNodes {
    Tape::Node theta_k, theta_b;
    Tape::Node phi_k, phi_b;
    Tape::Node rho_k, rho_b;
    int channels = 0;
};

AttentionNodes put_attention(Tape& t, const AttentionWeights& w, bool trainable);

// Reads updated values back from the tape after an optimizer step.
AttentionWeights attention_from_tape(const Tape& t, const AttentionNodes& n);

// Non-local attention: for every query location, a softmax over reference
// locations of theta(query) . phi(reference) scores, applied to
// rho(reference) values. Output has the query's spatial shape.
Tape::Node attend_node(Tape& t, const AttentionNodes& w, Tape::Node query,
                       Tape::Node reference);

FeatureMap attend(const AttentionWeights& w, const FeatureMap& query,
                  const FeatureMap& reference);

// Residual refinement: feature + w * (f - g), where f attends from the query
// embedding onto the target reference and g onto the distractor reference.
// The query defaults to the feature itself (the embedding-refinement path);
// position refinement passes the extracted embedding of the feature instead.
// Either branch can be disabled, and a missing distractor contributes zero.
// When the effective update is structurally zero (w == 0, or both branches
// off) the input feature is returned unchanged, bit for bit.
struct RefineInputs {
    const FeatureMap* query = nullptr;           // nullptr: use the feature
    const FeatureMap* target_ref = nullptr;      // required when use_target is set
    const FeatureMap* distractor_ref = nullptr;  // may be null
    double weight = 1.0;
    bool use_target = true;
    bool use_distractor = true;
};

FeatureMap refine(const AttentionWeights& w, const FeatureMap& feature,
                  const RefineInputs& in);

// Same computation on a tape (used in training); no short-circuiting applies
// because the caller controls the graph.
Tape::Node refine_node(Tape& t, const AttentionNodes& w, Tape::Node feature,
                       Tape::Node query, Tape::Node target_ref,
                       Tape::Node distractor_ref, bool has_distractor,
                       double weight);

}  // namespace occtrack
