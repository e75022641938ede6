#include "occtrack/attention.hpp"

#include <stdexcept>

namespace occtrack {

namespace {

Tape::Node put_kernel(Tape& t, const ConvLayer& layer, bool trainable) {
    return t.leaf(FeatureMap::from(layer.out_ch * layer.in_ch, layer.ksize, layer.ksize,
                                   layer.kernel),
                  trainable);
}

Tape::Node put_bias(Tape& t, const ConvLayer& layer, bool trainable) {
    return t.leaf(FeatureMap::from(layer.out_ch, 1, 1, layer.bias), trainable);
}

}  // namespace

AttentionNodes put_attention(Tape& t, const AttentionWeights& w, bool trainable) {
    AttentionNodes n;
    n.channels = w.theta.out_ch;
    n.theta_k = put_kernel(t, w.theta, trainable);
    n.theta_b = put_bias(t, w.theta, trainable);
    n.phi_k = put_kernel(t, w.phi, trainable);
    n.phi_b = put_bias(t, w.phi, trainable);
    n.rho_k = put_kernel(t, w.rho, trainable);
    n.rho_b = put_bias(t, w.rho, trainable);
    return n;
}

AttentionWeights attention_from_tape(const Tape& t, const AttentionNodes& n) {
    AttentionWeights w(n.channels);
    w.theta.kernel = t.value(n.theta_k).data;
    w.theta.bias = t.value(n.theta_b).data;
    w.phi.kernel = t.value(n.phi_k).data;
    w.phi.bias = t.value(n.phi_b).data;
    w.rho.kernel = t.value(n.rho_k).data;
    w.rho.bias = t.value(n.rho_b).data;
    return w;
}

Tape::Node attend_node(Tape& t, const AttentionNodes& w, Tape::Node query,
                       Tape::Node reference) {
    const int C = w.channels;
    // Copy the dims out: pushing nodes may reallocate the tape's storage.
    const int qh = t.value(query).height, qw = t.value(query).width;
    Tape::Node tq = t.conv(query, w.theta_k, w.theta_b, C, C, 1);
    Tape::Node pr = t.conv(reference, w.phi_k, w.phi_b, C, C, 1);
    Tape::Node vr = t.conv(reference, w.rho_k, w.rho_b, C, C, 1);
    Tape::Node scores = t.location_scores(tq, pr);
    Tape::Node attn = t.softmax_rows(scores);
    return t.apply_attention(attn, vr, qh, qw);
}

FeatureMap attend(const AttentionWeights& w, const FeatureMap& query,
                  const FeatureMap& reference) {
    Tape t;
    AttentionNodes n = put_attention(t, w, false);
    Tape::Node out = attend_node(t, n, t.leaf(query, false), t.leaf(reference, false));
    return t.value(out);
}

FeatureMap refine(const AttentionWeights& w, const FeatureMap& feature,
                  const RefineInputs& in) {
    const bool want_target = in.use_target;
    const bool want_distractor = in.use_distractor && in.distractor_ref != nullptr;
    if (in.weight == 0.0 || (!want_target && !want_distractor)) return feature;
    if (want_target && in.target_ref == nullptr)
        throw std::invalid_argument("refine: target reference is required");

    Tape t;
    AttentionNodes n = put_attention(t, w, false);
    Tape::Node f = t.leaf(feature, false);
    Tape::Node q = in.query ? t.leaf(*in.query, false) : f;
    Tape::Node delta = -1;
    if (want_target) delta = attend_node(t, n, q, t.leaf(*in.target_ref, false));
    if (want_distractor) {
        Tape::Node g = attend_node(t, n, q, t.leaf(*in.distractor_ref, false));
        delta = want_target ? t.sub(delta, g) : t.scale(g, -1.0);
    }
    return t.value(t.add(f, t.scale(delta, in.weight)));
}

Tape::Node refine_node(Tape& t, const AttentionNodes& w, Tape::Node feature,
                       Tape::Node query, Tape::Node target_ref,
                       Tape::Node distractor_ref, bool has_distractor,
                       double weight) {
    Tape::Node delta = attend_node(t, w, query, target_ref);
    if (has_distractor)
        delta = t.sub(delta, attend_node(t, w, query, distractor_ref));
    return t.add(feature, t.scale(delta, weight));
}

}  // namespace occtrack
