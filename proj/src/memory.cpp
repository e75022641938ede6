#include "occtrack/memory.hpp"

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

void read_layer(const Tape& t, Tape::Node k, Tape::Node b, ConvLayer& dst) {
    dst.kernel = t.value(k).data;
    dst.bias = t.value(b).data;
}

}  // namespace

MemoryNodes put_memory(Tape& t, const MemoryWeights& w, bool trainable) {
    MemoryNodes n;
    n.channels = w.update.out_ch;
    for (int i = 0; i < 4; ++i) {
        n.init_k[i] = put_kernel(t, w.init[i], trainable);
        n.init_b[i] = put_bias(t, w.init[i], trainable);
    }
    n.update_k = put_kernel(t, w.update, trainable);
    n.update_b = put_bias(t, w.update, trainable);
    n.reset_k = put_kernel(t, w.reset, trainable);
    n.reset_b = put_bias(t, w.reset, trainable);
    n.candidate_k = put_kernel(t, w.candidate, trainable);
    n.candidate_b = put_bias(t, w.candidate, trainable);
    return n;
}

MemoryWeights memory_from_tape(const Tape& t, const MemoryNodes& n) {
    MemoryWeights w(n.channels);
    for (int i = 0; i < 4; ++i) read_layer(t, n.init_k[i], n.init_b[i], w.init[i]);
    read_layer(t, n.update_k, n.update_b, w.update);
    read_layer(t, n.reset_k, n.reset_b, w.reset);
    read_layer(t, n.candidate_k, n.candidate_b, w.candidate);
    return w;
}

Tape::Node init_state_node(Tape& t, const MemoryNodes& w, Tape::Node embedding) {
    const int C = w.channels;
    Tape::Node h = embedding;
    for (int i = 0; i < 4; ++i) {
        h = t.conv(h, w.init_k[i], w.init_b[i], C, C, 3);
        h = (i < 3) ? t.relu(h) : t.tanh_(h);
    }
    return h;
}

FeatureMap init_state(const MemoryWeights& w, const FeatureMap& embedding) {
    Tape t;
    MemoryNodes n = put_memory(t, w, false);
    return t.value(init_state_node(t, n, t.leaf(embedding, false)));
}

Tape::Node gru_step_node(Tape& t, const MemoryNodes& w, Tape::Node x, Tape::Node h) {
    const int C = w.channels;
    if (t.value(x).channels != C || t.value(h).channels != C)
        throw std::invalid_argument("gru_step: input and state must have the model's channels");
    if (t.value(x).height != t.value(h).height || t.value(x).width != t.value(h).width)
        throw std::invalid_argument("gru_step: input and state spatial sizes differ");
    Tape::Node xh = t.concat_channels(x, h);
    Tape::Node z = t.sigmoid(t.conv(xh, w.update_k, w.update_b, C, 2 * C, 3));
    Tape::Node r = t.sigmoid(t.conv(xh, w.reset_k, w.reset_b, C, 2 * C, 3));
    Tape::Node xrh = t.concat_channels(x, t.mul(r, h));
    Tape::Node c = t.tanh_(t.conv(xrh, w.candidate_k, w.candidate_b, C, 2 * C, 3));
    // (1 - z) * h + z * c  ==  h + z * (c - h)
    return t.add(h, t.mul(z, t.sub(c, h)));
}

FeatureMap gru_step(const MemoryWeights& w, const FeatureMap& x, const FeatureMap& h) {
    Tape t;
    MemoryNodes n = put_memory(t, w, false);
    return t.value(gru_step_node(t, n, t.leaf(x, false), t.leaf(h, false)));
}

FeatureMap aggregate(const MemoryWeights& w, std::span<const FeatureMap> sequence) {
    if (sequence.empty())
        throw std::invalid_argument("aggregate: sequence must hold at least one embedding");
    FeatureMap h = init_state(w, sequence[0]);
    for (size_t i = 1; i < sequence.size(); ++i) h = gru_step(w, sequence[i], h);
    return h;
}

std::vector<double> pool(const FeatureMap& embed) {
    // l2_normalize leaves an all-zero map untouched, which gives the
    // documented zero-vector result for empty embeddings.
    return l2_normalize(mean_pool(embed)).data;
}

}  // namespace occtrack
