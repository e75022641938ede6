#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "occtrack/tensor.hpp"

namespace occtrack {

// Non-local attention projections: 1x1 convs, channels -> channels.
struct AttentionWeights {
    ConvLayer theta;
    ConvLayer phi;
    ConvLayer rho;

    explicit AttentionWeights(int channels = 1)
        : theta(channels, channels, 1), phi(channels, channels, 1), rho(channels, channels, 1) {}
};

// Memory module: a 4-layer init stack (3x3, ReLU x3 then tanh) that maps an
// embedding to the initial hidden state, and the three ConvGRU gates
// (3x3, 2*channels -> channels).
struct MemoryWeights {
    std::array<ConvLayer, 4> init;
    ConvLayer update;
    ConvLayer reset;
    ConvLayer candidate;

    explicit MemoryWeights(int channels = 1)
        : init{ConvLayer(channels, channels, 3), ConvLayer(channels, channels, 3),
               ConvLayer(channels, channels, 3), ConvLayer(channels, channels, 3)},
          update(channels, 2 * channels, 3),
          reset(channels, 2 * channels, 3),
          candidate(channels, 2 * channels, 3) {}
};

struct ModelWeights {
    int channels = 1;
    AttentionWeights attention;
    MemoryWeights memory;

    explicit ModelWeights(int c = 1) : channels(c), attention(c), memory(c) {}
};

// Flat named-tensor container used for serialization. Kernel shapes are
// [out, in, k, k]; bias shapes are [out].
struct NamedTensor {
    std::vector<int> shape;
    std::vector<double> data;
};
using WeightStore = std::map<std::string, NamedTensor>;

// All-zero weights of the given channel count.
ModelWeights make_zero_weights(int channels);

// Structured near-identity initialization: projection and init-stack kernels
// start at the (center-tap) identity plus small seeded noise, GRU gates start
// near zero so both gates open at 0.5, and the candidate gate passes the
// current input through. Biases start at exactly zero.
ModelWeights make_seeded_weights(int channels, uint64_t seed);

// The fixed set of 28 tensor names for a model, in store (sorted) order.
std::vector<std::string> weight_names();

WeightStore to_store(const ModelWeights& w);

// Strict: rejects missing names, unknown names, and shape mismatches.
ModelWeights from_store(const WeightStore& store);

// Single-file JSON round trip. Values survive bit-exactly.
void save_weights(const std::string& path, const ModelWeights& w);
ModelWeights load_weights(const std::string& path);

}  // namespace occtrack
