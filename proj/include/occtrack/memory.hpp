#pragma once

#include <span>

#include "occtrack/tensor.hpp"
#include "occtrack/weights.hpp"

namespace occtrack {

// Memory layers placed on a tape.
struct MemoryNodes {
    std::array<Tape::Node, 4> init_k;
    std::array<Tape::Node, 4> init_b;
    Tape::Node update_k, update_b;
    Tape::Node reset_k, reset_b;
    Tape::Node candidate_k, candidate_b;
    int channels = 0;
};

MemoryNodes put_memory(Tape& t, const MemoryWeights& w, bool trainable);

MemoryWeights memory_from_tape(const Tape& t, const MemoryNodes& n);

// Initial hidden state from an embedding: four 3x3 convs, ReLU after the
// first three, tanh after the last.
Tape::Node init_state_node(Tape& t, const MemoryNodes& w, Tape::Node embedding);
FeatureMap init_state(const MemoryWeights& w, const FeatureMap& embedding);

// One ConvGRU step:
//   z = sigmoid(conv_u([x; h]))      update gate
//   r = sigmoid(conv_r([x; h]))      reset gate
//   c = tanh(conv_c([x; r*h]))       candidate
//   h' = (1 - z) * h + z * c
Tape::Node gru_step_node(Tape& t, const MemoryNodes& w, Tape::Node x, Tape::Node h);
FeatureMap gru_step(const MemoryWeights& w, const FeatureMap& x, const FeatureMap& h);

// Identity-aware aggregation of an embedding sequence: the first element
// initializes the state, each later element is folded in with a GRU step.
// A single-element sequence reduces exactly to init_state.
FeatureMap aggregate(const MemoryWeights& w, std::span<const FeatureMap> sequence);

// Association vector: spatial mean per channel, L2-normalized. An all-zero
// map pools to the zero vector rather than dividing by zero.
std::vector<double> pool(const FeatureMap& embed);

}  // namespace occtrack
