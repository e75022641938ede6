#include "occtrack/weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "occtrack/rng.hpp"

namespace occtrack {

namespace {

// Visits the model's layers in a fixed order with their serialized names.
template <typename W, typename F>
void visit_layers(W& w, F&& fn) {
    fn("attention.theta", w.attention.theta);
    fn("attention.phi", w.attention.phi);
    fn("attention.rho", w.attention.rho);
    for (int i = 0; i < 4; ++i) {
        std::ostringstream os;
        os << "memory.init." << (i + 1);
        fn(os.str(), w.memory.init[i]);
    }
    fn("memory.gru.update", w.memory.update);
    fn("memory.gru.reset", w.memory.reset);
    fn("memory.gru.candidate", w.memory.candidate);
}

// Projection kernels start at scale * identity so attention scores are sharp
// enough out of the box. The readout scale compensates for the tanh
// compression of stored states, so attention messages land at the magnitude
// of raw features. Candidate/init kernels start at the plain center-tap
// identity so features pass through. Reset gates stay at sigmoid(0) = 0.5;
// the update gate starts low so the aggregated reference moves slowly and a
// few contaminated updates cannot wipe out the identity it carries.
constexpr double kScoreScale = 2.0;
constexpr double kReadoutScale = 7.0;
constexpr double kUpdateBias = -1.5;
constexpr double kNoise = 0.02;

void fill_noise(ConvLayer& layer, Rng& rng) {
    const double sigma = kNoise / std::sqrt(static_cast<double>(layer.in_ch) *
                                            layer.ksize * layer.ksize);
    for (double& v : layer.kernel) v = rng.normal(0.0, sigma);
}

// Adds `s` to the center tap connecting input channel (i + offset) to output
// channel i, for each output channel.
void add_center_identity(ConvLayer& layer, double s, int offset = 0) {
    const int c = layer.ksize / 2;
    for (int o = 0; o < layer.out_ch; ++o) layer.kern(o, o + offset, c, c) += s;
}

}  // namespace

ModelWeights make_zero_weights(int channels) {
    if (channels <= 0) throw std::invalid_argument("make_zero_weights: channels must be positive");
    return ModelWeights(channels);
}

ModelWeights make_seeded_weights(int channels, uint64_t seed) {
    if (channels <= 0) throw std::invalid_argument("make_seeded_weights: channels must be positive");
    ModelWeights w(channels);
    Rng rng(Rng::mix(seed, 0xACCE55));
    visit_layers(w, [&](const std::string& name, ConvLayer& layer) {
        fill_noise(layer, rng);
        if (name == "attention.theta" || name == "attention.phi") {
            add_center_identity(layer, kScoreScale);
        } else if (name == "attention.rho") {
            add_center_identity(layer, kReadoutScale);
        } else if (name.rfind("memory.init.", 0) == 0) {
            add_center_identity(layer, 1.0);
        } else if (name == "memory.gru.candidate") {
            add_center_identity(layer, 1.0, 0);  // pass-through on the input half
        } else if (name == "memory.gru.update") {
            for (double& b : layer.bias) b = kUpdateBias;
        }
        // reset gate: noise only, bias stays zero.
    });
    return w;
}

std::vector<std::string> weight_names() {
    std::vector<std::string> names;
    ModelWeights w(1);
    visit_layers(w, [&](const std::string& name, ConvLayer&) {
        names.push_back(name + ".bias");
        names.push_back(name + ".kernel");
    });
    std::sort(names.begin(), names.end());
    return names;
}

WeightStore to_store(const ModelWeights& w) {
    WeightStore store;
    visit_layers(const_cast<ModelWeights&>(w), [&](const std::string& name, ConvLayer& layer) {
        store[name + ".kernel"] = NamedTensor{
            {layer.out_ch, layer.in_ch, layer.ksize, layer.ksize}, layer.kernel};
        store[name + ".bias"] = NamedTensor{{layer.out_ch}, layer.bias};
    });
    return store;
}

ModelWeights from_store(const WeightStore& store) {
    auto kernel_it = store.find("attention.theta.kernel");
    if (kernel_it == store.end())
        throw std::runtime_error("weights: missing tensor attention.theta.kernel");
    if (kernel_it->second.shape.size() != 4)
        throw std::runtime_error("weights: attention.theta.kernel must have rank 4");
    const int channels = kernel_it->second.shape[0];
    if (channels <= 0) throw std::runtime_error("weights: invalid channel count");

    ModelWeights w(channels);
    size_t used = 0;
    visit_layers(w, [&](const std::string& name, ConvLayer& layer) {
        const auto load = [&](const std::string& full, const std::vector<int>& want_shape,
                              std::vector<double>& dst) {
            auto it = store.find(full);
            if (it == store.end())
                throw std::runtime_error("weights: missing tensor " + full);
            if (it->second.shape != want_shape) {
                std::ostringstream os;
                os << "weights: tensor " << full << " has wrong shape [";
                for (size_t i = 0; i < it->second.shape.size(); ++i)
                    os << (i ? "," : "") << it->second.shape[i];
                os << "]";
                throw std::runtime_error(os.str());
            }
            size_t want = 1;
            for (int d : want_shape) want *= static_cast<size_t>(d);
            if (it->second.data.size() != want)
                throw std::runtime_error("weights: tensor " + full + " has wrong element count");
            dst = it->second.data;
            ++used;
        };
        load(name + ".kernel", {layer.out_ch, layer.in_ch, layer.ksize, layer.ksize},
             layer.kernel);
        load(name + ".bias", {layer.out_ch}, layer.bias);
    });
    if (used != store.size()) {
        for (const auto& [name, t] : store) {
            bool known = false;
            for (const std::string& n : weight_names())
                if (n == name) known = true;
            if (!known) throw std::runtime_error("weights: unknown tensor " + name);
        }
    }
    return w;
}

void save_weights(const std::string& path, const ModelWeights& w) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, t] : to_store(w)) {
        j[name] = {{"shape", t.shape}, {"data", t.data}};
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("weights: cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("weights: failed writing " + path);
}

ModelWeights load_weights(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("weights: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("weights: failed to parse " + path + ": " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("weights: " + path + " must hold an object");
    WeightStore store;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const nlohmann::json& entry = it.value();
        if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data"))
            throw std::runtime_error("weights: tensor " + it.key() +
                                     " must hold {shape, data}");
        NamedTensor t;
        t.shape = entry["shape"].get<std::vector<int>>();
        t.data = entry["data"].get<std::vector<double>>();
        store[it.key()] = std::move(t);
    }
    return from_store(store);
}

}  // namespace occtrack
