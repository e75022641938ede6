#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace occtrack {

// Dense rank-3 array in row-major (channel, row, column) order, double precision.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w, double fill = 0.0);
    static FeatureMap from(int c, int h, int w, std::vector<double> values);

    int size() const { return channels * height * width; }
    int plane() const { return height * width; }

    double& at(int c, int h, int w) { return data[(c * height + h) * width + w]; }
    double at(int c, int h, int w) const { return data[(c * height + h) * width + w]; }

    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool all_finite() const;
    std::string shape_str() const;
};

// Stride-1, size-preserving convolution. Kernel is (out_ch, in_ch, k, k) row-major.
// Supported kernel sizes: 1 (padding 0) and 3 (padding 1).
struct ConvLayer {
    int out_ch = 0;
    int in_ch = 0;
    int ksize = 1;
    int padding = 0;
    std::vector<double> kernel;
    std::vector<double> bias;

    ConvLayer() = default;
    ConvLayer(int out_c, int in_c, int k);

    double& kern(int o, int i, int ky, int kx) {
        return kernel[((o * in_ch + i) * ksize + ky) * ksize + kx];
    }
    double kern(int o, int i, int ky, int kx) const {
        return kernel[((o * in_ch + i) * ksize + ky) * ksize + kx];
    }
    void validate() const;
};

// ---- raw forward ops (pure; used directly and as tape forward kernels) ----

FeatureMap conv2d(const FeatureMap& input, const ConvLayer& layer);
FeatureMap add(const FeatureMap& a, const FeatureMap& b);
FeatureMap sub(const FeatureMap& a, const FeatureMap& b);
FeatureMap mul(const FeatureMap& a, const FeatureMap& b);
FeatureMap scale(const FeatureMap& a, double s);
FeatureMap relu(const FeatureMap& a);
FeatureMap sigmoid(const FeatureMap& a);
FeatureMap tanh_map(const FeatureMap& a);
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

// Location-pair dot products between two maps of equal channel count:
// out is {1, Ha*Wa, Hb*Wb} with out[i][j] = sum_c a[c, i] * b[c, j].
FeatureMap location_scores(const FeatureMap& a, const FeatureMap& b);
// Row-wise softmax over the innermost dimension.
FeatureMap softmax_rows(const FeatureMap& a);
// Mixes value vectors by attention rows: out[c, i] = sum_j attn[i, j] * values[c, j].
FeatureMap apply_attention(const FeatureMap& attn, const FeatureMap& values,
                           int out_h, int out_w);

// Spatial mean per channel -> {C, 1, 1}.
FeatureMap mean_pool(const FeatureMap& a);
// L2 normalization of a {C, 1, 1} vector; the all-zero vector maps to itself.
FeatureMap l2_normalize(const FeatureMap& a);

// ---- reverse-mode tape ----
//
// Forward values are computed eagerly at op creation; backward() fills
// gradients for every node on a path from a needs-grad leaf to the root.
class Tape {
public:
    using Node = int;

    Node leaf(FeatureMap value, bool needs_grad = false);
    // Convolution whose kernel/bias live on the tape as {out*in, k, k} and
    // {out, 1, 1} leaves, so parameter gradients come out of backward().
    Node conv(Node input, Node kernel, Node bias, int out_ch, int in_ch, int ksize);
    Node conv(Node input, const ConvLayer& fixed);

    Node add(Node a, Node b);
    Node sub(Node a, Node b);
    Node mul(Node a, Node b);
    Node scale(Node a, double s);
    Node add_scalar(Node a, double s);
    Node relu(Node a);
    Node sigmoid(Node a);
    Node tanh_(Node a);
    Node concat_channels(Node a, Node b);
    Node location_scores(Node a, Node b);
    Node softmax_rows(Node a);
    Node apply_attention(Node attn, Node values, int out_h, int out_w);
    Node mean_pool(Node a);
    Node l2_normalize(Node a);
    Node sum_all(Node a);
    Node sqrt_(Node a);
    Node logsumexp(Node a);
    Node pick(Node a, int channel);

    const FeatureMap& value(Node n) const { return nodes_[n].value; }
    const FeatureMap& grad(Node n) const { return nodes_[n].grad; }
    bool needs_grad(Node n) const { return nodes_[n].needs_grad; }
    int node_count() const { return static_cast<int>(nodes_.size()); }

    // root must be a {1,1,1} scalar with a finite value.
    void backward(Node root);

private:
    struct Entry {
        FeatureMap value;
        FeatureMap grad;
        bool needs_grad = false;
        std::function<void(Tape&)> back;
    };
    std::vector<Entry> nodes_;

    Node push(FeatureMap value, bool needs_grad, std::function<void(Tape&)> back);
    Node unary(Node a, FeatureMap value, std::function<void(Tape&, Node, Node)> back);
    FeatureMap& grad_buf(Node n);
};

// Central-difference gradient verification.
//
// f evaluates the scalar objective at an arbitrary parameter vector;
// analytic holds df/dparam at `params`. Returns
//   max_i |analytic_i - central_difference_i| / max(1, |analytic_i|).
// epsilon must lie in [1e-7, 1e-3]; a non-finite objective value is rejected.
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> params,
                  std::span<const double> analytic,
                  double epsilon);

}  // namespace occtrack
