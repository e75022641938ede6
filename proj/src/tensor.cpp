#include "occtrack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace occtrack {

FeatureMap::FeatureMap(int c, int h, int w, double fill) {
    if (c < 0 || h < 0 || w < 0)
        throw std::invalid_argument("FeatureMap: negative dimension");
    channels = c;
    height = h;
    width = w;
    data.assign(static_cast<size_t>(c) * h * w, fill);
}

FeatureMap FeatureMap::from(int c, int h, int w, std::vector<double> values) {
    if (static_cast<int>(values.size()) != c * h * w)
        throw std::invalid_argument("FeatureMap::from: data length does not match shape");
    FeatureMap m;
    m.channels = c;
    m.height = h;
    m.width = w;
    m.data = std::move(values);
    return m;
}

bool FeatureMap::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string FeatureMap::shape_str() const {
    std::ostringstream os;
    os << channels << "x" << height << "x" << width;
    return os.str();
}

ConvLayer::ConvLayer(int out_c, int in_c, int k) {
    out_ch = out_c;
    in_ch = in_c;
    ksize = k;
    padding = (k == 3) ? 1 : 0;
    kernel.assign(static_cast<size_t>(out_c) * in_c * k * k, 0.0);
    bias.assign(static_cast<size_t>(out_c), 0.0);
    validate();
}

void ConvLayer::validate() const {
    if (ksize != 1 && ksize != 3)
        throw std::invalid_argument("ConvLayer: kernel size must be 1 or 3");
    if (padding != (ksize == 3 ? 1 : 0))
        throw std::invalid_argument("ConvLayer: padding must preserve spatial size");
    if (out_ch <= 0 || in_ch <= 0)
        throw std::invalid_argument("ConvLayer: channel counts must be positive");
    if (static_cast<int>(kernel.size()) != out_ch * in_ch * ksize * ksize)
        throw std::invalid_argument("ConvLayer: kernel length mismatch");
    if (static_cast<int>(bias.size()) != out_ch)
        throw std::invalid_argument("ConvLayer: bias length mismatch");
}

namespace {

void conv_forward_raw(const double* x, int in_ch, int H, int W,
                      const double* kern, const double* bias,
                      int out_ch, int k, int pad, double* y) {
    const int plane = H * W;
    for (int o = 0; o < out_ch; ++o) {
        double* yo = y + static_cast<size_t>(o) * plane;
        std::fill(yo, yo + plane, bias[o]);
        for (int i = 0; i < in_ch; ++i) {
            const double* xi = x + static_cast<size_t>(i) * plane;
            const double* ko = kern + (static_cast<size_t>(o) * in_ch + i) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int dy = ky - pad;
                const int h0 = std::max(0, -dy);
                const int h1 = std::min(H, H - dy);
                for (int kx = 0; kx < k; ++kx) {
                    const double kv = ko[ky * k + kx];
                    const int dx = kx - pad;
                    const int w0 = std::max(0, -dx);
                    const int w1 = std::min(W, W - dx);
                    for (int h = h0; h < h1; ++h) {
                        double* yrow = yo + h * W;
                        const double* xrow = xi + (h + dy) * W + dx;
                        for (int w = w0; w < w1; ++w) yrow[w] += kv * xrow[w];
                    }
                }
            }
        }
    }
}

// Accumulates input/kernel/bias gradients; any of the outputs may be null.
void conv_backward_raw(const double* x, int in_ch, int H, int W,
                       const double* kern, int out_ch, int k, int pad,
                       const double* gy, double* gx, double* gkern, double* gbias) {
    const int plane = H * W;
    for (int o = 0; o < out_ch; ++o) {
        const double* go = gy + static_cast<size_t>(o) * plane;
        if (gbias) {
            double s = 0.0;
            for (int idx = 0; idx < plane; ++idx) s += go[idx];
            gbias[o] += s;
        }
        for (int i = 0; i < in_ch; ++i) {
            const double* xi = x + static_cast<size_t>(i) * plane;
            double* gxi = gx ? gx + static_cast<size_t>(i) * plane : nullptr;
            const size_t kbase = (static_cast<size_t>(o) * in_ch + i) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int dy = ky - pad;
                const int h0 = std::max(0, -dy);
                const int h1 = std::min(H, H - dy);
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - pad;
                    const int w0 = std::max(0, -dx);
                    const int w1 = std::min(W, W - dx);
                    const double kv = kern[kbase + ky * k + kx];
                    double ksum = 0.0;
                    for (int h = h0; h < h1; ++h) {
                        const double* grow = go + h * W;
                        const double* xrow = xi + (h + dy) * W + dx;
                        double* gxrow = gxi ? gxi + (h + dy) * W + dx : nullptr;
                        if (gxrow) {
                            for (int w = w0; w < w1; ++w) {
                                ksum += grow[w] * xrow[w];
                                gxrow[w] += kv * grow[w];
                            }
                        } else {
                            for (int w = w0; w < w1; ++w) ksum += grow[w] * xrow[w];
                        }
                    }
                    if (gkern) gkern[kbase + ky * k + kx] += ksum;
                }
            }
        }
    }
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* op) {
    if (!a.same_shape(b)) {
        std::ostringstream os;
        os << op << ": shape mismatch " << a.shape_str() << " vs " << b.shape_str();
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

FeatureMap conv2d(const FeatureMap& input, const ConvLayer& layer) {
    layer.validate();
    if (input.channels != layer.in_ch) {
        std::ostringstream os;
        os << "conv2d: input has " << input.channels << " channels, layer expects "
           << layer.in_ch;
        throw std::invalid_argument(os.str());
    }
    FeatureMap out(layer.out_ch, input.height, input.width);
    conv_forward_raw(input.data.data(), layer.in_ch, input.height, input.width,
                     layer.kernel.data(), layer.bias.data(), layer.out_ch,
                     layer.ksize, layer.padding, out.data.data());
    return out;
}

FeatureMap add(const FeatureMap& a, const FeatureMap& b) {
    require_same_shape(a, b, "add");
    FeatureMap out = a;
    for (int i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

FeatureMap sub(const FeatureMap& a, const FeatureMap& b) {
    require_same_shape(a, b, "sub");
    FeatureMap out = a;
    for (int i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

FeatureMap mul(const FeatureMap& a, const FeatureMap& b) {
    require_same_shape(a, b, "mul");
    FeatureMap out = a;
    for (int i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

FeatureMap scale(const FeatureMap& a, double s) {
    FeatureMap out = a;
    for (double& v : out.data) v *= s;
    return out;
}

FeatureMap relu(const FeatureMap& a) {
    FeatureMap out = a;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

FeatureMap sigmoid(const FeatureMap& a) {
    FeatureMap out = a;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

FeatureMap tanh_map(const FeatureMap& a) {
    FeatureMap out = a;
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("concat_channels: spatial size mismatch");
    FeatureMap out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

FeatureMap location_scores(const FeatureMap& a, const FeatureMap& b) {
    if (a.channels != b.channels)
        throw std::invalid_argument("location_scores: channel mismatch");
    const int pa = a.plane(), pb = b.plane();
    FeatureMap out(1, pa, pb);
    for (int c = 0; c < a.channels; ++c) {
        const double* ac = a.data.data() + static_cast<size_t>(c) * pa;
        const double* bc = b.data.data() + static_cast<size_t>(c) * pb;
        for (int i = 0; i < pa; ++i) {
            const double av = ac[i];
            double* row = out.data.data() + static_cast<size_t>(i) * pb;
            for (int j = 0; j < pb; ++j) row[j] += av * bc[j];
        }
    }
    return out;
}

FeatureMap softmax_rows(const FeatureMap& a) {
    FeatureMap out = a;
    const int rows = a.channels * a.height;
    const int M = a.width;
    for (int r = 0; r < rows; ++r) {
        double* row = out.data.data() + static_cast<size_t>(r) * M;
        double m = row[0];
        for (int j = 1; j < M; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int j = 0; j < M; ++j) {
            row[j] = std::exp(row[j] - m);
            s += row[j];
        }
        for (int j = 0; j < M; ++j) row[j] /= s;
    }
    return out;
}

FeatureMap apply_attention(const FeatureMap& attn, const FeatureMap& values,
                           int out_h, int out_w) {
    if (attn.channels != 1)
        throw std::invalid_argument("apply_attention: attention must be {1, N, M}");
    if (attn.width != values.plane())
        throw std::invalid_argument("apply_attention: attention columns must match value locations");
    if (attn.height != out_h * out_w)
        throw std::invalid_argument("apply_attention: attention rows must match output locations");
    const int n = attn.height, m = attn.width;
    FeatureMap out(values.channels, out_h, out_w);
    for (int c = 0; c < values.channels; ++c) {
        const double* vc = values.data.data() + static_cast<size_t>(c) * m;
        double* oc = out.data.data() + static_cast<size_t>(c) * n;
        for (int i = 0; i < n; ++i) {
            const double* row = attn.data.data() + static_cast<size_t>(i) * m;
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += row[j] * vc[j];
            oc[i] = s;
        }
    }
    return out;
}

FeatureMap mean_pool(const FeatureMap& a) {
    const int p = a.plane();
    if (p == 0) throw std::invalid_argument("mean_pool: empty map");
    FeatureMap out(a.channels, 1, 1);
    for (int c = 0; c < a.channels; ++c) {
        const double* ac = a.data.data() + static_cast<size_t>(c) * p;
        double s = 0.0;
        for (int i = 0; i < p; ++i) s += ac[i];
        out.data[c] = s / p;
    }
    return out;
}

FeatureMap l2_normalize(const FeatureMap& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    if (s == 0.0) return a;
    const double inv = 1.0 / std::sqrt(s);
    FeatureMap out = a;
    for (double& v : out.data) v *= inv;
    return out;
}

// ---- tape ----

Tape::Node Tape::push(FeatureMap value, bool needs, std::function<void(Tape&)> back) {
    Entry e;
    e.value = std::move(value);
    e.needs_grad = needs;
    e.back = std::move(back);
    nodes_.push_back(std::move(e));
    return static_cast<Node>(nodes_.size() - 1);
}

FeatureMap& Tape::grad_buf(Node n) {
    Entry& e = nodes_[n];
    if (e.grad.size() == 0) {
        const FeatureMap& v = e.value;
        e.grad = FeatureMap(v.channels, v.height, v.width);
    }
    return e.grad;
}

Tape::Node Tape::leaf(FeatureMap value, bool needs_grad) {
    return push(std::move(value), needs_grad, {});
}

Tape::Node Tape::conv(Node input, Node kernel, Node bias, int out_ch, int in_ch, int ksize) {
    const FeatureMap& x = nodes_[input].value;
    const FeatureMap& kv = nodes_[kernel].value;
    const FeatureMap& bv = nodes_[bias].value;
    if (ksize != 1 && ksize != 3) throw std::invalid_argument("conv: kernel size must be 1 or 3");
    const int pad = ksize == 3 ? 1 : 0;
    if (x.channels != in_ch) throw std::invalid_argument("conv: input channel mismatch");
    if (kv.channels != out_ch * in_ch || kv.height != ksize || kv.width != ksize)
        throw std::invalid_argument("conv: kernel node must be {out*in, k, k}");
    if (bv.channels != out_ch || bv.plane() != 1)
        throw std::invalid_argument("conv: bias node must be {out, 1, 1}");

    FeatureMap y(out_ch, x.height, x.width);
    conv_forward_raw(x.data.data(), in_ch, x.height, x.width, kv.data.data(),
                     bv.data.data(), out_ch, ksize, pad, y.data.data());
    const bool needs = nodes_[input].needs_grad || nodes_[kernel].needs_grad ||
                       nodes_[bias].needs_grad;
    Node out = push(std::move(y), needs, {});
    nodes_[out].back = [input, kernel, bias, out, out_ch, in_ch, ksize, pad](Tape& t) {
        const FeatureMap& g = t.nodes_[out].grad;
        const FeatureMap& x2 = t.nodes_[input].value;
        const FeatureMap& k2 = t.nodes_[kernel].value;
        double* gx = t.nodes_[input].needs_grad ? t.grad_buf(input).data.data() : nullptr;
        double* gk = t.nodes_[kernel].needs_grad ? t.grad_buf(kernel).data.data() : nullptr;
        double* gb = t.nodes_[bias].needs_grad ? t.grad_buf(bias).data.data() : nullptr;
        conv_backward_raw(x2.data.data(), in_ch, x2.height, x2.width, k2.data.data(),
                          out_ch, ksize, pad, g.data.data(), gx, gk, gb);
    };
    return out;
}

Tape::Node Tape::conv(Node input, const ConvLayer& fixed) {
    fixed.validate();
    Node k = leaf(FeatureMap::from(fixed.out_ch * fixed.in_ch, fixed.ksize, fixed.ksize,
                                   fixed.kernel),
                  false);
    Node b = leaf(FeatureMap::from(fixed.out_ch, 1, 1, fixed.bias), false);
    return conv(input, k, b, fixed.out_ch, fixed.in_ch, fixed.ksize);
}

Tape::Node Tape::add(Node a, Node b) {
    FeatureMap y = occtrack::add(nodes_[a].value, nodes_[b].value);
    const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Node out = push(std::move(y), needs, {});
    nodes_[out].back = [a, b, out](Tape& t) {
        const FeatureMap& g = t.nodes_[out].grad;
        if (t.nodes_[a].needs_grad) {
            FeatureMap& ga = t.grad_buf(a);
            for (int i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[b].needs_grad) {
            FeatureMap& gb = t.grad_buf(b);
            for (int i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
        }
    };
    return out;
}

Tape::Node Tape::sub(Node a, Node b) {
    FeatureMap y = occtrack::sub(nodes_[a].value, nodes_[b].value);
    const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Node out = push(std::move(y), needs, {});
    nodes_[out].back = [a, b, out](Tape& t) {
        const FeatureMap& g = t.nodes_[out].grad;
        if (t.nodes_[a].needs_grad) {
            FeatureMap& ga = t.grad_buf(a);
            for (int i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[b].needs_grad) {
            FeatureMap& gb = t.grad_buf(b);
            for (int i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
        }
    };
    return out;
}

Tape::Node Tape::mul(Node a, Node b) {
    FeatureMap y = occtrack::mul(nodes_[a].value, nodes_[b].value);
    const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Node out = push(std::move(y), needs, {});
    nodes_[out].back = [a, b, out](Tape& t) {
        const FeatureMap& g = t.nodes_[out].grad;
        const FeatureMap& av = t.nodes_[a].value;
        const FeatureMap& bv = t.nodes_[b].value;
        if (t.nodes_[a].needs_grad) {
            FeatureMap& ga = t.grad_buf(a);
            for (int i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
        }
        if (t.nodes_[b].needs_grad) {
            FeatureMap& gb = t.grad_buf(b);
            for (int i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
        }
    };
    return out;
}

Tape::Node Tape::unary(Node a, FeatureMap value, std::function<void(Tape&, Node, Node)> back) {
    Node out = push(std::move(value), nodes_[a].needs_grad, {});
    nodes_[out].back = [a, out, back = std::move(back)](Tape& t) {
        if (t.nodes_[a].needs_grad) back(t, a, out);
    };
    return out;
}

Tape::Node Tape::scale(Node a, double s) {
    return unary(a, occtrack::scale(nodes_[a].value, s), [s](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        FeatureMap& ga = t.grad_buf(a2);
        for (int i = 0; i < g.size(); ++i) ga.data[i] += s * g.data[i];
    });
}

Tape::Node Tape::add_scalar(Node a, double s) {
    FeatureMap y = nodes_[a].value;
    for (double& v : y.data) v += s;
    return unary(a, std::move(y), [](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        FeatureMap& ga = t.grad_buf(a2);
        for (int i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    });
}

Tape::Node Tape::relu(Node a) {
    return unary(a, occtrack::relu(nodes_[a].value), [](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        const FeatureMap& x = t.nodes_[a2].value;
        FeatureMap& ga = t.grad_buf(a2);
        for (int i = 0; i < g.size(); ++i)
            if (x.data[i] > 0.0) ga.data[i] += g.data[i];
    });
}

Tape::Node Tape::sigmoid(Node a) {
    return unary(a, occtrack::sigmoid(nodes_[a].value), [](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        const FeatureMap& y = t.nodes_[o].value;
        FeatureMap& ga = t.grad_buf(a2);
        for (int i = 0; i < g.size(); ++i)
            ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
    });
}

Tape::Node Tape::tanh_(Node a) {
    return unary(a, occtrack::tanh_map(nodes_[a].value), [](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        const FeatureMap& y = t.nodes_[o].value;
        FeatureMap& ga = t.grad_buf(a2);
        for (int i = 0; i < g.size(); ++i)
            ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
    });
}

Tape::Node Tape::concat_channels(Node a, Node b) {
    FeatureMap y = occtrack::concat_channels(nodes_[a].value, nodes_[b].value);
    const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Node out = push(std::move(y), needs, {});
    nodes_[out].back = [a, b, out](Tape& t) {
        const FeatureMap& g = t.nodes_[out].grad;
        const int na = t.nodes_[a].value.size();
        if (t.nodes_[a].needs_grad) {
            FeatureMap& ga = t.grad_buf(a);
            for (int i = 0; i < na; ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[b].needs_grad) {
            FeatureMap& gb = t.grad_buf(b);
            for (int i = 0; i < t.nodes_[b].value.size(); ++i)
                gb.data[i] += g.data[na + i];
        }
    };
    return out;
}

Tape::Node Tape::location_scores(Node a, Node b) {
    FeatureMap y = occtrack::location_scores(nodes_[a].value, nodes_[b].value);
    const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Node out = push(std::move(y), needs, {});
    nodes_[out].back = [a, b, out](Tape& t) {
        const FeatureMap& g = t.nodes_[out].grad;
        const FeatureMap& av = t.nodes_[a].value;
        const FeatureMap& bv = t.nodes_[b].value;
        const int pa = av.plane(), pb = bv.plane();
        if (t.nodes_[a].needs_grad) {
            FeatureMap& ga = t.grad_buf(a);
            for (int c = 0; c < av.channels; ++c)
                for (int i = 0; i < pa; ++i) {
                    const double* grow = g.data.data() + static_cast<size_t>(i) * pb;
                    const double* bc = bv.data.data() + static_cast<size_t>(c) * pb;
                    double s = 0.0;
                    for (int j = 0; j < pb; ++j) s += grow[j] * bc[j];
                    ga.data[static_cast<size_t>(c) * pa + i] += s;
                }
        }
        if (t.nodes_[b].needs_grad) {
            FeatureMap& gb = t.grad_buf(b);
            for (int c = 0; c < bv.channels; ++c) {
                const double* ac = av.data.data() + static_cast<size_t>(c) * pa;
                double* gbc = gb.data.data() + static_cast<size_t>(c) * pb;
                for (int i = 0; i < pa; ++i) {
                    const double* grow = g.data.data() + static_cast<size_t>(i) * pb;
                    const double avi = ac[i];
                    for (int j = 0; j < pb; ++j) gbc[j] += grow[j] * avi;
                }
            }
        }
    };
    return out;
}

Tape::Node Tape::softmax_rows(Node a) {
    return unary(a, occtrack::softmax_rows(nodes_[a].value), [](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        const FeatureMap& y = t.nodes_[o].value;
        FeatureMap& ga = t.grad_buf(a2);
        const int rows = y.channels * y.height, M = y.width;
        for (int r = 0; r < rows; ++r) {
            const double* yr = y.data.data() + static_cast<size_t>(r) * M;
            const double* gr = g.data.data() + static_cast<size_t>(r) * M;
            double dot = 0.0;
            for (int j = 0; j < M; ++j) dot += gr[j] * yr[j];
            double* gar = ga.data.data() + static_cast<size_t>(r) * M;
            for (int j = 0; j < M; ++j) gar[j] += yr[j] * (gr[j] - dot);
        }
    });
}

Tape::Node Tape::apply_attention(Node attn, Node values, int out_h, int out_w) {
    FeatureMap y = occtrack::apply_attention(nodes_[attn].value, nodes_[values].value,
                                             out_h, out_w);
    const bool needs = nodes_[attn].needs_grad || nodes_[values].needs_grad;
    Node out = push(std::move(y), needs, {});
    nodes_[out].back = [attn, values, out](Tape& t) {
        const FeatureMap& g = t.nodes_[out].grad;
        const FeatureMap& av = t.nodes_[attn].value;
        const FeatureMap& vv = t.nodes_[values].value;
        const int n = av.height, m = av.width, C = vv.channels;
        if (t.nodes_[attn].needs_grad) {
            FeatureMap& ga = t.grad_buf(attn);
            for (int c = 0; c < C; ++c) {
                const double* gc = g.data.data() + static_cast<size_t>(c) * n;
                const double* vc = vv.data.data() + static_cast<size_t>(c) * m;
                for (int i = 0; i < n; ++i) {
                    double* gar = ga.data.data() + static_cast<size_t>(i) * m;
                    const double gci = gc[i];
                    for (int j = 0; j < m; ++j) gar[j] += gci * vc[j];
                }
            }
        }
        if (t.nodes_[values].needs_grad) {
            FeatureMap& gv = t.grad_buf(values);
            for (int c = 0; c < C; ++c) {
                const double* gc = g.data.data() + static_cast<size_t>(c) * n;
                double* gvc = gv.data.data() + static_cast<size_t>(c) * m;
                for (int i = 0; i < n; ++i) {
                    const double* ar = av.data.data() + static_cast<size_t>(i) * m;
                    const double gci = gc[i];
                    for (int j = 0; j < m; ++j) gvc[j] += ar[j] * gci;
                }
            }
        }
    };
    return out;
}

Tape::Node Tape::mean_pool(Node a) {
    return unary(a, occtrack::mean_pool(nodes_[a].value), [](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        const FeatureMap& x = t.nodes_[a2].value;
        FeatureMap& ga = t.grad_buf(a2);
        const int p = x.plane();
        for (int c = 0; c < x.channels; ++c) {
            const double gc = g.data[c] / p;
            double* gar = ga.data.data() + static_cast<size_t>(c) * p;
            for (int i = 0; i < p; ++i) gar[i] += gc;
        }
    });
}

Tape::Node Tape::l2_normalize(Node a) {
    return unary(a, occtrack::l2_normalize(nodes_[a].value), [](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        const FeatureMap& x = t.nodes_[a2].value;
        double s = 0.0;
        for (double v : x.data) s += v * v;
        if (s == 0.0) return;  // zero vector passes through; gradient undefined, treated as 0
        const double n = std::sqrt(s);
        double dot = 0.0;
        for (int i = 0; i < x.size(); ++i) dot += g.data[i] * x.data[i];
        FeatureMap& ga = t.grad_buf(a2);
        const double inv = 1.0 / n, inv3 = 1.0 / (n * s);
        for (int i = 0; i < x.size(); ++i)
            ga.data[i] += g.data[i] * inv - x.data[i] * dot * inv3;
    });
}

Tape::Node Tape::sum_all(Node a) {
    double s = 0.0;
    for (double v : nodes_[a].value.data) s += v;
    return unary(a, FeatureMap::from(1, 1, 1, {s}), [](Tape& t, Node a2, Node o) {
        const double g = t.nodes_[o].grad.data[0];
        FeatureMap& ga = t.grad_buf(a2);
        for (double& v : ga.data) v += g;
    });
}

Tape::Node Tape::sqrt_(Node a) {
    FeatureMap y = nodes_[a].value;
    for (double& v : y.data) v = std::sqrt(v);
    return unary(a, std::move(y), [](Tape& t, Node a2, Node o) {
        const FeatureMap& g = t.nodes_[o].grad;
        const FeatureMap& y2 = t.nodes_[o].value;
        FeatureMap& ga = t.grad_buf(a2);
        for (int i = 0; i < g.size(); ++i)
            if (y2.data[i] > 0.0) ga.data[i] += 0.5 * g.data[i] / y2.data[i];
    });
}

Tape::Node Tape::logsumexp(Node a) {
    const FeatureMap& x = nodes_[a].value;
    double m = x.data[0];
    for (double v : x.data) m = std::max(m, v);
    double s = 0.0;
    for (double v : x.data) s += std::exp(v - m);
    return unary(a, FeatureMap::from(1, 1, 1, {m + std::log(s)}),
                 [](Tape& t, Node a2, Node o) {
                     const double g = t.nodes_[o].grad.data[0];
                     const FeatureMap& x2 = t.nodes_[a2].value;
                     const double lse = t.nodes_[o].value.data[0];
                     FeatureMap& ga = t.grad_buf(a2);
                     for (int i = 0; i < x2.size(); ++i)
                         ga.data[i] += g * std::exp(x2.data[i] - lse);
                 });
}

Tape::Node Tape::pick(Node a, int channel) {
    const FeatureMap& x = nodes_[a].value;
    if (x.plane() != 1 || channel < 0 || channel >= x.channels)
        throw std::invalid_argument("pick: expects a {C,1,1} vector and a valid channel");
    return unary(a, FeatureMap::from(1, 1, 1, {x.data[channel]}),
                 [channel](Tape& t, Node a2, Node o) {
                     t.grad_buf(a2).data[channel] += t.nodes_[o].grad.data[0];
                 });
}

void Tape::backward(Node root) {
    const FeatureMap& rv = nodes_[root].value;
    if (rv.size() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    if (!std::isfinite(rv.data[0]))
        throw std::runtime_error("backward: non-finite objective value");
    for (auto& e : nodes_) {
        if (e.grad.size() != 0) std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
        if (e.needs_grad && e.grad.size() == 0)
            e.grad = FeatureMap(e.value.channels, e.value.height, e.value.width);
    }
    grad_buf(root).data[0] = 1.0;
    for (Node n = static_cast<Node>(nodes_.size()) - 1; n >= 0; --n) {
        Entry& e = nodes_[n];
        if (!e.needs_grad || !e.back) continue;
        e.back(*this);
    }
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> params,
                  std::span<const double> analytic,
                  double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-3)
        throw std::invalid_argument("grad_check: epsilon must be in [1e-7, 1e-3]");
    if (params.size() != analytic.size())
        throw std::invalid_argument("grad_check: parameter/gradient length mismatch");
    const double probe = f(params);
    if (!std::isfinite(probe))
        throw std::runtime_error("grad_check: objective is not finite at the probe point");
    std::vector<double> work(params.begin(), params.end());
    double worst = 0.0;
    for (size_t i = 0; i < work.size(); ++i) {
        const double saved = work[i];
        work[i] = saved + epsilon;
        const double hi = f(work);
        work[i] = saved - epsilon;
        const double lo = f(work);
        work[i] = saved;
        if (!std::isfinite(hi) || !std::isfinite(lo))
            throw std::runtime_error("grad_check: objective is not finite near the probe point");
        const double fd = (hi - lo) / (2.0 * epsilon);
        const double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace occtrack
