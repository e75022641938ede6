#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "occtrack/rng.hpp"
#include "occtrack/tensor.hpp"

using namespace occtrack;

namespace {

FeatureMap random_map(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
    FeatureMap m(c, h, w);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

// Random values bounded away from zero, for ops with a kink or pole there.
FeatureMap random_map_nonzero(Rng& rng, int c, int h, int w) {
    FeatureMap m(c, h, w);
    for (double& v : m.data) {
        const double mag = rng.uniform(0.1, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return m;
}

double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (int i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

// Generic harness: params feed one or more leaf maps, `build` assembles the
// graph and returns the objective node. Analytic gradients from one backward
// pass are compared against central differences over the same closure.
struct GradCase {
    std::vector<std::pair<int, std::array<int, 3>>> shapes;  // (offset, {c,h,w})
    std::vector<double> params;

    void add_input(const FeatureMap& m) {
        shapes.push_back({static_cast<int>(params.size()),
                          {m.channels, m.height, m.width}});
        params.insert(params.end(), m.data.begin(), m.data.end());
    }

    double run(const std::function<Tape::Node(Tape&, const std::vector<Tape::Node>&)>& build,
               double epsilon = 1e-5) const {
        auto objective = [&](std::span<const double> p) {
            Tape t;
            std::vector<Tape::Node> leaves;
            for (const auto& [off, sh] : shapes) {
                FeatureMap m(sh[0], sh[1], sh[2]);
                std::copy(p.begin() + off, p.begin() + off + m.size(), m.data.begin());
                leaves.push_back(t.leaf(std::move(m), true));
            }
            return t.value(build(t, leaves)).data[0];
        };
        Tape t;
        std::vector<Tape::Node> leaves;
        for (const auto& [off, sh] : shapes) {
            FeatureMap m(sh[0], sh[1], sh[2]);
            std::copy(params.begin() + off, params.begin() + off + m.size(), m.data.begin());
            leaves.push_back(t.leaf(std::move(m), true));
        }
        t.backward(build(t, leaves));
        std::vector<double> analytic;
        for (Tape::Node n : leaves) {
            const FeatureMap& g = t.grad(n);
            analytic.insert(analytic.end(), g.data.begin(), g.data.end());
        }
        return grad_check(objective, params, analytic, epsilon);
    }
};

// Reduces any node to a scalar through a fixed random mask so gradients are
// not blind to sign/permutation errors the way a plain sum would be.
Tape::Node masked_sum(Tape& t, Tape::Node n, uint64_t seed) {
    const FeatureMap& v = t.value(n);
    Rng rng(seed);
    FeatureMap mask = random_map(rng, v.channels, v.height, v.width, 0.25, 1.75);
    return t.sum_all(t.mul(n, t.leaf(std::move(mask), false)));
}

}  // namespace

TEST_CASE("feature map construction and validation") {
    FeatureMap m(2, 3, 4);
    CHECK(m.size() == 24);
    CHECK(m.plane() == 12);
    m.at(1, 2, 3) = 5.0;
    CHECK(m.data[23] == 5.0);
    CHECK(m.all_finite());
    m.at(0, 0, 0) = std::nan("");
    CHECK_FALSE(m.all_finite());
    CHECK_THROWS_AS(FeatureMap::from(2, 2, 2, {1.0, 2.0}), std::invalid_argument);
    CHECK(FeatureMap(3, 2, 2).shape_str() == "3x2x2");
}

TEST_CASE("conv2d 1x1 single pixel") {
    FeatureMap x = FeatureMap::from(1, 1, 1, {2.0});
    ConvLayer layer(1, 1, 1);
    layer.kernel = {3.0};
    layer.bias = {1.0};
    FeatureMap y = conv2d(x, layer);
    CHECK(y.data[0] == 7.0);
}

TEST_CASE("conv2d 3x3 all-ones kernel counts valid taps") {
    FeatureMap x(1, 3, 3, 1.0);
    ConvLayer layer(1, 1, 3);
    std::fill(layer.kernel.begin(), layer.kernel.end(), 1.0);
    FeatureMap y = conv2d(x, layer);
    CHECK(y.at(0, 1, 1) == 9.0);
    CHECK(y.at(0, 0, 1) == 6.0);
    CHECK(y.at(0, 1, 0) == 6.0);
    CHECK(y.at(0, 0, 0) == 4.0);
    CHECK(y.at(0, 2, 2) == 4.0);
}

TEST_CASE("conv2d identity kernel is bitwise identity") {
    Rng rng(11);
    FeatureMap x = random_map(rng, 3, 5, 4);
    ConvLayer layer(3, 3, 1);
    for (int o = 0; o < 3; ++o) layer.kern(o, o, 0, 0) = 1.0;
    FeatureMap y = conv2d(x, layer);
    CHECK(max_abs_diff(x, y) == 0.0);
    CHECK(std::memcmp(x.data.data(), y.data.data(), sizeof(double) * x.size()) == 0);
}

TEST_CASE("conv2d is linear in its input when bias is zero") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        ConvLayer layer(2, 3, 3);
        for (double& v : layer.kernel) v = rng.uniform(-1.0, 1.0);
        FeatureMap a = random_map(rng, 3, 6, 5);
        FeatureMap b = random_map(rng, 3, 6, 5);
        FeatureMap lhs = conv2d(add(a, b), layer);
        FeatureMap rhs = add(conv2d(a, layer), conv2d(b, layer));
        CHECK(max_abs_diff(lhs, rhs) <= 1e-10);
    }
}

TEST_CASE("conv2d rejects mismatched shapes") {
    ConvLayer layer(1, 2, 1);
    FeatureMap x(3, 2, 2);
    CHECK_THROWS_AS(conv2d(x, layer), std::invalid_argument);
    ConvLayer bad(1, 1, 3);
    bad.padding = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("pointwise ops") {
    FeatureMap a = FeatureMap::from(1, 1, 3, {1.0, -2.0, 3.0});
    FeatureMap b = FeatureMap::from(1, 1, 3, {0.5, 4.0, -1.0});
    CHECK(add(a, b).data == std::vector<double>{1.5, 2.0, 2.0});
    CHECK(sub(a, b).data == std::vector<double>{0.5, -6.0, 4.0});
    CHECK(mul(a, b).data == std::vector<double>{0.5, -8.0, -3.0});
    CHECK(scale(a, 2.0).data == std::vector<double>{2.0, -4.0, 6.0});
    CHECK(relu(a).data == std::vector<double>{1.0, 0.0, 3.0});
    CHECK(sigmoid(FeatureMap::from(1, 1, 1, {0.0})).data[0] == 0.5);
    CHECK(tanh_map(FeatureMap::from(1, 1, 1, {0.0})).data[0] == 0.0);
    CHECK_THROWS_AS(add(a, FeatureMap(1, 1, 2)), std::invalid_argument);
}

TEST_CASE("concat_channels stacks planes in order") {
    FeatureMap a = FeatureMap::from(1, 1, 2, {1.0, 2.0});
    FeatureMap b = FeatureMap::from(2, 1, 2, {3.0, 4.0, 5.0, 6.0});
    FeatureMap c = concat_channels(a, b);
    CHECK(c.channels == 3);
    CHECK(c.data == std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    CHECK_THROWS_AS(concat_channels(a, FeatureMap(1, 2, 2)), std::invalid_argument);
}

TEST_CASE("location_scores computes per-location dot products") {
    // a: 2 channels over 2 locations; b: 2 channels over 1 location.
    FeatureMap a = FeatureMap::from(2, 1, 2, {1.0, 2.0, 3.0, 4.0});
    FeatureMap b = FeatureMap::from(2, 1, 1, {5.0, 6.0});
    FeatureMap s = location_scores(a, b);
    CHECK(s.channels == 1);
    CHECK(s.height == 2);
    CHECK(s.width == 1);
    CHECK(s.data[0] == doctest::Approx(1.0 * 5.0 + 3.0 * 6.0).epsilon(1e-15));
    CHECK(s.data[1] == doctest::Approx(2.0 * 5.0 + 4.0 * 6.0).epsilon(1e-15));
}

TEST_CASE("softmax_rows normalizes each row") {
    FeatureMap a = FeatureMap::from(1, 2, 3, {0.0, 0.0, 0.0, 1.0, 2.0, 3.0});
    FeatureMap s = softmax_rows(a);
    for (int j = 0; j < 3; ++j) CHECK(s.data[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    double row1 = s.data[3] + s.data[4] + s.data[5];
    CHECK(row1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.data[5] > s.data[4]);
    CHECK(s.data[4] > s.data[3]);
    // Shift invariance: softmax(x + c) == softmax(x) to high precision.
    FeatureMap shifted = a;
    for (double& v : shifted.data) v += 100.0;
    CHECK(max_abs_diff(softmax_rows(shifted), s) <= 1e-12);
}

TEST_CASE("apply_attention with one-hot rows selects columns") {
    FeatureMap attn = FeatureMap::from(1, 2, 2, {0.0, 1.0, 1.0, 0.0});
    FeatureMap v = FeatureMap::from(2, 1, 2, {10.0, 20.0, 30.0, 40.0});
    FeatureMap out = apply_attention(attn, v, 1, 2);
    CHECK(out.data == std::vector<double>{20.0, 10.0, 40.0, 30.0});
    CHECK_THROWS_AS(apply_attention(attn, v, 2, 2), std::invalid_argument);
}

TEST_CASE("mean_pool and l2_normalize") {
    FeatureMap a = FeatureMap::from(2, 1, 2, {1.0, 3.0, -2.0, 6.0});
    FeatureMap p = mean_pool(a);
    CHECK(p.data == std::vector<double>{2.0, 2.0});
    FeatureMap v = FeatureMap::from(1, 1, 2, {3.0, 4.0});
    FeatureMap n = l2_normalize(v);
    CHECK(n.data[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(n.data[1] == doctest::Approx(0.8).epsilon(1e-15));
    FeatureMap z(2, 1, 1);
    CHECK(l2_normalize(z).data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("raw ops are pure: repeated calls give bitwise-identical results") {
    Rng rng(13);
    FeatureMap x = random_map(rng, 4, 8, 8);
    ConvLayer layer(4, 4, 3);
    for (double& v : layer.kernel) v = rng.uniform(-0.3, 0.3);
    for (double& v : layer.bias) v = rng.uniform(-0.1, 0.1);
    FeatureMap y1 = conv2d(x, layer);
    FeatureMap y2 = conv2d(x, layer);
    CHECK(std::memcmp(y1.data.data(), y2.data.data(), sizeof(double) * y1.size()) == 0);
    FeatureMap s1 = softmax_rows(location_scores(x, x));
    FeatureMap s2 = softmax_rows(location_scores(x, x));
    CHECK(std::memcmp(s1.data.data(), s2.data.data(), sizeof(double) * s1.size()) == 0);
}

TEST_CASE("tape forward values match raw ops bitwise") {
    Rng rng(14);
    FeatureMap a = random_map(rng, 3, 4, 4);
    FeatureMap b = random_map(rng, 3, 4, 4);
    ConvLayer layer(2, 3, 3);
    for (double& v : layer.kernel) v = rng.uniform(-0.5, 0.5);
    for (double& v : layer.bias) v = rng.uniform(-0.1, 0.1);

    Tape t;
    Tape::Node na = t.leaf(a, true);
    Tape::Node nb = t.leaf(b, true);
    CHECK(max_abs_diff(t.value(t.add(na, nb)), add(a, b)) == 0.0);
    CHECK(max_abs_diff(t.value(t.sub(na, nb)), sub(a, b)) == 0.0);
    CHECK(max_abs_diff(t.value(t.mul(na, nb)), mul(a, b)) == 0.0);
    CHECK(max_abs_diff(t.value(t.relu(na)), relu(a)) == 0.0);
    CHECK(max_abs_diff(t.value(t.sigmoid(na)), sigmoid(a)) == 0.0);
    CHECK(max_abs_diff(t.value(t.tanh_(na)), tanh_map(a)) == 0.0);
    CHECK(max_abs_diff(t.value(t.conv(na, layer)), conv2d(a, layer)) == 0.0);
    CHECK(max_abs_diff(t.value(t.concat_channels(na, nb)), concat_channels(a, b)) == 0.0);
    CHECK(max_abs_diff(t.value(t.location_scores(na, nb)), location_scores(a, b)) == 0.0);
    CHECK(max_abs_diff(t.value(t.mean_pool(na)), mean_pool(a)) == 0.0);
    CHECK(max_abs_diff(t.value(t.l2_normalize(na)), l2_normalize(a)) == 0.0);
}

TEST_CASE("grad_check on quadratic is near-exact") {
    auto f = [](std::span<const double> p) { return p[0] * p[0]; };
    std::vector<double> params{3.0};
    std::vector<double> analytic{6.0};
    CHECK(grad_check(f, params, analytic, 1e-5) <= 1e-9);
}

TEST_CASE("grad_check on constant objective reports zero mismatch") {
    auto f = [](std::span<const double>) { return 4.25; };
    std::vector<double> params{1.0, -2.0};
    std::vector<double> analytic{0.0, 0.0};
    CHECK(grad_check(f, params, analytic, 1e-5) <= 1e-12);
}

TEST_CASE("grad_check rejects bad epsilon and non-finite objectives") {
    auto f = [](std::span<const double> p) { return p[0]; };
    std::vector<double> params{1.0};
    std::vector<double> analytic{1.0};
    CHECK_THROWS_AS(grad_check(f, params, analytic, 1e-8), std::invalid_argument);
    CHECK_THROWS_AS(grad_check(f, params, analytic, 1e-2), std::invalid_argument);
    auto g = [](std::span<const double>) { return std::nan(""); };
    CHECK_THROWS_AS(grad_check(g, params, analytic, 1e-5), std::runtime_error);
}

TEST_CASE("backward requires a finite scalar root") {
    Tape t;
    Tape::Node n = t.leaf(FeatureMap(1, 2, 2, 1.0), true);
    CHECK_THROWS_AS(t.backward(n), std::invalid_argument);
    Tape t2;
    Tape::Node m = t2.leaf(FeatureMap::from(1, 1, 1, {std::nan("")}), true);
    CHECK_THROWS_AS(t2.backward(m), std::runtime_error);
}

TEST_CASE("gradients: pointwise and reduction ops") {
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed);
        GradCase c;
        c.add_input(random_map(rng, 2, 3, 3));
        c.add_input(random_map(rng, 2, 3, 3));
        auto binary = [&](auto op) {
            GradCase cc = c;
            double worst = cc.run([&](Tape& t, const std::vector<Tape::Node>& in) {
                return masked_sum(t, op(t, in[0], in[1]), seed + 77);
            });
            CHECK(worst <= 1e-4);
        };
        binary([](Tape& t, Tape::Node a, Tape::Node b) { return t.add(a, b); });
        binary([](Tape& t, Tape::Node a, Tape::Node b) { return t.sub(a, b); });
        binary([](Tape& t, Tape::Node a, Tape::Node b) { return t.mul(a, b); });
        binary([](Tape& t, Tape::Node a, Tape::Node b) { return t.concat_channels(a, b); });

        GradCase u;
        Rng rng2(seed + 100);
        u.add_input(random_map(rng2, 2, 3, 3));
        auto unary = [&](auto op) {
            GradCase cc = u;
            double worst = cc.run([&](Tape& t, const std::vector<Tape::Node>& in) {
                return masked_sum(t, op(t, in[0]), seed + 78);
            });
            CHECK(worst <= 1e-4);
        };
        unary([](Tape& t, Tape::Node a) { return t.scale(a, -1.7); });
        unary([](Tape& t, Tape::Node a) { return t.add_scalar(a, 0.4); });
        unary([](Tape& t, Tape::Node a) { return t.sigmoid(a); });
        unary([](Tape& t, Tape::Node a) { return t.tanh_(a); });
        unary([](Tape& t, Tape::Node a) { return t.mean_pool(a); });
        unary([](Tape& t, Tape::Node a) { return t.softmax_rows(a); });
    }
}

TEST_CASE("gradients: relu, sqrt, l2_normalize away from kinks") {
    for (uint64_t seed = 5; seed <= 7; ++seed) {
        Rng rng(seed);
        GradCase c;
        c.add_input(random_map_nonzero(rng, 2, 3, 3));
        double worst = c.run([&](Tape& t, const std::vector<Tape::Node>& in) {
            return masked_sum(t, t.relu(in[0]), seed);
        });
        CHECK(worst <= 1e-4);

        GradCase c2;
        Rng rng2(seed + 40);
        c2.add_input(random_map(rng2, 2, 2, 2, 0.2, 2.0));  // strictly positive
        worst = c2.run([&](Tape& t, const std::vector<Tape::Node>& in) {
            return masked_sum(t, t.sqrt_(in[0]), seed);
        });
        CHECK(worst <= 1e-4);

        GradCase c3;
        Rng rng3(seed + 80);
        c3.add_input(random_map_nonzero(rng3, 3, 1, 1));
        worst = c3.run([&](Tape& t, const std::vector<Tape::Node>& in) {
            return masked_sum(t, t.l2_normalize(in[0]), seed);
        });
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("gradients: conv w.r.t. input, kernel and bias") {
    for (uint64_t seed = 21; seed <= 23; ++seed) {
        Rng rng(seed);
        const int in_ch = 2, out_ch = 2, k = 3;
        GradCase c;
        c.add_input(random_map(rng, in_ch, 4, 4));
        c.add_input(random_map(rng, out_ch * in_ch, k, k, -0.5, 0.5));
        c.add_input(random_map(rng, out_ch, 1, 1, -0.2, 0.2));
        double worst = c.run([&](Tape& t, const std::vector<Tape::Node>& in) {
            Tape::Node y = t.conv(in[0], in[1], in[2], out_ch, in_ch, k);
            return masked_sum(t, t.sigmoid(y), seed);
        });
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("gradients: attention pipeline") {
    for (uint64_t seed = 31; seed <= 33; ++seed) {
        Rng rng(seed);
        GradCase c;
        c.add_input(random_map(rng, 3, 2, 2));  // query features
        c.add_input(random_map(rng, 3, 2, 2));  // reference features
        double worst = c.run([&](Tape& t, const std::vector<Tape::Node>& in) {
            Tape::Node scores = t.location_scores(in[0], in[1]);
            Tape::Node attn = t.softmax_rows(scores);
            Tape::Node out = t.apply_attention(attn, in[1], 2, 2);
            return masked_sum(t, out, seed);
        });
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("gradients: logsumexp and pick compose into cross-entropy") {
    for (uint64_t seed = 41; seed <= 43; ++seed) {
        Rng rng(seed);
        GradCase c;
        c.add_input(random_map(rng, 5, 1, 1, -2.0, 2.0));
        double worst = c.run([&](Tape& t, const std::vector<Tape::Node>& in) {
            // CE(logits, label=2) = logsumexp(logits) - logits[2]
            Tape::Node lse = t.logsumexp(in[0]);
            Tape::Node target = t.pick(in[0], 2);
            return t.sub(lse, target);
        });
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("gradients: deep composite chain") {
    for (uint64_t seed = 51; seed <= 52; ++seed) {
        Rng rng(seed);
        const int C = 2;
        GradCase c;
        c.add_input(random_map(rng, C, 4, 4));
        c.add_input(random_map(rng, C * C, 3, 3, -0.4, 0.4));
        c.add_input(random_map(rng, C, 1, 1, -0.1, 0.1));
        double worst = c.run([&](Tape& t, const std::vector<Tape::Node>& in) {
            Tape::Node y = t.conv(in[0], in[1], in[2], C, C, 3);
            Tape::Node z = t.tanh_(y);
            Tape::Node scores = t.location_scores(z, in[0]);
            Tape::Node attn = t.softmax_rows(scores);
            Tape::Node agg = t.apply_attention(attn, in[0], 4, 4);
            Tape::Node mixed = t.add(t.mul(z, agg), t.scale(z, 0.3));
            Tape::Node pooled = t.l2_normalize(t.mean_pool(mixed));
            return masked_sum(t, pooled, seed);
        });
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("backward accumulates across reuse of a node") {
    // y = x*x + x  =>  dy/dx = 2x + 1
    Tape t;
    Tape::Node x = t.leaf(FeatureMap::from(1, 1, 1, {3.0}), true);
    Tape::Node y = t.add(t.mul(x, x), x);
    t.backward(y);
    CHECK(t.grad(x).data[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("backward twice on the same tape gives identical gradients") {
    Rng rng(61);
    Tape t;
    Tape::Node x = t.leaf(random_map(rng, 2, 3, 3), true);
    Tape::Node root = t.sum_all(t.sigmoid(x));
    t.backward(root);
    FeatureMap g1 = t.grad(x);
    t.backward(root);
    CHECK(max_abs_diff(g1, t.grad(x)) == 0.0);
}
