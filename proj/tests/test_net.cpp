#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "retouch/net.hpp"
#include "retouch/optim.hpp"

using namespace retouch;
using testutil::rel_err;

namespace {

template <typename T>
Tensor<T> random_tensor(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(c, h, w);
    for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
    }
    return acc;
}

// three-layer conv net from the input-gradient example
template <typename T>
Network<T> small_conv_net(uint64_t seed) {
    Network<T> net;
    net.build({LayerSpec::conv(4, 3, 1), LayerSpec::relu(), LayerSpec::conv(3, 3, 1)}, 3, 16, 16);
    Rng rng(seed);
    net.init_weights(rng);
    return net;
}

template <typename T>
double fd_input_gradient_worst(const Network<T>& net, Rng& rng, int coords, double step) {
    Tensor<T> input = random_tensor<T>(rng, net.in_ch, net.in_h, net.in_w, 0.0, 1.0);
    NetCache<T> cache = net.forward(input);
    const Tensor<T>& out = net.output(cache);
    Tensor<T> upstream = random_tensor<T>(rng, out.ch, out.h, out.w);
    NetGrads<T> grads = net.backward(cache, upstream, false);

    double worst = 0.0;
    for (int s = 0; s < coords; ++s) {
        const size_t i = rng.index(input.size());
        auto f = [&](double v) {
            Tensor<T> q = input;
            q.data[i] = static_cast<T>(v);
            NetCache<T> c2 = net.forward(q);
            return dot(upstream, net.output(c2));
        };
        const double fd = testutil::central_diff(f, static_cast<double>(input.data[i]), step);
        worst = std::max(worst, rel_err(static_cast<double>(grads.d_input.data[i]), fd));
    }
    return worst;
}

}  // namespace

TEST_CASE("identity conv passes input through") {
    Network<double> net;
    net.build({LayerSpec::conv(2, 1, 1)}, 2, 4, 4);
    // w[oc][ic][1][1] = identity, bias zero
    net.weights[0].w = {1.0, 0.0, 0.0, 1.0};
    Rng rng(3);
    Tensor<double> in = random_tensor<double>(rng, 2, 4, 4);
    NetCache<double> cache = net.forward(in);
    for (size_t i = 0; i < in.size(); ++i) CHECK(net.output(cache).data[i] == in.data[i]);
}

TEST_CASE("relu and upsample forwards") {
    Network<double> net;
    net.build({LayerSpec::relu()}, 3, 1, 1);
    Tensor<double> in(3, 1, 1);
    in.data = {-1.0, 0.0, 2.0};
    NetCache<double> cache = net.forward(in);
    CHECK(net.output(cache).data == std::vector<double>{0.0, 0.0, 2.0});

    Network<double> up;
    up.build({LayerSpec::up_sample()}, 1, 2, 2);
    Tensor<double> in2(1, 2, 2);
    in2.data = {1.0, 2.0, 3.0, 4.0};
    NetCache<double> c2 = up.forward(in2);
    const Tensor<double>& o = up.output(c2);
    REQUIRE(o.h == 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            CHECK(o.at(0, y, x) == in2.at(0, y / 2, x / 2));
        }
    }
}

TEST_CASE("maxpool forward and routing backward") {
    Network<double> net;
    net.build({LayerSpec::max_pool()}, 1, 2, 2);
    Tensor<double> in(1, 2, 2);
    in.data = {0.1, 0.9, 0.4, 0.2};
    NetCache<double> cache = net.forward(in);
    CHECK(net.output(cache).data[0] == 0.9);

    Tensor<double> up(1, 1, 1);
    up.data = {2.5};
    NetGrads<double> g = net.backward(cache, up, false);
    CHECK(g.d_input.data[0] == 0.0);
    CHECK(g.d_input.data[1] == 2.5);
    CHECK(g.d_input.data[2] == 0.0);
}

TEST_CASE("batch norm inference applies stored statistics") {
    Network<double> net;
    net.build({LayerSpec::batch_norm()}, 1, 1, 2);
    net.weights[0].gamma = {2.0};
    net.weights[0].beta = {0.5};
    net.weights[0].mean = {1.0};
    net.weights[0].var = {4.0};
    Tensor<double> in(1, 1, 2);
    in.data = {3.0, 1.0};
    NetCache<double> cache = net.forward(in);
    const double inv = 1.0 / std::sqrt(4.0 + 1e-5);
    CHECK(net.output(cache).data[0] == doctest::Approx(2.0 * 2.0 * inv + 0.5));
    CHECK(net.output(cache).data[1] == doctest::Approx(0.5));
}

TEST_CASE("network input gradients match finite differences") {
    // 64-bit mode
    Network<double> net64 = small_conv_net<double>(11);
    Rng rng64(21);
    CHECK(fd_input_gradient_worst(net64, rng64, 100, 1e-5) <= 1e-5);

    // 32-bit mode: the float VJP is checked against precise differences of a
    // double twin with identical (float32) weights, since a float-arithmetic
    // stencil is dominated by rounding noise
    Network<float> net32 = small_conv_net<float>(11);
    Network<double> twin = small_conv_net<double>(0);
    twin.import_weights(net32.export_weights());
    Rng rng32(21);
    Tensor<float> input32 = random_tensor<float>(rng32, 3, 16, 16, 0.0, 1.0);
    Tensor<double> input64(3, 16, 16);
    for (size_t i = 0; i < input32.size(); ++i) input64.data[i] = input32.data[i];

    NetCache<float> cache32 = net32.forward(input32);
    Tensor<float> up32 = random_tensor<float>(rng32, 3, 16, 16);
    Tensor<double> up64(3, 16, 16);
    for (size_t i = 0; i < up32.size(); ++i) up64.data[i] = up32.data[i];
    NetGrads<float> grads32 = net32.backward(cache32, up32, false);

    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
        const size_t i = rng32.index(input64.size());
        auto f = [&](double v) {
            Tensor<double> q = input64;
            q.data[i] = v;
            NetCache<double> c2 = twin.forward(q);
            return dot(up64, twin.output(c2));
        };
        const double fd = testutil::central_diff(f, input64.data[i], 1e-5);
        worst = std::max(worst, rel_err(static_cast<double>(grads32.d_input.data[i]), fd));
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("linear network gradient is input independent") {
    Network<double> net;
    net.build({LayerSpec::conv(2, 3, 1), LayerSpec::conv(1, 3, 1)}, 1, 6, 6);
    Rng rng(5);
    net.init_weights(rng);
    Tensor<double> a = random_tensor<double>(rng, 1, 6, 6);
    Tensor<double> b = random_tensor<double>(rng, 1, 6, 6);
    Tensor<double> up = random_tensor<double>(rng, 1, 6, 6);
    NetCache<double> ca = net.forward(a);
    NetCache<double> cb = net.forward(b);
    NetGrads<double> ga = net.backward(ca, up, false);
    NetGrads<double> gb = net.backward(cb, up, false);
    for (size_t i = 0; i < ga.d_input.size(); ++i) {
        CHECK(ga.d_input.data[i] == doctest::Approx(gb.d_input.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("weight gradients match finite differences") {
    // victim-shaped net with dense head and a batch norm in the mix
    Network<double> net;
    net.build({LayerSpec::conv(4, 3, 1), LayerSpec::batch_norm(), LayerSpec::relu(),
               LayerSpec::max_pool(), LayerSpec::dense(3)},
              3, 8, 8);
    Rng rng(13);
    net.init_weights(rng);
    for (size_t i = 0; i < net.weights[1].mean.size(); ++i) {
        net.weights[1].mean[i] = rng.uniform(-0.2, 0.2);
        net.weights[1].var[i] = rng.uniform(0.5, 1.5);
    }
    Tensor<double> input = random_tensor<double>(rng, 3, 8, 8, 0.0, 1.0);
    Tensor<double> upstream = random_tensor<double>(rng, 3, 1, 1);

    NetCache<double> cache = net.forward(input);
    NetGrads<double> grads = net.backward(cache, upstream, true);

    auto value_with = [&](Network<double>& n) {
        NetCache<double> c = n.forward(input);
        return dot(upstream, n.output(c));
    };
    double worst = 0.0;
    auto check_array = [&](size_t layer, std::vector<double> LayerWeights<double>::*member,
                           int samples) {
        Rng pick(layer * 7 + 1);
        std::vector<double>& arr = net.weights[layer].*member;
        const std::vector<double>& g = grads.weights[layer].*member;
        for (int s = 0; s < samples && !arr.empty(); ++s) {
            const size_t i = pick.index(arr.size());
            auto f = [&](double v) {
                Network<double> n2 = net;
                (n2.weights[layer].*member)[i] = v;
                return value_with(n2);
            };
            const double fd = testutil::central_diff(f, arr[i]);
            worst = std::max(worst, rel_err(g[i], fd));
        }
    };
    check_array(0, &LayerWeights<double>::w, 25);
    check_array(0, &LayerWeights<double>::b, 4);
    check_array(1, &LayerWeights<double>::gamma, 4);
    check_array(1, &LayerWeights<double>::beta, 4);
    check_array(4, &LayerWeights<double>::w, 25);
    check_array(4, &LayerWeights<double>::b, 3);
    CHECK(worst <= 1e-5);
}

TEST_CASE("unet input gradient covers concat and upsample") {
    Network<double> net = make_style_unet<double>(2);
    Rng rng(17);
    net.init_weights(rng);
    Tensor<double> input = random_tensor<double>(rng, 3, 8, 8, 0.0, 1.0);
    NetCache<double> cache = net.forward(input);
    const Tensor<double>& out = net.output(cache);
    REQUIRE(out.ch == 1);
    REQUIRE(out.h == 8);
    REQUIRE(out.w == 8);
    Tensor<double> upstream = random_tensor<double>(rng, 1, 8, 8);
    NetGrads<double> grads = net.backward(cache, upstream, false);
    double worst = 0.0;
    for (int s = 0; s < 40; ++s) {
        const size_t i = rng.index(input.size());
        auto f = [&](double v) {
            Tensor<double> q = input;
            q.data[i] = v;
            NetCache<double> c2 = net.forward(q);
            return dot(upstream, net.output(c2));
        };
        const double fd = testutil::central_diff(f, input.data[i]);
        worst = std::max(worst, rel_err(grads.d_input.data[i], fd));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("adam steps") {
    // zero gradient leaves weights unchanged
    AdamState adam;
    double w[2] = {0.4, -0.2};
    double g[2] = {0.0, 0.0};
    adam.begin_step();
    adam.update(0, w, g, 2, 0.1);
    CHECK(w[0] == 0.4);
    CHECK(w[1] == -0.2);

    // first bias-corrected step with constant unit gradient is ~ -lr
    AdamState a2;
    double w1 = 1.0, g1 = 1.0;
    a2.begin_step();
    a2.update(0, &w1, &g1, 1, 0.1);
    CHECK(w1 == doctest::Approx(1.0 - 0.09999999900000002).epsilon(1e-12));

    // fitting y = 2x with a single dense weight decreases the loss monotonically
    Network<double> net;
    net.build({LayerSpec::dense(1)}, 1, 1, 1);
    AdamState a3;
    double prev_loss = 1e300;
    for (int step = 0; step < 50; ++step) {
        Tensor<double> x(1, 1, 1);
        x.data = {1.0};
        NetCache<double> cache = net.forward(x);
        const double pred = net.output(cache).data[0];
        const double loss = (pred - 2.0) * (pred - 2.0);
        CHECK(loss < prev_loss);
        prev_loss = loss;
        Tensor<double> up(1, 1, 1);
        up.data = {2.0 * (pred - 2.0)};
        NetGrads<double> grads = net.backward(cache, up, true);
        adam_step(net, grads.weights, a3, 0.01);
    }
}

TEST_CASE("softmax cross entropy") {
    CeResult<double> r = softmax_cross_entropy<double>({2.0, -1.0, 0.5, 0.0}, 2);
    double sum = 0.0;
    for (double p : r.probs) {
        CHECK(p >= 0.0);
        sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
    CHECK(r.loss >= 0.0);
    // d_logits = probs - onehot
    CHECK(r.d_logits[2] == doctest::Approx(r.probs[2] - 1.0));
    CHECK(r.d_logits[0] == doctest::Approx(r.probs[0]));
    CHECK_THROWS_AS(softmax_cross_entropy<double>({1.0, 2.0}, 5), std::invalid_argument);

    // terminal loss-head layer emits the same probabilities
    Network<double> net;
    net.build({LayerSpec::dense(4), LayerSpec::softmax_cross_entropy()}, 4, 1, 1);
    for (int i = 0; i < 4; ++i) net.weights[0].w[i * 4 + i] = 1.0;
    Tensor<double> in(4, 1, 1);
    in.data = {2.0, -1.0, 0.5, 0.0};
    NetCache<double> cache = net.forward(in);
    for (int i = 0; i < 4; ++i) {
        CHECK(cache.outputs.back().data[i] == doctest::Approx(r.probs[i]).epsilon(1e-12));
    }
    CHECK(net.output_layer() == 0);  // backward starts at the logits
}

TEST_CASE("weight store round trips") {
    testutil::TempDir dir("weights");
    Network<float> net = small_conv_net<float>(123);
    WeightStore store = net.export_weights();
    save_weights(store, dir.file("w.rtwf"));
    WeightStore loaded = load_weights(dir.file("w.rtwf"));
    REQUIRE(loaded.entries.size() == store.entries.size());
    for (const auto& [name, entry] : store.entries) {
        const WeightEntry& other = loaded.get(name);
        REQUIRE(other.dims == entry.dims);
        for (size_t i = 0; i < entry.values.size(); ++i) {
            CHECK(other.values[i] == entry.values[i]);  // bitwise for floats
        }
    }

    // corrupted magic names the file
    {
        std::ofstream f(dir.file("bad.rtwf"), std::ios::binary);
        f << "NOPE0000000000000000";
    }
    CHECK_THROWS_WITH_AS(load_weights(dir.file("bad.rtwf")), doctest::Contains("bad.rtwf"),
                         std::runtime_error);

    // empty store is a valid zero-entry file
    WeightStore empty;
    save_weights(empty, dir.file("empty.rtwf"));
    CHECK(load_weights(dir.file("empty.rtwf")).entries.empty());

    // truncation detected
    {
        std::ofstream f(dir.file("trunc.rtwf"), std::ios::binary);
        f << "RTWF";
    }
    CHECK_THROWS_AS(load_weights(dir.file("trunc.rtwf")), std::runtime_error);
}

TEST_CASE("forward is deterministic and validates shapes") {
    Network<double> net = small_conv_net<double>(7);
    Rng rng(1);
    Tensor<double> in = random_tensor<double>(rng, 3, 16, 16);
    NetCache<double> c1 = net.forward(in);
    NetCache<double> c2 = net.forward(in);
    for (size_t i = 0; i < net.output(c1).size(); ++i) {
        CHECK(net.output(c1).data[i] == net.output(c2).data[i]);
    }

    Tensor<double> wrong(2, 16, 16);
    CHECK_THROWS_AS(net.forward(wrong), std::invalid_argument);

    // dense layer pins its flattened input size
    Network<double> victim = make_victim_network<double>(5, 64, 64);
    Tensor<double> small(3, 32, 32);
    CHECK_THROWS_AS(victim.forward(small), std::invalid_argument);

    // stale cache shape rejected
    NetCache<double> cache = net.forward(in);
    Tensor<double> bad_up(1, 3, 3);
    CHECK_THROWS_AS(net.backward(cache, bad_up, false), std::invalid_argument);
}
