#include <doctest.h>

#include <cmath>

#include "fskan/errors.hpp"
#include "fskan/network.hpp"

using namespace fskan;

namespace {

SplineOptions opts(double range = 1.5) {
    SplineOptions o;
    o.degree = 3;
    o.intervals = 5;
    o.grid_lo = -range;
    o.grid_hi = range;
    return o;
}

FSKANetwork small_net(const GroupSpec& g, int d_in, bool with_norm, CounterRng& rng,
                      Aggregation agg = Aggregation::sum) {
    FSKANetwork net;
    net.group = g;
    Block b1;
    b1.layer = FSKALayer(g, 1, 1, d_in, 4, agg, opts(), rng);
    if (with_norm) b1.norm = NormState(4);
    net.blocks.push_back(std::move(b1));
    Block b2;
    b2.layer = FSKALayer(g, 1, 1, 4, 3, agg, opts(), rng);
    if (with_norm) b2.norm = NormState(3);
    net.blocks.push_back(std::move(b2));
    net.invariant = FSInvariantLayer(g, 1, 3, 3, agg, opts(), rng);
    net.head.push_back(KASubLayer::learnable(2, 3, opts(), rng));
    return net;
}

std::vector<double> rand_vec(std::size_t n, CounterRng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

}  // namespace

TEST_CASE("single identity-affine equivariant layer reproduces the input") {
    const GroupSpec g = GroupSpec::symmetric(4);
    OrbitTable t = enumerate_orbits(g, 1, 1);
    auto diag = std::make_shared<KASubLayer>();
    diag->d_in = diag->d_out = 1;
    diag->funcs = {UnivariateFunction::from_affine(1.0, 0.0)};
    auto off = std::make_shared<KASubLayer>(KASubLayer::zeros(1, 1));
    std::vector<std::shared_ptr<KASubLayer>> subs(2);
    subs[static_cast<std::size_t>(t.id_at(0, 0))] = diag;
    subs[static_cast<std::size_t>(t.id_at(0, 1))] = off;

    FSKANetwork net;
    net.group = g;
    net.blocks.push_back({BlockLayer{FSKALayer::from_parts(g, t, subs, 1, 1, Aggregation::sum)},
                          std::nullopt});
    CounterRng rng(1);
    const auto x = rand_vec(4, rng);
    const auto y = net.forward_batch({x}, Mode::eval)[0];
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("end-to-end invariance in eval mode") {
    CounterRng rng(2);
    for (const auto& g : {GroupSpec::symmetric(5),
                          GroupSpec::product(GroupSpec::symmetric(2), GroupSpec::cyclic(3))}) {
        FSKANetwork net = small_net(g, 2, true, rng);
        std::vector<std::vector<double>> warm;
        for (int i = 0; i < 8; ++i) warm.push_back(rand_vec(static_cast<std::size_t>(g.degree() * 2), rng));
        net.forward_batch(warm, Mode::train);

        double worst = 0.0;
        for (int s = 0; s < 20; ++s) {
            const Permutation sigma = g.sample_element(rng);
            const auto x = rand_vec(static_cast<std::size_t>(g.degree() * 2), rng);
            const auto xs = apply_group_action(sigma, x, 1, 2);
            const auto a = net.forward_batch({x}, Mode::eval)[0];
            const auto b = net.forward_batch({xs}, Mode::eval)[0];
            for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("equivariant network (no invariant layer) commutes with the action") {
    CounterRng rng(3);
    const GroupSpec g = GroupSpec::symmetric(4);
    FSKANetwork net;
    net.group = g;
    net.blocks.push_back({BlockLayer{FSKALayer(g, 1, 1, 2, 3, Aggregation::sum, opts(), rng)}, NormState(3)});
    net.blocks.push_back({BlockLayer{EfficientFSKALayer(g, 1, 1, 3, 2, Aggregation::sum, opts(), rng)},
                          std::nullopt});
    net.head.push_back(KASubLayer::learnable(2, 2, opts(), rng));  // pointwise per position

    std::vector<std::vector<double>> warm;
    for (int i = 0; i < 6; ++i) warm.push_back(rand_vec(8, rng));
    net.forward_batch(warm, Mode::train);

    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        const Permutation sigma = g.sample_element(rng);
        const auto x = rand_vec(8, rng);
        const auto a = net.forward_batch({x}, Mode::eval)[0];
        const auto b = net.forward_batch({apply_group_action(sigma, x, 1, 2)}, Mode::eval)[0];
        const auto expected = apply_group_action(sigma, a, 1, 2);
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(b[i] - expected[i]));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("two-block forward equals manual composition") {
    CounterRng rng(4);
    const GroupSpec g = GroupSpec::symmetric(3);
    FSKANetwork net;
    net.group = g;
    net.blocks.push_back({BlockLayer{FSKALayer(g, 1, 1, 1, 2, Aggregation::sum, opts(), rng)}, std::nullopt});
    net.blocks.push_back({BlockLayer{FSKALayer(g, 1, 1, 2, 2, Aggregation::sum, opts(), rng)}, std::nullopt});

    const auto x = rand_vec(3, rng);
    const auto y = net.forward_batch({x}, Mode::eval)[0];

    std::vector<double> mid(6), manual(6);
    std::get<FSKALayer>(net.blocks[0].layer).forward(x.data(), mid.data());
    std::get<FSKALayer>(net.blocks[1].layer).forward(mid.data(), manual.data());
    for (std::size_t i = 0; i < 6; ++i) CHECK(y[i] == doctest::Approx(manual[i]).epsilon(1e-14));
}

TEST_CASE("batch norm: train statistics, eval determinism, batch independence") {
    CounterRng rng(5);
    const GroupSpec g = GroupSpec::symmetric(4);
    FSKANetwork net = small_net(g, 1, true, rng);

    std::vector<std::vector<double>> batch;
    for (int i = 0; i < 16; ++i) batch.push_back(rand_vec(4, rng));
    net.forward_batch(batch, Mode::train);

    const auto x = rand_vec(4, rng);
    const auto y1 = net.forward_batch({x}, Mode::eval)[0];
    const auto y2 = net.forward_batch({x}, Mode::eval)[0];
    CHECK(y1 == y2);  // frozen stats, deterministic

    // per-sample eval outputs do not depend on batch order or company
    std::vector<std::vector<double>> mixed{batch[3], x, batch[7]};
    const auto ys = net.forward_batch(mixed, Mode::eval);
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(ys[1][i] == y1[i]);

    // train mode normalizes with batch statistics: channel mean 0, var ~1
    FSKANetwork bn_only;
    bn_only.group = g;
    Block b;
    b.layer = FSKALayer(g, 1, 1, 1, 2, Aggregation::sum, opts(), rng);
    b.norm = NormState(2);
    bn_only.blocks.push_back(std::move(b));
    std::vector<std::vector<double>> big;
    for (int i = 0; i < 32; ++i) big.push_back(rand_vec(4, rng));
    const auto outs = bn_only.forward_batch(big, Mode::train);
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        for (const auto& o : outs)
            for (int pos = 0; pos < 4; ++pos) mean += o[static_cast<std::size_t>(pos * 2 + c)];
        mean /= 32 * 4;
        for (const auto& o : outs)
            for (int pos = 0; pos < 4; ++pos) {
                const double d = o[static_cast<std::size_t>(pos * 2 + c)] - mean;
                var += d * d;
            }
        var /= 32 * 4;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
    }
}

TEST_CASE("network gradients match finite differences") {
    CounterRng rng(6);
    const GroupSpec g = GroupSpec::symmetric(3);
    for (const bool with_norm : {false, true}) {
        FSKANetwork net = small_net(g, 1, with_norm, rng);
        std::vector<std::vector<double>> xs;
        for (int i = 0; i < 3; ++i) xs.push_back(rand_vec(3, rng));
        std::vector<std::vector<double>> w;
        for (int i = 0; i < 3; ++i) w.push_back(rand_vec(2, rng));

        auto loss = [&]() {
            const auto ys = net.forward_batch(xs, Mode::train);
            double L = 0.0;
            for (std::size_t b2 = 0; b2 < ys.size(); ++b2)
                for (std::size_t i = 0; i < ys[b2].size(); ++i) L += ys[b2][i] * w[b2][i];
            return L;
        };

        net.zero_grad();
        FSKANetwork::Cache cache;
        net.forward_batch(xs, Mode::train, &cache);
        net.backward_batch(cache, w);

        std::vector<ParamSlot> slots;
        net.collect_slots(slots);
        const double h = 1e-5;
        int checked = 0;
        for (std::size_t i = 0; i < slots.size(); i += 11) {
            const double keep = *slots[i].value;
            *slots[i].value = keep + h;
            const double up = loss();
            *slots[i].value = keep - h;
            const double dn = loss();
            *slots[i].value = keep;
            const double fd = (up - dn) / (2 * h);
            REQUIRE(std::abs(*slots[i].grad - fd) / (1.0 + std::abs(fd)) < 1e-4);
            ++checked;
        }
        CHECK(checked > 20);
    }
}

TEST_CASE("zero upstream gives zero gradients; stale cache is rejected") {
    CounterRng rng(7);
    const GroupSpec g = GroupSpec::symmetric(3);
    FSKANetwork net = small_net(g, 1, false, rng);
    std::vector<std::vector<double>> xs{rand_vec(3, rng), rand_vec(3, rng)};

    net.zero_grad();
    FSKANetwork::Cache cache;
    net.forward_batch(xs, Mode::train, &cache);
    net.backward_batch(cache, {{0.0, 0.0}, {0.0, 0.0}});
    std::vector<ParamSlot> slots;
    net.collect_slots(slots);
    for (const auto& s : slots) REQUIRE(*s.grad == 0.0);

    // single-layer net: network backward equals the layer backward
    FSKANetwork one;
    one.group = g;
    one.blocks.push_back({BlockLayer{FSKALayer(g, 1, 1, 1, 2, Aggregation::sum, opts(), rng)}, std::nullopt});
    const auto x = rand_vec(3, rng);
    FSKANetwork::Cache c1;
    one.zero_grad();
    one.forward_batch({x}, Mode::train, &c1);
    const auto up = rand_vec(6, rng);
    one.backward_batch(c1, {up});
    std::vector<ParamSlot> net_slots;
    one.collect_slots(net_slots);
    std::vector<double> net_grads;
    for (const auto& s : net_slots) net_grads.push_back(*s.grad);

    auto& layer = std::get<FSKALayer>(one.blocks[0].layer);
    layer.zero_grad();
    layer.backward(x.data(), up.data(), nullptr);
    std::vector<ParamSlot> layer_slots;
    layer.collect_slots(layer_slots);
    for (std::size_t i = 0; i < layer_slots.size(); ++i)
        REQUIRE(*layer_slots[i].grad == doctest::Approx(net_grads[i]).epsilon(1e-12));

    // parameters changed after forward: the cache is stale
    net.forward_batch(xs, Mode::train, &cache);
    net.note_params_updated();
    CHECK_THROWS_AS(net.backward_batch(cache, {{1.0, 0.0}, {0.0, 1.0}}), ValidationError);

    // eval-mode caches cannot drive backward
    FSKANetwork::Cache ec;
    net.forward_batch(xs, Mode::eval, &ec);
    CHECK_THROWS_AS(net.backward_batch(ec, {{1.0, 0.0}, {0.0, 1.0}}), ValidationError);

    CHECK_THROWS_AS(net.forward_batch({}, Mode::eval), ValidationError);
    CHECK_THROWS_AS(net.forward_batch({{1.0, 2.0}}, Mode::eval), ValidationError);
}

TEST_CASE("network resizing keeps invariance and shares parameters") {
    CounterRng rng(8);
    const GroupSpec g = GroupSpec::symmetric(5);
    FSKANetwork net = small_net(g, 2, true, rng, Aggregation::mean);
    std::vector<std::vector<double>> warm;
    for (int i = 0; i < 8; ++i) warm.push_back(rand_vec(10, rng));
    net.forward_batch(warm, Mode::train);

    FSKANetwork bigger = net.at_size(8);
    CHECK(bigger.input_positions() == 8);
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        const Permutation sigma = GroupSpec::symmetric(8).sample_element(rng);
        const auto x = rand_vec(16, rng);
        const auto a = bigger.forward_batch({x}, Mode::eval)[0];
        const auto b = bigger.forward_batch({apply_group_action(sigma, x, 1, 2)}, Mode::eval)[0];
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    CHECK(worst < 1e-6);

    // with mean aggregation everywhere, constant inputs give size-independent outputs
    std::vector<double> c5(10, 0.4), c8(16, 0.4);
    const auto o5 = net.forward_batch({c5}, Mode::eval)[0];
    const auto o8 = bigger.forward_batch({c8}, Mode::eval)[0];
    for (std::size_t i = 0; i < o5.size(); ++i) CHECK(std::abs(o5[i] - o8[i]) < 1e-9);
}
