#include <doctest.h>

#include <cmath>

#include "fskan/datagen.hpp"
#include "fskan/errors.hpp"

using namespace fskan;

TEST_CASE("signal generation") {
    // zero noise: all rows identical, reconstructable by averaging
    const Dataset clean = gen_signals(5, 16, 30, 0.0, 42);
    CHECK(clean.samples.size() == 30);
    for (const auto& s : clean.samples) {
        REQUIRE(s.shape == std::vector<int>{5, 16});
        for (int row = 1; row < 5; ++row)
            for (int t = 0; t < 16; ++t)
                REQUIRE(s.values[static_cast<std::size_t>(row * 16 + t)] ==
                        s.values[static_cast<std::size_t>(t)]);
        // row average equals row 0 at sigma = 0
        for (int t = 0; t < 16; ++t) {
            double avg = 0.0;
            for (int row = 0; row < 5; ++row) avg += s.values[static_cast<std::size_t>(row * 16 + t)];
            avg /= 5;
            REQUIRE(avg == doctest::Approx(s.values[static_cast<std::size_t>(t)]).epsilon(1e-12));
        }
    }

    // class balance: 300 samples -> 100 each
    const Dataset d300 = gen_signals(3, 8, 300, 0.1, 1);
    int counts[3] = {0, 0, 0};
    for (const auto& s : d300.samples) ++counts[s.label];
    CHECK(counts[0] == 100);
    CHECK(counts[1] == 100);
    CHECK(counts[2] == 100);

    // determinism and noise effect
    const Dataset a = gen_signals(4, 10, 20, 0.3, 7);
    const Dataset b = gen_signals(4, 10, 20, 0.3, 7);
    const Dataset c = gen_signals(4, 10, 20, 0.3, 8);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].values == b.samples[i].values);
        CHECK(a.samples[i].label == b.samples[i].label);
    }
    CHECK(a.samples[0].values != c.samples[0].values);

    // signal values stay in the documented envelope: |offset| + amp <= 2.5
    for (const auto& s : clean.samples)
        for (double v : s.values) REQUIRE(std::abs(v) <= 2.5 + 1e-12);

    CHECK_THROWS_AS(gen_signals(0, 8, 10, 0.1, 1), ValidationError);
}

TEST_CASE("formula generation") {
    CHECK(formula_value("gauss_sum_sq", std::vector<double>{0.0, 0.0, 0.0}) == 1.0);
    CHECK(formula_value("tanh_quartic", std::vector<double>{1.0, 0.0, 0.0}) ==
          doctest::Approx(std::tanh(4.0)).epsilon(1e-14));

    // shuffle invariance of every registered formula
    CounterRng rng(3);
    for (const std::string id : {"gauss_sum_sq", "tanh_quartic", "exp_mixture"}) {
        for (int t = 0; t < 20; ++t) {
            std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            std::vector<double> shuffled{x[2], x[0], x[1]};
            CHECK(formula_value(id, x) == doctest::Approx(formula_value(id, shuffled)).epsilon(1e-12));
        }
    }

    const Dataset d = gen_formula("gauss_sum_sq", 3, 50, -1.0, 1.0, 5);
    CHECK(d.regression);
    for (const auto& s : d.samples) {
        REQUIRE(s.has_target);
        REQUIRE(s.target == doctest::Approx(formula_value("gauss_sum_sq", s.values)).epsilon(1e-14));
        for (double v : s.values) REQUIRE((v >= -1.0 && v <= 1.0));
    }
    CHECK_THROWS_AS(gen_formula("nope", 3, 10, -1, 1, 1), ValidationError);
}

TEST_CASE("set classification generation") {
    // zero noise circle: all points at radius 1
    const Dataset d = gen_set_classification(8, 30, 9, 0.0);
    for (const auto& s : d.samples) {
        REQUIRE(s.shape == std::vector<int>{8, 2});
        if (s.label != 0) continue;
        for (int p = 0; p < 8; ++p) {
            const double x = s.values[static_cast<std::size_t>(p * 2)];
            const double y = s.values[static_cast<std::size_t>(p * 2 + 1)];
            REQUIRE(std::sqrt(x * x + y * y) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    int counts[3] = {0, 0, 0};
    for (const auto& s : d.samples) ++counts[s.label];
    CHECK(counts[0] == 10);
    CHECK(counts[1] == 10);
    CHECK(counts[2] == 10);

    const Dataset a = gen_set_classification(5, 12, 4, 0.05);
    const Dataset b = gen_set_classification(5, 12, 4, 0.05);
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].values == b.samples[i].values);
}
