#include "fskan/datagen.hpp"

#include <cmath>

#include "fskan/errors.hpp"
#include "fskan/rng.hpp"

namespace fskan {

namespace {

// Per-sample counter stride keeps sample streams disjoint.
constexpr std::uint64_t kSampleStride = 1u << 20;

double wave(int cls, double u) {
    switch (cls) {
        case 0: return std::sin(2.0 * M_PI * u);
        case 1: {  // sawtooth rising from -1 to 1 per period
            const double frac = u - std::floor(u);
            return 2.0 * frac - 1.0;
        }
        default: return std::sin(2.0 * M_PI * u) >= 0.0 ? 1.0 : -1.0;  // square
    }
}

}  // namespace

Dataset gen_signals(int n, int T, int count, double noise_sigma, std::uint64_t seed) {
    if (n < 1 || T < 1) throw ValidationError("gen_signals: n and T must be positive");
    Dataset data;
    data.num_classes = 3;
    for (int i = 0; i < count; ++i) {
        CounterRng rng(seed, static_cast<std::uint64_t>(i) * kSampleStride);
        Sample s;
        s.label = i % 3;
        s.shape = {n, T};
        const double amp = rng.uniform(0.5, 2.0);
        const double freq = rng.uniform(1.0, 4.0);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double offset = rng.uniform(-0.5, 0.5);
        std::vector<double> clean(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            const double u = freq * static_cast<double>(t) / T + phase / (2.0 * M_PI);
            clean[static_cast<std::size_t>(t)] = offset + amp * wave(s.label, u);
        }
        s.values.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(T));
        for (int row = 0; row < n; ++row)
            for (int t = 0; t < T; ++t)
                s.values[static_cast<std::size_t>(row * T + t)] =
                    clean[static_cast<std::size_t>(t)] + (noise_sigma > 0 ? rng.normal(0.0, noise_sigma) : 0.0);
        data.samples.push_back(std::move(s));
    }
    return data;
}

double formula_value(const std::string& formula_id, std::span<const double> x) {
    const std::size_t n = x.size();
    if (formula_id == "gauss_sum_sq") {
        double s = 0.0;
        for (double v : x) s += v * v;
        return std::exp(-s);
    }
    if (formula_id == "tanh_quartic") {
        double s = 0.0;
        for (double v : x) s += v * v * v * v;
        return std::tanh(5.0 * s - 1.0);
    }
    if (formula_id == "exp_mixture") {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double arg = 10.0 * x[j] * x[j];
            for (std::size_t i = 0; i < n; ++i)
                if (i != j) arg += std::sin(M_PI * x[i]);
            total += std::exp(arg / static_cast<double>(n));
        }
        return total;
    }
    throw ValidationError("unknown formula '" + formula_id + "'");
}

Dataset gen_formula(const std::string& formula_id, int n, int count, double box_lo, double box_hi,
                    std::uint64_t seed) {
    if (n < 1) throw ValidationError("gen_formula: n must be positive");
    if (!(box_lo < box_hi)) throw ValidationError("gen_formula: empty box");
    formula_value(formula_id, std::vector<double>(static_cast<std::size_t>(n), 0.0));  // id check
    Dataset data;
    data.regression = true;
    for (int i = 0; i < count; ++i) {
        CounterRng rng(seed, static_cast<std::uint64_t>(i) * kSampleStride);
        Sample s;
        s.shape = {n};
        s.values.resize(static_cast<std::size_t>(n));
        for (auto& v : s.values) v = rng.uniform(box_lo, box_hi);
        s.target = formula_value(formula_id, s.values);
        s.has_target = true;
        data.samples.push_back(std::move(s));
    }
    return data;
}

Dataset gen_set_classification(int n, int count, std::uint64_t seed, double noise_sigma) {
    if (n < 1) throw ValidationError("gen_set_classification: n must be positive");
    Dataset data;
    data.num_classes = 3;
    for (int i = 0; i < count; ++i) {
        CounterRng rng(seed, static_cast<std::uint64_t>(i) * kSampleStride);
        Sample s;
        s.label = i % 3;
        s.shape = {n, 2};
        s.values.resize(static_cast<std::size_t>(n) * 2);
        for (int p = 0; p < n; ++p) {
            double x, y;
            switch (s.label) {
                case 0: {  // unit circle
                    const double theta = rng.uniform(0.0, 2.0 * M_PI);
                    x = std::cos(theta);
                    y = std::sin(theta);
                    break;
                }
                case 1: {  // two moons
                    const double theta = rng.uniform(0.0, M_PI);
                    if (rng.uniform() < 0.5) {
                        x = std::cos(theta);
                        y = std::sin(theta) - 0.25;
                    } else {
                        x = 1.0 - std::cos(theta);
                        y = 0.25 - std::sin(theta);
                    }
                    break;
                }
                default: {  // square perimeter
                    const int side = static_cast<int>(rng.uniform_int(4));
                    const double u = rng.uniform(-1.0, 1.0);
                    x = side == 0 ? u : side == 1 ? 1.0 : side == 2 ? u : -1.0;
                    y = side == 0 ? -1.0 : side == 1 ? u : side == 2 ? 1.0 : u;
                    break;
                }
            }
            if (noise_sigma > 0) {
                x += rng.normal(0.0, noise_sigma);
                y += rng.normal(0.0, noise_sigma);
            }
            s.values[static_cast<std::size_t>(p * 2)] = x;
            s.values[static_cast<std::size_t>(p * 2 + 1)] = y;
        }
        data.samples.push_back(std::move(s));
    }
    return data;
}

}  // namespace fskan
