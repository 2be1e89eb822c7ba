#pragma once

#include <span>
#include <string>

#include "fskan/serialize.hpp"

namespace fskan {

/// n noisy copies of one periodic 1D signal sampled at T steps. Classes
/// (sine, sawtooth, square) are balanced round-robin; amplitude ~ U[0.5,2],
/// frequency ~ U[1,4] cycles, phase ~ U[0,2pi], offset ~ U[-0.5,0.5].
Dataset gen_signals(int n, int T, int count, double noise_sigma, std::uint64_t seed);

/// Registered invariant formulas: gauss_sum_sq, tanh_quartic, exp_mixture.
double formula_value(const std::string& formula_id, std::span<const double> x);
Dataset gen_formula(const std::string& formula_id, int n, int count, double box_lo, double box_hi,
                    std::uint64_t seed);

/// 2-D point sets from three labeled shape distributions: unit circle,
/// two-moons pair, square perimeter.
Dataset gen_set_classification(int n, int count, std::uint64_t seed, double noise_sigma = 0.05);

}  // namespace fskan
