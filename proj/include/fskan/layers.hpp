#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "fskan/orbits.hpp"
#include "fskan/spline.hpp"

namespace fskan {

enum class Aggregation { sum, mean };

/// A d_out x d_in grid of univariate functions applied to one position's
/// feature vector: out_r = sum_c funcs[r][c](x_c).
struct KASubLayer {
    int d_in = 0;
    int d_out = 0;
    std::vector<UnivariateFunction> funcs;  // [d_out][d_in] row-major

    static KASubLayer learnable(int d_out, int d_in, const SplineOptions& opts, CounterRng& rng);
    static KASubLayer zeros(int d_out, int d_in);

    UnivariateFunction& at(int r, int c) { return funcs[static_cast<std::size_t>(r * d_in + c)]; }
    const UnivariateFunction& at(int r, int c) const { return funcs[static_cast<std::size_t>(r * d_in + c)]; }

    void forward_add(const double* x, double* out, double scale) const;
    void backward_add(const double* x, const double* upstream, double* grad_x_add, double scale);

    /// Marks input columns whose functions all share one knot grid, letting
    /// forward/backward compute each basis row once per input value. Safe to
    /// skip; evaluation falls back to per-function paths.
    void refresh_layout();
    std::vector<std::uint8_t> col_shared;

    /// Adds the constant vector c (length d_out) to the sub-layer output by
    /// shifting each row's functions by c[r]/d_in.
    void add_output_constant(const std::vector<double>& c);

    void zero_grad();
    void collect_slots(std::vector<ParamSlot>& out);
    int num_params() const;
};

/// Equivariant function-sharing KA layer: position pair (q,p) uses the
/// sub-layer of its orbit, so Phi^{q,p} = Phi^{sigma(q),sigma(p)} for all
/// sigma in G. k_out = 0 gives the invariant layer (single output slot).
class FSKALayer {
public:
    FSKALayer() = default;
    FSKALayer(GroupSpec group, int k_out, int k_in, int d_in, int d_out, Aggregation agg,
              const SplineOptions& opts, CounterRng& rng);
    static FSKALayer from_parts(GroupSpec group, OrbitTable table,
                                std::vector<std::shared_ptr<KASubLayer>> subs, int d_in, int d_out,
                                Aggregation agg);

    /// x: [in_positions * d_in], out: [out_positions * d_out] (overwritten).
    void forward(const double* x, double* out) const;
    /// Accumulates into grad_x (caller zeroes) and into the shared functions'
    /// gradient buffers; gradients of a shared function sum over its orbit.
    void backward(const double* x, const double* upstream, double* grad_x);

    /// Rebuilds the orbit table at a new size, sharing the same underlying
    /// functions. Family groups only.
    FSKALayer at_size(int n_new) const;

    const GroupSpec& group() const { return group_; }
    const OrbitTable& table() const { return table_; }
    int d_in() const { return d_in_; }
    int d_out() const { return d_out_; }
    std::int64_t in_positions() const { return table_.in_positions; }
    std::int64_t out_positions() const { return table_.out_positions; }
    Aggregation aggregation() const { return agg_; }
    const std::vector<std::shared_ptr<KASubLayer>>& sublayers() const { return subs_; }
    std::vector<std::shared_ptr<KASubLayer>>& sublayers() { return subs_; }

    void zero_grad();
    void collect_slots(std::vector<ParamSlot>& out);
    int num_params() const;

private:
    void build_counts();

    GroupSpec group_;
    OrbitTable table_;
    int d_in_ = 0;
    int d_out_ = 0;
    Aggregation agg_ = Aggregation::sum;
    std::vector<std::shared_ptr<KASubLayer>> subs_;   // one per orbit
    std::vector<std::int32_t> counts_;                // [out_positions][num_orbits]
};

/// Invariant layer: out = sum_p Phi^{orbit(p)}(x_p); a k_out = 0 FS layer.
struct FSInvariantLayer {
    FSKALayer inner;

    FSInvariantLayer() = default;
    FSInvariantLayer(GroupSpec group, int k_in, int d_in, int d_out, Aggregation agg,
                     const SplineOptions& opts, CounterRng& rng)
        : inner(std::move(group), 0, k_in, d_in, d_out, agg, opts, rng) {}

    void forward(const double* x, double* out) const { inner.forward(x, out); }
    void backward(const double* x, const double* upstream, double* grad_x) {
        inner.backward(x, upstream, grad_x);
    }
    FSInvariantLayer at_size(int n_new) const {
        FSInvariantLayer l;
        l.inner = inner.at_size(n_new);
        return l;
    }
};

/// Aggregate-then-transform variant: each orbit pools its inputs once and
/// applies one shared sub-layer per distinct pooled vector, broadcasting the
/// result. Slower-growing orbits reuse their aggregates across output slots.
class EfficientFSKALayer {
public:
    EfficientFSKALayer() = default;
    EfficientFSKALayer(GroupSpec group, int k_out, int k_in, int d_in, int d_out, Aggregation agg,
                       const SplineOptions& opts, CounterRng& rng);
    static EfficientFSKALayer from_parts(GroupSpec group, OrbitTable table,
                                         std::vector<std::shared_ptr<KASubLayer>> subs, int d_in,
                                         int d_out, Aggregation agg);

    void forward(const double* x, double* out) const;
    void backward(const double* x, const double* upstream, double* grad_x);

    EfficientFSKALayer at_size(int n_new) const;

    const GroupSpec& group() const { return group_; }
    const OrbitTable& table() const { return table_; }
    int d_in() const { return d_in_; }
    int d_out() const { return d_out_; }
    std::int64_t in_positions() const { return table_.in_positions; }
    std::int64_t out_positions() const { return table_.out_positions; }
    Aggregation aggregation() const { return agg_; }
    const std::vector<std::shared_ptr<KASubLayer>>& sublayers() const { return subs_; }

    /// 1 when the orbit's aggregate pools positions beyond the orbit's own
    /// members (the broadcast rewrite), else 0.
    int alpha(int orbit) const { return plans_[static_cast<std::size_t>(orbit)].alpha; }
    /// Number of distinct pooled input vectors the orbit's sub-layer is
    /// applied to in one forward pass.
    std::int64_t distinct_aggregates(int orbit) const {
        return static_cast<std::int64_t>(plans_[static_cast<std::size_t>(orbit)].members.size());
    }
    std::int64_t sublayer_applications() const;

    void zero_grad();
    void collect_slots(std::vector<ParamSlot>& out);
    int num_params() const;

private:
    struct OrbitPlan {
        std::vector<std::int32_t> agg_of_q;               // [out_positions], -1 = orbit absent
        std::vector<std::vector<std::int32_t>> members;   // per aggregate, ascending input slots
        std::vector<std::vector<std::int32_t>> slots;     // per aggregate, output slots served
        int alpha = 0;
    };

    void build_plans();

    GroupSpec group_;
    OrbitTable table_;
    int d_in_ = 0;
    int d_out_ = 0;
    Aggregation agg_ = Aggregation::sum;
    std::vector<std::shared_ptr<KASubLayer>> subs_;
    std::vector<OrbitPlan> plans_;
};

/// Unconstrained KA layer: an independent sub-layer per position pair.
/// Input to canonicalization and the materialized form of FS layers.
struct DenseKALayer {
    std::int64_t positions_out = 0;
    std::int64_t positions_in = 0;
    int d_in = 0;
    int d_out = 0;
    std::vector<KASubLayer> subs;  // [positions_out][positions_in]

    KASubLayer& at(std::int64_t q, std::int64_t p) { return subs[static_cast<std::size_t>(q * positions_in + p)]; }
    const KASubLayer& at(std::int64_t q, std::int64_t p) const {
        return subs[static_cast<std::size_t>(q * positions_in + p)];
    }
    void forward(const double* x, double* out) const;
};

struct CanonicalizeOptions {
    double probe_lo = -1.0;
    double probe_hi = 1.0;
    int probes = 32;
    double tol = 1e-8;
    int verify_inputs = 100;
    std::uint64_t seed = 2024;
};

/// FS rewrite of an equivariant KA layer plus the constants the construction
/// extracts: C_{q,p} = Phi^{q,p} - Phi^{rep}, alpha_q = sum_p C_{q,p}.
struct CanonicalizationResult {
    FSKALayer fs_layer;
    std::vector<double> constants;  // [positions_out][positions_in][d_out]
    std::vector<double> alphas;     // [positions_out][d_out]
};

/// Rewrites a G-equivariant dense KA layer as an FS layer with identical
/// outputs (shared function = representative's function + alpha_q / n).
/// Rejects non-equivariant inputs: constancy of the differences and
/// orbit-constancy of alpha are checked numerically on probe points.
CanonicalizationResult canonicalize_to_fs(const DenseKALayer& layer, const GroupSpec& group,
                                          const CanonicalizeOptions& opts = {});

/// Invariant counterpart (positions_out == 1); returns a k_out = 0 FS layer.
CanonicalizationResult canonicalize_invariant_to_fs(const DenseKALayer& layer, const GroupSpec& group,
                                                    const CanonicalizeOptions& opts = {});

/// Composite layer for mixed-order inputs: sums per-(k_out,k_in) FS layers
/// into each output order.
struct SuperpositionLayer {
    struct Term {
        int k_out;
        int k_in;
        FSKALayer layer;
    };
    std::vector<Term> terms;

    /// inputs[k] is the order-k tensor; returns outputs keyed by k_out.
    /// Missing input orders are an error.
    std::vector<std::pair<int, std::vector<double>>> forward(
        const std::vector<std::pair<int, std::vector<double>>>& inputs) const;
};

/// Diagonal action on an order-k tensor with channels:
/// out_q = x_{sigma^{-1}(q)} applied component-wise to the index tuple.
std::vector<double> apply_group_action(const Permutation& sigma, const std::vector<double>& x,
                                       int order, int channels);

}  // namespace fskan
