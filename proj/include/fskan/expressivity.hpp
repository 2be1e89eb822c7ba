#pragma once

#include <optional>
#include <vector>

#include "fskan/network.hpp"

namespace fskan {

enum class Activation { none, relu };

struct Interval {
    double lo = -1.0;
    double hi = 1.0;
};

/// One weight-tied linear layer: out_Q = sum_P (W_{orbit(Q,P)} x_P + b_{orbit(Q,P)}),
/// optionally followed by pointwise ReLU. Supports order-changing maps; the
/// effective weight between positions satisfies W_{Q,P} = W_{sigma(Q),sigma(P)}
/// structurally (one matrix per orbit).
struct PSLayer {
    OrbitTable table;
    int d_in = 0;
    int d_out = 0;
    Activation act = Activation::none;
    std::vector<std::vector<double>> W;  // per orbit: d_out x d_in, row-major
    std::vector<std::vector<double>> b;  // per orbit: d_out

    std::vector<std::vector<double>> gW;
    std::vector<std::vector<double>> gb;

    static PSLayer random(const GroupSpec& g, int k_out, int k_in, int d_in, int d_out,
                          Activation act, double stddev, CounterRng& rng);

    void forward(const double* x, double* pre, double* out) const;  // pre and out may alias
    void backward(const double* x, const double* pre, const double* upstream, double* grad_x);

    void zero_grad();
    void collect_slots(std::vector<ParamSlot>& out);
    int num_params() const;
};

struct DenseLinear {
    int d_in = 0;
    int d_out = 0;
    Activation act = Activation::none;
    std::vector<double> W;  // d_out x d_in
    std::vector<double> b;  // d_out
    std::vector<double> gW, gb;

    static DenseLinear random(int d_out, int d_in, Activation act, double stddev, CounterRng& rng);
    void forward(const double* x, double* pre, double* out) const;
    void backward(const double* x, const double* pre, const double* upstream, double* grad_x);
    void zero_grad();
    void collect_slots(std::vector<ParamSlot>& out);
    int num_params() const { return d_out * d_in + d_out; }
};

/// Weight-tied MLP: equivariant linear layers with pointwise nonlinearities,
/// an optional invariant pooling layer, and an optional plain dense head used
/// by the training baselines (the converters require an empty head).
class ParamSharingMLP {
public:
    GroupSpec group;
    std::vector<PSLayer> layers;
    std::optional<PSLayer> invariant;  // k_out == 0
    std::vector<DenseLinear> head;

    struct Cache {
        std::uint64_t revision = 0;
        std::vector<std::vector<double>> layer_in, layer_pre;
        std::vector<double> inv_in, inv_pre;
        std::vector<std::vector<double>> head_in, head_pre;
    };

    std::int64_t input_positions() const;
    int input_channels() const;
    int output_dim() const;

    std::vector<double> forward(const double* x, Cache* cache = nullptr) const;
    std::vector<double> forward(const std::vector<double>& x, Cache* cache = nullptr) const {
        return forward(x.data(), cache);
    }
    void backward(const Cache& cache, const std::vector<double>& upstream);

    void note_params_updated() { ++revision_; }
    std::uint64_t revision() const { return revision_; }

    void zero_grad();
    void collect_slots(std::vector<ParamSlot>& out);
    int num_params() const;

private:
    std::uint64_t revision_ = 0;
};

/// Exact FS-KAN realization of a ReLU parameter-sharing MLP on a bounded
/// domain: one affine FS-KA layer per linear layer plus one diagonal ReLU
/// FS-KA layer per activation (at most 2l layers total). Intermediate ranges
/// are propagated by interval arithmetic so every ReLU spline's grid covers
/// its incoming range.
FSKANetwork mlp_to_fskan(const ParamSharingMLP& mlp, const std::vector<Interval>& input_domain);

struct FskanToMlpReport {
    double sampled_sup_error = 0.0;
    std::int64_t max_nodes_used = 0;
    int bisect_rounds = 0;
};

struct FskanToMlpOptions {
    int check_samples = 10000;
    std::int64_t node_budget = 65536;
    int max_bisect = 6;
    std::uint64_t seed = 77;
};

/// Approximates an FS-KAN by a parameter-sharing ReLU MLP with sampled sup
/// error below eps on the domain. Each shared univariate function becomes a
/// piecewise-linear interpolant (a one-hidden-layer ReLU net) with node count
/// doubled until its share of the error budget is met; node sets include the
/// interior knots of degree-1 splines, so piecewise-linear networks are
/// recovered exactly.
ParamSharingMLP fskan_to_mlp(const FSKANetwork& net, const std::vector<Interval>& input_domain,
                             double eps, const FskanToMlpOptions& opts = {},
                             FskanToMlpReport* report = nullptr);

}  // namespace fskan
