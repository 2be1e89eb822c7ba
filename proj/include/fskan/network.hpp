#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "fskan/layers.hpp"

namespace fskan {

enum class Mode { train, eval };

/// Per-channel running statistics for 1D batch norm. Normalization is applied
/// identically across the symmetric positions, so it commutes with the group
/// action. No affine parameters.
struct NormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit NormState(int channels = 0)
        : running_mean(static_cast<std::size_t>(channels), 0.0),
          running_var(static_cast<std::size_t>(channels), 1.0) {}
};

using BlockLayer = std::variant<FSKALayer, EfficientFSKALayer>;

struct Block {
    BlockLayer layer;
    std::optional<NormState> norm;
};

/// Composition of equivariant FS blocks, an optional invariant layer, and a
/// dense KA readout head. With the invariant layer present the network output
/// is G-invariant, otherwise G-equivariant (head applied per position).
class FSKANetwork {
public:
    GroupSpec group;
    std::vector<Block> blocks;
    std::optional<FSInvariantLayer> invariant;  // k_out = 0
    std::vector<KASubLayer> head;

    struct Cache {
        Mode mode = Mode::train;
        std::uint64_t revision = 0;
        std::size_t batch = 0;
        // Per block: layer input batch, pre-norm output batch, normalized output.
        std::vector<std::vector<std::vector<double>>> block_in;
        std::vector<std::vector<std::vector<double>>> block_pre_norm;
        std::vector<std::vector<double>> norm_mean, norm_var;  // batch stats per block
        std::vector<std::vector<double>> invariant_in;
        // Head stage inputs: [stage][sample][position-major values].
        std::vector<std::vector<std::vector<double>>> head_in;
        std::vector<std::vector<double>> output;
    };

    std::int64_t input_positions() const;
    int input_channels() const;
    int output_dim() const;
    bool is_invariant() const { return invariant.has_value(); }

    /// Forward over a batch; Train mode caches activations for backward and
    /// updates the batch-norm running statistics.
    std::vector<std::vector<double>> forward_batch(const std::vector<std::vector<double>>& xs,
                                                   Mode mode, Cache* cache = nullptr);

    /// Accumulates parameter gradients from upstream [batch][output_dim].
    /// The cache must come from a Train-mode forward of the current revision.
    void backward_batch(const Cache& cache, const std::vector<std::vector<double>>& upstream);

    /// Same parameters, orbit tables rebuilt at n_new (family groups only).
    FSKANetwork at_size(int n_new) const;

    void note_params_updated() { ++revision_; }
    std::uint64_t revision() const { return revision_; }

    void zero_grad();
    void collect_slots(std::vector<ParamSlot>& out);
    int num_params() const;

private:
    std::uint64_t revision_ = 0;
};

}  // namespace fskan
