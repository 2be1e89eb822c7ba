#include "fskan/network.hpp"

#include <algorithm>
#include <cmath>

#include "fskan/errors.hpp"

namespace fskan {

namespace {

template <typename F>
auto visit_layer(const BlockLayer& layer, F&& f) {
    return std::visit(std::forward<F>(f), layer);
}

std::int64_t layer_in_positions(const BlockLayer& l) {
    return visit_layer(l, [](const auto& x) { return x.in_positions(); });
}
std::int64_t layer_out_positions(const BlockLayer& l) {
    return visit_layer(l, [](const auto& x) { return x.out_positions(); });
}
int layer_d_in(const BlockLayer& l) {
    return visit_layer(l, [](const auto& x) { return x.d_in(); });
}
int layer_d_out(const BlockLayer& l) {
    return visit_layer(l, [](const auto& x) { return x.d_out(); });
}

void layer_forward(const BlockLayer& l, const double* x, double* out) {
    visit_layer(l, [&](const auto& layer) { layer.forward(x, out); });
}

void layer_backward(BlockLayer& l, const double* x, const double* up, double* gx) {
    std::visit([&](auto& layer) { layer.backward(x, up, gx); }, l);
}

}  // namespace

std::int64_t FSKANetwork::input_positions() const {
    if (!blocks.empty()) return layer_in_positions(blocks.front().layer);
    if (invariant) return invariant->inner.in_positions();
    throw ValidationError("network has no layers");
}

int FSKANetwork::input_channels() const {
    if (!blocks.empty()) return layer_d_in(blocks.front().layer);
    if (invariant) return invariant->inner.d_in();
    throw ValidationError("network has no layers");
}

int FSKANetwork::output_dim() const {
    int d;
    std::int64_t positions;
    if (invariant) {
        d = invariant->inner.d_out();
        positions = 1;
    } else if (!blocks.empty()) {
        d = layer_d_out(blocks.back().layer);
        positions = layer_out_positions(blocks.back().layer);
    } else {
        throw ValidationError("network has no layers");
    }
    if (!head.empty()) d = head.back().d_out;
    return static_cast<int>(positions) * d;
}

std::vector<std::vector<double>> FSKANetwork::forward_batch(const std::vector<std::vector<double>>& xs,
                                                            Mode mode, Cache* cache) {
    if (xs.empty()) throw ValidationError("forward_batch: empty batch");
    const std::size_t B = xs.size();
    const std::size_t expect = static_cast<std::size_t>(input_positions() * input_channels());
    for (const auto& x : xs)
        if (x.size() != expect) throw ValidationError("forward_batch: input shape mismatch");

    if (cache) {
        *cache = Cache{};
        cache->mode = mode;
        cache->revision = revision_;
        cache->batch = B;
    }

    std::vector<std::vector<double>> cur = xs;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        Block& block = blocks[bi];
        const std::int64_t P = layer_out_positions(block.layer);
        const int d = layer_d_out(block.layer);
        if (cache) cache->block_in.push_back(cur);

        std::vector<std::vector<double>> next(B);
        for (std::size_t b = 0; b < B; ++b) {
            next[b].resize(static_cast<std::size_t>(P * d));
            layer_forward(block.layer, cur[b].data(), next[b].data());
        }

        if (block.norm) {
            if (cache) cache->block_pre_norm.push_back(next);
            NormState& norm = *block.norm;
            if (static_cast<int>(norm.running_mean.size()) != d)
                throw ValidationError("norm state channel mismatch");
            std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
            std::vector<double> var(static_cast<std::size_t>(d), 0.0);
            if (mode == Mode::train) {
                const double count = static_cast<double>(B * static_cast<std::size_t>(P));
                for (const auto& v : next)
                    for (std::int64_t pos = 0; pos < P; ++pos)
                        for (int c = 0; c < d; ++c) mean[static_cast<std::size_t>(c)] += v[static_cast<std::size_t>(pos * d + c)];
                for (auto& m : mean) m /= count;
                for (const auto& v : next)
                    for (std::int64_t pos = 0; pos < P; ++pos)
                        for (int c = 0; c < d; ++c) {
                            const double diff = v[static_cast<std::size_t>(pos * d + c)] - mean[static_cast<std::size_t>(c)];
                            var[static_cast<std::size_t>(c)] += diff * diff;
                        }
                for (auto& v : var) v /= count;
                for (int c = 0; c < d; ++c) {
                    norm.running_mean[static_cast<std::size_t>(c)] =
                        (1.0 - norm.momentum) * norm.running_mean[static_cast<std::size_t>(c)] +
                        norm.momentum * mean[static_cast<std::size_t>(c)];
                    norm.running_var[static_cast<std::size_t>(c)] =
                        (1.0 - norm.momentum) * norm.running_var[static_cast<std::size_t>(c)] +
                        norm.momentum * var[static_cast<std::size_t>(c)];
                }
            } else {
                mean = norm.running_mean;
                var = norm.running_var;
            }
            for (auto& v : next)
                for (std::int64_t pos = 0; pos < P; ++pos)
                    for (int c = 0; c < d; ++c) {
                        auto& x = v[static_cast<std::size_t>(pos * d + c)];
                        x = (x - mean[static_cast<std::size_t>(c)]) /
                            std::sqrt(var[static_cast<std::size_t>(c)] + norm.eps);
                    }
            if (cache) {
                cache->norm_mean.push_back(mean);
                cache->norm_var.push_back(var);
            }
        } else if (cache) {
            cache->block_pre_norm.emplace_back();
            cache->norm_mean.emplace_back();
            cache->norm_var.emplace_back();
        }
        cur = std::move(next);
    }

    if (invariant) {
        if (cache) cache->invariant_in = cur;
        const int d = invariant->inner.d_out();
        std::vector<std::vector<double>> pooled(B);
        for (std::size_t b = 0; b < B; ++b) {
            pooled[b].resize(static_cast<std::size_t>(d));
            invariant->forward(cur[b].data(), pooled[b].data());
        }
        cur = std::move(pooled);
    }

    if (!head.empty()) {
        const std::int64_t positions =
            invariant ? 1 : (blocks.empty() ? input_positions() : layer_out_positions(blocks.back().layer));
        for (std::size_t s = 0; s < head.size(); ++s) {
            const KASubLayer& stage = head[s];
            if (cache) cache->head_in.push_back(cur);
            std::vector<std::vector<double>> next(B);
            for (std::size_t b = 0; b < B; ++b) {
                next[b].assign(static_cast<std::size_t>(positions * stage.d_out), 0.0);
                for (std::int64_t pos = 0; pos < positions; ++pos)
                    stage.forward_add(cur[b].data() + pos * stage.d_in, next[b].data() + pos * stage.d_out, 1.0);
            }
            cur = std::move(next);
        }
    }

    if (cache) cache->output = cur;
    return cur;
}

void FSKANetwork::backward_batch(const Cache& cache, const std::vector<std::vector<double>>& upstream) {
    if (cache.revision != revision_)
        throw ValidationError("backward_batch: stale cache (parameters changed since forward)");
    if (cache.mode != Mode::train)
        throw ValidationError("backward_batch: cache must come from a Train-mode forward");
    if (upstream.size() != cache.batch) throw ValidationError("backward_batch: batch size mismatch");

    const std::size_t B = cache.batch;
    std::vector<std::vector<double>> grad = upstream;

    if (!head.empty()) {
        const std::int64_t positions = invariant
                                           ? 1
                                           : (blocks.empty() ? input_positions()
                                                             : layer_out_positions(blocks.back().layer));
        for (int s = static_cast<int>(head.size()) - 1; s >= 0; --s) {
            KASubLayer& stage = head[static_cast<std::size_t>(s)];
            const auto& inputs = cache.head_in[static_cast<std::size_t>(s)];
            std::vector<std::vector<double>> gin(B);
            for (std::size_t b = 0; b < B; ++b) {
                gin[b].assign(static_cast<std::size_t>(positions * stage.d_in), 0.0);
                for (std::int64_t pos = 0; pos < positions; ++pos)
                    stage.backward_add(inputs[b].data() + pos * stage.d_in,
                                       grad[b].data() + pos * stage.d_out,
                                       gin[b].data() + pos * stage.d_in, 1.0);
            }
            grad = std::move(gin);
        }
    }

    if (invariant) {
        const auto& inputs = cache.invariant_in;
        std::vector<std::vector<double>> gin(B);
        for (std::size_t b = 0; b < B; ++b) {
            gin[b].assign(inputs[b].size(), 0.0);
            invariant->backward(inputs[b].data(), grad[b].data(), gin[b].data());
        }
        grad = std::move(gin);
    }

    for (int bi = static_cast<int>(blocks.size()) - 1; bi >= 0; --bi) {
        Block& block = blocks[static_cast<std::size_t>(bi)];
        const std::int64_t P = layer_out_positions(block.layer);
        const int d = layer_d_out(block.layer);

        if (block.norm) {
            // y = (x - m) / sqrt(v + eps) with m, v batch statistics:
            // dx_i = (dy_i - mean(dy) - y_i * mean(dy * y)) / sqrt(v + eps).
            const auto& mean = cache.norm_mean[static_cast<std::size_t>(bi)];
            const auto& var = cache.norm_var[static_cast<std::size_t>(bi)];
            const auto& pre = cache.block_pre_norm[static_cast<std::size_t>(bi)];
            const double count = static_cast<double>(B * static_cast<std::size_t>(P));
            std::vector<double> sum_dy(static_cast<std::size_t>(d), 0.0);
            std::vector<double> sum_dy_y(static_cast<std::size_t>(d), 0.0);
            std::vector<double> inv_std(static_cast<std::size_t>(d));
            for (int c = 0; c < d; ++c)
                inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] +
                                                                       block.norm->eps);
            for (std::size_t b = 0; b < B; ++b)
                for (std::int64_t pos = 0; pos < P; ++pos)
                    for (int c = 0; c < d; ++c) {
                        const std::size_t i = static_cast<std::size_t>(pos * d + c);
                        const double y = (pre[b][i] - mean[static_cast<std::size_t>(c)]) *
                                         inv_std[static_cast<std::size_t>(c)];
                        sum_dy[static_cast<std::size_t>(c)] += grad[b][i];
                        sum_dy_y[static_cast<std::size_t>(c)] += grad[b][i] * y;
                    }
            for (std::size_t b = 0; b < B; ++b)
                for (std::int64_t pos = 0; pos < P; ++pos)
                    for (int c = 0; c < d; ++c) {
                        const std::size_t i = static_cast<std::size_t>(pos * d + c);
                        const double y = (pre[b][i] - mean[static_cast<std::size_t>(c)]) *
                                         inv_std[static_cast<std::size_t>(c)];
                        grad[b][i] = inv_std[static_cast<std::size_t>(c)] *
                                     (grad[b][i] - sum_dy[static_cast<std::size_t>(c)] / count -
                                      y * sum_dy_y[static_cast<std::size_t>(c)] / count);
                    }
        }

        const auto& inputs = cache.block_in[static_cast<std::size_t>(bi)];
        std::vector<std::vector<double>> gin(B);
        for (std::size_t b = 0; b < B; ++b) {
            gin[b].assign(inputs[b].size(), 0.0);
            layer_backward(block.layer, inputs[b].data(), grad[b].data(), gin[b].data());
        }
        grad = std::move(gin);
    }
}

FSKANetwork FSKANetwork::at_size(int n_new) const {
    FSKANetwork net;
    net.group = group.resized(n_new);
    for (const auto& block : blocks) {
        Block nb;
        nb.norm = block.norm;
        if (std::holds_alternative<FSKALayer>(block.layer))
            nb.layer = std::get<FSKALayer>(block.layer).at_size(n_new);
        else
            nb.layer = std::get<EfficientFSKALayer>(block.layer).at_size(n_new);
        net.blocks.push_back(std::move(nb));
    }
    if (invariant) net.invariant = invariant->at_size(n_new);
    net.head = head;
    return net;
}

void FSKANetwork::zero_grad() {
    for (auto& block : blocks) std::visit([](auto& l) { l.zero_grad(); }, block.layer);
    if (invariant) invariant->inner.zero_grad();
    for (auto& stage : head) stage.zero_grad();
}

void FSKANetwork::collect_slots(std::vector<ParamSlot>& out) {
    for (auto& block : blocks) std::visit([&](auto& l) { l.collect_slots(out); }, block.layer);
    if (invariant) invariant->inner.collect_slots(out);
    for (auto& stage : head) stage.collect_slots(out);
}

int FSKANetwork::num_params() const {
    int n = 0;
    for (const auto& block : blocks) n += std::visit([](const auto& l) { return l.num_params(); }, block.layer);
    if (invariant) n += invariant->inner.num_params();
    for (const auto& stage : head) n += stage.num_params();
    return n;
}

}  // namespace fskan
