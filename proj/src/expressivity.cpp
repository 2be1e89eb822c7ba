#include "fskan/expressivity.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fskan/errors.hpp"

namespace fskan {

namespace {

double relu(double x) { return x > 0.0 ? x : 0.0; }
double relu_dx(double pre) { return pre > 0.0 ? 1.0 : 0.0; }

void apply_activation(Activation act, const double* pre, double* out, std::size_t n) {
    if (act == Activation::relu) {
        for (std::size_t i = 0; i < n; ++i) out[i] = relu(pre[i]);
    } else if (out != pre) {
        std::copy(pre, pre + n, out);
    }
}

}  // namespace

PSLayer PSLayer::random(const GroupSpec& g, int k_out, int k_in, int d_in, int d_out,
                        Activation act, double stddev, CounterRng& rng) {
    PSLayer l;
    l.table = enumerate_orbits(g, k_out, k_in);
    l.d_in = d_in;
    l.d_out = d_out;
    l.act = act;
    l.W.resize(static_cast<std::size_t>(l.table.num_orbits));
    l.b.resize(static_cast<std::size_t>(l.table.num_orbits));
    for (int h = 0; h < l.table.num_orbits; ++h) {
        auto& W = l.W[static_cast<std::size_t>(h)];
        auto& b = l.b[static_cast<std::size_t>(h)];
        W.resize(static_cast<std::size_t>(d_out * d_in));
        b.resize(static_cast<std::size_t>(d_out));
        for (auto& w : W) w = rng.normal(0.0, stddev);
        for (auto& v : b) v = rng.normal(0.0, stddev);
    }
    l.zero_grad();
    return l;
}

void PSLayer::forward(const double* x, double* pre, double* out) const {
    const std::int64_t P_out = table.out_positions;
    const std::int64_t P_in = table.in_positions;
    for (std::int64_t q = 0; q < P_out; ++q) {
        double* pre_q = pre + q * d_out;
        std::fill(pre_q, pre_q + d_out, 0.0);
        const std::int32_t* row = &table.ids[static_cast<std::size_t>(q * P_in)];
        for (std::int64_t p = 0; p < P_in; ++p) {
            const auto& Wh = W[static_cast<std::size_t>(row[p])];
            const auto& bh = b[static_cast<std::size_t>(row[p])];
            const double* xp = x + p * d_in;
            for (int r = 0; r < d_out; ++r) {
                double acc = bh[static_cast<std::size_t>(r)];
                const double* wrow = &Wh[static_cast<std::size_t>(r * d_in)];
                for (int c = 0; c < d_in; ++c) acc += wrow[c] * xp[c];
                pre_q[r] += acc;
            }
        }
    }
    apply_activation(act, pre, out, static_cast<std::size_t>(P_out * d_out));
}

void PSLayer::backward(const double* x, const double* pre, const double* upstream, double* grad_x) {
    const std::int64_t P_out = table.out_positions;
    const std::int64_t P_in = table.in_positions;
    std::vector<double> u(static_cast<std::size_t>(d_out));
    for (std::int64_t q = 0; q < P_out; ++q) {
        const double* up_q = upstream + q * d_out;
        const double* pre_q = pre + q * d_out;
        for (int r = 0; r < d_out; ++r)
            u[static_cast<std::size_t>(r)] =
                act == Activation::relu ? up_q[r] * relu_dx(pre_q[r]) : up_q[r];
        const std::int32_t* row = &table.ids[static_cast<std::size_t>(q * P_in)];
        for (std::int64_t p = 0; p < P_in; ++p) {
            const int h = row[p];
            auto& gWh = gW[static_cast<std::size_t>(h)];
            auto& gbh = gb[static_cast<std::size_t>(h)];
            const auto& Wh = W[static_cast<std::size_t>(h)];
            const double* xp = x + p * d_in;
            double* gxp = grad_x ? grad_x + p * d_in : nullptr;
            for (int r = 0; r < d_out; ++r) {
                const double ur = u[static_cast<std::size_t>(r)];
                if (ur == 0.0) continue;
                gbh[static_cast<std::size_t>(r)] += ur;
                double* gwrow = &gWh[static_cast<std::size_t>(r * d_in)];
                const double* wrow = &Wh[static_cast<std::size_t>(r * d_in)];
                for (int c = 0; c < d_in; ++c) {
                    gwrow[c] += ur * xp[c];
                    if (gxp) gxp[c] += ur * wrow[c];
                }
            }
        }
    }
}

void PSLayer::zero_grad() {
    gW.assign(W.size(), {});
    gb.assign(b.size(), {});
    for (std::size_t h = 0; h < W.size(); ++h) {
        gW[h].assign(W[h].size(), 0.0);
        gb[h].assign(b[h].size(), 0.0);
    }
}

void PSLayer::collect_slots(std::vector<ParamSlot>& out) {
    if (gW.size() != W.size()) zero_grad();
    for (std::size_t h = 0; h < W.size(); ++h) {
        for (std::size_t i = 0; i < W[h].size(); ++i) out.push_back({&W[h][i], &gW[h][i]});
        for (std::size_t i = 0; i < b[h].size(); ++i) out.push_back({&b[h][i], &gb[h][i]});
    }
}

int PSLayer::num_params() const {
    int n = 0;
    for (std::size_t h = 0; h < W.size(); ++h)
        n += static_cast<int>(W[h].size() + b[h].size());
    return n;
}

DenseLinear DenseLinear::random(int d_out, int d_in, Activation act, double stddev, CounterRng& rng) {
    DenseLinear l;
    l.d_in = d_in;
    l.d_out = d_out;
    l.act = act;
    l.W.resize(static_cast<std::size_t>(d_out * d_in));
    l.b.resize(static_cast<std::size_t>(d_out));
    for (auto& w : l.W) w = rng.normal(0.0, stddev);
    for (auto& v : l.b) v = rng.normal(0.0, stddev);
    l.zero_grad();
    return l;
}

void DenseLinear::forward(const double* x, double* pre, double* out) const {
    for (int r = 0; r < d_out; ++r) {
        double acc = b[static_cast<std::size_t>(r)];
        const double* wrow = &W[static_cast<std::size_t>(r * d_in)];
        for (int c = 0; c < d_in; ++c) acc += wrow[c] * x[c];
        pre[r] = acc;
    }
    apply_activation(act, pre, out, static_cast<std::size_t>(d_out));
}

void DenseLinear::backward(const double* x, const double* pre, const double* upstream, double* grad_x) {
    for (int r = 0; r < d_out; ++r) {
        const double u = act == Activation::relu ? upstream[r] * relu_dx(pre[r]) : upstream[r];
        if (u == 0.0) continue;
        gb[static_cast<std::size_t>(r)] += u;
        double* gwrow = &gW[static_cast<std::size_t>(r * d_in)];
        const double* wrow = &W[static_cast<std::size_t>(r * d_in)];
        for (int c = 0; c < d_in; ++c) {
            gwrow[c] += u * x[c];
            if (grad_x) grad_x[c] += u * wrow[c];
        }
    }
}

void DenseLinear::zero_grad() {
    gW.assign(W.size(), 0.0);
    gb.assign(b.size(), 0.0);
}

void DenseLinear::collect_slots(std::vector<ParamSlot>& out) {
    if (gW.size() != W.size()) zero_grad();
    for (std::size_t i = 0; i < W.size(); ++i) out.push_back({&W[i], &gW[i]});
    for (std::size_t i = 0; i < b.size(); ++i) out.push_back({&b[i], &gb[i]});
}

std::int64_t ParamSharingMLP::input_positions() const {
    if (!layers.empty()) return layers.front().table.in_positions;
    if (invariant) return invariant->table.in_positions;
    throw ValidationError("mlp has no layers");
}

int ParamSharingMLP::input_channels() const {
    if (!layers.empty()) return layers.front().d_in;
    if (invariant) return invariant->d_in;
    throw ValidationError("mlp has no layers");
}

int ParamSharingMLP::output_dim() const {
    int d;
    std::int64_t positions;
    if (!head.empty()) return head.back().d_out;
    if (invariant) {
        d = invariant->d_out;
        positions = 1;
    } else if (!layers.empty()) {
        d = layers.back().d_out;
        positions = layers.back().table.out_positions;
    } else {
        throw ValidationError("mlp has no layers");
    }
    return static_cast<int>(positions) * d;
}

std::vector<double> ParamSharingMLP::forward(const double* x, Cache* cache) const {
    if (cache) {
        *cache = Cache{};
        cache->revision = revision_;
    }
    std::vector<double> cur(x, x + input_positions() * input_channels());
    for (const auto& layer : layers) {
        if (static_cast<std::int64_t>(cur.size()) != layer.table.in_positions * layer.d_in)
            throw ValidationError("mlp_forward: layer input shape mismatch");
        std::vector<double> pre(static_cast<std::size_t>(layer.table.out_positions * layer.d_out));
        std::vector<double> out(pre.size());
        layer.forward(cur.data(), pre.data(), out.data());
        if (cache) {
            cache->layer_in.push_back(std::move(cur));
            cache->layer_pre.push_back(std::move(pre));
        }
        cur = std::move(out);
    }
    if (invariant) {
        if (static_cast<std::int64_t>(cur.size()) != invariant->table.in_positions * invariant->d_in)
            throw ValidationError("mlp_forward: invariant input shape mismatch");
        std::vector<double> pre(static_cast<std::size_t>(invariant->d_out));
        std::vector<double> out(pre.size());
        invariant->forward(cur.data(), pre.data(), out.data());
        if (cache) {
            cache->inv_in = std::move(cur);
            cache->inv_pre = std::move(pre);
        }
        cur = std::move(out);
    }
    for (const auto& stage : head) {
        if (static_cast<int>(cur.size()) != stage.d_in)
            throw ValidationError("mlp_forward: head input shape mismatch");
        std::vector<double> pre(static_cast<std::size_t>(stage.d_out));
        std::vector<double> out(pre.size());
        stage.forward(cur.data(), pre.data(), out.data());
        if (cache) {
            cache->head_in.push_back(std::move(cur));
            cache->head_pre.push_back(std::move(pre));
        }
        cur = std::move(out);
    }
    return cur;
}

void ParamSharingMLP::backward(const Cache& cache, const std::vector<double>& upstream) {
    if (cache.revision != revision_)
        throw ValidationError("mlp backward: stale cache (parameters changed since forward)");
    std::vector<double> grad = upstream;
    for (int s = static_cast<int>(head.size()) - 1; s >= 0; --s) {
        auto& stage = head[static_cast<std::size_t>(s)];
        std::vector<double> gin(static_cast<std::size_t>(stage.d_in), 0.0);
        stage.backward(cache.head_in[static_cast<std::size_t>(s)].data(),
                       cache.head_pre[static_cast<std::size_t>(s)].data(), grad.data(), gin.data());
        grad = std::move(gin);
    }
    if (invariant) {
        std::vector<double> gin(cache.inv_in.size(), 0.0);
        invariant->backward(cache.inv_in.data(), cache.inv_pre.data(), grad.data(), gin.data());
        grad = std::move(gin);
    }
    for (int s = static_cast<int>(layers.size()) - 1; s >= 0; --s) {
        auto& layer = layers[static_cast<std::size_t>(s)];
        std::vector<double> gin(cache.layer_in[static_cast<std::size_t>(s)].size(), 0.0);
        layer.backward(cache.layer_in[static_cast<std::size_t>(s)].data(),
                       cache.layer_pre[static_cast<std::size_t>(s)].data(), grad.data(), gin.data());
        grad = std::move(gin);
    }
}

void ParamSharingMLP::zero_grad() {
    for (auto& l : layers) l.zero_grad();
    if (invariant) invariant->zero_grad();
    for (auto& h : head) h.zero_grad();
}

void ParamSharingMLP::collect_slots(std::vector<ParamSlot>& out) {
    for (auto& l : layers) l.collect_slots(out);
    if (invariant) invariant->collect_slots(out);
    for (auto& h : head) h.collect_slots(out);
}

int ParamSharingMLP::num_params() const {
    int n = 0;
    for (const auto& l : layers) n += l.num_params();
    if (invariant) n += invariant->num_params();
    for (const auto& h : head) n += h.num_params();
    return n;
}

namespace {

Interval affine_term(double w, Interval x) {
    return w >= 0 ? Interval{w * x.lo, w * x.hi} : Interval{w * x.hi, w * x.lo};
}

Interval widen_if_degenerate(Interval v) {
    if (v.hi - v.lo < 1e-9) {
        v.lo -= 0.5;
        v.hi += 0.5;
    }
    return v;
}

void validate_domain(const std::vector<Interval>& domain, int channels) {
    if (static_cast<int>(domain.size()) != channels)
        throw ValidationError("domain must give one interval per input channel");
    for (const auto& iv : domain)
        if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi)
            throw ValidationError("domain must be bounded with lo <= hi");
}

// Intervals of every (position, channel) slot after a PS layer.
std::vector<Interval> propagate_ps(const PSLayer& l, const std::vector<Interval>& in) {
    std::vector<Interval> out(static_cast<std::size_t>(l.table.out_positions * l.d_out));
    for (std::int64_t q = 0; q < l.table.out_positions; ++q) {
        for (int r = 0; r < l.d_out; ++r) {
            Interval acc{0.0, 0.0};
            for (std::int64_t p = 0; p < l.table.in_positions; ++p) {
                const int h = l.table.id_at(q, p);
                const auto& Wh = l.W[static_cast<std::size_t>(h)];
                acc.lo += l.b[static_cast<std::size_t>(h)][static_cast<std::size_t>(r)];
                acc.hi += l.b[static_cast<std::size_t>(h)][static_cast<std::size_t>(r)];
                for (int c = 0; c < l.d_in; ++c) {
                    const Interval term = affine_term(Wh[static_cast<std::size_t>(r * l.d_in + c)],
                                                      in[static_cast<std::size_t>(p * l.d_in + c)]);
                    acc.lo += term.lo;
                    acc.hi += term.hi;
                }
            }
            if (l.act == Activation::relu) {
                acc.lo = std::max(0.0, acc.lo);
                acc.hi = std::max(0.0, acc.hi);
            }
            out[static_cast<std::size_t>(q * l.d_out + r)] = acc;
        }
    }
    return out;
}

}  // namespace

FSKANetwork mlp_to_fskan(const ParamSharingMLP& mlp, const std::vector<Interval>& input_domain) {
    if (!mlp.head.empty())
        throw ValidationError("mlp_to_fskan: dense head layers are not convertible");
    if (mlp.layers.empty() && !mlp.invariant) throw ValidationError("mlp_to_fskan: empty mlp");
    validate_domain(input_domain, mlp.input_channels());

    FSKANetwork net;
    net.group = mlp.group;

    // Per (position, channel) intervals, starting from the per-channel domain.
    std::vector<Interval> ivals(static_cast<std::size_t>(mlp.input_positions() * mlp.input_channels()));
    for (std::int64_t p = 0; p < mlp.input_positions(); ++p)
        for (int c = 0; c < mlp.input_channels(); ++c)
            ivals[static_cast<std::size_t>(p * mlp.input_channels() + c)] =
                input_domain[static_cast<std::size_t>(c)];

    auto channel_union = [&](const PSLayer& l, int c) {
        Interval u = ivals[static_cast<std::size_t>(c)];
        for (std::int64_t p = 0; p < l.table.in_positions; ++p) {
            const auto& iv = ivals[static_cast<std::size_t>(p * l.d_in + c)];
            u.lo = std::min(u.lo, iv.lo);
            u.hi = std::max(u.hi, iv.hi);
        }
        return widen_if_degenerate(u);
    };

    auto affine_fs_layer = [&](const PSLayer& l) {
        std::vector<std::shared_ptr<KASubLayer>> subs;
        for (int h = 0; h < l.table.num_orbits; ++h) {
            KASubLayer sub;
            sub.d_in = l.d_in;
            sub.d_out = l.d_out;
            const auto& Wh = l.W[static_cast<std::size_t>(h)];
            const auto& bh = l.b[static_cast<std::size_t>(h)];
            for (int r = 0; r < l.d_out; ++r) {
                for (int c = 0; c < l.d_in; ++c) {
                    const Interval dom = channel_union(l, c);
                    sub.funcs.push_back(UnivariateFunction::from_affine(
                        Wh[static_cast<std::size_t>(r * l.d_in + c)],
                        bh[static_cast<std::size_t>(r)] / l.d_in, dom.lo, dom.hi));
                }
            }
            sub.refresh_layout();
            subs.push_back(std::make_shared<KASubLayer>(std::move(sub)));
        }
        return FSKALayer::from_parts(mlp.group, l.table, std::move(subs), l.d_in, l.d_out,
                                     Aggregation::sum);
    };

    for (const auto& l : mlp.layers) {
        if (l.act != Activation::none && l.act != Activation::relu)
            throw ValidationError("mlp_to_fskan: unsupported activation");
        net.blocks.push_back({BlockLayer{affine_fs_layer(l)}, std::nullopt});

        // Pre-activation intervals drive the ReLU grid sizes.
        PSLayer linear_only = l;
        linear_only.act = Activation::none;
        std::vector<Interval> pre = propagate_ps(linear_only, ivals);

        if (l.act == Activation::relu) {
            const int k = l.table.out_order;
            OrbitTable relu_table = enumerate_orbits(mlp.group, k, k);
            std::vector<std::shared_ptr<KASubLayer>> subs;
            for (int h = 0; h < relu_table.num_orbits; ++h) {
                const bool diagonal =
                    relu_table.rep_q[static_cast<std::size_t>(h)] == relu_table.rep_p[static_cast<std::size_t>(h)];
                if (!diagonal) {
                    subs.push_back(std::make_shared<KASubLayer>(KASubLayer::zeros(l.d_out, l.d_out)));
                    continue;
                }
                KASubLayer sub = KASubLayer::zeros(l.d_out, l.d_out);
                for (int r = 0; r < l.d_out; ++r) {
                    Interval cover{0.0, 0.0};
                    bool first = true;
                    for (std::int64_t q = 0; q < relu_table.out_positions; ++q) {
                        if (relu_table.id_at(q, q) != h) continue;
                        const auto& iv = pre[static_cast<std::size_t>(q * l.d_out + r)];
                        cover.lo = first ? iv.lo : std::min(cover.lo, iv.lo);
                        cover.hi = first ? iv.hi : std::max(cover.hi, iv.hi);
                        first = false;
                    }
                    cover.lo = std::min(cover.lo, -1e-3);
                    cover.hi = std::max(cover.hi, 1e-3);
                    sub.at(r, r) = UnivariateFunction::from_relu(cover.lo, cover.hi);
                }
                sub.refresh_layout();
                subs.push_back(std::make_shared<KASubLayer>(std::move(sub)));
            }
            net.blocks.push_back({BlockLayer{FSKALayer::from_parts(mlp.group, std::move(relu_table), std::move(subs),
                                                                   l.d_out, l.d_out, Aggregation::sum)},
                                  std::nullopt});
            for (auto& iv : pre) {
                iv.lo = std::max(0.0, iv.lo);
                iv.hi = std::max(0.0, iv.hi);
            }
        }
        ivals = std::move(pre);
    }

    if (mlp.invariant) {
        const auto& l = *mlp.invariant;
        net.invariant = FSInvariantLayer{};
        net.invariant->inner = affine_fs_layer(l);
        if (l.act == Activation::relu) {
            std::vector<Interval> pooled = propagate_ps(l, ivals);
            KASubLayer stage = KASubLayer::zeros(l.d_out, l.d_out);
            for (int r = 0; r < l.d_out; ++r) {
                Interval iv = pooled[static_cast<std::size_t>(r)];
                iv.lo = std::min(iv.lo, -1e-3);
                iv.hi = std::max(iv.hi, 1e-3);
                stage.at(r, r) = UnivariateFunction::from_relu(iv.lo, iv.hi);
            }
            stage.refresh_layout();
            net.head.push_back(std::move(stage));
        }
    }
    return net;
}

namespace {

struct PiecewiseLinear {
    std::vector<double> nodes;
    std::vector<std::vector<double>> values;  // per output row r: values at nodes

    double eval(int r, double x) const {
        const auto& f = values[static_cast<std::size_t>(r)];
        if (x <= nodes.front()) return f.front();
        if (x >= nodes.back()) {
            const std::size_t m = nodes.size();
            const double s = (f[m - 1] - f[m - 2]) / (nodes[m - 1] - nodes[m - 2]);
            return f[m - 1] + s * (x - nodes[m - 1]);
        }
        const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
        const std::size_t j = static_cast<std::size_t>(it - nodes.begin()) - 1;
        const double t = (x - nodes[j]) / (nodes[j + 1] - nodes[j]);
        return f[j] + t * (f[j + 1] - f[j]);
    }
};

// Range of a univariate function over an interval, bounded by dense sampling.
Interval sampled_range(const UnivariateFunction& f, Interval dom, double margin) {
    Interval out{f.eval(dom.lo), f.eval(dom.lo)};
    const int samples = 192;
    for (int i = 0; i <= samples; ++i) {
        const double x = dom.lo + (dom.hi - dom.lo) * i / samples;
        const double v = f.eval(x);
        out.lo = std::min(out.lo, v);
        out.hi = std::max(out.hi, v);
    }
    out.lo -= margin;
    out.hi += margin;
    return out;
}

}  // namespace

ParamSharingMLP fskan_to_mlp(const FSKANetwork& net, const std::vector<Interval>& input_domain,
                             double eps, const FskanToMlpOptions& opts, FskanToMlpReport* report) {
    if (eps <= 0) throw ValidationError("fskan_to_mlp: eps must be positive");
    if (!net.head.empty()) throw ValidationError("fskan_to_mlp: networks with head stages are not supported");
    for (const auto& block : net.blocks) {
        if (!std::holds_alternative<FSKALayer>(block.layer))
            throw ValidationError("fskan_to_mlp: efficient layers are not convertible");
        if (block.norm) throw ValidationError("fskan_to_mlp: normalization layers are not supported");
        if (std::get<FSKALayer>(block.layer).aggregation() != Aggregation::sum)
            throw ValidationError("fskan_to_mlp: only sum aggregation is supported");
    }
    if (net.invariant && net.invariant->inner.aggregation() != Aggregation::sum)
        throw ValidationError("fskan_to_mlp: only sum aggregation is supported");
    validate_domain(input_domain, net.input_channels());

    std::vector<const FSKALayer*> fs_layers;
    for (const auto& block : net.blocks) fs_layers.push_back(&std::get<FSKALayer>(block.layer));
    if (net.invariant) fs_layers.push_back(&net.invariant->inner);
    if (fs_layers.empty()) throw ValidationError("fskan_to_mlp: empty network");
    const int L = static_cast<int>(fs_layers.size());

    FskanToMlpReport local_report;
    double eps_layer = eps / (2.0 * L);

    // Evaluation helper for the end-to-end check.
    const GroupSpec& group = net.group;
    std::vector<double> x(static_cast<std::size_t>(net.input_positions() * net.input_channels()));

    ParamSharingMLP mlp;
    for (int round = 0;; ++round) {
        mlp = ParamSharingMLP{};
        mlp.group = group;

        std::vector<Interval> ivals(
            static_cast<std::size_t>(net.input_positions() * net.input_channels()));
        for (std::int64_t p = 0; p < net.input_positions(); ++p)
            for (int c = 0; c < net.input_channels(); ++c)
                ivals[static_cast<std::size_t>(p * net.input_channels() + c)] =
                    input_domain[static_cast<std::size_t>(c)];

        for (int li = 0; li < L; ++li) {
            const FSKALayer& fs = *fs_layers[li];
            const OrbitTable& T = fs.table();
            const int d_in = fs.d_in();
            const int d_out = fs.d_out();
            const std::int64_t P_in = T.in_positions;
            const double target = eps_layer / (static_cast<double>(P_in) * d_in);

            // Input interval per (orbit, channel): union over the orbit's pairs.
            std::vector<Interval> dom(static_cast<std::size_t>(T.num_orbits * d_in));
            std::vector<char> dom_set(dom.size(), 0);
            for (std::int64_t q = 0; q < T.out_positions; ++q) {
                for (std::int64_t p = 0; p < P_in; ++p) {
                    const int h = T.id_at(q, p);
                    for (int c = 0; c < d_in; ++c) {
                        const auto& iv = ivals[static_cast<std::size_t>(p * d_in + c)];
                        auto& d = dom[static_cast<std::size_t>(h * d_in + c)];
                        if (!dom_set[static_cast<std::size_t>(h * d_in + c)]) {
                            d = iv;
                            dom_set[static_cast<std::size_t>(h * d_in + c)] = 1;
                        } else {
                            d.lo = std::min(d.lo, iv.lo);
                            d.hi = std::max(d.hi, iv.hi);
                        }
                    }
                }
            }
            for (auto& d : dom) d = widen_if_degenerate(d);

            // Piecewise-linear interpolants per (orbit, channel); node count
            // doubles until every row's sampled error is below the target.
            std::vector<PiecewiseLinear> pls(static_cast<std::size_t>(T.num_orbits * d_in));
            for (int h = 0; h < T.num_orbits; ++h) {
                const KASubLayer& sub = *fs.sublayers()[static_cast<std::size_t>(h)];
                for (int c = 0; c < d_in; ++c) {
                    const Interval d = dom[static_cast<std::size_t>(h * d_in + c)];
                    std::set<double> extra;
                    for (int r = 0; r < d_out; ++r) {
                        const auto& f = sub.at(r, c);
                        if (f.degree == 1)
                            for (double t : f.knots)
                                if (t > d.lo && t < d.hi) extra.insert(t);
                    }
                    std::int64_t M = 17;
                    PiecewiseLinear pl;
                    for (;; M = (M - 1) * 2 + 1) {
                        if (M > opts.node_budget) {
                            std::ostringstream os;
                            os << "fskan_to_mlp: node budget " << opts.node_budget
                               << " exceeded before reaching per-function error target " << target;
                            throw NumericError(os.str());
                        }
                        pl = PiecewiseLinear{};
                        std::set<double> nodes(extra.begin(), extra.end());
                        for (std::int64_t i = 0; i < M; ++i)
                            nodes.insert(d.lo + (d.hi - d.lo) * static_cast<double>(i) / (M - 1));
                        pl.nodes.assign(nodes.begin(), nodes.end());
                        pl.values.resize(static_cast<std::size_t>(d_out));
                        for (int r = 0; r < d_out; ++r) {
                            auto& vals = pl.values[static_cast<std::size_t>(r)];
                            vals.resize(pl.nodes.size());
                            for (std::size_t i = 0; i < pl.nodes.size(); ++i)
                                vals[i] = sub.at(r, c).eval(pl.nodes[i]);
                        }
                        double err = 0.0;
                        const int samples = static_cast<int>(std::max<std::int64_t>(256, 4 * M));
                        for (int r = 0; r < d_out && err <= target; ++r) {
                            for (int i = 0; i <= samples; ++i) {
                                const double xv = d.lo + (d.hi - d.lo) * i / samples;
                                err = std::max(err, std::abs(sub.at(r, c).eval(xv) - pl.eval(r, xv)));
                                if (err > target) break;
                            }
                        }
                        local_report.max_nodes_used =
                            std::max(local_report.max_nodes_used, static_cast<std::int64_t>(pl.nodes.size()));
                        if (err <= target) break;
                    }
                    pls[static_cast<std::size_t>(h * d_in + c)] = std::move(pl);
                }
            }

            // Hidden width: one ReLU unit per interior node per channel.
            std::vector<std::vector<int>> unit_offset(static_cast<std::size_t>(T.num_orbits));
            int d_max = 1;
            for (int h = 0; h < T.num_orbits; ++h) {
                int w = 0;
                unit_offset[static_cast<std::size_t>(h)].resize(static_cast<std::size_t>(d_in));
                for (int c = 0; c < d_in; ++c) {
                    unit_offset[static_cast<std::size_t>(h)][static_cast<std::size_t>(c)] = w;
                    w += static_cast<int>(pls[static_cast<std::size_t>(h * d_in + c)].nodes.size()) - 1;
                }
                d_max = std::max(d_max, w);
            }

            const int k_out = T.out_order;
            const int k_in = T.in_order;

            // First tied layer: L1(x)_{(Q,P)} = W1^{(Q,P)} x_P + b1^{(Q,P)}, ReLU.
            PSLayer L1;
            L1.table = enumerate_orbits(group, k_out + k_in, k_in);
            L1.d_in = d_in;
            L1.d_out = d_max;
            L1.act = Activation::relu;
            L1.W.assign(static_cast<std::size_t>(L1.table.num_orbits),
                        std::vector<double>(static_cast<std::size_t>(d_max * d_in), 0.0));
            L1.b.assign(static_cast<std::size_t>(L1.table.num_orbits),
                        std::vector<double>(static_cast<std::size_t>(d_max), 0.0));
            for (int h1 = 0; h1 < L1.table.num_orbits; ++h1) {
                const auto& combined = L1.table.rep_q[static_cast<std::size_t>(h1)];
                const auto& pprime = L1.table.rep_p[static_cast<std::size_t>(h1)];
                const std::vector<int> Q(combined.begin(), combined.begin() + k_out);
                const std::vector<int> P(combined.begin() + k_out, combined.end());
                if (P != pprime) continue;  // inactive pair: stays zero
                const int h = T.orbit_id(Q, P);
                auto& W = L1.W[static_cast<std::size_t>(h1)];
                auto& b = L1.b[static_cast<std::size_t>(h1)];
                for (int c = 0; c < d_in; ++c) {
                    const auto& pl = pls[static_cast<std::size_t>(h * d_in + c)];
                    const int off = unit_offset[static_cast<std::size_t>(h)][static_cast<std::size_t>(c)];
                    for (std::size_t i = 0; i + 1 < pl.nodes.size(); ++i) {
                        W[static_cast<std::size_t>((off + static_cast<int>(i)) * d_in + c)] = 1.0;
                        b[static_cast<std::size_t>(off + static_cast<int>(i))] = -pl.nodes[i];
                    }
                }
            }

            // Second tied layer recombines the hinge activations.
            PSLayer L2;
            L2.table = enumerate_orbits(group, k_out, k_out + k_in);
            L2.d_in = d_max;
            L2.d_out = d_out;
            L2.act = Activation::none;
            L2.W.assign(static_cast<std::size_t>(L2.table.num_orbits),
                        std::vector<double>(static_cast<std::size_t>(d_out * d_max), 0.0));
            L2.b.assign(static_cast<std::size_t>(L2.table.num_orbits),
                        std::vector<double>(static_cast<std::size_t>(d_out), 0.0));
            for (int h2 = 0; h2 < L2.table.num_orbits; ++h2) {
                const auto& Q = L2.table.rep_q[static_cast<std::size_t>(h2)];
                const auto& combined = L2.table.rep_p[static_cast<std::size_t>(h2)];
                const std::vector<int> Qp(combined.begin(), combined.begin() + k_out);
                const std::vector<int> P(combined.begin() + k_out, combined.end());
                if (Q != Qp) continue;
                const int h = T.orbit_id(Q, P);
                auto& W = L2.W[static_cast<std::size_t>(h2)];
                auto& b = L2.b[static_cast<std::size_t>(h2)];
                for (int c = 0; c < d_in; ++c) {
                    const auto& pl = pls[static_cast<std::size_t>(h * d_in + c)];
                    const int off = unit_offset[static_cast<std::size_t>(h)][static_cast<std::size_t>(c)];
                    for (int r = 0; r < d_out; ++r) {
                        const auto& vals = pl.values[static_cast<std::size_t>(r)];
                        double prev_slope = 0.0;
                        for (std::size_t i = 0; i + 1 < pl.nodes.size(); ++i) {
                            const double slope = (vals[i + 1] - vals[i]) / (pl.nodes[i + 1] - pl.nodes[i]);
                            W[static_cast<std::size_t>(r * d_max + off + static_cast<int>(i))] =
                                slope - prev_slope;
                            prev_slope = slope;
                        }
                        b[static_cast<std::size_t>(r)] += vals[0];
                    }
                }
            }
            L1.zero_grad();
            L2.zero_grad();
            if (k_out == 0) {
                mlp.layers.push_back(std::move(L1));
                mlp.invariant = std::move(L2);
            } else {
                mlp.layers.push_back(std::move(L1));
                mlp.layers.push_back(std::move(L2));
            }

            // Propagate intervals through the exact FS layer, widened by this
            // layer's approximation budget.
            std::vector<Interval> next(static_cast<std::size_t>(T.out_positions * d_out));
            for (std::int64_t q = 0; q < T.out_positions; ++q) {
                for (int r = 0; r < d_out; ++r) {
                    Interval acc{0.0, 0.0};
                    for (std::int64_t p = 0; p < P_in; ++p) {
                        const int h = T.id_at(q, p);
                        const KASubLayer& sub = *fs.sublayers()[static_cast<std::size_t>(h)];
                        for (int c = 0; c < d_in; ++c) {
                            const Interval rng = sampled_range(
                                sub.at(r, c), ivals[static_cast<std::size_t>(p * d_in + c)], 1e-9);
                            acc.lo += rng.lo;
                            acc.hi += rng.hi;
                        }
                    }
                    acc.lo -= eps_layer;
                    acc.hi += eps_layer;
                    next[static_cast<std::size_t>(q * d_out + r)] = acc;
                }
            }
            ivals = std::move(next);
        }

        // End-to-end sampled check against the source network.
        CounterRng rng(opts.seed);
        double sup = 0.0;
        for (int t = 0; t < opts.check_samples; ++t) {
            for (std::int64_t p = 0; p < net.input_positions(); ++p)
                for (int c = 0; c < net.input_channels(); ++c)
                    x[static_cast<std::size_t>(p * net.input_channels() + c)] =
                        rng.uniform(input_domain[static_cast<std::size_t>(c)].lo,
                                    input_domain[static_cast<std::size_t>(c)].hi);
            const auto y_net = const_cast<FSKANetwork&>(net).forward_batch({x}, Mode::eval)[0];
            const auto y_mlp = mlp.forward(x);
            for (std::size_t i = 0; i < y_net.size(); ++i)
                sup = std::max(sup, std::abs(y_net[i] - y_mlp[i]));
        }
        local_report.sampled_sup_error = sup;
        local_report.bisect_rounds = round;
        if (sup < eps) break;
        if (round >= opts.max_bisect) {
            std::ostringstream os;
            os << "fskan_to_mlp: achieved sampled sup error " << sup << " does not meet eps " << eps
               << " after " << round + 1 << " refinement rounds";
            throw NumericError(os.str());
        }
        eps_layer /= 2.0;
    }

    if (report) *report = local_report;
    return mlp;
}

}  // namespace fskan
