#include "fskan/layers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "fskan/errors.hpp"

namespace fskan {

KASubLayer KASubLayer::learnable(int d_out, int d_in, const SplineOptions& opts, CounterRng& rng) {
    KASubLayer s;
    s.d_in = d_in;
    s.d_out = d_out;
    s.funcs.reserve(static_cast<std::size_t>(d_in) * static_cast<std::size_t>(d_out));
    for (int i = 0; i < d_out * d_in; ++i) s.funcs.push_back(UnivariateFunction::learnable(opts, rng));
    s.refresh_layout();
    return s;
}

KASubLayer KASubLayer::zeros(int d_out, int d_in) {
    KASubLayer s;
    s.d_in = d_in;
    s.d_out = d_out;
    for (int i = 0; i < d_out * d_in; ++i) s.funcs.push_back(UnivariateFunction::zero());
    s.refresh_layout();
    return s;
}

void KASubLayer::refresh_layout() {
    col_shared.assign(static_cast<std::size_t>(d_in), 0);
    for (int c = 0; c < d_in; ++c) {
        bool shared = true;
        for (int r = 1; r < d_out && shared; ++r)
            shared = at(r, c).same_grid(at(0, c));
        col_shared[static_cast<std::size_t>(c)] = shared ? 1 : 0;
    }
}

void KASubLayer::forward_add(const double* x, double* out, double scale) const {
    if (static_cast<int>(col_shared.size()) == d_in) {
        UnivariateFunction::BasisEval be;
        for (int c = 0; c < d_in; ++c) {
            if (col_shared[static_cast<std::size_t>(c)]) {
                at(0, c).prepare_basis(x[c], be);
                for (int r = 0; r < d_out; ++r) out[r] += scale * at(r, c).value_from(be);
            } else {
                for (int r = 0; r < d_out; ++r) out[r] += scale * at(r, c).eval(x[c]);
            }
        }
        return;
    }
    for (int r = 0; r < d_out; ++r) {
        double acc = 0.0;
        const UnivariateFunction* row = &funcs[static_cast<std::size_t>(r * d_in)];
        for (int c = 0; c < d_in; ++c) acc += row[c].eval(x[c]);
        out[r] += scale * acc;
    }
}

void KASubLayer::backward_add(const double* x, const double* upstream, double* grad_x_add, double scale) {
    if (static_cast<int>(col_shared.size()) == d_in) {
        UnivariateFunction::BasisEval be;
        for (int c = 0; c < d_in; ++c) {
            double* gx = grad_x_add ? &grad_x_add[c] : nullptr;
            if (col_shared[static_cast<std::size_t>(c)]) {
                at(0, c).prepare_basis(x[c], be);
                for (int r = 0; r < d_out; ++r) at(r, c).backward_from(be, upstream[r] * scale, gx);
            } else {
                for (int r = 0; r < d_out; ++r) at(r, c).backward_accum(x[c], upstream[r] * scale, gx);
            }
        }
        return;
    }
    for (int r = 0; r < d_out; ++r) {
        const double u = upstream[r] * scale;
        UnivariateFunction* row = &funcs[static_cast<std::size_t>(r * d_in)];
        for (int c = 0; c < d_in; ++c) row[c].backward_accum(x[c], u, grad_x_add ? &grad_x_add[c] : nullptr);
    }
}

void KASubLayer::add_output_constant(const std::vector<double>& c) {
    for (int r = 0; r < d_out; ++r) {
        const double share = c[static_cast<std::size_t>(r)] / d_in;
        for (int col = 0; col < d_in; ++col) at(r, col).add_constant(share);
    }
}

void KASubLayer::zero_grad() {
    for (auto& f : funcs) f.zero_grad();
}

void KASubLayer::collect_slots(std::vector<ParamSlot>& out) {
    for (auto& f : funcs) f.collect_slots(out);
}

int KASubLayer::num_params() const {
    int n = 0;
    for (const auto& f : funcs) n += f.num_params();
    return n;
}

FSKALayer::FSKALayer(GroupSpec group, int k_out, int k_in, int d_in, int d_out, Aggregation agg,
                     const SplineOptions& opts, CounterRng& rng)
    : group_(std::move(group)), d_in_(d_in), d_out_(d_out), agg_(agg) {
    table_ = enumerate_orbits(group_, k_out, k_in);
    subs_.reserve(static_cast<std::size_t>(table_.num_orbits));
    for (int h = 0; h < table_.num_orbits; ++h)
        subs_.push_back(std::make_shared<KASubLayer>(KASubLayer::learnable(d_out, d_in, opts, rng)));
    build_counts();
}

FSKALayer FSKALayer::from_parts(GroupSpec group, OrbitTable table,
                                std::vector<std::shared_ptr<KASubLayer>> subs, int d_in, int d_out,
                                Aggregation agg) {
    if (static_cast<int>(subs.size()) != table.num_orbits)
        throw ValidationError("FSKALayer: one sub-layer per orbit required");
    FSKALayer l;
    l.group_ = std::move(group);
    l.table_ = std::move(table);
    l.subs_ = std::move(subs);
    l.d_in_ = d_in;
    l.d_out_ = d_out;
    l.agg_ = agg;
    l.build_counts();
    return l;
}

void FSKALayer::build_counts() {
    const std::int64_t P = table_.out_positions;
    const std::int64_t H = table_.num_orbits;
    counts_.assign(static_cast<std::size_t>(P * H), 0);
    for (std::int64_t q = 0; q < P; ++q)
        for (std::int64_t p = 0; p < table_.in_positions; ++p)
            ++counts_[static_cast<std::size_t>(q * H + table_.id_at(q, p))];
}

void FSKALayer::forward(const double* x, double* out) const {
    const std::int64_t P_out = table_.out_positions;
    const std::int64_t P_in = table_.in_positions;
    const int H = table_.num_orbits;
    std::vector<double> acc(static_cast<std::size_t>(H) * static_cast<std::size_t>(d_out_));
    for (std::int64_t q = 0; q < P_out; ++q) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const std::int32_t* row = &table_.ids[static_cast<std::size_t>(q * P_in)];
        for (std::int64_t p = 0; p < P_in; ++p) {
            const int h = row[p];
            subs_[static_cast<std::size_t>(h)]->forward_add(x + p * d_in_, acc.data() + h * d_out_, 1.0);
        }
        double* out_q = out + q * d_out_;
        std::fill(out_q, out_q + d_out_, 0.0);
        for (int h = 0; h < H; ++h) {
            const std::int32_t cnt = counts_[static_cast<std::size_t>(q * H + h)];
            if (cnt == 0) continue;
            const double scale = agg_ == Aggregation::mean ? 1.0 / cnt : 1.0;
            for (int r = 0; r < d_out_; ++r) out_q[r] += scale * acc[static_cast<std::size_t>(h * d_out_ + r)];
        }
    }
}

void FSKALayer::backward(const double* x, const double* upstream, double* grad_x) {
    const std::int64_t P_out = table_.out_positions;
    const std::int64_t P_in = table_.in_positions;
    const int H = table_.num_orbits;
    for (std::int64_t q = 0; q < P_out; ++q) {
        const std::int32_t* row = &table_.ids[static_cast<std::size_t>(q * P_in)];
        const double* up_q = upstream + q * d_out_;
        for (std::int64_t p = 0; p < P_in; ++p) {
            const int h = row[p];
            const std::int32_t cnt = counts_[static_cast<std::size_t>(q * H + h)];
            const double scale = agg_ == Aggregation::mean ? 1.0 / cnt : 1.0;
            subs_[static_cast<std::size_t>(h)]->backward_add(x + p * d_in_, up_q,
                                                             grad_x ? grad_x + p * d_in_ : nullptr, scale);
        }
    }
}

FSKALayer FSKALayer::at_size(int n_new) const {
    if (!group_.is_family())
        throw ValidationError("at_size: generated groups carry no size-independent orbit typing");
    GroupSpec g = group_.resized(n_new);
    OrbitTable t = enumerate_orbits(g, table_.out_order, table_.in_order);
    std::map<std::string, std::shared_ptr<KASubLayer>> by_key;
    for (int h = 0; h < table_.num_orbits; ++h)
        by_key[table_.type_keys[static_cast<std::size_t>(h)]] = subs_[static_cast<std::size_t>(h)];
    std::vector<std::shared_ptr<KASubLayer>> subs;
    for (int h = 0; h < t.num_orbits; ++h) {
        auto it = by_key.find(t.type_keys[static_cast<std::size_t>(h)]);
        if (it == by_key.end())
            throw ValidationError("at_size: orbit type " + t.type_keys[static_cast<std::size_t>(h)] +
                                  " at the new size has no trained function");
        subs.push_back(it->second);
    }
    return from_parts(std::move(g), std::move(t), std::move(subs), d_in_, d_out_, agg_);
}

void FSKALayer::zero_grad() {
    for (auto& s : subs_) s->zero_grad();
}

void FSKALayer::collect_slots(std::vector<ParamSlot>& out) {
    for (auto& s : subs_) s->collect_slots(out);
}

int FSKALayer::num_params() const {
    int n = 0;
    for (const auto& s : subs_) n += s->num_params();
    return n;
}

EfficientFSKALayer::EfficientFSKALayer(GroupSpec group, int k_out, int k_in, int d_in, int d_out,
                                       Aggregation agg, const SplineOptions& opts, CounterRng& rng)
    : group_(std::move(group)), d_in_(d_in), d_out_(d_out), agg_(agg) {
    table_ = enumerate_orbits(group_, k_out, k_in);
    for (int h = 0; h < table_.num_orbits; ++h)
        subs_.push_back(std::make_shared<KASubLayer>(KASubLayer::learnable(d_out, d_in, opts, rng)));
    build_plans();
}

EfficientFSKALayer EfficientFSKALayer::from_parts(GroupSpec group, OrbitTable table,
                                                  std::vector<std::shared_ptr<KASubLayer>> subs,
                                                  int d_in, int d_out, Aggregation agg) {
    if (static_cast<int>(subs.size()) != table.num_orbits)
        throw ValidationError("EfficientFSKALayer: one sub-layer per orbit required");
    EfficientFSKALayer l;
    l.group_ = std::move(group);
    l.table_ = std::move(table);
    l.subs_ = std::move(subs);
    l.d_in_ = d_in;
    l.d_out_ = d_out;
    l.agg_ = agg;
    l.build_plans();
    return l;
}

namespace {

// Per-leaf-factor orbit component for family groups at order (1,1).
struct FactorComponent {
    GroupKind kind;
    int n;
    bool diag = false;   // symmetric factor: q_f == p_f
    int shift = 0;       // cyclic factor: (q_f - p_f) mod n
    int fixed_q = 0;     // trivial factor
    int fixed_p = 0;
};

}  // namespace

void EfficientFSKALayer::build_plans() {
    const std::int64_t P_out = table_.out_positions;
    const std::int64_t P_in = table_.in_positions;
    const int H = table_.num_orbits;
    plans_.assign(static_cast<std::size_t>(H), {});

    const bool family_order1 = group_.is_family() && table_.out_order == 1 && table_.in_order == 1;

    if (family_order1) {
        // Broadcast scheme: per leaf factor, a symmetric off-diagonal component
        // pools the whole factor axis; diagonal / shift / fixed components keep
        // their single slice. The pooled set contains the orbit's members and,
        // where a symmetric factor is coarsened, positions from sibling orbits.
        const auto leaves = group_.leaf_factors();
        const int F = static_cast<int>(leaves.size());
        std::vector<int> radix(static_cast<std::size_t>(F));
        for (int f = 0; f < F; ++f) radix[static_cast<std::size_t>(f)] = leaves[static_cast<std::size_t>(f)]->degree();
        auto decompose = [&](std::int64_t flat, std::vector<int>& parts) {
            for (int f = F - 1; f >= 0; --f) {
                parts[static_cast<std::size_t>(f)] = static_cast<int>(flat % radix[static_cast<std::size_t>(f)]);
                flat /= radix[static_cast<std::size_t>(f)];
            }
        };

        std::vector<int> q_parts(static_cast<std::size_t>(F)), p_parts(static_cast<std::size_t>(F));
        for (int h = 0; h < H; ++h) {
            OrbitPlan& plan = plans_[static_cast<std::size_t>(h)];
            plan.agg_of_q.assign(static_cast<std::size_t>(P_out), -1);
            decompose(flatten_tuple(table_.rep_q[static_cast<std::size_t>(h)], table_.n), q_parts);
            decompose(flatten_tuple(table_.rep_p[static_cast<std::size_t>(h)], table_.n), p_parts);
            std::vector<FactorComponent> comps(static_cast<std::size_t>(F));
            bool coarsened = false;
            for (int f = 0; f < F; ++f) {
                FactorComponent& c = comps[static_cast<std::size_t>(f)];
                c.kind = leaves[static_cast<std::size_t>(f)]->kind();
                c.n = radix[static_cast<std::size_t>(f)];
                const int qa = q_parts[static_cast<std::size_t>(f)];
                const int pa = p_parts[static_cast<std::size_t>(f)];
                switch (c.kind) {
                    case GroupKind::symmetric:
                        c.diag = qa == pa;
                        if (!c.diag) coarsened = true;
                        break;
                    case GroupKind::cyclic:
                        c.shift = ((qa - pa) % c.n + c.n) % c.n;
                        break;
                    case GroupKind::trivial:
                        c.fixed_q = qa;
                        c.fixed_p = pa;
                        break;
                    default:
                        throw ValidationError("unexpected non-family leaf");
                }
            }
            plan.alpha = coarsened ? 1 : 0;

            // Aggregate id per output slot: fix per-factor coordinates that are
            // pinned by the component; pooled (coarsened) factors contribute a
            // full axis to the member set.
            std::map<std::vector<int>, std::int32_t> agg_ids;
            std::vector<int> key(static_cast<std::size_t>(F));
            for (std::int64_t q = 0; q < P_out; ++q) {
                decompose(q, q_parts);
                bool participates = true;
                for (int f = 0; f < F && participates; ++f) {
                    const FactorComponent& c = comps[static_cast<std::size_t>(f)];
                    switch (c.kind) {
                        case GroupKind::symmetric:
                            key[static_cast<std::size_t>(f)] = c.diag ? q_parts[static_cast<std::size_t>(f)] : -1;
                            break;
                        case GroupKind::cyclic:
                            key[static_cast<std::size_t>(f)] =
                                ((q_parts[static_cast<std::size_t>(f)] - c.shift) % c.n + c.n) % c.n;
                            break;
                        case GroupKind::trivial:
                            if (q_parts[static_cast<std::size_t>(f)] != c.fixed_q) participates = false;
                            key[static_cast<std::size_t>(f)] = c.fixed_p;
                            break;
                        default:
                            break;
                    }
                }
                if (!participates) continue;
                auto [it, inserted] = agg_ids.emplace(key, static_cast<std::int32_t>(plan.members.size()));
                if (inserted) {
                    // Materialize the member set: the Cartesian product of the
                    // pinned / pooled factor slices.
                    std::vector<std::int32_t> members;
                    std::vector<int> cursor(static_cast<std::size_t>(F), 0);
                    while (true) {
                        std::int64_t flat = 0;
                        for (int f = 0; f < F; ++f) {
                            const int v = key[static_cast<std::size_t>(f)] >= 0
                                              ? key[static_cast<std::size_t>(f)]
                                              : cursor[static_cast<std::size_t>(f)];
                            flat = flat * radix[static_cast<std::size_t>(f)] + v;
                        }
                        members.push_back(static_cast<std::int32_t>(flat));
                        int f = F - 1;
                        for (; f >= 0; --f) {
                            if (key[static_cast<std::size_t>(f)] >= 0) continue;
                            if (++cursor[static_cast<std::size_t>(f)] < radix[static_cast<std::size_t>(f)]) break;
                            cursor[static_cast<std::size_t>(f)] = 0;
                        }
                        if (f < 0) break;
                    }
                    std::sort(members.begin(), members.end());
                    plan.members.push_back(std::move(members));
                    plan.slots.emplace_back();
                }
                plan.agg_of_q[static_cast<std::size_t>(q)] = it->second;
                plan.slots[static_cast<std::size_t>(it->second)].push_back(static_cast<std::int32_t>(q));
            }
        }
        return;
    }

    // Generic path: members straight from the table; x_q joins the pool when
    // the orbit has no diagonal pair and self-inclusion strictly reduces the
    // number of distinct aggregates.
    const bool square = table_.out_order == table_.in_order;
    for (int h = 0; h < H; ++h) {
        OrbitPlan& plan = plans_[static_cast<std::size_t>(h)];
        plan.agg_of_q.assign(static_cast<std::size_t>(P_out), -1);

        std::vector<std::vector<std::int32_t>> raw(static_cast<std::size_t>(P_out));
        bool has_diag_pair = false;
        for (std::int64_t q = 0; q < P_out; ++q) {
            for (std::int64_t p = 0; p < P_in; ++p) {
                if (table_.id_at(q, p) != h) continue;
                raw[static_cast<std::size_t>(q)].push_back(static_cast<std::int32_t>(p));
                if (square && q == p) has_diag_pair = true;
            }
        }
        int alpha = 0;
        if (square && !has_diag_pair) {
            std::map<std::vector<std::int32_t>, int> without, with;
            for (std::int64_t q = 0; q < P_out; ++q) {
                if (raw[static_cast<std::size_t>(q)].empty()) continue;
                without[raw[static_cast<std::size_t>(q)]] = 1;
                auto self_included = raw[static_cast<std::size_t>(q)];
                self_included.insert(
                    std::lower_bound(self_included.begin(), self_included.end(), static_cast<std::int32_t>(q)),
                    static_cast<std::int32_t>(q));
                with[std::move(self_included)] = 1;
            }
            if (with.size() < without.size()) alpha = 1;
        }
        plan.alpha = alpha;

        std::map<std::vector<std::int32_t>, std::int32_t> agg_ids;
        for (std::int64_t q = 0; q < P_out; ++q) {
            auto& mem = raw[static_cast<std::size_t>(q)];
            if (mem.empty()) continue;
            if (alpha) {
                mem.insert(std::lower_bound(mem.begin(), mem.end(), static_cast<std::int32_t>(q)),
                           static_cast<std::int32_t>(q));
            }
            auto [it, inserted] = agg_ids.emplace(mem, static_cast<std::int32_t>(plan.members.size()));
            if (inserted) {
                plan.members.push_back(mem);
                plan.slots.emplace_back();
            }
            plan.agg_of_q[static_cast<std::size_t>(q)] = it->second;
            plan.slots[static_cast<std::size_t>(it->second)].push_back(static_cast<std::int32_t>(q));
        }
    }
}

void EfficientFSKALayer::forward(const double* x, double* out) const {
    const std::int64_t P_out = table_.out_positions;
    std::fill(out, out + P_out * d_out_, 0.0);
    std::vector<double> z(static_cast<std::size_t>(d_in_));
    std::vector<double> y(static_cast<std::size_t>(d_out_));
    for (int h = 0; h < table_.num_orbits; ++h) {
        const OrbitPlan& plan = plans_[static_cast<std::size_t>(h)];
        const KASubLayer& sub = *subs_[static_cast<std::size_t>(h)];
        for (std::size_t a = 0; a < plan.members.size(); ++a) {
            const auto& mem = plan.members[a];
            std::fill(z.begin(), z.end(), 0.0);
            for (const std::int32_t p : mem)
                for (int c = 0; c < d_in_; ++c) z[static_cast<std::size_t>(c)] += x[p * d_in_ + c];
            if (agg_ == Aggregation::mean)
                for (auto& v : z) v /= static_cast<double>(mem.size());
            std::fill(y.begin(), y.end(), 0.0);
            sub.forward_add(z.data(), y.data(), 1.0);
            for (const std::int32_t q : plan.slots[a])
                for (int r = 0; r < d_out_; ++r) out[q * d_out_ + r] += y[static_cast<std::size_t>(r)];
        }
    }
}

void EfficientFSKALayer::backward(const double* x, const double* upstream, double* grad_x) {
    std::vector<double> z(static_cast<std::size_t>(d_in_));
    std::vector<double> up_sum(static_cast<std::size_t>(d_out_));
    std::vector<double> gz(static_cast<std::size_t>(d_in_));
    for (int h = 0; h < table_.num_orbits; ++h) {
        const OrbitPlan& plan = plans_[static_cast<std::size_t>(h)];
        KASubLayer& sub = *subs_[static_cast<std::size_t>(h)];
        for (std::size_t a = 0; a < plan.members.size(); ++a) {
            const auto& mem = plan.members[a];
            std::fill(z.begin(), z.end(), 0.0);
            for (const std::int32_t p : mem)
                for (int c = 0; c < d_in_; ++c) z[static_cast<std::size_t>(c)] += x[p * d_in_ + c];
            const double scale = agg_ == Aggregation::mean ? 1.0 / static_cast<double>(mem.size()) : 1.0;
            if (agg_ == Aggregation::mean)
                for (auto& v : z) v *= scale;
            std::fill(up_sum.begin(), up_sum.end(), 0.0);
            for (const std::int32_t q : plan.slots[a])
                for (int r = 0; r < d_out_; ++r) up_sum[static_cast<std::size_t>(r)] += upstream[q * d_out_ + r];
            std::fill(gz.begin(), gz.end(), 0.0);
            sub.backward_add(z.data(), up_sum.data(), gz.data(), 1.0);
            if (grad_x) {
                for (const std::int32_t p : mem)
                    for (int c = 0; c < d_in_; ++c) grad_x[p * d_in_ + c] += scale * gz[static_cast<std::size_t>(c)];
            }
        }
    }
}

EfficientFSKALayer EfficientFSKALayer::at_size(int n_new) const {
    if (!group_.is_family())
        throw ValidationError("at_size: generated groups carry no size-independent orbit typing");
    GroupSpec g = group_.resized(n_new);
    OrbitTable t = enumerate_orbits(g, table_.out_order, table_.in_order);
    std::map<std::string, std::shared_ptr<KASubLayer>> by_key;
    for (int h = 0; h < table_.num_orbits; ++h)
        by_key[table_.type_keys[static_cast<std::size_t>(h)]] = subs_[static_cast<std::size_t>(h)];
    std::vector<std::shared_ptr<KASubLayer>> subs;
    for (int h = 0; h < t.num_orbits; ++h) {
        auto it = by_key.find(t.type_keys[static_cast<std::size_t>(h)]);
        if (it == by_key.end())
            throw ValidationError("at_size: orbit type " + t.type_keys[static_cast<std::size_t>(h)] +
                                  " at the new size has no trained function");
        subs.push_back(it->second);
    }
    return from_parts(std::move(g), std::move(t), std::move(subs), d_in_, d_out_, agg_);
}

std::int64_t EfficientFSKALayer::sublayer_applications() const {
    std::int64_t total = 0;
    for (const auto& p : plans_) total += static_cast<std::int64_t>(p.members.size());
    return total;
}

void EfficientFSKALayer::zero_grad() {
    for (auto& s : subs_) s->zero_grad();
}

void EfficientFSKALayer::collect_slots(std::vector<ParamSlot>& out) {
    for (auto& s : subs_) s->collect_slots(out);
}

int EfficientFSKALayer::num_params() const {
    int n = 0;
    for (const auto& s : subs_) n += s->num_params();
    return n;
}

void DenseKALayer::forward(const double* x, double* out) const {
    for (std::int64_t q = 0; q < positions_out; ++q) {
        double* out_q = out + q * d_out;
        std::fill(out_q, out_q + d_out, 0.0);
        for (std::int64_t p = 0; p < positions_in; ++p) at(q, p).forward_add(x + p * d_in, out_q, 1.0);
    }
}

namespace {

std::vector<std::vector<double>> probe_points(int count, int d, double lo, double hi, CounterRng& rng) {
    std::vector<std::vector<double>> pts(static_cast<std::size_t>(count));
    for (auto& v : pts) {
        v.resize(static_cast<std::size_t>(d));
        for (auto& x : v) x = rng.uniform(lo, hi);
    }
    return pts;
}

std::string worst_sigma_report(const DenseKALayer& layer, const GroupSpec& group,
                               const CanonicalizeOptions& opts) {
    CounterRng rng(opts.seed, 777);
    std::vector<Permutation> sigmas;
    try {
        sigmas = group.elements(64);
    } catch (const ValidationError&) {
        for (int i = 0; i < 32; ++i) sigmas.push_back(group.sample_element(rng));
    }
    double worst = 0.0;
    std::string worst_desc = "identity";
    std::vector<double> x(static_cast<std::size_t>(layer.positions_in * layer.d_in));
    std::vector<double> out(static_cast<std::size_t>(layer.positions_out * layer.d_out));
    std::vector<double> out_perm(out.size());
    for (int trial = 0; trial < 8; ++trial) {
        for (auto& v : x) v = rng.uniform(opts.probe_lo, opts.probe_hi);
        layer.forward(x.data(), out.data());
        for (const auto& sigma : sigmas) {
            const auto xs = apply_group_action(sigma, x, 1, layer.d_in);
            layer.forward(xs.data(), out_perm.data());
            const auto out_expected = apply_group_action(sigma, out, 1, layer.d_out);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double dev = std::abs(out_perm[i] - out_expected[i]);
                if (dev > worst) {
                    worst = dev;
                    worst_desc = sigma.to_string();
                }
            }
        }
    }
    std::ostringstream os;
    os << "worst group element " << worst_desc << " with output deviation " << worst;
    return os.str();
}

}  // namespace

CanonicalizationResult canonicalize_to_fs(const DenseKALayer& layer, const GroupSpec& group,
                                          const CanonicalizeOptions& opts) {
    if (layer.positions_out != group.degree() || layer.positions_in != group.degree())
        throw ValidationError("canonicalize_to_fs: layer positions must match the group degree");
    const OrbitTable table = enumerate_orbits(group, 1, 1);
    const std::int64_t n = layer.positions_in;
    const int d_out = layer.d_out;

    CounterRng rng(opts.seed);
    const auto probes = probe_points(opts.probes, layer.d_in, opts.probe_lo, opts.probe_hi, rng);

    CanonicalizationResult result;
    result.constants.assign(static_cast<std::size_t>(n * n * d_out), 0.0);
    result.alphas.assign(static_cast<std::size_t>(n * d_out), 0.0);

    // C_{q,p} = Phi^{q,p} - Phi^{rep}: must be constant over the probe domain.
    std::vector<double> val(static_cast<std::size_t>(d_out));
    std::vector<double> val_rep(static_cast<std::size_t>(d_out));
    for (std::int64_t q = 0; q < n; ++q) {
        for (std::int64_t p = 0; p < n; ++p) {
            const int h = table.id_at(q, p);
            const std::int64_t rq = table.rep_q[static_cast<std::size_t>(h)][0];
            const std::int64_t rp = table.rep_p[static_cast<std::size_t>(h)][0];
            std::vector<double> mean(static_cast<std::size_t>(d_out), 0.0);
            std::vector<std::vector<double>> diffs;
            diffs.reserve(probes.size());
            for (const auto& v : probes) {
                std::fill(val.begin(), val.end(), 0.0);
                std::fill(val_rep.begin(), val_rep.end(), 0.0);
                layer.at(q, p).forward_add(v.data(), val.data(), 1.0);
                layer.at(rq, rp).forward_add(v.data(), val_rep.data(), 1.0);
                std::vector<double> d(static_cast<std::size_t>(d_out));
                for (int r = 0; r < d_out; ++r) {
                    d[static_cast<std::size_t>(r)] = val[static_cast<std::size_t>(r)] - val_rep[static_cast<std::size_t>(r)];
                    mean[static_cast<std::size_t>(r)] += d[static_cast<std::size_t>(r)];
                }
                diffs.push_back(std::move(d));
            }
            for (auto& m : mean) m /= static_cast<double>(probes.size());
            for (const auto& d : diffs) {
                for (int r = 0; r < d_out; ++r) {
                    const double dev = std::abs(d[static_cast<std::size_t>(r)] - mean[static_cast<std::size_t>(r)]);
                    if (dev > opts.tol) {
                        std::ostringstream os;
                        os << "canonicalize_to_fs: input is not equivariant: phi_{" << q << "," << p
                           << "} - phi_{" << rq << "," << rp << "} deviates from a constant by " << dev << " (tol "
                           << opts.tol << "); " << worst_sigma_report(layer, group, opts);
                        throw NumericError(os.str());
                    }
                }
            }
            for (int r = 0; r < d_out; ++r)
                result.constants[static_cast<std::size_t>((q * n + p) * d_out + r)] = mean[static_cast<std::size_t>(r)];
        }
    }

    // alpha_q = sum_p C_{q,p}; must be constant on each output orbit.
    for (std::int64_t q = 0; q < n; ++q)
        for (std::int64_t p = 0; p < n; ++p)
            for (int r = 0; r < d_out; ++r)
                result.alphas[static_cast<std::size_t>(q * d_out + r)] +=
                    result.constants[static_cast<std::size_t>((q * n + p) * d_out + r)];

    const OrbitTable out_orbits = enumerate_orbits(group, 1, 0);
    const double alpha_tol = opts.tol * static_cast<double>(n);
    for (int h = 0; h < out_orbits.num_orbits; ++h) {
        const std::int64_t rep = out_orbits.rep_q[static_cast<std::size_t>(h)][0];
        for (std::int64_t q = 0; q < n; ++q) {
            if (out_orbits.id_at(q, 0) != h) continue;
            for (int r = 0; r < d_out; ++r) {
                const double dev = std::abs(result.alphas[static_cast<std::size_t>(q * d_out + r)] -
                                            result.alphas[static_cast<std::size_t>(rep * d_out + r)]);
                if (dev > alpha_tol) {
                    std::ostringstream os;
                    os << "canonicalize_to_fs: input is not equivariant: alpha_" << q
                       << " differs from its orbit representative alpha_" << rep << " by " << dev << " (tol "
                       << alpha_tol << "); " << worst_sigma_report(layer, group, opts);
                    throw NumericError(os.str());
                }
            }
        }
    }

    // FS layer: shared function = representative's function + alpha_{q_h}/n.
    std::vector<std::shared_ptr<KASubLayer>> subs;
    for (int h = 0; h < table.num_orbits; ++h) {
        const std::int64_t rq = table.rep_q[static_cast<std::size_t>(h)][0];
        const std::int64_t rp = table.rep_p[static_cast<std::size_t>(h)][0];
        auto sub = std::make_shared<KASubLayer>(layer.at(rq, rp));
        std::vector<double> shift(static_cast<std::size_t>(d_out));
        for (int r = 0; r < d_out; ++r)
            shift[static_cast<std::size_t>(r)] =
                result.alphas[static_cast<std::size_t>(rq * d_out + r)] / static_cast<double>(n);
        sub->add_output_constant(shift);
        subs.push_back(std::move(sub));
    }
    result.fs_layer =
        FSKALayer::from_parts(group, table, std::move(subs), layer.d_in, d_out, Aggregation::sum);

    // Output verification on fresh random inputs.
    std::vector<double> x(static_cast<std::size_t>(n * layer.d_in));
    std::vector<double> out_dense(static_cast<std::size_t>(n * d_out));
    std::vector<double> out_fs(out_dense.size());
    for (int t = 0; t < opts.verify_inputs; ++t) {
        for (auto& v : x) v = rng.uniform(opts.probe_lo, opts.probe_hi);
        layer.forward(x.data(), out_dense.data());
        result.fs_layer.forward(x.data(), out_fs.data());
        for (std::size_t i = 0; i < out_dense.size(); ++i) {
            const double dev = std::abs(out_dense[i] - out_fs[i]);
            if (dev > opts.tol) {
                std::ostringstream os;
                os << "canonicalize_to_fs: FS rewrite mismatch " << dev << " at output slot " << i / d_out
                   << "; " << worst_sigma_report(layer, group, opts);
                throw NumericError(os.str());
            }
        }
    }
    return result;
}

CanonicalizationResult canonicalize_invariant_to_fs(const DenseKALayer& layer, const GroupSpec& group,
                                                    const CanonicalizeOptions& opts) {
    if (layer.positions_out != 1)
        throw ValidationError("canonicalize_invariant_to_fs: layer must have a single output slot");
    if (layer.positions_in != group.degree())
        throw ValidationError("canonicalize_invariant_to_fs: layer positions must match the group degree");
    const OrbitTable table = enumerate_orbits(group, 0, 1);
    const std::int64_t n = layer.positions_in;
    const int d_out = layer.d_out;

    CounterRng rng(opts.seed);
    const auto probes = probe_points(opts.probes, layer.d_in, opts.probe_lo, opts.probe_hi, rng);

    CanonicalizationResult result;
    result.constants.assign(static_cast<std::size_t>(n * d_out), 0.0);
    result.alphas.assign(static_cast<std::size_t>(d_out), 0.0);

    std::vector<double> val(static_cast<std::size_t>(d_out));
    std::vector<double> val_rep(static_cast<std::size_t>(d_out));
    for (std::int64_t p = 0; p < n; ++p) {
        const int h = table.id_at(0, p);
        const std::int64_t rp = flatten_tuple(table.rep_p[static_cast<std::size_t>(h)], table.n);
        std::vector<double> mean(static_cast<std::size_t>(d_out), 0.0);
        std::vector<std::vector<double>> diffs;
        for (const auto& v : probes) {
            std::fill(val.begin(), val.end(), 0.0);
            std::fill(val_rep.begin(), val_rep.end(), 0.0);
            layer.at(0, p).forward_add(v.data(), val.data(), 1.0);
            layer.at(0, rp).forward_add(v.data(), val_rep.data(), 1.0);
            std::vector<double> d(static_cast<std::size_t>(d_out));
            for (int r = 0; r < d_out; ++r) {
                d[static_cast<std::size_t>(r)] = val[static_cast<std::size_t>(r)] - val_rep[static_cast<std::size_t>(r)];
                mean[static_cast<std::size_t>(r)] += d[static_cast<std::size_t>(r)];
            }
            diffs.push_back(std::move(d));
        }
        for (auto& m : mean) m /= static_cast<double>(probes.size());
        for (const auto& d : diffs) {
            for (int r = 0; r < d_out; ++r) {
                const double dev = std::abs(d[static_cast<std::size_t>(r)] - mean[static_cast<std::size_t>(r)]);
                if (dev > opts.tol)
                    throw NumericError("canonicalize_invariant_to_fs: input is not invariant: phi_" +
                                       std::to_string(p) + " - phi_" + std::to_string(rp) +
                                       " deviates from a constant by " + std::to_string(dev));
            }
        }
        for (int r = 0; r < d_out; ++r) {
            result.constants[static_cast<std::size_t>(p * d_out + r)] = mean[static_cast<std::size_t>(r)];
            result.alphas[static_cast<std::size_t>(r)] += mean[static_cast<std::size_t>(r)];
        }
    }

    std::vector<std::shared_ptr<KASubLayer>> subs;
    for (int h = 0; h < table.num_orbits; ++h) {
        const std::int64_t rp = flatten_tuple(table.rep_p[static_cast<std::size_t>(h)], table.n);
        auto sub = std::make_shared<KASubLayer>(layer.at(0, rp));
        std::vector<double> shift(static_cast<std::size_t>(d_out));
        for (int r = 0; r < d_out; ++r)
            shift[static_cast<std::size_t>(r)] = result.alphas[static_cast<std::size_t>(r)] / static_cast<double>(n);
        sub->add_output_constant(shift);
        subs.push_back(std::move(sub));
    }
    result.fs_layer =
        FSKALayer::from_parts(group, table, std::move(subs), layer.d_in, d_out, Aggregation::sum);

    std::vector<double> x(static_cast<std::size_t>(n * layer.d_in));
    std::vector<double> out_dense(static_cast<std::size_t>(d_out));
    std::vector<double> out_fs(out_dense.size());
    for (int t = 0; t < opts.verify_inputs; ++t) {
        for (auto& v : x) v = rng.uniform(opts.probe_lo, opts.probe_hi);
        layer.forward(x.data(), out_dense.data());
        result.fs_layer.forward(x.data(), out_fs.data());
        for (std::size_t i = 0; i < out_dense.size(); ++i) {
            const double dev = std::abs(out_dense[i] - out_fs[i]);
            if (dev > opts.tol)
                throw NumericError("canonicalize_invariant_to_fs: FS rewrite mismatch " + std::to_string(dev));
        }
    }
    return result;
}

std::vector<std::pair<int, std::vector<double>>> SuperpositionLayer::forward(
    const std::vector<std::pair<int, std::vector<double>>>& inputs) const {
    std::vector<std::pair<int, std::vector<double>>> outputs;
    for (const auto& term : terms) {
        const std::vector<double>* x = nullptr;
        for (const auto& [k, v] : inputs)
            if (k == term.k_in) x = &v;
        if (!x) throw ValidationError("superposition: missing input of order " + std::to_string(term.k_in));
        std::vector<double> y(static_cast<std::size_t>(term.layer.out_positions() * term.layer.d_out()));
        term.layer.forward(x->data(), y.data());
        bool merged = false;
        for (auto& [k, acc] : outputs) {
            if (k != term.k_out) continue;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += y[i];
            merged = true;
        }
        if (!merged) outputs.emplace_back(term.k_out, std::move(y));
    }
    return outputs;
}

std::vector<double> apply_group_action(const Permutation& sigma, const std::vector<double>& x,
                                       int order, int channels) {
    const int n = sigma.size();
    std::int64_t positions = 1;
    for (int i = 0; i < order; ++i) positions *= n;
    if (static_cast<std::int64_t>(x.size()) != positions * channels)
        throw ValidationError("apply_group_action: size mismatch");
    std::vector<double> out(x.size());
    std::vector<int> image(static_cast<std::size_t>(order));
    for (std::int64_t t = 0; t < positions; ++t) {
        const auto tup = unflatten_tuple(t, n, order);
        for (int i = 0; i < order; ++i) image[static_cast<std::size_t>(i)] = sigma(tup[static_cast<std::size_t>(i)]);
        const std::int64_t dst = flatten_tuple(image, n);
        for (int c = 0; c < channels; ++c) out[static_cast<std::size_t>(dst * channels + c)] = x[static_cast<std::size_t>(t * channels + c)];
    }
    return out;
}

}  // namespace fskan
