#include "fskan/orbits.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fskan/errors.hpp"

namespace fskan {

std::int64_t flatten_tuple(std::span<const int> t, int n) {
    std::int64_t f = 0;
    for (int v : t) f = f * n + v;
    return f;
}

std::vector<int> unflatten_tuple(std::int64_t flat, int n, int order) {
    std::vector<int> t(static_cast<std::size_t>(order));
    for (int i = order - 1; i >= 0; --i) {
        t[static_cast<std::size_t>(i)] = static_cast<int>(flat % n);
        flat /= n;
    }
    return t;
}

int OrbitTable::orbit_id(std::span<const int> q, std::span<const int> p) const {
    if (static_cast<int>(q.size()) != out_order || static_cast<int>(p.size()) != in_order)
        throw ValidationError("orbit_id: tuple order mismatch");
    for (int v : q)
        if (v < 0 || v >= n) throw ValidationError("orbit_id: index out of range");
    for (int v : p)
        if (v < 0 || v >= n) throw ValidationError("orbit_id: index out of range");
    return id_at(flatten_tuple(q, n), flatten_tuple(p, n));
}

namespace {

std::int64_t ipow(std::int64_t base, int exp) {
    std::int64_t r = 1;
    for (int i = 0; i < exp; ++i) {
        if (r > (std::int64_t{1} << 62) / base) return std::int64_t{1} << 62;
        r *= base;
    }
    return r;
}

// Restricted-growth labeling: (3,3,0) -> "0,0,1".
void append_rg_string(std::ostringstream& os, std::span<const int> t) {
    std::vector<int> labels;
    std::vector<int> seen_values;
    for (int v : t) {
        int label = -1;
        for (std::size_t i = 0; i < seen_values.size(); ++i) {
            if (seen_values[i] == v) {
                label = static_cast<int>(i);
                break;
            }
        }
        if (label < 0) {
            label = static_cast<int>(seen_values.size());
            seen_values.push_back(v);
        }
        labels.push_back(label);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) os << ",";
        os << labels[i];
    }
}

void type_key_rec(const GroupSpec& g, std::span<const int> t, std::ostringstream& os) {
    switch (g.kind()) {
        case GroupKind::trivial: {
            os << "F:";
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (i) os << ",";
                os << t[i];
            }
            return;
        }
        case GroupKind::symmetric: {
            os << "P:";
            append_rg_string(os, t);
            return;
        }
        case GroupKind::cyclic: {
            os << "D:";
            for (std::size_t i = 1; i < t.size(); ++i) {
                if (i > 1) os << ",";
                int d = (t[i] - t[0]) % g.degree();
                if (d < 0) d += g.degree();
                os << d;
            }
            return;
        }
        case GroupKind::product: {
            const int m = g.factor(1).degree();
            std::vector<int> a(t.size()), b(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) {
                a[i] = t[i] / m;
                b[i] = t[i] % m;
            }
            os << "(";
            type_key_rec(g.factor(0), a, os);
            os << "*";
            type_key_rec(g.factor(1), b, os);
            os << ")";
            return;
        }
        case GroupKind::generated:
            throw ValidationError("orbit typing is only defined for family groups");
    }
}

}  // namespace

std::string orbit_type_key(const GroupSpec& g, std::span<const int> combined) {
    std::ostringstream os;
    type_key_rec(g, combined, os);
    return os.str();
}

OrbitTable enumerate_orbits(const GroupSpec& g, int k_out, int k_in, std::int64_t budget) {
    if (k_out < 0 || k_in < 0 || k_out + k_in < 1)
        throw ValidationError("enumerate_orbits: need k_out + k_in >= 1, both non-negative");
    const int n = g.degree();
    const int order = k_out + k_in;
    const std::int64_t total = ipow(n, order);
    if (!g.is_family() && total > budget) {
        throw ValidationError("enumerate_orbits: " + std::to_string(total) +
                              " tuple pairs exceed the enumeration budget of " + std::to_string(budget));
    }

    OrbitTable tab;
    tab.n = n;
    tab.out_order = k_out;
    tab.in_order = k_in;
    tab.out_positions = ipow(n, k_out);
    tab.in_positions = ipow(n, k_in);
    tab.ids.assign(static_cast<std::size_t>(total), -1);

    std::vector<int> combined(static_cast<std::size_t>(order));
    auto split_rep = [&](std::int64_t flat) {
        const auto t = unflatten_tuple(flat, n, order);
        tab.rep_q.emplace_back(t.begin(), t.begin() + k_out);
        tab.rep_p.emplace_back(t.begin() + k_out, t.end());
    };

    if (g.is_family()) {
        std::unordered_map<std::string, std::int32_t> key_to_id;
        for (std::int64_t flat = 0; flat < total; ++flat) {
            const auto t = unflatten_tuple(flat, n, order);
            const std::string key = orbit_type_key(g, t);
            auto [it, inserted] = key_to_id.emplace(key, static_cast<std::int32_t>(tab.rep_q.size()));
            if (inserted) {
                split_rep(flat);
                tab.type_keys.push_back(key);
                tab.orbit_sizes.push_back(0);
            }
            tab.ids[static_cast<std::size_t>(flat)] = it->second;
            ++tab.orbit_sizes[static_cast<std::size_t>(it->second)];
        }
    } else {
        const auto gens = g.generating_perms();
        std::vector<std::int64_t> stack;
        for (std::int64_t flat = 0; flat < total; ++flat) {
            if (tab.ids[static_cast<std::size_t>(flat)] >= 0) continue;
            const auto id = static_cast<std::int32_t>(tab.rep_q.size());
            split_rep(flat);
            tab.orbit_sizes.push_back(0);
            stack.push_back(flat);
            tab.ids[static_cast<std::size_t>(flat)] = id;
            while (!stack.empty()) {
                const std::int64_t cur = stack.back();
                stack.pop_back();
                ++tab.orbit_sizes[static_cast<std::size_t>(id)];
                const auto t = unflatten_tuple(cur, n, order);
                for (const auto& sigma : gens) {
                    for (int i = 0; i < order; ++i)
                        combined[static_cast<std::size_t>(i)] = sigma(t[static_cast<std::size_t>(i)]);
                    const std::int64_t img = flatten_tuple(combined, n);
                    auto& slot = tab.ids[static_cast<std::size_t>(img)];
                    if (slot < 0) {
                        slot = id;
                        stack.push_back(img);
                    }
                }
            }
        }
    }
    tab.num_orbits = static_cast<int>(tab.rep_q.size());
    return tab;
}

int stabilizer_orbit_count(const GroupSpec& g, int q, std::int64_t budget) {
    if (q < 0 || q >= g.degree()) throw ValidationError("stabilizer_orbit_count: q out of range");
    const OrbitTable tab = enumerate_orbits(g, 1, 1, budget);
    std::set<std::int32_t> distinct;
    for (std::int64_t p = 0; p < tab.in_positions; ++p) distinct.insert(tab.id_at(q, p));
    return static_cast<int>(distinct.size());
}

}  // namespace fskan
