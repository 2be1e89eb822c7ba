#include "fskan/permutation.hpp"

#include <numeric>
#include <sstream>

#include "fskan/errors.hpp"

namespace fskan {

Permutation::Permutation(std::vector<int> mapping) : map_(std::move(mapping)) {
    const int n = static_cast<int>(map_.size());
    if (n == 0) throw ValidationError("permutation must have positive size");
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (int v : map_) {
        if (v < 0 || v >= n) throw ValidationError("permutation entry out of range");
        if (seen[static_cast<std::size_t>(v)]) throw ValidationError("permutation is not a bijection");
        seen[static_cast<std::size_t>(v)] = 1;
    }
}

Permutation Permutation::identity(int n) {
    std::vector<int> m(static_cast<std::size_t>(n));
    std::iota(m.begin(), m.end(), 0);
    return Permutation(std::move(m));
}

Permutation Permutation::from_cycles(int n, const std::vector<std::vector<int>>& cycles) {
    std::vector<int> m(static_cast<std::size_t>(n));
    std::iota(m.begin(), m.end(), 0);
    for (const auto& cyc : cycles) {
        for (std::size_t i = 0; i < cyc.size(); ++i) {
            const int from = cyc[i];
            const int to = cyc[(i + 1) % cyc.size()];
            if (from < 0 || from >= n) throw ValidationError("cycle entry out of range");
            m[static_cast<std::size_t>(from)] = to;
        }
    }
    return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
    std::vector<int> inv(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) inv[static_cast<std::size_t>(map_[i])] = static_cast<int>(i);
    return Permutation(std::move(inv));
}

bool Permutation::is_identity() const {
    for (std::size_t i = 0; i < map_.size(); ++i)
        if (map_[i] != static_cast<int>(i)) return false;
    return true;
}

std::string Permutation::to_string() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < map_.size(); ++i) {
        if (i) os << " ";
        os << map_[i];
    }
    os << "]";
    return os.str();
}

Permutation compose(const Permutation& a, const Permutation& b) {
    if (a.size() != b.size()) throw ValidationError("compose: size mismatch");
    std::vector<int> m(static_cast<std::size_t>(a.size()));
    for (int i = 0; i < a.size(); ++i) m[static_cast<std::size_t>(i)] = a(b(i));
    return Permutation(std::move(m));
}

std::vector<int> act_on_tuple(const Permutation& sigma, std::span<const int> t) {
    std::vector<int> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < 0 || t[i] >= sigma.size()) throw ValidationError("act_on_tuple: index out of range");
        out[i] = sigma(t[i]);
    }
    return out;
}

}  // namespace fskan
