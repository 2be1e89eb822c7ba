#pragma once

#include <span>
#include <string>
#include <vector>

namespace fskan {

/// A bijection on {0..n-1}; mapping[i] is the image of i.
class Permutation {
public:
    explicit Permutation(std::vector<int> mapping);

    static Permutation identity(int n);
    /// Builds a permutation of [n] from disjoint cycles, e.g. {{0,1,2},{3,4}}.
    static Permutation from_cycles(int n, const std::vector<std::vector<int>>& cycles);

    int size() const { return static_cast<int>(map_.size()); }
    int operator()(int i) const { return map_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& mapping() const { return map_; }

    Permutation inverse() const;
    bool is_identity() const;

    bool operator==(const Permutation& other) const = default;

    std::string to_string() const;

private:
    std::vector<int> map_;
};

/// result[i] = a[b[i]]  (apply b first, then a).
Permutation compose(const Permutation& a, const Permutation& b);

/// Component-wise application: (sigma(t_1), ..., sigma(t_k)).
std::vector<int> act_on_tuple(const Permutation& sigma, std::span<const int> t);

}  // namespace fskan
