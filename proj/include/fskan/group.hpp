#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fskan/permutation.hpp"
#include "fskan/rng.hpp"

namespace fskan {

enum class GroupKind { trivial, symmetric, cyclic, product, generated };

/// A permutation group on {0..n-1}, given either as a named family, a direct
/// product acting on a row-major flattened matrix domain, or by generators.
class GroupSpec {
public:
    GroupSpec() = default;  // trivial group on one point

    static GroupSpec trivial(int n);
    static GroupSpec symmetric(int n);
    static GroupSpec cyclic(int n);
    static GroupSpec product(GroupSpec rows, GroupSpec cols);
    static GroupSpec generated(std::vector<Permutation> gens);

    /// Parses the compact text form: S(n), C(n), triv(n), prod(A,B),
    /// gen(n; (0 1 2)(3 4), (0 1)).
    static GroupSpec parse(const std::string& text);
    std::string to_text() const;

    GroupKind kind() const { return kind_; }
    int degree() const { return n_; }

    /// Family groups carry size-independent orbit typing and can be resized.
    bool is_family() const;

    const GroupSpec& factor(int i) const { return factors_[static_cast<std::size_t>(i)]; }
    const std::vector<Permutation>& generators() const { return generators_; }

    /// Generators embedded into the flattened domain (used by closure tests
    /// and generated-group enumeration). Empty for the trivial group.
    std::vector<Permutation> generating_perms() const;

    /// Uniform-ish random element: exact for families, random words of length
    /// <= 16 in the generators otherwise.
    Permutation sample_element(CounterRng& rng) const;

    /// Full enumeration by closure; throws if the group has more than `cap`
    /// elements.
    std::vector<Permutation> elements(std::size_t cap = 100000) const;

    /// Leaves of the product tree in row-major order.
    std::vector<const GroupSpec*> leaf_factors() const;

    /// Same group structure with the first (row) factor resized to n_new.
    GroupSpec resized(int n_new) const;

    bool operator==(const GroupSpec& other) const { return to_text() == other.to_text(); }

private:
    GroupKind kind_ = GroupKind::trivial;
    int n_ = 1;
    std::vector<GroupSpec> factors_;       // size 2 for product
    std::vector<Permutation> generators_;  // for generated
};

}  // namespace fskan
