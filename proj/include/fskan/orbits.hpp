#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fskan/group.hpp"

namespace fskan {

/// Partition of (q, p) index-tuple pairs into orbits under the diagonal group
/// action. q ranges over [n]^out_order, p over [n]^in_order; either order may
/// be zero (used by invariant layers). Immutable after construction.
struct OrbitTable {
    int n = 0;
    int out_order = 1;
    int in_order = 1;
    std::int64_t out_positions = 0;  // n^out_order
    std::int64_t in_positions = 0;   // n^in_order
    int num_orbits = 0;
    std::vector<std::int32_t> ids;  // [out_positions][in_positions], row-major
    std::vector<std::vector<int>> rep_q;
    std::vector<std::vector<int>> rep_p;
    std::vector<std::int64_t> orbit_sizes;
    std::vector<std::string> type_keys;  // size-independent typing; empty for generated groups

    std::int32_t id_at(std::int64_t q_flat, std::int64_t p_flat) const {
        return ids[static_cast<std::size_t>(q_flat * in_positions + p_flat)];
    }
    int orbit_id(std::span<const int> q, std::span<const int> p) const;
    bool typed() const { return !type_keys.empty(); }
};

std::int64_t flatten_tuple(std::span<const int> t, int n);
std::vector<int> unflatten_tuple(std::int64_t flat, int n, int order);

/// Builds the complete orbit table. Family groups use closed-form typing;
/// generated groups use breadth-first closure under the generators, subject
/// to the tuple-pair budget.
OrbitTable enumerate_orbits(const GroupSpec& g, int k_out, int k_in,
                            std::int64_t budget = 10000000);

/// Size-independent orbit type of a combined (q,p) tuple; family groups only.
std::string orbit_type_key(const GroupSpec& g, std::span<const int> combined);

/// Number of equivalence classes of [n] under the stabilizer subgroup of q:
/// the per-output-slot count of distinct aggregation groups in the efficient
/// layer. Equals the number of distinct orbit ids in row q of the (1,1) table.
int stabilizer_orbit_count(const GroupSpec& g, int q, std::int64_t budget = 10000000);

}  // namespace fskan
