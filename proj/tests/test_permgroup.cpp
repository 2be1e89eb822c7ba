#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "fskan/errors.hpp"
#include "fskan/orbits.hpp"

using namespace fskan;

TEST_CASE("compose basics") {
    const auto id = Permutation::identity(3);
    const auto p = Permutation({1, 2, 0});
    CHECK(compose(id, p) == p);
    CHECK(compose(p, id) == p);

    const auto swap01 = Permutation({1, 0});
    CHECK(compose(swap01, swap01) == Permutation::identity(2));

    // cycle(0,1,2) composed with itself is cycle(0,2,1): mapping [2,0,1].
    const auto c = Permutation::from_cycles(3, {{0, 1, 2}});
    CHECK(compose(c, c) == Permutation({2, 0, 1}));

    CHECK_THROWS_AS(compose(id, swap01), ValidationError);
    CHECK_THROWS_AS(Permutation({0, 0, 1}), ValidationError);
    CHECK_THROWS_AS(Permutation({0, 3, 1}), ValidationError);
}

TEST_CASE("act_on_tuple") {
    const auto id = Permutation::identity(6);
    const std::vector<int> t{2, 5};
    CHECK(act_on_tuple(id, t) == t);

    const auto swap01 = Permutation({1, 0});
    CHECK(act_on_tuple(swap01, std::vector<int>{0, 0}) == std::vector<int>{1, 1});

    // shift-by-1 in C_5 sends (0,4) to (1,0)
    std::vector<int> shift(5);
    for (int i = 0; i < 5; ++i) shift[static_cast<std::size_t>(i)] = (i + 1) % 5;
    CHECK(act_on_tuple(Permutation(shift), std::vector<int>{0, 4}) == std::vector<int>{1, 0});

    CHECK_THROWS_AS(act_on_tuple(swap01, std::vector<int>{0, 7}), ValidationError);
}

TEST_CASE("group parsing round-trips") {
    for (const std::string text : {"S(5)", "C(4)", "triv(3)", "prod(S(3),C(5))",
                                   "prod(S(2),prod(S(2),C(3)))", "gen(5;(0 1 2)(3 4),(0 1))"}) {
        const GroupSpec g = GroupSpec::parse(text);
        CHECK(GroupSpec::parse(g.to_text()).to_text() == g.to_text());
    }
    CHECK(GroupSpec::parse("prod(S(3),C(5))").degree() == 15);
    CHECK(GroupSpec::parse(" S( 4 ) ").degree() == 4);
    CHECK_THROWS_AS(GroupSpec::parse("Q(3)"), ValidationError);
    CHECK_THROWS_AS(GroupSpec::parse("S(3) extra"), ValidationError);
    CHECK_THROWS_AS(GroupSpec::parse("gen(3;(0 1 5))"), ValidationError);
}

TEST_CASE("closed-form orbit counts") {
    // S_3 pairs: diagonal + off-diagonal, lexicographic representatives.
    const auto s3 = enumerate_orbits(GroupSpec::symmetric(3), 1, 1);
    CHECK(s3.num_orbits == 2);
    CHECK(s3.rep_q[0] == std::vector<int>{0});
    CHECK(s3.rep_p[0] == std::vector<int>{0});
    CHECK(s3.rep_q[1] == std::vector<int>{0});
    CHECK(s3.rep_p[1] == std::vector<int>{1});

    CHECK(enumerate_orbits(GroupSpec::product(GroupSpec::symmetric(3), GroupSpec::symmetric(4)), 1, 1)
              .num_orbits == 4);

    for (int T = 2; T <= 6; ++T)
        CHECK(enumerate_orbits(GroupSpec::product(GroupSpec::symmetric(3), GroupSpec::cyclic(T)), 1, 1)
                  .num_orbits == 2 * T);

    CHECK(enumerate_orbits(GroupSpec::cyclic(5), 1, 1).num_orbits == 5);
    CHECK(enumerate_orbits(GroupSpec::trivial(3), 1, 1).num_orbits == 9);
}

namespace {

// Same group given by generators, for closed-form vs BFS cross-checks.
GroupSpec as_generated(const GroupSpec& g) { return GroupSpec::generated(g.generating_perms()); }

}  // namespace

TEST_CASE("closed forms match BFS enumeration") {
    for (int n = 2; n <= 6; ++n) {
        const auto family = enumerate_orbits(GroupSpec::symmetric(n), 1, 1);
        const auto bfs = enumerate_orbits(as_generated(GroupSpec::symmetric(n)), 1, 1);
        CHECK(family.num_orbits == 2);
        CHECK(bfs.num_orbits == 2);
        CHECK(family.ids == bfs.ids);

        CHECK(enumerate_orbits(as_generated(GroupSpec::cyclic(n)), 1, 1).num_orbits == n);
    }
    const auto prod = GroupSpec::product(GroupSpec::symmetric(2), GroupSpec::symmetric(3));
    CHECK(enumerate_orbits(as_generated(prod), 1, 1).ids == enumerate_orbits(prod, 1, 1).ids);

    const auto sc = GroupSpec::product(GroupSpec::symmetric(2), GroupSpec::cyclic(3));
    CHECK(enumerate_orbits(as_generated(sc), 1, 1).ids == enumerate_orbits(sc, 1, 1).ids);
}

TEST_CASE("orbit invariance under the diagonal action") {
    CounterRng rng(7);
    const std::vector<GroupSpec> groups{
        GroupSpec::symmetric(5), GroupSpec::cyclic(6), GroupSpec::trivial(4),
        GroupSpec::product(GroupSpec::symmetric(2), GroupSpec::cyclic(3)),
        GroupSpec::generated({Permutation::from_cycles(5, {{0, 1, 2}}), Permutation::from_cycles(5, {{3, 4}})})};
    for (const auto& g : groups) {
        for (const auto [k_out, k_in] : std::vector<std::pair<int, int>>{{1, 1}, {0, 1}, {2, 1}}) {
            const auto tab = enumerate_orbits(g, k_out, k_in);
            for (int trial = 0; trial < 24; ++trial) {
                const Permutation sigma = g.sample_element(rng);
                for (std::int64_t q = 0; q < tab.out_positions; ++q) {
                    for (std::int64_t p = 0; p < tab.in_positions; ++p) {
                        const auto qt = unflatten_tuple(q, tab.n, k_out);
                        const auto pt = unflatten_tuple(p, tab.n, k_in);
                        const auto qs = act_on_tuple(sigma, qt);
                        const auto ps = act_on_tuple(sigma, pt);
                        REQUIRE(tab.id_at(q, p) ==
                                tab.id_at(flatten_tuple(qs, tab.n), flatten_tuple(ps, tab.n)));
                    }
                }
            }
        }
    }
}

TEST_CASE("representatives are lexicographically smallest and stable") {
    const std::vector<GroupSpec> groups{
        GroupSpec::symmetric(4), GroupSpec::cyclic(5),
        GroupSpec::generated({Permutation::from_cycles(4, {{0, 1, 2, 3}})})};
    for (const auto& g : groups) {
        const auto a = enumerate_orbits(g, 1, 1);
        const auto b = enumerate_orbits(g, 1, 1);
        CHECK(a.ids == b.ids);
        CHECK(a.rep_q == b.rep_q);
        CHECK(a.rep_p == b.rep_p);
        // First appearance in the lexicographic scan is the lexicographic minimum.
        std::set<int> seen;
        for (std::int64_t q = 0; q < a.out_positions; ++q)
            for (std::int64_t p = 0; p < a.in_positions; ++p) {
                const int h = a.id_at(q, p);
                if (seen.insert(h).second) {
                    CHECK(flatten_tuple(a.rep_q[static_cast<std::size_t>(h)], a.n) == q);
                    CHECK(flatten_tuple(a.rep_p[static_cast<std::size_t>(h)], a.n) == p);
                }
            }
    }
}

TEST_CASE("higher-order orbits for S_n") {
    // Orbits of ([n]^2,[n]^2) under S_n are the equality patterns of 4-tuples
    // with at most n distinct symbols: Bell(4)=15 for n>=4, 14 for n=3.
    CHECK(enumerate_orbits(GroupSpec::symmetric(5), 2, 2).num_orbits == 15);
    CHECK(enumerate_orbits(GroupSpec::symmetric(4), 2, 2).num_orbits == 15);
    CHECK(enumerate_orbits(GroupSpec::symmetric(3), 2, 2).num_orbits == 14);
    const auto bfs = enumerate_orbits(as_generated(GroupSpec::symmetric(4)), 2, 2);
    CHECK(bfs.num_orbits == 15);
    CHECK(bfs.ids == enumerate_orbits(GroupSpec::symmetric(4), 2, 2).ids);
}

TEST_CASE("enumeration budget") {
    const auto g = GroupSpec::generated({Permutation::from_cycles(40, {{0, 1}})});
    CHECK_THROWS_WITH_AS(enumerate_orbits(g, 2, 2, 1000000),
                         doctest::Contains("budget"), ValidationError);
    CHECK_THROWS_AS(enumerate_orbits(GroupSpec::symmetric(3), 0, 0), ValidationError);
}

namespace {

// Brute-force stabilizer orbit count: enumerate the group, filter Stab(q),
// compute orbits of [n] directly.
int stab_orbits_brute(const GroupSpec& g, int q) {
    const auto elems = g.elements(100000);
    const int n = g.degree();
    std::vector<int> parent(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
    std::function<int(int)> find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
        return x;
    };
    for (const auto& sigma : elems) {
        if (sigma(q) != q) continue;
        for (int i = 0; i < n; ++i) {
            const int a = find(i), b = find(sigma(i));
            if (a != b) parent[static_cast<std::size_t>(a)] = b;
        }
    }
    std::set<int> roots;
    for (int i = 0; i < n; ++i) roots.insert(find(i));
    return static_cast<int>(roots.size());
}

}  // namespace

TEST_CASE("stabilizer orbit counts") {
    CHECK(stabilizer_orbit_count(GroupSpec::symmetric(5), 2) == 2);
    CHECK(stabilizer_orbit_count(GroupSpec::cyclic(4), 0) == 4);
    for (int q = 0; q < 4; ++q) CHECK(stabilizer_orbit_count(GroupSpec::trivial(4), q) == 4);

    CounterRng rng(3);
    const std::vector<GroupSpec> groups{
        GroupSpec::symmetric(4), GroupSpec::cyclic(6),
        GroupSpec::product(GroupSpec::symmetric(2), GroupSpec::symmetric(3)),
        GroupSpec::generated({Permutation::from_cycles(6, {{0, 1, 2}}), Permutation::from_cycles(6, {{4, 5}})})};
    for (const auto& g : groups)
        for (int q = 0; q < g.degree(); ++q)
            CHECK(stabilizer_orbit_count(g, q) == stab_orbits_brute(g, q));

    CHECK_THROWS_AS(stabilizer_orbit_count(GroupSpec::symmetric(3), 5), ValidationError);
}

TEST_CASE("sampled elements belong to the group") {
    CounterRng rng(11);
    const auto g = GroupSpec::generated(
        {Permutation::from_cycles(5, {{0, 1, 2, 3, 4}}), Permutation::from_cycles(5, {{0, 1}})});
    const auto elems = g.elements(1000);
    std::set<std::vector<int>> members;
    for (const auto& e : elems) members.insert(e.mapping());
    CHECK(members.size() == 120);  // <(01234),(01)> = S_5
    for (int i = 0; i < 50; ++i) CHECK(members.count(g.sample_element(rng).mapping()) == 1);
}
