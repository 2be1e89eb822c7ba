#include "fskan/group.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "fskan/errors.hpp"

namespace fskan {

GroupSpec GroupSpec::trivial(int n) {
    if (n < 1) throw ValidationError("group degree must be positive");
    GroupSpec g;
    g.kind_ = GroupKind::trivial;
    g.n_ = n;
    return g;
}

GroupSpec GroupSpec::symmetric(int n) {
    if (n < 1) throw ValidationError("group degree must be positive");
    GroupSpec g;
    g.kind_ = GroupKind::symmetric;
    g.n_ = n;
    return g;
}

GroupSpec GroupSpec::cyclic(int n) {
    if (n < 1) throw ValidationError("group degree must be positive");
    GroupSpec g;
    g.kind_ = GroupKind::cyclic;
    g.n_ = n;
    return g;
}

GroupSpec GroupSpec::product(GroupSpec rows, GroupSpec cols) {
    GroupSpec g;
    g.kind_ = GroupKind::product;
    g.n_ = rows.degree() * cols.degree();
    g.factors_.push_back(std::move(rows));
    g.factors_.push_back(std::move(cols));
    return g;
}

GroupSpec GroupSpec::generated(std::vector<Permutation> gens) {
    if (gens.empty()) throw ValidationError("generated group needs at least one generator");
    const int n = gens.front().size();
    for (const auto& p : gens)
        if (p.size() != n) throw ValidationError("generator size mismatch");
    GroupSpec g;
    g.kind_ = GroupKind::generated;
    g.n_ = n;
    g.generators_ = std::move(gens);
    return g;
}

bool GroupSpec::is_family() const {
    switch (kind_) {
        case GroupKind::trivial:
        case GroupKind::symmetric:
        case GroupKind::cyclic:
            return true;
        case GroupKind::product:
            return factors_[0].is_family() && factors_[1].is_family();
        case GroupKind::generated:
            return false;
    }
    return false;
}

std::vector<const GroupSpec*> GroupSpec::leaf_factors() const {
    std::vector<const GroupSpec*> out;
    if (kind_ == GroupKind::product) {
        for (const auto& f : factors_) {
            auto sub = f.leaf_factors();
            out.insert(out.end(), sub.begin(), sub.end());
        }
    } else {
        out.push_back(this);
    }
    return out;
}

GroupSpec GroupSpec::resized(int n_new) const {
    switch (kind_) {
        case GroupKind::trivial: return trivial(n_new);
        case GroupKind::symmetric: return symmetric(n_new);
        case GroupKind::cyclic: return cyclic(n_new);
        case GroupKind::product: return product(factors_[0].resized(n_new), factors_[1]);
        case GroupKind::generated:
            throw ValidationError("generated groups are fixed-size and cannot be resized");
    }
    throw ValidationError("unreachable");
}

namespace {

// Embeds a permutation of the row factor into the flattened n*m domain.
Permutation embed_rows(const Permutation& sigma, int m) {
    const int n = sigma.size();
    std::vector<int> map(static_cast<std::size_t>(n) * static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) map[static_cast<std::size_t>(i * m + j)] = sigma(i) * m + j;
    return Permutation(std::move(map));
}

Permutation embed_cols(const Permutation& tau, int n) {
    const int m = tau.size();
    std::vector<int> map(static_cast<std::size_t>(n) * static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) map[static_cast<std::size_t>(i * m + j)] = i * m + tau(j);
    return Permutation(std::move(map));
}

Permutation cycle_shift(int n) {
    std::vector<int> m(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = (i + 1) % n;
    return Permutation(std::move(m));
}

}  // namespace

std::vector<Permutation> GroupSpec::generating_perms() const {
    switch (kind_) {
        case GroupKind::trivial:
            return {};
        case GroupKind::symmetric: {
            if (n_ < 2) return {};
            std::vector<Permutation> gens;
            std::vector<int> swap01(static_cast<std::size_t>(n_));
            std::iota(swap01.begin(), swap01.end(), 0);
            std::swap(swap01[0], swap01[1]);
            gens.emplace_back(std::move(swap01));
            if (n_ > 2) gens.push_back(cycle_shift(n_));
            return gens;
        }
        case GroupKind::cyclic: {
            if (n_ < 2) return {};
            return {cycle_shift(n_)};
        }
        case GroupKind::product: {
            std::vector<Permutation> gens;
            const int m = factors_[1].degree();
            const int n = factors_[0].degree();
            for (const auto& g : factors_[0].generating_perms()) gens.push_back(embed_rows(g, m));
            for (const auto& h : factors_[1].generating_perms()) gens.push_back(embed_cols(h, n));
            return gens;
        }
        case GroupKind::generated:
            return generators_;
    }
    return {};
}

Permutation GroupSpec::sample_element(CounterRng& rng) const {
    switch (kind_) {
        case GroupKind::trivial:
            return Permutation::identity(n_);
        case GroupKind::symmetric: {
            std::vector<int> m(static_cast<std::size_t>(n_));
            std::iota(m.begin(), m.end(), 0);
            rng.shuffle(m);
            return Permutation(std::move(m));
        }
        case GroupKind::cyclic: {
            const int k = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_)));
            std::vector<int> m(static_cast<std::size_t>(n_));
            for (int i = 0; i < n_; ++i) m[static_cast<std::size_t>(i)] = (i + k) % n_;
            return Permutation(std::move(m));
        }
        case GroupKind::product: {
            const Permutation sigma = factors_[0].sample_element(rng);
            const Permutation tau = factors_[1].sample_element(rng);
            return compose(embed_rows(sigma, factors_[1].degree()), embed_cols(tau, factors_[0].degree()));
        }
        case GroupKind::generated: {
            Permutation p = Permutation::identity(n_);
            const int len = static_cast<int>(rng.uniform_int(17));  // words of length <= 16
            for (int i = 0; i < len; ++i) {
                const auto& g = generators_[rng.uniform_int(generators_.size())];
                p = compose(g, p);
            }
            return p;
        }
    }
    throw ValidationError("unreachable");
}

std::vector<Permutation> GroupSpec::elements(std::size_t cap) const {
    const auto gens = generating_perms();
    std::set<std::vector<int>> seen;
    std::queue<Permutation> todo;
    const Permutation id = Permutation::identity(n_);
    seen.insert(id.mapping());
    todo.push(id);
    std::vector<Permutation> out{id};
    while (!todo.empty()) {
        const Permutation cur = todo.front();
        todo.pop();
        for (const auto& g : gens) {
            Permutation next = compose(g, cur);
            if (seen.insert(next.mapping()).second) {
                if (out.size() >= cap) throw ValidationError("group enumeration cap exceeded");
                out.push_back(next);
                todo.push(std::move(next));
            }
        }
    }
    return out;
}

namespace {

struct Parser {
    const std::string& s;
    std::size_t pos = 0;

    explicit Parser(const std::string& str) : s(str) {}

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool consume(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!consume(c)) throw ValidationError("group parse error: expected '" + std::string(1, c) + "' in '" + s + "'");
    }

    int parse_int() {
        skip_ws();
        std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (start == pos) throw ValidationError("group parse error: expected integer in '" + s + "'");
        return std::stoi(s.substr(start, pos - start));
    }

    std::string parse_name() {
        skip_ws();
        std::size_t start = pos;
        while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
        return s.substr(start, pos - start);
    }

    GroupSpec parse_group() {
        const std::string name = parse_name();
        if (name == "S") {
            expect('(');
            const int n = parse_int();
            expect(')');
            return GroupSpec::symmetric(n);
        }
        if (name == "C") {
            expect('(');
            const int n = parse_int();
            expect(')');
            return GroupSpec::cyclic(n);
        }
        if (name == "triv") {
            expect('(');
            const int n = parse_int();
            expect(')');
            return GroupSpec::trivial(n);
        }
        if (name == "prod") {
            expect('(');
            GroupSpec a = parse_group();
            expect(',');
            GroupSpec b = parse_group();
            expect(')');
            return GroupSpec::product(std::move(a), std::move(b));
        }
        if (name == "gen") {
            expect('(');
            const int n = parse_int();
            expect(';');
            std::vector<Permutation> gens;
            while (true) {
                gens.push_back(parse_perm_cycles(n));
                skip_ws();
                if (!consume(',')) break;
            }
            expect(')');
            return GroupSpec::generated(std::move(gens));
        }
        throw ValidationError("group parse error: unknown group '" + name + "' in '" + s + "'");
    }

    // One permutation as a product of cycles: (0 1 2)(3 4)
    Permutation parse_perm_cycles(int n) {
        std::vector<std::vector<int>> cycles;
        skip_ws();
        while (consume('(')) {
            std::vector<int> cyc;
            while (true) {
                skip_ws();
                if (pos < s.size() && s[pos] == ')') break;
                cyc.push_back(parse_int());
            }
            expect(')');
            if (!cyc.empty()) cycles.push_back(std::move(cyc));
            skip_ws();
            if (pos >= s.size() || s[pos] != '(') break;
        }
        if (cycles.empty()) return Permutation::identity(n);
        return Permutation::from_cycles(n, cycles);
    }
};

}  // namespace

GroupSpec GroupSpec::parse(const std::string& text) {
    Parser p(text);
    GroupSpec g = p.parse_group();
    p.skip_ws();
    if (p.pos != text.size()) throw ValidationError("group parse error: trailing input in '" + text + "'");
    return g;
}

std::string GroupSpec::to_text() const {
    switch (kind_) {
        case GroupKind::trivial: return "triv(" + std::to_string(n_) + ")";
        case GroupKind::symmetric: return "S(" + std::to_string(n_) + ")";
        case GroupKind::cyclic: return "C(" + std::to_string(n_) + ")";
        case GroupKind::product:
            return "prod(" + factors_[0].to_text() + "," + factors_[1].to_text() + ")";
        case GroupKind::generated: {
            std::ostringstream os;
            os << "gen(" << n_ << ";";
            for (std::size_t gi = 0; gi < generators_.size(); ++gi) {
                if (gi) os << ",";
                // cycle notation
                const auto& g = generators_[gi];
                std::vector<char> done(static_cast<std::size_t>(n_), 0);
                bool any = false;
                for (int i = 0; i < n_; ++i) {
                    if (done[static_cast<std::size_t>(i)] || g(i) == i) continue;
                    os << "(";
                    int j = i;
                    bool first = true;
                    while (!done[static_cast<std::size_t>(j)]) {
                        done[static_cast<std::size_t>(j)] = 1;
                        if (!first) os << " ";
                        os << j;
                        first = false;
                        j = g(j);
                    }
                    os << ")";
                    any = true;
                }
                if (!any) os << "()";
            }
            os << ")";
            return os.str();
        }
    }
    return "";
}

}  // namespace fskan
