#include "fskan/serialize.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fskan/errors.hpp"

namespace fskan {

using nlohmann::json;

namespace {

constexpr int kModelVersion = 1;

std::string base_to_string(BaseKind b) {
    switch (b) {
        case BaseKind::none: return "none";
        case BaseKind::identity: return "identity";
        case BaseKind::silu: return "silu";
    }
    return "none";
}

BaseKind base_from_string(const std::string& s) {
    if (s == "none") return BaseKind::none;
    if (s == "identity") return BaseKind::identity;
    if (s == "silu") return BaseKind::silu;
    throw ValidationError("unknown base activation '" + s + "'");
}

json spline_to_json(const UnivariateFunction& f) {
    return json{{"degree", f.degree},       {"grid_lo", f.grid_lo},   {"grid_hi", f.grid_hi},
                {"knots", f.knots},         {"coeffs", f.coeffs},     {"base", base_to_string(f.base_kind)},
                {"w_base", f.w_base},       {"w_spline", f.w_spline}};
}

UnivariateFunction spline_from_json(const json& j) {
    UnivariateFunction f;
    f.degree = j.at("degree").get<int>();
    f.grid_lo = j.at("grid_lo").get<double>();
    f.grid_hi = j.at("grid_hi").get<double>();
    f.knots = j.at("knots").get<std::vector<double>>();
    f.coeffs = j.at("coeffs").get<std::vector<double>>();
    f.base_kind = base_from_string(j.at("base").get<std::string>());
    f.w_base = j.at("w_base").get<double>();
    f.w_spline = j.at("w_spline").get<double>();
    if (f.knots.size() != f.coeffs.size() + static_cast<std::size_t>(f.degree) + 1)
        throw ValidationError("spline knot/coefficient count mismatch");
    f.zero_grad();
    return f;
}

json sublayer_to_json(const KASubLayer& s) {
    json funcs = json::array();
    for (const auto& f : s.funcs) funcs.push_back(spline_to_json(f));
    return json{{"d_in", s.d_in}, {"d_out", s.d_out}, {"funcs", std::move(funcs)}};
}

KASubLayer sublayer_from_json(const json& j) {
    KASubLayer s;
    s.d_in = j.at("d_in").get<int>();
    s.d_out = j.at("d_out").get<int>();
    for (const auto& jf : j.at("funcs")) s.funcs.push_back(spline_from_json(jf));
    if (static_cast<int>(s.funcs.size()) != s.d_in * s.d_out)
        throw ValidationError("sub-layer function count mismatch");
    s.refresh_layout();
    return s;
}

std::string agg_to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "sum"; }

Aggregation agg_from_string(const std::string& s) {
    if (s == "sum") return Aggregation::sum;
    if (s == "mean") return Aggregation::mean;
    throw ValidationError("unknown aggregation '" + s + "'");
}

// Shared FS-layer payload (used by both layer kinds plus the invariant layer).
template <typename Layer>
json fs_layer_to_json(const Layer& layer) {
    const OrbitTable& t = layer.table();
    json subs = json::array();
    for (int h = 0; h < t.num_orbits; ++h) {
        json entry = sublayer_to_json(*layer.sublayers()[static_cast<std::size_t>(h)]);
        if (t.typed()) entry["orbit_type"] = t.type_keys[static_cast<std::size_t>(h)];
        entry["rep_q"] = t.rep_q[static_cast<std::size_t>(h)];
        entry["rep_p"] = t.rep_p[static_cast<std::size_t>(h)];
        subs.push_back(std::move(entry));
    }
    return json{{"k_out", t.out_order},
                {"k_in", t.in_order},
                {"d_in", layer.d_in()},
                {"d_out", layer.d_out()},
                {"aggregation", agg_to_string(layer.aggregation())},
                {"sublayers", std::move(subs)}};
}

// Rebuilds the orbit table and matches stored sub-layers to orbits by type
// key (family groups) or representative (generated groups).
std::vector<std::shared_ptr<KASubLayer>> match_sublayers(const GroupSpec& g, const OrbitTable& t,
                                                         const json& j) {
    const auto& stored = j.at("sublayers");
    if (static_cast<int>(stored.size()) != t.num_orbits)
        throw ValidationError("model file orbit count does not match the group");
    std::vector<std::shared_ptr<KASubLayer>> subs(static_cast<std::size_t>(t.num_orbits));
    for (const auto& entry : stored) {
        int h = -1;
        if (t.typed() && entry.contains("orbit_type")) {
            const std::string key = entry.at("orbit_type").get<std::string>();
            for (int i = 0; i < t.num_orbits; ++i)
                if (t.type_keys[static_cast<std::size_t>(i)] == key) {
                    h = i;
                    break;
                }
        } else {
            const auto rq = entry.at("rep_q").get<std::vector<int>>();
            const auto rp = entry.at("rep_p").get<std::vector<int>>();
            h = t.orbit_id(rq, rp);
        }
        if (h < 0) throw ValidationError("model file contains an orbit unknown to the group");
        if (subs[static_cast<std::size_t>(h)]) throw ValidationError("duplicate orbit in model file");
        subs[static_cast<std::size_t>(h)] = std::make_shared<KASubLayer>(sublayer_from_json(entry));
    }
    return subs;
}

json norm_to_json(const NormState& n) {
    return json{{"running_mean", n.running_mean},
                {"running_var", n.running_var},
                {"momentum", n.momentum},
                {"eps", n.eps}};
}

NormState norm_from_json(const json& j) {
    NormState n;
    n.running_mean = j.at("running_mean").get<std::vector<double>>();
    n.running_var = j.at("running_var").get<std::vector<double>>();
    n.momentum = j.at("momentum").get<double>();
    n.eps = j.at("eps").get<double>();
    return n;
}

}  // namespace

json network_to_json(const FSKANetwork& net) {
    json blocks = json::array();
    for (const auto& block : net.blocks) {
        json jb;
        if (std::holds_alternative<FSKALayer>(block.layer)) {
            jb = fs_layer_to_json(std::get<FSKALayer>(block.layer));
            jb["type"] = "fs";
        } else {
            jb = fs_layer_to_json(std::get<EfficientFSKALayer>(block.layer));
            jb["type"] = "efficient";
        }
        jb["norm"] = block.norm ? norm_to_json(*block.norm) : json(nullptr);
        blocks.push_back(std::move(jb));
    }
    json head = json::array();
    for (const auto& stage : net.head) head.push_back(sublayer_to_json(stage));
    json j{{"kind", "fskan"},
           {"group", net.group.to_text()},
           {"blocks", std::move(blocks)},
           {"head", std::move(head)}};
    j["invariant"] = net.invariant ? fs_layer_to_json(net.invariant->inner) : json(nullptr);
    return j;
}

FSKANetwork network_from_json(const json& j) {
    if (j.at("kind").get<std::string>() != "fskan")
        throw ValidationError("expected an fskan model");
    FSKANetwork net;
    net.group = GroupSpec::parse(j.at("group").get<std::string>());
    for (const auto& jb : j.at("blocks")) {
        const int k_out = jb.at("k_out").get<int>();
        const int k_in = jb.at("k_in").get<int>();
        const int d_in = jb.at("d_in").get<int>();
        const int d_out = jb.at("d_out").get<int>();
        const Aggregation agg = agg_from_string(jb.at("aggregation").get<std::string>());
        OrbitTable t = enumerate_orbits(net.group, k_out, k_in);
        auto subs = match_sublayers(net.group, t, jb);
        Block block;
        if (jb.at("type").get<std::string>() == "efficient")
            block.layer = EfficientFSKALayer::from_parts(net.group, std::move(t), std::move(subs),
                                                         d_in, d_out, agg);
        else
            block.layer = FSKALayer::from_parts(net.group, std::move(t), std::move(subs), d_in, d_out, agg);
        if (!jb.at("norm").is_null()) block.norm = norm_from_json(jb.at("norm"));
        net.blocks.push_back(std::move(block));
    }
    if (!j.at("invariant").is_null()) {
        const auto& ji = j.at("invariant");
        OrbitTable t = enumerate_orbits(net.group, 0, ji.at("k_in").get<int>());
        auto subs = match_sublayers(net.group, t, ji);
        net.invariant = FSInvariantLayer{};
        net.invariant->inner = FSKALayer::from_parts(net.group, std::move(t), std::move(subs),
                                                     ji.at("d_in").get<int>(), ji.at("d_out").get<int>(),
                                                     agg_from_string(ji.at("aggregation").get<std::string>()));
    }
    for (const auto& js : j.at("head")) net.head.push_back(sublayer_from_json(js));
    return net;
}

namespace {

json ps_layer_to_json(const PSLayer& l) {
    json orbits = json::array();
    for (int h = 0; h < l.table.num_orbits; ++h) {
        json entry{{"W", l.W[static_cast<std::size_t>(h)]}, {"b", l.b[static_cast<std::size_t>(h)]}};
        if (l.table.typed()) entry["orbit_type"] = l.table.type_keys[static_cast<std::size_t>(h)];
        entry["rep_q"] = l.table.rep_q[static_cast<std::size_t>(h)];
        entry["rep_p"] = l.table.rep_p[static_cast<std::size_t>(h)];
        orbits.push_back(std::move(entry));
    }
    return json{{"k_out", l.table.out_order},
                {"k_in", l.table.in_order},
                {"d_in", l.d_in},
                {"d_out", l.d_out},
                {"activation", l.act == Activation::relu ? "relu" : "none"},
                {"orbits", std::move(orbits)}};
}

PSLayer ps_layer_from_json(const GroupSpec& g, const json& j) {
    PSLayer l;
    l.table = enumerate_orbits(g, j.at("k_out").get<int>(), j.at("k_in").get<int>());
    l.d_in = j.at("d_in").get<int>();
    l.d_out = j.at("d_out").get<int>();
    const std::string act = j.at("activation").get<std::string>();
    if (act == "relu")
        l.act = Activation::relu;
    else if (act == "none")
        l.act = Activation::none;
    else
        throw ValidationError("unknown activation '" + act + "'");
    const auto& stored = j.at("orbits");
    if (static_cast<int>(stored.size()) != l.table.num_orbits)
        throw ValidationError("model file orbit count does not match the group");
    l.W.resize(static_cast<std::size_t>(l.table.num_orbits));
    l.b.resize(static_cast<std::size_t>(l.table.num_orbits));
    std::vector<char> seen(static_cast<std::size_t>(l.table.num_orbits), 0);
    for (const auto& entry : stored) {
        int h = -1;
        if (l.table.typed() && entry.contains("orbit_type")) {
            const std::string key = entry.at("orbit_type").get<std::string>();
            for (int i = 0; i < l.table.num_orbits; ++i)
                if (l.table.type_keys[static_cast<std::size_t>(i)] == key) {
                    h = i;
                    break;
                }
        } else {
            const auto rq = entry.at("rep_q").get<std::vector<int>>();
            const auto rp = entry.at("rep_p").get<std::vector<int>>();
            h = l.table.orbit_id(rq, rp);
        }
        if (h < 0 || seen[static_cast<std::size_t>(h)])
            throw ValidationError("model file contains an unknown or duplicate orbit");
        seen[static_cast<std::size_t>(h)] = 1;
        l.W[static_cast<std::size_t>(h)] = entry.at("W").get<std::vector<double>>();
        l.b[static_cast<std::size_t>(h)] = entry.at("b").get<std::vector<double>>();
        if (l.W[static_cast<std::size_t>(h)].size() !=
                static_cast<std::size_t>(l.d_out) * static_cast<std::size_t>(l.d_in) ||
            l.b[static_cast<std::size_t>(h)].size() != static_cast<std::size_t>(l.d_out))
            throw ValidationError("weight matrix shape mismatch in model file");
    }
    l.zero_grad();
    return l;
}

json dense_to_json(const DenseLinear& l) {
    return json{{"d_in", l.d_in},
                {"d_out", l.d_out},
                {"activation", l.act == Activation::relu ? "relu" : "none"},
                {"W", l.W},
                {"b", l.b}};
}

DenseLinear dense_from_json(const json& j) {
    DenseLinear l;
    l.d_in = j.at("d_in").get<int>();
    l.d_out = j.at("d_out").get<int>();
    l.act = j.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::none;
    l.W = j.at("W").get<std::vector<double>>();
    l.b = j.at("b").get<std::vector<double>>();
    l.zero_grad();
    return l;
}

}  // namespace

json mlp_to_json(const ParamSharingMLP& mlp) {
    json layers = json::array();
    for (const auto& l : mlp.layers) layers.push_back(ps_layer_to_json(l));
    json head = json::array();
    for (const auto& l : mlp.head) head.push_back(dense_to_json(l));
    json j{{"kind", "ps-mlp"},
           {"group", mlp.group.to_text()},
           {"layers", std::move(layers)},
           {"head", std::move(head)}};
    j["invariant"] = mlp.invariant ? ps_layer_to_json(*mlp.invariant) : json(nullptr);
    return j;
}

ParamSharingMLP mlp_from_json(const json& j) {
    if (j.at("kind").get<std::string>() != "ps-mlp")
        throw ValidationError("expected a ps-mlp model");
    ParamSharingMLP mlp;
    mlp.group = GroupSpec::parse(j.at("group").get<std::string>());
    for (const auto& jl : j.at("layers")) mlp.layers.push_back(ps_layer_from_json(mlp.group, jl));
    if (!j.at("invariant").is_null()) mlp.invariant = ps_layer_from_json(mlp.group, j.at("invariant"));
    for (const auto& jl : j.at("head")) mlp.head.push_back(dense_from_json(jl));
    return mlp;
}

void save_model_file(const std::string& path, const json& payload) {
    json container{{"format", "fskan-model"}, {"version", kModelVersion}, {"model", payload}};
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write model file '" + path + "'");
    out << container.dump(2) << "\n";
}

json load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read model file '" + path + "'");
    json container;
    try {
        in >> container;
    } catch (const std::exception& e) {
        throw ValidationError("malformed model file '" + path + "': " + e.what());
    }
    if (!container.contains("format") || container.at("format").get<std::string>() != "fskan-model")
        throw ValidationError("'" + path + "' is not a model file");
    const int version = container.at("version").get<int>();
    if (version != kModelVersion)
        throw ValidationError("unsupported model file version " + std::to_string(version));
    return container.at("model");
}

std::string model_kind(const json& model) { return model.at("kind").get<std::string>(); }

void save_dataset_jsonl(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write dataset file '" + path + "'");
    for (const auto& s : data.samples) {
        json j{{"shape", s.shape}, {"values", s.values}};
        if (s.has_target)
            j["target"] = s.target;
        else
            j["label"] = s.label;
        out << j.dump() << "\n";
    }
}

Dataset load_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read dataset file '" + path + "'");
    Dataset data;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("malformed dataset line in '" + path + "': " + e.what());
        }
        Sample s;
        s.shape = j.at("shape").get<std::vector<int>>();
        s.values = j.at("values").get<std::vector<double>>();
        std::size_t expect = 1;
        for (int d : s.shape) expect *= static_cast<std::size_t>(d);
        if (s.values.size() != expect) throw ValidationError("dataset sample size does not match its shape");
        if (j.contains("target")) {
            s.target = j.at("target").get<double>();
            s.has_target = true;
            data.regression = true;
        } else {
            s.label = j.at("label").get<int>();
            data.num_classes = std::max(data.num_classes, s.label + 1);
        }
        data.samples.push_back(std::move(s));
    }
    return data;
}

namespace {

void write_csv(const std::string& path, const UnivariateFunction& f, int samples, double lo, double hi) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out.precision(17);
    out << "x,value\n";
    for (int i = 0; i < samples; ++i) {
        const double x = lo + (hi - lo) * i / (samples - 1);
        out << x << "," << f.eval(x) << "\n";
    }
}

template <typename Layer>
void export_layer(const Layer& layer, const std::string& dir, const std::string& prefix, int samples,
                  double lo, double hi, std::vector<std::string>& files) {
    for (int h = 0; h < layer.table().num_orbits; ++h) {
        const KASubLayer& sub = *layer.sublayers()[static_cast<std::size_t>(h)];
        for (int r = 0; r < sub.d_out; ++r) {
            for (int c = 0; c < sub.d_in; ++c) {
                std::ostringstream name;
                name << prefix << "_orbit" << h << "_r" << r << "c" << c << ".csv";
                write_csv(dir + "/" + name.str(), sub.at(r, c), samples, lo, hi);
                files.push_back(name.str());
            }
        }
    }
}

}  // namespace

std::vector<std::string> export_spline_csvs(const FSKANetwork& net, const std::string& dir,
                                            int num_samples, double lo, double hi) {
    if (num_samples < 2) throw ValidationError("export needs at least two sample points");
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    for (std::size_t bi = 0; bi < net.blocks.size(); ++bi) {
        const std::string prefix = "block" + std::to_string(bi);
        std::visit([&](const auto& l) { export_layer(l, dir, prefix, num_samples, lo, hi, files); },
                   net.blocks[bi].layer);
    }
    if (net.invariant) export_layer(net.invariant->inner, dir, "invariant", num_samples, lo, hi, files);
    for (std::size_t si = 0; si < net.head.size(); ++si) {
        const KASubLayer& sub = net.head[si];
        for (int r = 0; r < sub.d_out; ++r)
            for (int c = 0; c < sub.d_in; ++c) {
                std::ostringstream name;
                name << "head" << si << "_r" << r << "c" << c << ".csv";
                write_csv(dir + "/" + name.str(), sub.at(r, c), num_samples, lo, hi);
                files.push_back(name.str());
            }
    }
    return files;
}

json orbits_to_json(const GroupSpec& g, int k_out, int k_in, bool include_table) {
    const OrbitTable t = enumerate_orbits(g, k_out, k_in);
    json orbits = json::array();
    for (int h = 0; h < t.num_orbits; ++h) {
        json entry{{"id", h},
                   {"rep_q", t.rep_q[static_cast<std::size_t>(h)]},
                   {"rep_p", t.rep_p[static_cast<std::size_t>(h)]},
                   {"size", t.orbit_sizes[static_cast<std::size_t>(h)]}};
        if (t.typed()) entry["type"] = t.type_keys[static_cast<std::size_t>(h)];
        orbits.push_back(std::move(entry));
    }
    json j{{"group", g.to_text()}, {"n", t.n},          {"k_out", k_out},
           {"k_in", k_in},         {"num_orbits", t.num_orbits}, {"orbits", std::move(orbits)}};
    if (include_table) {
        json rows = json::array();
        for (std::int64_t q = 0; q < t.out_positions; ++q) {
            json row = json::array();
            for (std::int64_t p = 0; p < t.in_positions; ++p) row.push_back(t.id_at(q, p));
            rows.push_back(std::move(row));
        }
        j["table"] = std::move(rows);
    }
    return j;
}

}  // namespace fskan
