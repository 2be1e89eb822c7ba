#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fskan/errors.hpp"
#include "fskan/serialize.hpp"

using namespace fskan;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("fskan_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

FSKANetwork sample_net(std::uint64_t seed, bool efficient = false) {
    CounterRng rng(seed);
    SplineOptions so;
    const GroupSpec g = GroupSpec::product(GroupSpec::symmetric(2), GroupSpec::cyclic(3));
    FSKANetwork net;
    net.group = g;
    Block b;
    if (efficient)
        b.layer = EfficientFSKALayer(g, 1, 1, 2, 3, Aggregation::mean, so, rng);
    else
        b.layer = FSKALayer(g, 1, 1, 2, 3, Aggregation::sum, so, rng);
    b.norm = NormState(3);
    b.norm->running_mean = {0.1, -0.2, 0.3};
    b.norm->running_var = {1.1, 0.9, 1.3};
    net.blocks.push_back(std::move(b));
    net.invariant = FSInvariantLayer(g, 1, 3, 2, Aggregation::sum, so, rng);
    net.head.push_back(KASubLayer::learnable(2, 2, so, rng));
    return net;
}

}  // namespace

TEST_CASE("network JSON round trip is bit exact") {
    TempDir dir;
    for (const bool efficient : {false, true}) {
        FSKANetwork net = sample_net(31, efficient);
        const auto path = dir.file(efficient ? "eff.json" : "fs.json");
        save_model_file(path, network_to_json(net));
        FSKANetwork loaded = network_from_json(load_model_file(path));

        CounterRng rng(4);
        for (int t = 0; t < 20; ++t) {
            std::vector<double> x(12);
            for (auto& v : x) v = rng.uniform(-1.0, 1.0);
            const auto a = net.forward_batch({x}, Mode::eval)[0];
            const auto b = loaded.forward_batch({x}, Mode::eval)[0];
            REQUIRE(a == b);  // bit-exact through the decimal round trip
        }
        // a second round trip produces identical text
        const auto path2 = dir.file("again.json");
        save_model_file(path2, network_to_json(loaded));
        std::ifstream f1(path), f2(path2);
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(s1 == s2);
    }
}

TEST_CASE("mlp JSON round trip") {
    TempDir dir;
    CounterRng rng(8);
    const GroupSpec g = GroupSpec::symmetric(4);
    ParamSharingMLP mlp;
    mlp.group = g;
    mlp.layers.push_back(PSLayer::random(g, 1, 1, 2, 3, Activation::relu, 0.5, rng));
    mlp.invariant = PSLayer::random(g, 0, 1, 3, 2, Activation::none, 0.5, rng);
    mlp.head.push_back(DenseLinear::random(2, 2, Activation::none, 0.5, rng));

    const auto path = dir.file("mlp.json");
    save_model_file(path, mlp_to_json(mlp));
    ParamSharingMLP loaded = mlp_from_json(load_model_file(path));
    for (int t = 0; t < 20; ++t) {
        std::vector<double> x(8);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        REQUIRE(mlp.forward(x) == loaded.forward(x));
    }
}

TEST_CASE("loader rejects unknown versions and malformed files") {
    TempDir dir;
    const auto path = dir.file("bad.json");
    {
        std::ofstream out(path);
        out << R"({"format":"fskan-model","version":99,"model":{}})";
    }
    CHECK_THROWS_WITH_AS(load_model_file(path), doctest::Contains("version"), ValidationError);
    {
        std::ofstream out(path);
        out << R"({"something":"else"})";
    }
    CHECK_THROWS_AS(load_model_file(path), ValidationError);
    {
        std::ofstream out(path);
        out << "not json";
    }
    CHECK_THROWS_AS(load_model_file(path), ValidationError);
    CHECK_THROWS_AS(load_model_file(dir.file("missing.json")), ValidationError);
}

TEST_CASE("dataset jsonl round trip") {
    TempDir dir;
    Dataset data;
    data.num_classes = 2;
    for (int i = 0; i < 6; ++i) {
        Sample s;
        s.shape = {2, 3};
        s.values = {0.1 * i, 1.0 / 3 + i, -2.5, 0.0, 1e-17, 12345.6789};
        s.label = i % 2;
        data.samples.push_back(s);
    }
    const auto path = dir.file("data.jsonl");
    save_dataset_jsonl(path, data);
    const Dataset loaded = load_dataset_jsonl(path);
    REQUIRE(loaded.samples.size() == data.samples.size());
    CHECK(loaded.num_classes == 2);
    CHECK_FALSE(loaded.regression);
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        CHECK(loaded.samples[i].values == data.samples[i].values);
        CHECK(loaded.samples[i].label == data.samples[i].label);
    }

    Dataset reg;
    Sample s;
    s.shape = {3};
    s.values = {0.25, -0.5, 0.75};
    s.target = 0.123456789012345;
    s.has_target = true;
    reg.regression = true;
    reg.samples.push_back(s);
    const auto rpath = dir.file("reg.jsonl");
    save_dataset_jsonl(rpath, reg);
    const Dataset rl = load_dataset_jsonl(rpath);
    CHECK(rl.regression);
    CHECK(rl.samples[0].target == s.target);
}

TEST_CASE("spline CSV export") {
    TempDir dir;
    FSKANetwork net = sample_net(77);
    const auto files = export_spline_csvs(net, dir.file("splines"), 64, -1.0, 1.0);
    // one file per shared function: block (d_out*d_in per orbit) + invariant + head
    std::size_t expect = 0;
    for (const auto& block : net.blocks)
        expect += static_cast<std::size_t>(
            std::get<FSKALayer>(block.layer).table().num_orbits * 3 * 2);
    expect += static_cast<std::size_t>(net.invariant->inner.table().num_orbits * 2 * 3);
    expect += 2 * 2;
    CHECK(files.size() == expect);
    for (const auto& name : files) {
        std::ifstream in(dir.file("splines/" + name));
        REQUIRE(in.good());
        std::string header;
        std::getline(in, header);
        CHECK(header == "x,value");
        int rows = 0;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 64);
    }
}

TEST_CASE("orbits JSON") {
    const auto j = orbits_to_json(GroupSpec::symmetric(3), 1, 1, true);
    CHECK(j.at("num_orbits").get<int>() == 2);
    CHECK(j.at("orbits").size() == 2);
    CHECK(j.at("table").size() == 3);
    const auto no_table = orbits_to_json(GroupSpec::symmetric(3), 1, 1, false);
    CHECK_FALSE(no_table.contains("table"));
}
