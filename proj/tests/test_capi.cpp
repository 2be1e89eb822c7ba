#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fskan_c.h"

using nlohmann::json;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("fskan_capi_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

std::string take(char* s) {
    REQUIRE(s != nullptr);
    std::string out(s);
    fskan_string_free(s);
    return out;
}

}  // namespace

TEST_CASE("group parse and orbit JSON through the C API") {
    fskan_group* g = nullptr;
    REQUIRE(fskan_group_parse("prod(S(3),C(4))", &g) == FSKAN_OK);
    CHECK(fskan_group_degree(g) == 12);

    char* out = nullptr;
    REQUIRE(fskan_orbits_json(g, 1, 1, 0, &out) == FSKAN_OK);
    const auto j = json::parse(take(out));
    CHECK(j.at("num_orbits").get<int>() == 8);
    CHECK(fskan_stabilizer_orbit_count(g, 0) == 8);
    fskan_group_free(g);

    fskan_group* bad = nullptr;
    CHECK(fskan_group_parse("nope(3)", &bad) == FSKAN_ERR_VALIDATION);
    CHECK(bad == nullptr);
    CHECK(std::strlen(fskan_last_error()) > 0);

    CHECK(fskan_group_parse(nullptr, &bad) == FSKAN_ERR_USAGE);
}

TEST_CASE("end-to-end pipeline through the C API") {
    TempDir dir;

    // generate data
    json gen{{"task", "sets"}, {"n", 4},           {"count_train", 45}, {"count_val", 21},
             {"count_test", 21}, {"noise_sigma", 0.05}, {"seed", 5},    {"out_dir", dir.path.string()}};
    char* report = nullptr;
    REQUIRE(fskan_gen_data(gen.dump().c_str(), &report) == FSKAN_OK);
    const auto gen_report = json::parse(take(report));
    CHECK(gen_report.at("files").size() == 3);

    // train a tiny model
    json cfg{{"task", "sets"},
             {"group", "S(4)"},
             {"model", "fskan"},
             {"widths", json::array({4})},
             {"epochs", 3},
             {"batch_size", 16},
             {"learning_rate", 0.003},
             {"reg_coeff", 0.01},
             {"seed", 1},
             {"train_data", dir.file("sets_train.jsonl")},
             {"val_data", dir.file("sets_val.jsonl")},
             {"test_data", dir.file("sets_test.jsonl")},
             {"output_dir", dir.path.string()}};
    REQUIRE(fskan_train(cfg.dump().c_str(), &report) == FSKAN_OK);
    const auto train_report = json::parse(take(report));
    CHECK(train_report.contains("test_acc"));
    const std::string model_path = train_report.at("model").get<std::string>();

    // evaluate the saved model: metrics must reproduce
    char* metrics = nullptr;
    REQUIRE(fskan_eval(model_path.c_str(), dir.file("sets_test.jsonl").c_str(), &metrics) == FSKAN_OK);
    const auto m1 = json::parse(take(metrics));
    REQUIRE(fskan_eval(model_path.c_str(), dir.file("sets_test.jsonl").c_str(), &metrics) == FSKAN_OK);
    const auto m2 = json::parse(take(metrics));
    CHECK(m1 == m2);
    CHECK(m1.at("accuracy").get<double>() == train_report.at("test_acc").get<double>());

    // export splines
    REQUIRE(fskan_export_splines(model_path.c_str(), dir.file("csv").c_str(), 32, -1.0, 1.0,
                                 &report) == FSKAN_OK);
    const auto exp = json::parse(take(report));
    CHECK(exp.at("files").size() > 0);
    for (const auto& f : exp.at("files"))
        CHECK(std::filesystem::exists(dir.file("csv/" + f.get<std::string>())));

    // unknown config keys are rejected
    json bad = cfg;
    bad["bogus_key"] = 1;
    CHECK(fskan_train(bad.dump().c_str(), &report) == FSKAN_ERR_VALIDATION);

    // missing files give a validation error
    CHECK(fskan_eval(dir.file("missing.json").c_str(), dir.file("sets_test.jsonl").c_str(),
                     &metrics) == FSKAN_ERR_VALIDATION);
}

TEST_CASE("conversion through the C API") {
    TempDir dir;

    // hand-build a small ps-mlp model file: one tied linear layer + pooling
    json spec{{"kind", "ps-mlp"},
              {"group", "S(3)"},
              {"layers", json::array()},
              {"head", json::array()}};
    json layer{{"k_out", 1}, {"k_in", 1}, {"d_in", 1}, {"d_out", 2}, {"activation", "relu"}};
    json orbits = json::array();
    orbits.push_back({{"rep_q", json::array({0})},
                      {"rep_p", json::array({0})},
                      {"orbit_type", "P:0,0"},
                      {"W", json::array({0.8, -0.5})},
                      {"b", json::array({0.1, -0.2})}});
    orbits.push_back({{"rep_q", json::array({0})},
                      {"rep_p", json::array({1})},
                      {"orbit_type", "P:0,1"},
                      {"W", json::array({0.3, 0.4})},
                      {"b", json::array({0.0, 0.05})}});
    layer["orbits"] = orbits;
    spec["layers"].push_back(layer);
    json inv{{"k_out", 0}, {"k_in", 1}, {"d_in", 2}, {"d_out", 1}, {"activation", "none"}};
    inv["orbits"] = json::array();
    inv["orbits"].push_back({{"rep_q", json::array()},
                             {"rep_p", json::array({0})},
                             {"orbit_type", "P:0"},
                             {"W", json::array({0.7, -0.9})},
                             {"b", json::array({0.2})}});
    spec["invariant"] = inv;

    const std::string mlp_path = dir.file("mlp.json");
    {
        std::ofstream out(mlp_path);
        out << json{{"format", "fskan-model"}, {"version", 1}, {"model", spec}}.dump();
    }

    char* report = nullptr;
    const std::string kan_path = dir.file("kan.json");
    REQUIRE(fskan_convert(mlp_path.c_str(), "mlp2kan", 0.0, -1.0, 1.0, kan_path.c_str(), &report) ==
            FSKAN_OK);
    auto rep = json::parse(take(report));
    CHECK(rep.at("sampled_sup_error").get<double>() <= 1e-9);

    const std::string back_path = dir.file("back.json");
    REQUIRE(fskan_convert(kan_path.c_str(), "kan2mlp", 1e-2, -1.0, 1.0, back_path.c_str(), &report) ==
            FSKAN_OK);
    rep = json::parse(take(report));
    CHECK(rep.at("sampled_sup_error").get<double>() < 1e-2);

    CHECK(fskan_convert(mlp_path.c_str(), "sideways", 1e-2, -1, 1, kan_path.c_str(), &report) ==
          FSKAN_ERR_VALIDATION);
}
