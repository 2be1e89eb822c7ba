// Command-line surface over the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fskan_c.h"

namespace {

int fail(fskan_status st) {
    std::cerr << "error: " << fskan_last_error() << "\n";
    return static_cast<int>(st);
}

void print_string(char* s) {
    if (!s) return;
    std::cout << s << "\n";
    fskan_string_free(s);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("config", "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Function-sharing KAN toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", fskan_version());

    // orbits
    std::string group_text;
    int k_out = 1, k_in = 1;
    bool full_table = false;
    auto* orbits = app.add_subcommand("orbits", "Print orbit counts, representatives and table as JSON");
    orbits->add_option("group", group_text, "group spec, e.g. S(3), C(5), prod(S(3),C(5))")->required();
    orbits->add_option("k_out", k_out, "output tuple order (default 1)");
    orbits->add_option("k_in", k_in, "input tuple order (default 1)");
    orbits->add_flag("--full", full_table, "always include the full table");

    // gen-data
    std::string gen_config;
    auto* gendata = app.add_subcommand("gen-data", "Generate train/val/test dataset splits");
    gendata->add_option("config", gen_config, "JSON config file, or inline JSON")->required();

    // train
    std::string train_config;
    auto* train = app.add_subcommand("train", "Train a model from a config file");
    train->add_option("config", train_config, "JSON config file, or inline JSON")->required();

    // eval
    std::string model_path, data_path;
    auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset");
    eval->add_option("model", model_path, "model.json")->required();
    eval->add_option("data", data_path, "dataset .jsonl")->required();

    // convert
    std::string conv_model, conv_dir, conv_out;
    double conv_eps = 1e-2, dom_lo = -1.0, dom_hi = 1.0;
    auto* convert = app.add_subcommand("convert", "Convert between ps-mlp and fskan models");
    convert->add_option("model", conv_model, "input model.json")->required();
    convert->add_option("--direction", conv_dir, "mlp2kan | kan2mlp")->required();
    convert->add_option("--eps", conv_eps, "target sup error for kan2mlp (default 1e-2)");
    convert->add_option("--domain-lo", dom_lo, "per-channel domain lower bound (default -1)");
    convert->add_option("--domain-hi", dom_hi, "per-channel domain upper bound (default 1)");
    convert->add_option("--out", conv_out, "output model path")->required();

    // export-splines
    std::string exp_model, exp_dir;
    int exp_samples = 256;
    double exp_lo = -1.0, exp_hi = 1.0;
    auto* exportsp = app.add_subcommand("export-splines", "Write (x,value) CSV samples per shared function");
    exportsp->add_option("model", exp_model, "model.json")->required();
    exportsp->add_option("--out", exp_dir, "output directory")->required();
    exportsp->add_option("--samples", exp_samples, "points per function (default 256)");
    exportsp->add_option("--lo", exp_lo, "sample range lower bound (default -1)");
    exportsp->add_option("--hi", exp_hi, "sample range upper bound (default 1)");

    CLI11_PARSE(app, argc, argv);

    auto config_text = [&](const std::string& arg) {
        if (!arg.empty() && (arg.front() == '{' || arg.front() == '['))
            return arg;  // inline JSON
        return read_file(arg);
    };

    if (*orbits) {
        fskan_group* g = nullptr;
        fskan_status st = fskan_group_parse(group_text.c_str(), &g);
        if (st != FSKAN_OK) return fail(st);
        const bool include_table = full_table || fskan_group_degree(g) <= 8;
        char* json = nullptr;
        st = fskan_orbits_json(g, k_out, k_in, include_table ? 1 : 0, &json);
        fskan_group_free(g);
        if (st != FSKAN_OK) return fail(st);
        print_string(json);
        return 0;
    }
    if (*gendata) {
        char* report = nullptr;
        const fskan_status st = fskan_gen_data(config_text(gen_config).c_str(), &report);
        if (st != FSKAN_OK) return fail(st);
        print_string(report);
        return 0;
    }
    if (*train) {
        char* report = nullptr;
        const fskan_status st = fskan_train(config_text(train_config).c_str(), &report);
        if (st != FSKAN_OK) return fail(st);
        print_string(report);
        return 0;
    }
    if (*eval) {
        char* metrics = nullptr;
        const fskan_status st = fskan_eval(model_path.c_str(), data_path.c_str(), &metrics);
        if (st != FSKAN_OK) return fail(st);
        print_string(metrics);
        return 0;
    }
    if (*convert) {
        char* report = nullptr;
        const fskan_status st = fskan_convert(conv_model.c_str(), conv_dir.c_str(), conv_eps, dom_lo,
                                              dom_hi, conv_out.c_str(), &report);
        print_string(report);
        if (st != FSKAN_OK) return fail(st);
        return 0;
    }
    if (*exportsp) {
        char* report = nullptr;
        const fskan_status st = fskan_export_splines(exp_model.c_str(), exp_dir.c_str(), exp_samples,
                                                     exp_lo, exp_hi, &report);
        if (st != FSKAN_OK) return fail(st);
        print_string(report);
        return 0;
    }
    return 1;
}
