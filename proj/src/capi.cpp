#include "fskan_c.h"

#include <cstring>
#include <filesystem>
#include <set>
#include <string>

#include "fskan/datagen.hpp"
#include "fskan/errors.hpp"
#include "fskan/experiment.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
fskan_status guarded(Fn&& fn) {
    try {
        fn();
        return FSKAN_OK;
    } catch (const fskan::NumericError& e) {
        g_last_error = e.what();
        return FSKAN_ERR_NUMERIC;
    } catch (const fskan::ValidationError& e) {
        g_last_error = e.what();
        return FSKAN_ERR_VALIDATION;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return FSKAN_ERR_USAGE;
    }
}

}  // namespace

struct fskan_group {
    fskan::GroupSpec spec;
};

extern "C" {

const char* fskan_version(void) { return "0.1.0"; }

const char* fskan_last_error(void) { return g_last_error.c_str(); }

void fskan_string_free(char* s) { std::free(s); }

fskan_status fskan_group_parse(const char* text, fskan_group** out) {
    if (!text || !out) {
        g_last_error = "null argument";
        return FSKAN_ERR_USAGE;
    }
    *out = nullptr;
    return guarded([&] { *out = new fskan_group{fskan::GroupSpec::parse(text)}; });
}

void fskan_group_free(fskan_group* g) { delete g; }

int fskan_group_degree(const fskan_group* g) { return g ? g->spec.degree() : -1; }

fskan_status fskan_orbits_json(const fskan_group* g, int k_out, int k_in, int include_table,
                               char** json_out) {
    if (!g || !json_out) {
        g_last_error = "null argument";
        return FSKAN_ERR_USAGE;
    }
    return guarded([&] {
        const auto j = fskan::orbits_to_json(g->spec, k_out, k_in, include_table != 0);
        *json_out = dup_string(j.dump(2));
    });
}

int fskan_stabilizer_orbit_count(const fskan_group* g, int q) {
    if (!g) {
        g_last_error = "null argument";
        return -FSKAN_ERR_USAGE;
    }
    int result = 0;
    const fskan_status st = guarded([&] { result = fskan::stabilizer_orbit_count(g->spec, q); });
    return st == FSKAN_OK ? result : -static_cast<int>(st);
}

fskan_status fskan_gen_data(const char* config_json, char** report_json) {
    if (!config_json) {
        g_last_error = "null argument";
        return FSKAN_ERR_USAGE;
    }
    return guarded([&] {
        const auto j = nlohmann::json::parse(config_json);
        static const std::set<std::string> known{"task",       "n",          "T",       "count_train",
                                                 "count_val",  "count_test", "noise_sigma",
                                                 "formula_id", "box_lo",     "box_hi",  "seed",
                                                 "out_dir"};
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!known.count(it.key()))
                throw fskan::ValidationError("unknown config key '" + it.key() + "'");
        const std::string task = j.at("task").get<std::string>();
        const int n = j.value("n", 5);
        const int T = j.value("T", 20);
        const int count_train = j.value("count_train", 600);
        const int count_val = j.value("count_val", 150);
        const int count_test = j.value("count_test", 300);
        const double noise = j.value("noise_sigma", 0.3);
        const std::string formula = j.value("formula_id", std::string("gauss_sum_sq"));
        const double box_lo = j.value("box_lo", -1.0);
        const double box_hi = j.value("box_hi", 1.0);
        const std::uint64_t seed = j.value("seed", 1ull);
        const std::string out_dir = j.value("out_dir", std::string("."));

        std::filesystem::create_directories(out_dir);
        auto make = [&](int count, std::uint64_t s) {
            if (task == "signals") return fskan::gen_signals(n, T, count, noise, s);
            if (task == "formula") return fskan::gen_formula(formula, n, count, box_lo, box_hi, s);
            if (task == "sets") return fskan::gen_set_classification(n, count, s, noise);
            throw fskan::ValidationError("unknown task '" + task + "'");
        };
        nlohmann::json files = nlohmann::json::array();
        const char* splits[3] = {"train", "val", "test"};
        const int counts[3] = {count_train, count_val, count_test};
        for (int i = 0; i < 3; ++i) {
            if (counts[i] <= 0) continue;
            const std::string path = out_dir + "/" + task + "_" + splits[i] + ".jsonl";
            fskan::save_dataset_jsonl(path, make(counts[i], seed + static_cast<std::uint64_t>(i)));
            files.push_back(path);
        }
        if (report_json)
            *report_json = dup_string(nlohmann::json{{"task", task}, {"files", files}}.dump(2));
    });
}

fskan_status fskan_train(const char* config_json, char** report_json) {
    if (!config_json) {
        g_last_error = "null argument";
        return FSKAN_ERR_USAGE;
    }
    return guarded([&] {
        const auto cfg = fskan::ExperimentConfig::from_json(nlohmann::json::parse(config_json));
        const auto artifacts = fskan::run_experiment(cfg);
        nlohmann::json j{{"model", artifacts.model_path},
                         {"metrics", artifacts.metrics_path},
                         {"num_params", artifacts.num_params},
                         {"best_epoch", artifacts.train.best_epoch},
                         {"best_val_acc", artifacts.train.best_val_acc},
                         {"best_val_loss", artifacts.train.best_val_loss}};
        if (artifacts.has_test) {
            if (artifacts.test.has_accuracy)
                j["test_acc"] = artifacts.test.accuracy;
            else
                j["test_rmse"] = std::sqrt(artifacts.test.loss);
        }
        if (report_json) *report_json = dup_string(j.dump(2));
    });
}

fskan_status fskan_eval(const char* model_path, const char* data_path, char** metrics_json) {
    if (!model_path || !data_path) {
        g_last_error = "null argument";
        return FSKAN_ERR_USAGE;
    }
    return guarded([&] {
        const auto payload = fskan::load_model_file(model_path);
        fskan::Model model;
        if (fskan::model_kind(payload) == "fskan")
            model = fskan::network_from_json(payload);
        else
            model = fskan::mlp_from_json(payload);
        const auto data = fskan::load_dataset_jsonl(data_path);
        const auto metrics = fskan::evaluate_model(model, data);
        nlohmann::json j{{"count", metrics.count}, {"loss", metrics.loss}};
        if (metrics.has_accuracy)
            j["accuracy"] = metrics.accuracy;
        else
            j["rmse"] = std::sqrt(metrics.loss);
        if (metrics_json) *metrics_json = dup_string(j.dump(2));
    });
}

fskan_status fskan_convert(const char* model_path, const char* direction, double eps,
                           double domain_lo, double domain_hi, const char* out_model_path,
                           char** report_json) {
    if (!model_path || !direction || !out_model_path) {
        g_last_error = "null argument";
        return FSKAN_ERR_USAGE;
    }
    return guarded([&] {
        const auto payload = fskan::load_model_file(model_path);
        const std::string dir = direction;
        nlohmann::json report;
        if (dir == "mlp2kan") {
            const auto mlp = fskan::mlp_from_json(payload);
            const std::vector<fskan::Interval> domain(
                static_cast<std::size_t>(mlp.input_channels()), fskan::Interval{domain_lo, domain_hi});
            auto net = fskan::mlp_to_fskan(mlp, domain);
            // Sampled verification of the exactness contract.
            fskan::CounterRng rng(99);
            double sup = 0.0;
            std::vector<double> x(static_cast<std::size_t>(mlp.input_positions() * mlp.input_channels()));
            for (int t = 0; t < 1000; ++t) {
                for (auto& v : x) v = rng.uniform(domain_lo, domain_hi);
                const auto a = mlp.forward(x);
                const auto b = net.forward_batch({x}, fskan::Mode::eval)[0];
                for (std::size_t i = 0; i < a.size(); ++i) sup = std::max(sup, std::abs(a[i] - b[i]));
            }
            fskan::save_model_file(out_model_path, fskan::network_to_json(net));
            report = {{"direction", dir}, {"sampled_sup_error", sup}, {"model", out_model_path}};
            if (sup > 1e-9)
                throw fskan::NumericError("mlp2kan verification failed: sampled sup error " +
                                          std::to_string(sup) + " exceeds 1e-9");
        } else if (dir == "kan2mlp") {
            const auto net = fskan::network_from_json(payload);
            const std::vector<fskan::Interval> domain(
                static_cast<std::size_t>(net.input_channels()), fskan::Interval{domain_lo, domain_hi});
            fskan::FskanToMlpReport rep;
            const auto mlp = fskan::fskan_to_mlp(net, domain, eps, {}, &rep);
            fskan::save_model_file(out_model_path, fskan::mlp_to_json(mlp));
            report = {{"direction", dir},
                      {"eps", eps},
                      {"sampled_sup_error", rep.sampled_sup_error},
                      {"max_nodes_used", rep.max_nodes_used},
                      {"bisect_rounds", rep.bisect_rounds},
                      {"model", out_model_path}};
        } else {
            throw fskan::ValidationError("direction must be mlp2kan or kan2mlp");
        }
        if (report_json) *report_json = dup_string(report.dump(2));
    });
}

fskan_status fskan_export_splines(const char* model_path, const char* out_dir, int num_samples,
                                  double lo, double hi, char** report_json) {
    if (!model_path || !out_dir) {
        g_last_error = "null argument";
        return FSKAN_ERR_USAGE;
    }
    return guarded([&] {
        const auto payload = fskan::load_model_file(model_path);
        if (fskan::model_kind(payload) != "fskan")
            throw fskan::ValidationError("export-splines needs an fskan model");
        const auto net = fskan::network_from_json(payload);
        const auto files = fskan::export_spline_csvs(net, out_dir, num_samples, lo, hi);
        nlohmann::json j{{"dir", out_dir}, {"files", files}};
        if (report_json) *report_json = dup_string(j.dump(2));
    });
}

}  // extern "C"
