#pragma once

#include <string>

#include <json.hpp>

#include "fskan/train.hpp"

namespace fskan {

/// Everything one training run needs; parses from JSON with unknown keys
/// rejected.
struct ExperimentConfig {
    std::string task = "signals";  // signals | formula | sets
    std::string formula_id = "gauss_sum_sq";
    std::string group;                  // e.g. "S(5)"
    std::string model = "fskan";        // fskan | efficient-fskan | ps-mlp
    std::vector<int> widths = {16, 16};
    int invariant_width = 0;            // 0 = last width
    bool use_head = true;
    bool batch_norm = true;
    std::string aggregation = "sum";
    int spline_degree = 3;
    int spline_intervals = 5;
    double grid_range = 1.0;
    double input_grid_range = 3.0;
    int mlp_width = 0;                  // 0 = match target_params
    int target_params = 0;              // 0 = no matching constraint

    int epochs = 60;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double reg_coeff = 1e-2;
    double weight_decay = 0.0;
    std::uint64_t seed = 1;

    std::string train_data;
    std::string val_data;
    std::string test_data;
    std::string output_dir = ".";

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// (positions, channels) interpretation of a sample shape under a group.
struct DataLayout {
    std::int64_t positions = 0;
    int channels = 0;
    int output_dim = 0;
};
DataLayout infer_layout(const GroupSpec& g, const Dataset& data);

FSKANetwork build_fskan(const ExperimentConfig& cfg, const GroupSpec& g, const DataLayout& layout,
                        bool efficient);
/// DeepSets-style baseline; when cfg.mlp_width == 0 the width is chosen to
/// match cfg.target_params as closely as possible.
ParamSharingMLP build_psmlp(const ExperimentConfig& cfg, const GroupSpec& g, const DataLayout& layout);

Model build_model(const ExperimentConfig& cfg, const Dataset& train);

struct RunArtifacts {
    std::string model_path;
    std::string metrics_path;
    TrainResult train;
    EvalMetrics test;
    bool has_test = false;
    int num_params = 0;
};

/// Loads the datasets, builds the model, trains, writes model + metrics
/// files, and evaluates on the test split when given.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

void write_metrics_jsonl(const std::string& path, const std::vector<EpochMetrics>& history);

}  // namespace fskan
