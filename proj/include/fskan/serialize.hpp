#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fskan/expressivity.hpp"
#include "fskan/network.hpp"

namespace fskan {

/// One data point: row-major values with an explicit shape, plus either a
/// class label or a regression target.
struct Sample {
    std::vector<int> shape;
    std::vector<double> values;
    int label = -1;
    double target = 0.0;
    bool has_target = false;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    bool regression = false;
};

nlohmann::json network_to_json(const FSKANetwork& net);
FSKANetwork network_from_json(const nlohmann::json& j);

nlohmann::json mlp_to_json(const ParamSharingMLP& mlp);
ParamSharingMLP mlp_from_json(const nlohmann::json& j);

/// Wraps the payload in the versioned model container and writes it.
void save_model_file(const std::string& path, const nlohmann::json& payload);
/// Reads and validates the container; rejects unknown versions.
nlohmann::json load_model_file(const std::string& path);
std::string model_kind(const nlohmann::json& model);

void save_dataset_jsonl(const std::string& path, const Dataset& data);
Dataset load_dataset_jsonl(const std::string& path);

/// Writes one CSV of (x,value) samples per shared univariate function into
/// `dir`; returns the file names written.
std::vector<std::string> export_spline_csvs(const FSKANetwork& net, const std::string& dir,
                                            int num_samples, double lo, double hi);

nlohmann::json orbits_to_json(const GroupSpec& g, int k_out, int k_in, bool include_table);

}  // namespace fskan
