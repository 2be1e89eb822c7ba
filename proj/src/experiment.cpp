#include "fskan/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fskan/errors.hpp"

namespace fskan {

using nlohmann::json;

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    static const std::set<std::string> known{
        "task",          "formula_id",     "group",         "model",        "widths",
        "invariant_width", "use_head",     "batch_norm",    "aggregation",  "spline_degree",
        "spline_intervals", "grid_range",  "input_grid_range", "mlp_width", "target_params",
        "epochs",        "batch_size",     "learning_rate", "reg_coeff",    "weight_decay",
        "seed",          "train_data",     "val_data",      "test_data",    "output_dir"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ValidationError("unknown config key '" + it.key() + "'");

    ExperimentConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("task", c.task);
    get("formula_id", c.formula_id);
    get("group", c.group);
    get("model", c.model);
    get("widths", c.widths);
    get("invariant_width", c.invariant_width);
    get("use_head", c.use_head);
    get("batch_norm", c.batch_norm);
    get("aggregation", c.aggregation);
    get("spline_degree", c.spline_degree);
    get("spline_intervals", c.spline_intervals);
    get("grid_range", c.grid_range);
    get("input_grid_range", c.input_grid_range);
    get("mlp_width", c.mlp_width);
    get("target_params", c.target_params);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("learning_rate", c.learning_rate);
    get("reg_coeff", c.reg_coeff);
    get("weight_decay", c.weight_decay);
    get("seed", c.seed);
    get("train_data", c.train_data);
    get("val_data", c.val_data);
    get("test_data", c.test_data);
    get("output_dir", c.output_dir);

    if (c.task != "signals" && c.task != "formula" && c.task != "sets")
        throw ValidationError("unknown task '" + c.task + "'");
    if (c.model != "fskan" && c.model != "efficient-fskan" && c.model != "ps-mlp")
        throw ValidationError("unknown model kind '" + c.model + "'");
    if (c.epochs < 1 || c.batch_size < 1) throw ValidationError("epochs and batch_size must be positive");
    if (c.widths.empty()) throw ValidationError("widths must not be empty");
    return c;
}

json ExperimentConfig::to_json() const {
    return json{{"task", task},
                {"formula_id", formula_id},
                {"group", group},
                {"model", model},
                {"widths", widths},
                {"invariant_width", invariant_width},
                {"use_head", use_head},
                {"batch_norm", batch_norm},
                {"aggregation", aggregation},
                {"spline_degree", spline_degree},
                {"spline_intervals", spline_intervals},
                {"grid_range", grid_range},
                {"input_grid_range", input_grid_range},
                {"mlp_width", mlp_width},
                {"target_params", target_params},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"reg_coeff", reg_coeff},
                {"weight_decay", weight_decay},
                {"seed", seed},
                {"train_data", train_data},
                {"val_data", val_data},
                {"test_data", test_data},
                {"output_dir", output_dir}};
}

DataLayout infer_layout(const GroupSpec& g, const Dataset& data) {
    if (data.samples.empty()) throw ValidationError("empty dataset");
    const auto& shape = data.samples.front().shape;
    std::int64_t total = 1;
    for (int d : shape) total *= d;
    DataLayout layout;
    if (!shape.empty() && g.degree() == shape.front()) {
        layout.positions = shape.front();
        layout.channels = static_cast<int>(total / shape.front());
    } else if (g.degree() == total) {
        layout.positions = total;
        layout.channels = 1;
    } else {
        throw ValidationError("group degree " + std::to_string(g.degree()) +
                              " does not match the data shape");
    }
    layout.output_dim = data.regression ? 1 : data.num_classes;
    return layout;
}

FSKANetwork build_fskan(const ExperimentConfig& cfg, const GroupSpec& g, const DataLayout& layout,
                        bool efficient) {
    CounterRng rng(cfg.seed);
    const Aggregation agg = cfg.aggregation == "mean" ? Aggregation::mean : Aggregation::sum;

    FSKANetwork net;
    net.group = g;
    int d_prev = layout.channels;
    for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
        SplineOptions opts;
        opts.degree = cfg.spline_degree;
        opts.intervals = cfg.spline_intervals;
        opts.base_weight_stddev = 1.0;
        const double r = i == 0 ? cfg.input_grid_range : cfg.grid_range;
        opts.grid_lo = -r;
        opts.grid_hi = r;
        const int w = cfg.widths[i];
        Block block;
        if (efficient)
            block.layer = EfficientFSKALayer(g, 1, 1, d_prev, w, agg, opts, rng);
        else
            block.layer = FSKALayer(g, 1, 1, d_prev, w, agg, opts, rng);
        if (cfg.batch_norm) block.norm = NormState(w);
        net.blocks.push_back(std::move(block));
        d_prev = w;
    }
    SplineOptions opts;
    opts.degree = cfg.spline_degree;
    opts.intervals = cfg.spline_intervals;
    opts.base_weight_stddev = 1.0;
    opts.grid_lo = -cfg.grid_range;
    opts.grid_hi = cfg.grid_range;
    const int inv_w = cfg.invariant_width > 0 ? cfg.invariant_width
                                              : (cfg.use_head ? d_prev : layout.output_dim);
    net.invariant = FSInvariantLayer(g, 1, d_prev, inv_w, agg, opts, rng);
    if (cfg.use_head) net.head.push_back(KASubLayer::learnable(layout.output_dim, inv_w, opts, rng));
    return net;
}

namespace {

ParamSharingMLP build_psmlp_width(const ExperimentConfig& cfg, const GroupSpec& g,
                                  const DataLayout& layout, int w, CounterRng& rng) {
    ParamSharingMLP mlp;
    mlp.group = g;
    int d_prev = layout.channels;
    for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
        mlp.layers.push_back(PSLayer::random(g, 1, 1, d_prev, w, Activation::relu, 0.2, rng));
        d_prev = w;
    }
    mlp.invariant = PSLayer::random(g, 0, 1, d_prev, w, Activation::relu, 0.2, rng);
    mlp.head.push_back(DenseLinear::random(layout.output_dim, w, Activation::none, 0.2, rng));
    return mlp;
}

}  // namespace

ParamSharingMLP build_psmlp(const ExperimentConfig& cfg, const GroupSpec& g, const DataLayout& layout) {
    CounterRng rng(cfg.seed);
    int width = cfg.mlp_width;
    if (width <= 0) {
        if (cfg.target_params <= 0) {
            width = cfg.widths.back();
        } else {
            // Smallest absolute parameter-count gap to the target.
            int best_w = 1;
            long best_gap = -1;
            for (int w = 1; w <= 2048; ++w) {
                CounterRng probe(1);
                const auto candidate = build_psmlp_width(cfg, g, layout, w, probe);
                const long gap = std::labs(static_cast<long>(candidate.num_params()) - cfg.target_params);
                if (best_gap < 0 || gap < best_gap) {
                    best_gap = gap;
                    best_w = w;
                }
                if (candidate.num_params() > 2 * cfg.target_params) break;
            }
            width = best_w;
        }
    }
    return build_psmlp_width(cfg, g, layout, width, rng);
}

Model build_model(const ExperimentConfig& cfg, const Dataset& train) {
    const GroupSpec g = GroupSpec::parse(cfg.group);
    const DataLayout layout = infer_layout(g, train);
    if (cfg.model == "ps-mlp") return build_psmlp(cfg, g, layout);
    return build_fskan(cfg, g, layout, cfg.model == "efficient-fskan");
}

void write_metrics_jsonl(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write metrics file '" + path + "'");
    for (const auto& m : history) {
        json j{{"epoch", m.epoch},
               {"train_loss", m.train_loss},
               {"val_loss", m.val_loss},
               {"val_acc", m.has_acc ? json(m.val_acc) : json(nullptr)},
               {"wall_ms", m.wall_ms}};
        out << j.dump() << "\n";
    }
}

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
    if (cfg.train_data.empty()) throw ValidationError("config needs train_data");
    const Dataset train = load_dataset_jsonl(cfg.train_data);
    const Dataset val = cfg.val_data.empty() ? Dataset{} : load_dataset_jsonl(cfg.val_data);

    Model model = build_model(cfg, train);

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.reg_coeff = cfg.reg_coeff;
    tc.weight_decay = cfg.weight_decay;
    tc.seed = cfg.seed;

    RunArtifacts artifacts;
    artifacts.num_params = model_num_params(model);
    artifacts.train = train_run(model, train, val, tc);

    std::filesystem::create_directories(cfg.output_dir);
    artifacts.model_path = cfg.output_dir + "/model.json";
    artifacts.metrics_path = cfg.output_dir + "/metrics.jsonl";
    if (std::holds_alternative<FSKANetwork>(model))
        save_model_file(artifacts.model_path, network_to_json(std::get<FSKANetwork>(model)));
    else
        save_model_file(artifacts.model_path, mlp_to_json(std::get<ParamSharingMLP>(model)));
    write_metrics_jsonl(artifacts.metrics_path, artifacts.train.history);

    if (!cfg.test_data.empty()) {
        const Dataset test = load_dataset_jsonl(cfg.test_data);
        artifacts.test = evaluate_model(model, test);
        artifacts.has_test = true;
    }
    return artifacts;
}

}  // namespace fskan
