#pragma once

#include <variant>
#include <vector>

#include "fskan/expressivity.hpp"
#include "fskan/network.hpp"
#include "fskan/serialize.hpp"

namespace fskan {

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Softmax cross-entropy with log-sum-exp stabilization.
LossGrad loss_cross_entropy(const std::vector<double>& logits, int label);
/// Mean squared error over elements.
LossGrad loss_mse(const std::vector<double>& pred, const std::vector<double>& target);

/// Spline-coefficient regularizer: mean absolute coefficient magnitude plus
/// the entropy of the normalized magnitudes over all shared functions.
/// Accumulates grad_scale times its gradient into the slots' grad buffers.
double reg_penalty(const std::vector<ParamSlot>& coeff_slots, double grad_scale);

/// Coefficient slots of every shared spline in the network (w_base/w_spline
/// excluded); each shared function counted once.
std::vector<ParamSlot> collect_spline_coeff_slots(FSKANetwork& net);

/// Decoupled-weight-decay Adam.
struct AdamW {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::int64_t step_count = 0;
    std::vector<double> m;
    std::vector<double> v;

    void step(const std::vector<ParamSlot>& slots);
};

struct TrainConfig {
    int epochs = 60;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double reg_coeff = 1e-2;  // spline regularizer scale (FS-KAN models)
    double weight_decay = 0.0;
    std::uint64_t seed = 1;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    bool has_acc = false;
    double wall_ms = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    int best_epoch = -1;
    double best_val_acc = 0.0;
    double best_val_loss = 0.0;
};

using Model = std::variant<FSKANetwork, ParamSharingMLP>;

struct EvalMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
    bool has_accuracy = false;
    std::size_t count = 0;
};

EvalMetrics evaluate_model(Model& model, const Dataset& data);

/// Deterministic mini-batch training; selects the best-validation checkpoint
/// (highest accuracy for classification, lowest loss for regression) and
/// restores it before returning.
TrainResult train_run(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& config);

int model_num_params(const Model& model);

}  // namespace fskan
