#include "fskan/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fskan/errors.hpp"

namespace fskan {

LossGrad loss_cross_entropy(const std::vector<double>& logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw ValidationError("cross entropy: label out of range");
    for (double v : logits)
        if (!std::isfinite(v)) throw ValidationError("cross entropy: non-finite logit");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    LossGrad out;
    out.loss = lse - logits[static_cast<std::size_t>(label)];
    out.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.grad[i] = std::exp(logits[i] - lse);
        if (static_cast<int>(i) == label) out.grad[i] -= 1.0;
    }
    return out;
}

LossGrad loss_mse(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.empty())
        throw ValidationError("mse: shape mismatch");
    LossGrad out;
    out.grad.resize(pred.size());
    const double inv = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        out.loss += d * d * inv;
        out.grad[i] = 2.0 * d * inv;
    }
    return out;
}

double reg_penalty(const std::vector<ParamSlot>& coeff_slots, double grad_scale) {
    const std::size_t N = coeff_slots.size();
    if (N == 0) return 0.0;
    double abs_sum = 0.0;
    for (const auto& s : coeff_slots) abs_sum += std::abs(*s.value);
    const double mean_abs = abs_sum / static_cast<double>(N);
    if (abs_sum == 0.0) return 0.0;

    double entropy = 0.0;
    for (const auto& s : coeff_slots) {
        const double p = std::abs(*s.value) / abs_sum;
        if (p > 0.0) entropy -= p * std::log(p);
    }
    if (grad_scale != 0.0) {
        for (const auto& s : coeff_slots) {
            const double c = *s.value;
            if (c == 0.0) continue;
            const double sign = c > 0.0 ? 1.0 : -1.0;
            const double p = std::abs(c) / abs_sum;
            const double d_mean = sign / static_cast<double>(N);
            const double d_entropy = -sign * (std::log(p) + entropy) / abs_sum;
            *s.grad += grad_scale * (d_mean + d_entropy);
        }
    }
    return mean_abs + entropy;
}

std::vector<ParamSlot> collect_spline_coeff_slots(FSKANetwork& net) {
    std::vector<ParamSlot> slots;
    auto add_sub = [&](KASubLayer& sub) {
        for (auto& f : sub.funcs) {
            if (f.g_coeffs.size() != f.coeffs.size()) f.zero_grad();
            for (std::size_t i = 0; i < f.coeffs.size(); ++i)
                slots.push_back({&f.coeffs[i], &f.g_coeffs[i]});
        }
    };
    for (auto& block : net.blocks)
        std::visit([&](auto& l) {
            for (auto& sub : l.sublayers()) add_sub(*sub);
        }, block.layer);
    if (net.invariant)
        for (auto& sub : net.invariant->inner.sublayers()) add_sub(*sub);
    for (auto& stage : net.head) add_sub(stage);
    return slots;
}

void AdamW::step(const std::vector<ParamSlot>& slots) {
    if (m.size() != slots.size()) {
        m.assign(slots.size(), 0.0);
        v.assign(slots.size(), 0.0);
    }
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < slots.size(); ++i) {
        double& p = *slots[i].value;
        const double g = *slots[i].grad;
        p -= learning_rate * weight_decay * p;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p -= learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
}

namespace {

std::vector<double> target_vector(const Sample& s) { return {s.target}; }

std::vector<double> model_eval_sample(Model& model, const std::vector<double>& x) {
    if (std::holds_alternative<FSKANetwork>(model))
        return std::get<FSKANetwork>(model).forward_batch({x}, Mode::eval)[0];
    return std::get<ParamSharingMLP>(model).forward(x);
}

void model_collect_slots(Model& model, std::vector<ParamSlot>& slots) {
    std::visit([&](auto& m) { m.collect_slots(slots); }, model);
}

void model_zero_grad(Model& model) {
    std::visit([](auto& m) { m.zero_grad(); }, model);
}

void model_note_updated(Model& model) {
    std::visit([](auto& m) { m.note_params_updated(); }, model);
}

}  // namespace

EvalMetrics evaluate_model(Model& model, const Dataset& data) {
    EvalMetrics out;
    out.has_accuracy = !data.regression;
    std::size_t correct = 0;
    for (const auto& s : data.samples) {
        const auto y = model_eval_sample(model, s.values);
        if (data.regression) {
            out.loss += loss_mse(y, target_vector(s)).loss;
        } else {
            out.loss += loss_cross_entropy(y, s.label).loss;
            const auto arg =
                std::distance(y.begin(), std::max_element(y.begin(), y.end()));
            if (static_cast<int>(arg) == s.label) ++correct;
        }
        ++out.count;
    }
    if (out.count > 0) out.loss /= static_cast<double>(out.count);
    if (out.has_accuracy && out.count > 0)
        out.accuracy = static_cast<double>(correct) / static_cast<double>(out.count);
    return out;
}

int model_num_params(const Model& model) {
    return std::visit([](const auto& m) { return m.num_params(); }, model);
}

TrainResult train_run(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& config) {
    if (train.samples.empty()) throw ValidationError("train_run: empty training set");
    if (config.epochs < 1 || config.batch_size < 1)
        throw ValidationError("train_run: epochs and batch_size must be positive");

    std::vector<ParamSlot> slots;
    model_collect_slots(model, slots);
    AdamW opt;
    opt.learning_rate = config.learning_rate;
    opt.weight_decay = config.weight_decay;

    const bool is_kan = std::holds_alternative<FSKANetwork>(model);
    std::vector<ParamSlot> coeff_slots;
    if (is_kan && config.reg_coeff != 0.0)
        coeff_slots = collect_spline_coeff_slots(std::get<FSKANetwork>(model));

    CounterRng rng(config.seed);
    std::vector<std::size_t> order(train.samples.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    std::vector<double> best_params;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::size_t B = end - start;
            model_zero_grad(model);
            double batch_loss = 0.0;

            if (is_kan) {
                auto& net = std::get<FSKANetwork>(model);
                std::vector<std::vector<double>> xs;
                xs.reserve(B);
                for (std::size_t i = start; i < end; ++i) xs.push_back(train.samples[order[i]].values);
                FSKANetwork::Cache cache;
                const auto ys = net.forward_batch(xs, Mode::train, &cache);
                std::vector<std::vector<double>> upstream(B);
                for (std::size_t i = 0; i < B; ++i) {
                    const auto& s = train.samples[order[start + i]];
                    LossGrad lg = train.regression ? loss_mse(ys[i], target_vector(s))
                                                   : loss_cross_entropy(ys[i], s.label);
                    batch_loss += lg.loss;
                    for (auto& g : lg.grad) g /= static_cast<double>(B);
                    upstream[i] = std::move(lg.grad);
                }
                batch_loss /= static_cast<double>(B);
                net.backward_batch(cache, upstream);
            } else {
                auto& mlp = std::get<ParamSharingMLP>(model);
                for (std::size_t i = start; i < end; ++i) {
                    const auto& s = train.samples[order[i]];
                    ParamSharingMLP::Cache cache;
                    const auto y = mlp.forward(s.values, &cache);
                    LossGrad lg = train.regression ? loss_mse(y, target_vector(s))
                                                   : loss_cross_entropy(y, s.label);
                    batch_loss += lg.loss;
                    for (auto& g : lg.grad) g /= static_cast<double>(B);
                    mlp.backward(cache, lg.grad);
                }
                batch_loss /= static_cast<double>(B);
            }

            if (!coeff_slots.empty())
                batch_loss += config.reg_coeff * reg_penalty(coeff_slots, config.reg_coeff);

            opt.step(slots);
            model_note_updated(model);
            epoch_loss += batch_loss;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = epoch_loss;
        const EvalMetrics vm = evaluate_model(model, val);
        m.val_loss = vm.loss;
        m.val_acc = vm.accuracy;
        m.has_acc = vm.has_accuracy;
        m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(m);

        const bool better = val.samples.empty() || result.best_epoch < 0 ||
                            (vm.has_accuracy ? vm.accuracy > result.best_val_acc
                                             : vm.loss < result.best_val_loss);
        if (better) {
            result.best_epoch = epoch;
            result.best_val_acc = vm.accuracy;
            result.best_val_loss = vm.loss;
            best_params.resize(slots.size());
            for (std::size_t i = 0; i < slots.size(); ++i) best_params[i] = *slots[i].value;
        }
    }

    if (!best_params.empty()) {
        for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].value = best_params[i];
        model_note_updated(model);
    }
    return result;
}

}  // namespace fskan
