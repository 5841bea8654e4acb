#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace readmit {

struct Dataset {
    std::vector<std::string> stay_ids;
    std::vector<std::vector<double>> features;  // one row per stay, equal widths
    std::vector<bool> labels;

    std::size_t size() const { return features.size(); }
};

struct TrainConfig {
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double lr_decay = 0.97;
    std::size_t eval_every = 200;
    std::size_t patience = 7;
    std::uint64_t seed = 0;
    bool class_weighting = true;
};

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;
    std::string feature_spec;  // free-form tag, e.g. the encoding variant

    nlohmann::json to_json() const;
    static LinearModel from_json(const nlohmann::json& j);
    bool operator==(const LinearModel&) const = default;
};

struct TrainLogEntry {
    std::size_t step = 0;
    double lr = 0.0;  // rate in effect after this evaluation's decision
    double val_auprc = 0.0;
    bool checkpointed = false;
};

struct TrainResult {
    LinearModel model;  // best checkpoint by validation AUPRC
    std::vector<TrainLogEntry> log;
    double best_val_auprc = 0.0;
    std::size_t steps = 0;
};

// Weighted logistic loss and its gradient, exposed for finite-difference
// checking. weights/bias gradient laid out as [d_w..., d_bias].
double logistic_loss(const Dataset& data, const std::vector<double>& w, double bias,
                     double w_pos, double w_neg);
std::vector<double> logistic_loss_grad(const Dataset& data, const std::vector<double>& w,
                                       double bias, double w_pos, double w_neg);

// Mini-batch SGD over shuffled epochs. Every eval_every steps validation
// AUPRC is computed; a strict improvement checkpoints the model and restores
// the initial learning rate, otherwise the rate decays. Training stops after
// `patience` consecutive non-improvements and returns the best checkpoint.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);

std::vector<double> predict(const LinearModel& model,
                            const std::vector<std::vector<double>>& features);
double predict_one(const LinearModel& model, const std::vector<double>& features);

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogEntry>& log);

}  // namespace readmit
