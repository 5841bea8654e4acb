#include "readmit/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "readmit/csv.hpp"
#include "readmit/error.hpp"
#include "readmit/eval.hpp"
#include "readmit/rng.hpp"

namespace readmit {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_widths(const Dataset& data, std::size_t width, const char* which) {
    if (data.features.size() != data.labels.size()) {
        fail(ErrorCode::DimensionMismatch, std::string(which) + " features and labels differ in length");
    }
    for (const auto& row : data.features) {
        if (row.size() != width) {
            fail(ErrorCode::DimensionMismatch,
                 std::string(which) + " row width " + std::to_string(row.size()) +
                     " does not match " + std::to_string(width));
        }
    }
}

std::pair<double, double> class_weights(const Dataset& data, bool enabled) {
    if (!enabled) return {1.0, 1.0};
    std::size_t n_pos = 0;
    for (bool y : data.labels) n_pos += y ? 1 : 0;
    const std::size_t n_neg = data.labels.size() - n_pos;
    const double n = static_cast<double>(data.labels.size());
    // Inverse-frequency weighting; an absent class keeps weight 1 so the
    // loss stays defined.
    const double w_pos = n_pos == 0 ? 1.0 : n / (2.0 * static_cast<double>(n_pos));
    const double w_neg = n_neg == 0 ? 1.0 : n / (2.0 * static_cast<double>(n_neg));
    return {w_pos, w_neg};
}

}  // namespace

double logistic_loss(const Dataset& data, const std::vector<double>& w, double bias,
                     double w_pos, double w_neg) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double z = bias;
        const auto& x = data.features[i];
        for (std::size_t d = 0; d < x.size(); ++d) z += w[d] * x[d];
        const double y = data.labels[i] ? 1.0 : 0.0;
        const double cw = data.labels[i] ? w_pos : w_neg;
        // Numerically stable cross-entropy: max(z,0) - z*y + log(1+e^-|z|).
        total += cw * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z))));
    }
    return total / static_cast<double>(data.size());
}

std::vector<double> logistic_loss_grad(const Dataset& data, const std::vector<double>& w,
                                       double bias, double w_pos, double w_neg) {
    std::vector<double> grad(w.size() + 1, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        double z = bias;
        const auto& x = data.features[i];
        for (std::size_t d = 0; d < x.size(); ++d) z += w[d] * x[d];
        const double y = data.labels[i] ? 1.0 : 0.0;
        const double cw = data.labels[i] ? w_pos : w_neg;
        const double residual = cw * (sigmoid(z) - y);
        for (std::size_t d = 0; d < x.size(); ++d) grad[d] += residual * x[d];
        grad[w.size()] += residual;
    }
    const double n = static_cast<double>(data.size());
    for (double& g : grad) g /= n;
    return grad;
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
    if (train_set.size() == 0) fail(ErrorCode::BadArgument, "empty training set");
    if (cfg.batch_size == 0 || cfg.eval_every == 0 || cfg.patience == 0 || cfg.lr <= 0.0 ||
        cfg.lr_decay <= 0.0) {
        fail(ErrorCode::BadArgument, "training config values must be positive");
    }
    const std::size_t width = train_set.features.front().size();
    check_widths(train_set, width, "train");
    check_widths(val_set, width, "validation");
    bool val_pos = false, val_neg = false;
    for (bool y : val_set.labels) (y ? val_pos : val_neg) = true;
    if (!val_pos || !val_neg) {
        fail(ErrorCode::SingleClassValidation, "validation set must contain both classes");
    }

    const auto [w_pos, w_neg] = class_weights(train_set, cfg.class_weighting);
    std::vector<double> w(width, 0.0);
    double bias = 0.0;

    TrainResult result;
    std::vector<double> best_w = w;
    double best_bias = bias;
    double best = -1.0;  // any first AUPRC improves on this
    double lr = cfg.lr;
    std::size_t streak = 0;
    std::size_t step = 0;

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    Dataset batch;
    bool stop = false;
    while (!stop) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            batch.features.clear();
            batch.labels.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch.features.push_back(train_set.features[order[i]]);
                batch.labels.push_back(train_set.labels[order[i]]);
            }
            const auto grad = logistic_loss_grad(batch, w, bias, w_pos, w_neg);
            for (std::size_t d = 0; d < width; ++d) w[d] -= lr * grad[d];
            bias -= lr * grad[width];
            ++step;

            if (step % cfg.eval_every != 0) continue;
            ScoredSet scored;
            scored.reserve(val_set.size());
            for (std::size_t i = 0; i < val_set.size(); ++i) {
                double z = bias;
                for (std::size_t d = 0; d < width; ++d) z += w[d] * val_set.features[i][d];
                scored.push_back(Scored{"", sigmoid(z), val_set.labels[i]});
            }
            const double score = auprc(scored);
            TrainLogEntry entry;
            entry.step = step;
            entry.val_auprc = score;
            if (score > best) {
                best = score;
                best_w = w;
                best_bias = bias;
                entry.checkpointed = true;
                streak = 0;
                lr = cfg.lr;  // restored so the decay schedule restarts
            } else {
                ++streak;
                lr *= cfg.lr_decay;
            }
            entry.lr = lr;
            result.log.push_back(entry);
            if (streak >= cfg.patience) stop = true;
        }
    }

    result.model.weights = std::move(best_w);
    result.model.bias = best_bias;
    result.best_val_auprc = best;
    result.steps = step;
    return result;
}

std::vector<double> predict(const LinearModel& model,
                            const std::vector<std::vector<double>>& features) {
    std::vector<double> out;
    out.reserve(features.size());
    for (const auto& x : features) out.push_back(predict_one(model, x));
    return out;
}

double predict_one(const LinearModel& model, const std::vector<double>& features) {
    if (features.size() != model.weights.size()) {
        fail(ErrorCode::DimensionMismatch,
             "feature width " + std::to_string(features.size()) + " does not match model width " +
                 std::to_string(model.weights.size()));
    }
    double z = model.bias;
    for (std::size_t d = 0; d < features.size(); ++d) z += model.weights[d] * features[d];
    return sigmoid(z);
}

nlohmann::json LinearModel::to_json() const {
    return {{"weights", weights}, {"bias", bias}, {"feature_spec", feature_spec}};
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
    try {
        LinearModel model;
        model.weights = j.at("weights").get<std::vector<double>>();
        model.bias = j.at("bias").get<double>();
        model.feature_spec = j.at("feature_spec").get<std::string>();
        return model;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("malformed model json: ") + e.what());
    }
}

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogEntry>& log) {
    out << "step,lr,val_auprc,checkpointed\n";
    for (const TrainLogEntry& e : log) {
        write_csv_row(out, {std::to_string(e.step), format_double(e.lr),
                            format_double(e.val_auprc), e.checkpointed ? "1" : "0"});
    }
}

}  // namespace readmit
