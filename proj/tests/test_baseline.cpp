#include <doctest.h>

#include <cmath>
#include <sstream>

#include "readmit/baseline.hpp"
#include "readmit/error.hpp"
#include "readmit/eval.hpp"
#include "readmit/rng.hpp"

using namespace readmit;

namespace {

Dataset separable_2d(int n, std::uint64_t seed) {
    Dataset d;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const bool pos = i % 2 == 0;
        const double cx = pos ? 1.0 : -1.0;
        d.stay_ids.push_back("s" + std::to_string(i));
        d.features.push_back({cx + rng.normal() * 0.1, cx + rng.normal() * 0.1});
        d.labels.push_back(pos);
    }
    return d;
}

// Validation scores can never move: every feature vector is identical, so
// the ranking is frozen no matter what the weights do.
Dataset constant_val() {
    Dataset d;
    for (int i = 0; i < 6; ++i) {
        d.stay_ids.push_back("v" + std::to_string(i));
        d.features.push_back({0.0, 0.0});
        d.labels.push_back(i < 2);
    }
    return d;
}

}  // namespace

TEST_CASE("analytic gradient matches central finite differences") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 6, dim = 4;
        Dataset data;
        for (int i = 0; i < n; ++i) {
            std::vector<double> x;
            for (int j = 0; j < dim; ++j) x.push_back(rng.normal());
            data.features.push_back(std::move(x));
            data.labels.push_back(rng.uniform01() < 0.4);
            data.stay_ids.push_back("s" + std::to_string(i));
        }
        if (std::none_of(data.labels.begin(), data.labels.end(), [](bool b) { return b; })) {
            data.labels[0] = true;
        }
        std::vector<double> w;
        for (int j = 0; j < dim; ++j) w.push_back(rng.normal() * 0.5);
        const double bias = rng.normal() * 0.5;
        const double w_pos = 1.3, w_neg = 0.8;

        const auto grad = logistic_loss_grad(data, w, bias, w_pos, w_neg);
        REQUIRE(grad.size() == static_cast<std::size_t>(dim) + 1);

        const double eps = 1e-6;
        for (int j = 0; j <= dim; ++j) {
            auto wp = w, wm = w;
            double bp = bias, bm = bias;
            if (j < dim) {
                wp[j] += eps;
                wm[j] -= eps;
            } else {
                bp += eps;
                bm -= eps;
            }
            const double fd = (logistic_loss(data, wp, bp, w_pos, w_neg) -
                               logistic_loss(data, wm, bm, w_pos, w_neg)) /
                              (2.0 * eps);
            const double denom = std::max({std::fabs(fd), std::fabs(grad[j]), 1e-8});
            CHECK(std::fabs(fd - grad[j]) / denom < 1e-5);
        }
    }
}

TEST_CASE("loss is finite for extreme scores") {
    Dataset d;
    d.stay_ids = {"a", "b"};
    d.features = {{1000.0}, {-1000.0}};
    d.labels = {true, false};
    const double loss = logistic_loss(d, {1.0}, 0.0, 1.0, 1.0);
    CHECK(std::isfinite(loss));
    CHECK(loss < 1e-6);  // both confidently correct
    const double wrong = logistic_loss(d, {-1.0}, 0.0, 1.0, 1.0);
    CHECK(std::isfinite(wrong));
    CHECK(wrong > 100.0);
}

TEST_CASE("separable data reaches perfect validation AUPRC") {
    const Dataset train_set = separable_2d(64, 1);
    const Dataset val_set = separable_2d(32, 2);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.lr = 0.5;
    cfg.eval_every = 50;
    cfg.patience = 7;
    cfg.seed = 3;
    const TrainResult r = train(train_set, val_set, cfg);
    CHECK(r.best_val_auprc == 1.0);
    CHECK(r.steps <= 2000);
}

TEST_CASE("patience one stops at the second evaluation") {
    const Dataset train_set = separable_2d(16, 4);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.eval_every = 10;
    cfg.patience = 1;
    cfg.seed = 5;
    const TrainResult r = train(train_set, constant_val(), cfg);
    REQUIRE(r.log.size() == 2);
    CHECK(r.log[0].checkpointed);       // first evaluation beats the -1 sentinel
    CHECK(!r.log[1].checkpointed);
    CHECK(r.steps == 20);
}

TEST_CASE("learning rate decays by decay^j and resets on improvement") {
    const Dataset train_set = separable_2d(16, 6);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.eval_every = 10;
    cfg.patience = 5;
    cfg.lr = 0.2;
    cfg.lr_decay = 0.5;
    cfg.seed = 7;
    const TrainResult r = train(train_set, constant_val(), cfg);
    REQUIRE(r.log.size() == 6);  // one improvement, then patience exhausted
    CHECK(r.log[0].lr == 0.2);
    for (std::size_t j = 1; j < r.log.size(); ++j) {
        CHECK(r.log[j].lr == doctest::Approx(0.2 * std::pow(0.5, j)).epsilon(1e-12));
        CHECK(!r.log[j].checkpointed);
    }
    CHECK(r.log.back().step == 60);

    // an improving run holds the configured rate at every checkpoint
    const TrainResult good = train(train_set, separable_2d(32, 8), cfg);
    for (const TrainLogEntry& e : good.log) {
        if (e.checkpointed) CHECK(e.lr == 0.2);
    }
}

TEST_CASE("training is deterministic under a fixed seed") {
    const Dataset train_set = separable_2d(32, 9);
    const Dataset val_set = separable_2d(16, 10);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.eval_every = 20;
    cfg.seed = 11;
    const TrainResult a = train(train_set, val_set, cfg);
    const TrainResult b = train(train_set, val_set, cfg);
    CHECK(a.model.weights == b.model.weights);
    CHECK(a.model.bias == b.model.bias);
    CHECK(a.steps == b.steps);

    cfg.seed = 12;
    const TrainResult c = train(train_set, val_set, cfg);
    CHECK(a.model.weights != c.model.weights);
}

TEST_CASE("the returned model is the best checkpoint") {
    Rng rng(13);
    Dataset train_set, val_set;
    for (int i = 0; i < 60; ++i) {
        const bool pos = rng.uniform01() < 0.4;
        const double nudge = pos ? 0.4 : -0.4;
        std::vector<double> x = {rng.normal() + nudge, rng.normal()};
        (i % 3 ? train_set : val_set).features.push_back(x);
        (i % 3 ? train_set : val_set).labels.push_back(pos);
        (i % 3 ? train_set : val_set).stay_ids.push_back("s" + std::to_string(i));
    }
    // guarantee both classes in validation whatever the draw did
    val_set.features.push_back({2.0, 0.0});
    val_set.labels.push_back(true);
    val_set.stay_ids.push_back("vp");
    val_set.features.push_back({-2.0, 0.0});
    val_set.labels.push_back(false);
    val_set.stay_ids.push_back("vn");
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.eval_every = 5;
    cfg.lr = 0.3;
    cfg.seed = 14;
    const TrainResult r = train(train_set, val_set, cfg);

    ScoredSet rescored;
    const auto scores = predict(r.model, val_set.features);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        rescored.push_back({val_set.stay_ids[i], scores[i], val_set.labels[i]});
    }
    CHECK(auprc(rescored) == doctest::Approx(r.best_val_auprc).epsilon(1e-12));
    double best_logged = 0.0;
    for (const TrainLogEntry& e : r.log) {
        if (e.checkpointed) best_logged = std::max(best_logged, e.val_auprc);
    }
    CHECK(r.best_val_auprc == best_logged);
}

TEST_CASE("class weights rebalance the loss") {
    Dataset d;
    d.stay_ids = {"a", "b", "c", "d"};
    d.features = {{1.0}, {1.0}, {1.0}, {1.0}};
    d.labels = {true, false, false, false};
    // with weighting: w_pos = 4/2, w_neg = 4/6; at w=0 the positive term
    // counts three times the negative one
    const double weighted = logistic_loss(d, {0.0}, 0.0, 2.0, 4.0 / 6.0);
    const double flat = logistic_loss(d, {0.0}, 0.0, 1.0, 1.0);
    CHECK(weighted == doctest::Approx(flat));  // ln2 * (2 + 3*2/3)/4 == ln2
    const double grad_w = logistic_loss_grad(d, {0.0}, 0.0, 2.0, 4.0 / 6.0)[0];
    CHECK(grad_w == doctest::Approx(0.0));  // weighting balances the pull at the origin
}

TEST_CASE("prediction basics") {
    LinearModel m;
    m.weights = {0.0, 0.0};
    m.bias = 0.0;
    CHECK(predict_one(m, {3.0, -4.0}) == 0.5);

    m.weights = {1.0, 0.0};
    CHECK(predict_one(m, {2.0, 0.0}) > predict_one(m, {1.0, 0.0}));

    const auto batch = predict(m, {{1.0, 0.0}, {2.0, 0.0}, {-1.0, 0.0}});
    REQUIRE(batch.size() == 3);
    CHECK(batch[0] > batch[2]);
    for (double p : batch) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    CHECK_THROWS_AS(predict_one(m, {1.0}), Error);  // DimensionMismatch
}

TEST_CASE("training validates its inputs") {
    const Dataset train_set = separable_2d(8, 15);
    TrainConfig cfg;
    cfg.eval_every = 5;

    Dataset one_class = separable_2d(8, 16);
    std::fill(one_class.labels.begin(), one_class.labels.end(), true);
    CHECK_THROWS_AS(train(train_set, one_class, cfg), Error);  // SingleClassValidation

    Dataset ragged = separable_2d(8, 17);
    ragged.features[3] = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(train(ragged, separable_2d(8, 18), cfg), Error);  // DimensionMismatch

    TrainConfig zero = cfg;
    zero.batch_size = 0;
    CHECK_THROWS_AS(train(train_set, separable_2d(8, 19), zero), Error);
}

TEST_CASE("model json round-trip") {
    LinearModel m;
    m.weights = {0.25, -1.5, 0.0};
    m.bias = 0.125;
    m.feature_spec = "charts_1hot_gradients";
    const LinearModel back = LinearModel::from_json(m.to_json());
    CHECK(back == m);
}

TEST_CASE("train log csv format") {
    std::vector<TrainLogEntry> log = {{200, 0.001, 0.5, true}, {400, 0.00097, 0.5, false}};
    std::ostringstream out;
    write_train_log_csv(out, log);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,lr,val_auprc,checkpointed");
    std::getline(in, line);
    CHECK(line == "200,0.001,0.5,1");
    std::getline(in, line);
    CHECK(line == "400,0.00097,0.5,0");
}
