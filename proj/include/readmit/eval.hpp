#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace readmit {

struct Scored {
    std::string stay_id;
    double score = 0.0;  // in [0, 1]
    bool label = false;

    bool operator==(const Scored&) const = default;
};

using ScoredSet = std::vector<Scored>;

// Mann-Whitney formulation: probability a random positive outranks a random
// negative, ties counted one half. Throws SingleClass unless both classes
// are present.
double auroc(const ScoredSet& s);

// Average precision with equal scores treated as one cut. Throws
// NoPositives.
double auprc(const ScoredSet& s);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Predict positive iff score >= threshold; empty denominators give 0.
Prf prf_at(const ScoredSet& s, double threshold);

// Smallest observed score whose F1 on this set is maximal. Throws
// SingleClass.
double best_threshold(const ScoredSet& validation);

struct MetricsReport {
    double auroc = 0.0;
    double auprc = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double threshold = 0.0;

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    bool operator==(const MetricsReport&) const = default;
};

// AUROC and AUPRC on the set plus precision/recall/F1 at the given
// threshold (fit elsewhere, normally on the validation split).
MetricsReport evaluate(const ScoredSet& s, double threshold);

enum class Better { A, B, inconclusive };
const char* to_string(Better b);

// Strict wins over the five metrics; three or more decide. Ties count for
// neither side.
Better conclusively_better(const MetricsReport& a, const MetricsReport& b);

struct MetricStat {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

struct FoldAggregate {
    MetricStat auroc;
    MetricStat auprc;
    MetricStat f1;
    MetricStat precision;
    MetricStat recall;
    std::size_t folds = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;  // aligned "mean ± std" rows
};

FoldAggregate aggregate_folds(const std::vector<MetricsReport>& reports);

// Note-chunk pooling: (P_max + P_mean * n/2) / (1 + n/2).
// Throws EmptyChunks for n = 0 and BadArgument for probabilities outside
// [0, 1].
double aggregate_note_scores(const std::vector<double>& chunk_probs);

void write_scores_csv(std::ostream& out, const ScoredSet& s);
ScoredSet read_scores_csv(std::istream& in, const std::string& name);
ScoredSet read_scores_csv_file(const std::string& path);

}  // namespace readmit
