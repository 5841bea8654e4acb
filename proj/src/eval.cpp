#include "readmit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "readmit/csv.hpp"
#include "readmit/error.hpp"

namespace readmit {

namespace {

std::pair<std::size_t, std::size_t> class_counts(const ScoredSet& s) {
    std::size_t pos = 0;
    for (const Scored& x : s) pos += x.label ? 1 : 0;
    return {pos, s.size() - pos};
}

}  // namespace

double auroc(const ScoredSet& s) {
    const auto [n_pos, n_neg] = class_counts(s);
    if (n_pos == 0 || n_neg == 0) {
        fail(ErrorCode::SingleClass, "auroc needs both classes; got " + std::to_string(n_pos) +
                                         " positives of " + std::to_string(s.size()));
    }
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s[a].score < s[b].score; });

    // Average ranks across ties, then the Mann-Whitney rank-sum identity.
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i + 1;
        while (j < order.size() && s[order[j]].score == s[order[i]].score) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (s[order[t]].label) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

double auprc(const ScoredSet& s) {
    const auto [n_pos, n_neg] = class_counts(s);
    (void)n_neg;
    if (n_pos == 0) fail(ErrorCode::NoPositives, "auprc needs at least one positive");

    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s[a].score > s[b].score; });

    double ap = 0.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i + 1;
        while (j < order.size() && s[order[j]].score == s[order[i]].score) ++j;
        std::size_t tp_gain = 0;
        for (std::size_t t = i; t < j; ++t) tp_gain += s[order[t]].label ? 1 : 0;
        tp += tp_gain;
        seen = j;
        if (tp_gain > 0) {
            const double precision = static_cast<double>(tp) / static_cast<double>(seen);
            ap += precision * static_cast<double>(tp_gain) / static_cast<double>(n_pos);
        }
        i = j;
    }
    return ap;
}

Prf prf_at(const ScoredSet& s, double threshold) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const Scored& x : s) {
        const bool predicted = x.score >= threshold;
        if (predicted && x.label) ++tp;
        if (predicted && !x.label) ++fp;
        if (!predicted && x.label) ++fn;
    }
    Prf prf;
    if (tp + fp > 0) prf.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) prf.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (prf.precision + prf.recall > 0.0) {
        prf.f1 = 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall);
    }
    return prf;
}

double best_threshold(const ScoredSet& validation) {
    const auto [n_pos, n_neg] = class_counts(validation);
    if (n_pos == 0 || n_neg == 0) {
        fail(ErrorCode::SingleClass, "best_threshold needs both classes");
    }
    std::vector<double> candidates;
    candidates.reserve(validation.size());
    for (const Scored& x : validation) candidates.push_back(x.score);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double best = candidates.front();
    double best_f1 = -1.0;
    // Ascending scan with strict improvement keeps the smallest maximizer.
    for (double c : candidates) {
        const double f1 = prf_at(validation, c).f1;
        if (f1 > best_f1) {
            best_f1 = f1;
            best = c;
        }
    }
    return best;
}

nlohmann::json MetricsReport::to_json() const {
    return {{"auroc", auroc},         {"auprc", auprc}, {"f1", f1},
            {"precision", precision}, {"recall", recall}, {"threshold", threshold}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    try {
        MetricsReport r;
        r.auroc = j.at("auroc").get<double>();
        r.auprc = j.at("auprc").get<double>();
        r.f1 = j.at("f1").get<double>();
        r.precision = j.at("precision").get<double>();
        r.recall = j.at("recall").get<double>();
        r.threshold = j.at("threshold").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("malformed metrics report: ") + e.what());
    }
}

MetricsReport evaluate(const ScoredSet& s, double threshold) {
    MetricsReport report;
    report.auroc = auroc(s);
    report.auprc = auprc(s);
    const Prf prf = prf_at(s, threshold);
    report.precision = prf.precision;
    report.recall = prf.recall;
    report.f1 = prf.f1;
    report.threshold = threshold;
    return report;
}

const char* to_string(Better b) {
    switch (b) {
        case Better::A: return "A";
        case Better::B: return "B";
        case Better::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

Better conclusively_better(const MetricsReport& a, const MetricsReport& b) {
    int wins_a = 0;
    int wins_b = 0;
    auto compare = [&](double x, double y) {
        if (x > y) ++wins_a;
        if (y > x) ++wins_b;
    };
    compare(a.auroc, b.auroc);
    compare(a.auprc, b.auprc);
    compare(a.f1, b.f1);
    compare(a.precision, b.precision);
    compare(a.recall, b.recall);
    if (wins_a >= 3) return Better::A;
    if (wins_b >= 3) return Better::B;
    return Better::inconclusive;
}

namespace {

MetricStat stat_of(const std::vector<double>& xs) {
    MetricStat stat;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) stat.mean += x;
    stat.mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - stat.mean) * (x - stat.mean);
    stat.stddev = std::sqrt(ss / n);
    return stat;
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

FoldAggregate aggregate_folds(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) fail(ErrorCode::BadArgument, "aggregate_folds needs at least one report");
    std::vector<double> a, p, f, pr, rc;
    for (const MetricsReport& r : reports) {
        a.push_back(r.auroc);
        p.push_back(r.auprc);
        f.push_back(r.f1);
        pr.push_back(r.precision);
        rc.push_back(r.recall);
    }
    FoldAggregate agg;
    agg.auroc = stat_of(a);
    agg.auprc = stat_of(p);
    agg.f1 = stat_of(f);
    agg.precision = stat_of(pr);
    agg.recall = stat_of(rc);
    agg.folds = reports.size();
    return agg;
}

nlohmann::json FoldAggregate::to_json() const {
    auto j = nlohmann::json{
        {"auroc", {{"mean", auroc.mean}, {"std", auroc.stddev}}},
        {"auprc", {{"mean", auprc.mean}, {"std", auprc.stddev}}},
        {"f1", {{"mean", f1.mean}, {"std", f1.stddev}}},
        {"precision", {{"mean", precision.mean}, {"std", precision.stddev}}},
        {"recall", {{"mean", recall.mean}, {"std", recall.stddev}}},
        {"folds", folds}};
    return j;
}

std::string FoldAggregate::to_text() const {
    std::ostringstream os;
    auto row = [&](const char* name, const MetricStat& stat) {
        std::string label(name);
        if (label.size() < 11) label += std::string(11 - label.size(), ' ');
        os << label << fmt4(stat.mean) << " ± " << fmt4(stat.stddev) << "\n";
    };
    os << "Aggregated over " << folds << " folds (mean ± population std)\n";
    row("AUROC", auroc);
    row("F1", f1);
    row("AUPRC", auprc);
    row("Precision", precision);
    row("Recall", recall);
    return os.str();
}

double aggregate_note_scores(const std::vector<double>& chunk_probs) {
    if (chunk_probs.empty()) fail(ErrorCode::EmptyChunks, "no chunk probabilities");
    double p_max = 0.0;
    double sum = 0.0;
    bool first = true;
    for (double p : chunk_probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            fail(ErrorCode::BadArgument, "chunk probability outside [0,1]: " + format_double(p));
        }
        p_max = first ? p : std::max(p_max, p);
        first = false;
        sum += p;
    }
    const double n = static_cast<double>(chunk_probs.size());
    const double p_mean = sum / n;
    return (p_max + p_mean * n / 2.0) / (1.0 + n / 2.0);
}

void write_scores_csv(std::ostream& out, const ScoredSet& s) {
    out << "stay_id,score,label\n";
    for (const Scored& x : s) {
        write_csv_row(out, {x.stay_id, format_double(x.score), x.label ? "1" : "0"});
    }
}

ScoredSet read_scores_csv(std::istream& in, const std::string& name) {
    const CsvTable table = read_csv(in, name);
    const std::size_t c_stay = table.require_column("stay_id");
    const std::size_t c_score = table.require_column("score");
    const std::size_t c_label = table.require_column("label");
    ScoredSet out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        Scored x;
        x.stay_id = row[c_stay];
        try {
            std::size_t pos = 0;
            x.score = std::stod(row[c_score], &pos);
            if (pos != row[c_score].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            fail(ErrorCode::SchemaError, name + " line " + std::to_string(table.line_numbers[r]) +
                                             ": unparseable score");
        }
        if (row[c_label] == "1" || row[c_label] == "true") {
            x.label = true;
        } else if (row[c_label] == "0" || row[c_label] == "false") {
            x.label = false;
        } else {
            fail(ErrorCode::SchemaError, name + " line " + std::to_string(table.line_numbers[r]) +
                                             ": label must be 0 or 1");
        }
        out.push_back(std::move(x));
    }
    return out;
}

ScoredSet read_scores_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return read_scores_csv(in, path);
}

}  // namespace readmit
