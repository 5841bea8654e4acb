#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "readmit/abstraction.hpp"
#include "readmit/baseline.hpp"
#include "readmit/cohort.hpp"
#include "readmit/encoding.hpp"
#include "readmit/error.hpp"
#include "readmit/eval.hpp"
#include "readmit/features.hpp"
#include "readmit/kb.hpp"
#include "readmit/rng.hpp"
#include "readmit/series.hpp"
#include "readmit/synth.hpp"

namespace readmit {

namespace {

namespace fs = std::filesystem;

struct GlobalOpts {
    std::uint64_t seed = 17;
    int threads = 0;  // 0 = hardware concurrency
    bool verbose = false;
    std::string config;  // consumed before parsing; kept so CLI11 accepts it
};

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create directory " + path + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    return out;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaError, "invalid json in " + path);
    return j;
}

// Run manifest next to every output; no timestamps so reruns stay
// byte-identical.
void write_manifest(const std::string& dir, const std::string& command,
                    const std::map<std::string, std::string>& options,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["options"] = options;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    write_json_file(dir + "/manifest.json", j);
}

// Deterministic result order: each index writes only its own slot, so the
// scheduling order never shows in the output.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = threads <= 0 ? std::thread::hardware_concurrency()
                                       : static_cast<std::size_t>(threads);
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

KnowledgeBase load_kb_or_builtin(const std::string& path) {
    if (path.empty()) return builtin_readmission_kb();
    return load_kb_file(path);
}

// Stays come either as the normalized JSONL that `ingest` emits or as the
// raw CSV pair, in which case ingestion and normalization run here.
std::vector<StayRecord> load_normalized_stays(const std::string& stays_path,
                                              const std::string& events_path,
                                              const std::string& icd9_path,
                                              std::vector<RejectRow>* rejects,
                                              NormalizeStats* stats) {
    if (ends_with(stays_path, ".jsonl")) {
        return read_stays_jsonl_file(stays_path);
    }
    if (events_path.empty()) {
        fail(ErrorCode::BadArgument,
             "raw CSV stays input needs --events (or pass the stays.jsonl from ingest)");
    }
    IngestResult result = ingest_files(events_path, stays_path, icd9_path);
    if (rejects) *rejects = std::move(result.rejects);
    for (StayRecord& stay : result.stays) stay = normalize(std::move(stay), {}, stats);
    return result.stays;
}

// Patient-level stays table only (fold splitting needs patient ids, not
// samples).
std::vector<StayRecord> load_stay_rows(const std::string& stays_path) {
    if (ends_with(stays_path, ".jsonl")) return read_stays_jsonl_file(stays_path);
    const CsvTable table = read_csv_file(stays_path);
    std::vector<RejectRow> rejects;
    auto stays = parse_stays_rows(table, &rejects);
    if (!rejects.empty()) {
        fail(ErrorCode::SchemaError, rejects.front().source + " line " +
                                         std::to_string(rejects.front().line) + ": " +
                                         rejects.front().reason);
    }
    return stays;
}

std::vector<CohortDecision> align_decisions(const std::vector<StayRecord>& stays,
                                            const std::vector<CohortDecision>& decisions) {
    std::map<std::string, const CohortDecision*> by_id;
    for (const CohortDecision& d : decisions) by_id[d.stay_id] = &d;
    std::vector<CohortDecision> out;
    out.reserve(stays.size());
    for (const StayRecord& stay : stays) {
        auto it = by_id.find(stay.stay_id);
        if (it == by_id.end()) {
            fail(ErrorCode::SchemaError, "no cohort decision for stay " + stay.stay_id);
        }
        out.push_back(*it->second);
    }
    return out;
}

int fold_of_patient(const FoldAssignment& folds, const std::string& patient_id) {
    auto it = folds.fold_of.find(patient_id);
    if (it == folds.fold_of.end()) {
        fail(ErrorCode::SchemaError, "patient " + patient_id + " missing from fold assignment");
    }
    return it->second;
}

struct FoldSubsets {
    std::vector<std::size_t> train;  // indices into the included-stay list
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

FoldSubsets split_by_fold(const std::vector<StayRecord>& included,
                          const FoldAssignment& folds, int test_fold) {
    if (test_fold < 0 || test_fold >= folds.k) {
        fail(ErrorCode::BadArgument, "fold " + std::to_string(test_fold) +
                                         " outside [0, " + std::to_string(folds.k) + ")");
    }
    const int val_fold = (test_fold + 1) % folds.k;
    FoldSubsets subsets;
    for (std::size_t i = 0; i < included.size(); ++i) {
        const int f = fold_of_patient(folds, included[i].patient_id);
        if (f == test_fold) {
            subsets.test.push_back(i);
        } else if (f == val_fold) {
            subsets.val.push_back(i);
        } else {
            subsets.train.push_back(i);
        }
    }
    return subsets;
}

std::vector<StayRecord> select(const std::vector<StayRecord>& stays,
                               const std::vector<std::size_t>& idx) {
    std::vector<StayRecord> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(stays[i]);
    return out;
}

Dataset make_dataset(const std::vector<StayRecord>& included,
                     const std::vector<bool>& labels,
                     const std::vector<std::size_t>& idx, const KnowledgeBase& kb,
                     const EncodingPlan& plan, int threads) {
    Dataset data;
    data.stay_ids.resize(idx.size());
    data.features.resize(idx.size());
    data.labels.resize(idx.size());
    parallel_for(idx.size(), threads, [&](std::size_t i) {
        const StayRecord& stay = included[idx[i]];
        data.stay_ids[i] = stay.stay_id;
        data.features[i] = featurize(encode_stay(stay, kb, plan), plan);
        data.labels[i] = labels[idx[i]];
    });
    return data;
}

// ---- subcommand option bundles -------------------------------------------

struct KbValidateOpts {
    std::string kb_path;
    std::string emit_path;
};

struct IngestOpts {
    std::string events, stays, icd9, out_dir;
};

struct CohortOpts {
    std::string stays, events, icd9, kb_path, out_file, report_file;
    std::string year_window = "calendar";
};

struct SplitOpts {
    std::string stays, decisions, out_file;
    int k = 5;
};

struct AbstractOpts {
    std::string stays, events, icd9, kb_path, out_file;
    std::string gradient_mode = "simple";
    std::string weighting = "standard";
    bool interpolate = true;
    bool t_stable_gap = false;
};

struct EncodeOpts {
    std::string stays, events, icd9, kb_path, decisions, folds, out_dir;
    std::string variant = "charts_1hot_gradients";
    std::string gradient_mode = "simple";
    std::string weighting = "standard";
    int fold = -1;
    std::size_t max_len_cap = 0;
};

struct TrainOpts {
    std::string stays, encoded, plan, decisions, folds, out_dir;
    int fold = 0;
    TrainConfig cfg;
    bool class_weighting = true;
};

struct EvaluateOpts {
    std::string stays, encoded, plan, model, decisions, folds, scores, out_dir;
    int fold = 0;
    double threshold = -1.0;  // < 0 = fit on the validation fold
};

struct CompareOpts {
    std::string report_a, report_b;
};

struct NotesOpts {
    std::string chunks, out_file;
};

struct SynthOpts {
    std::string out_dir;
    std::size_t n = 1000;
    double rate = 0.25;
    double theta = 1.0;
};

struct PipelineOpts {
    std::string events, stays, icd9, kb_path, out_dir;
    std::string variant = "charts_1hot_gradients";
    std::string year_window = "calendar";
    std::string gradient_mode = "simple";
    std::string weighting = "standard";
    bool interpolate = true;
    bool t_stable_gap = false;
    int k = 5;
    std::size_t max_len_cap = 0;
    TrainConfig cfg;
    bool class_weighting = true;
};

// ---- subcommand bodies ----------------------------------------------------

void run_kb_validate(const KbValidateOpts& o, const GlobalOpts& g, std::ostream& out) {
    const KnowledgeBase kb = load_kb_or_builtin(o.kb_path);
    out << "knowledge base " << kb.version() << ": " << kb.size() << " concepts\n";
    if (g.verbose) {
        for (const ConceptDef& c : kb.concepts()) {
            out << "  " << c.concept_id << " (" << c.name << ", " << to_string(c.kind) << "): "
                << c.state_count() << " states, sig_delta " << format_double(c.sig_delta)
                << ", t_stable " << c.t_stable_seconds << "s, min_samples " << c.min_samples
                << "\n";
        }
    }
    if (!o.emit_path.empty()) {
        write_json_file(o.emit_path, kb_to_json(kb));
        out << "wrote " << o.emit_path << "\n";
    }
}

void run_ingest(const IngestOpts& o, const GlobalOpts&, std::ostream& out) {
    ensure_dir(o.out_dir);
    IngestResult result = ingest_files(o.events, o.stays, o.icd9);
    NormalizeStats stats;
    std::size_t samples = 0;
    for (StayRecord& stay : result.stays) {
        stay = normalize(std::move(stay), {}, &stats);
        samples += stay.samples.size();
    }
    {
        auto f = open_out(o.out_dir + "/stays.jsonl");
        write_stays_jsonl(f, result.stays);
    }
    {
        auto f = open_out(o.out_dir + "/rejects.csv");
        write_rejects_csv(f, result.rejects);
    }
    write_manifest(o.out_dir, "ingest",
                   {{"events", o.events}, {"stays", o.stays}, {"icd9", o.icd9}},
                   {o.events, o.stays, o.icd9},
                   {o.out_dir + "/stays.jsonl", o.out_dir + "/rejects.csv"});
    out << result.stays.size() << " stays, " << samples << " samples after normalization\n";
    out << result.rejects.size() << " rejected rows, " << stats.dropped_nonfinite
        << " non-finite values dropped, " << stats.dropped_outside_window
        << " samples outside the stay window, " << stats.collapsed_duplicates
        << " duplicate timestamps collapsed\n";
}

void run_cohort(const CohortOpts& o, const GlobalOpts&, std::ostream& out) {
    const KnowledgeBase kb = load_kb_or_builtin(o.kb_path);
    const auto stays = load_normalized_stays(o.stays, o.events, o.icd9, nullptr, nullptr);
    CohortOptions options;
    options.year_window = year_window_from_string(o.year_window);
    const auto decisions = build_cohort(stays, kb, options);
    {
        auto f = open_out(o.out_file);
        write_decisions_csv(f, decisions);
    }
    const CohortReport report = cohort_report(stays, decisions);
    if (!o.report_file.empty()) {
        auto f = open_out(o.report_file);
        f << report.to_text();
    }
    const std::string dir = fs::path(o.out_file).parent_path().string();
    if (!dir.empty()) {
        write_manifest(dir, "cohort",
                       {{"stays", o.stays},
                        {"events", o.events},
                        {"kb", o.kb_path},
                        {"year_window", o.year_window}},
                       {o.stays, o.events, o.icd9}, {o.out_file});
    }
    out << report.to_text();
}

void run_split(const SplitOpts& o, const GlobalOpts& g, std::ostream& out) {
    const auto stays = load_stay_rows(o.stays);
    const auto decisions = align_decisions(stays, read_decisions_csv_file(o.decisions));
    const FoldAssignment folds = stratified_folds(stays, decisions, o.k, g.seed);
    {
        auto f = open_out(o.out_file);
        write_folds_csv(f, folds);
    }
    const std::string dir = fs::path(o.out_file).parent_path().string();
    if (!dir.empty()) {
        write_manifest(dir, "split",
                       {{"stays", o.stays},
                        {"decisions", o.decisions},
                        {"k", std::to_string(o.k)},
                        {"seed", std::to_string(g.seed)}},
                       {o.stays, o.decisions}, {o.out_file});
    }
    out << folds.fold_of.size() << " patients dealt into " << o.k << " folds\n";
}

void run_abstract(const AbstractOpts& o, const GlobalOpts& g, std::ostream& out) {
    const KnowledgeBase kb = load_kb_or_builtin(o.kb_path);
    const auto stays = load_normalized_stays(o.stays, o.events, o.icd9, nullptr, nullptr);
    AbstractionOptions options;
    options.gradient_mode = o.gradient_mode == "thresholded" ? GradientMode::thresholded
                                                             : GradientMode::simple;
    options.use_t_stable_as_max_gap = o.t_stable_gap;
    options.interpolate = o.interpolate;
    options.weighting =
        o.weighting == "as_printed" ? InterpWeighting::as_printed : InterpWeighting::standard;
    std::vector<AbstractionSet> sets(stays.size());
    parallel_for(stays.size(), g.threads,
                 [&](std::size_t i) { sets[i] = abstract_stay(stays[i], kb, options); });
    {
        auto f = open_out(o.out_file);
        write_abstractions_jsonl(f, sets);
    }
    const std::string dir = fs::path(o.out_file).parent_path().string();
    if (!dir.empty()) {
        write_manifest(dir, "abstract",
                       {{"stays", o.stays},
                        {"gradient_mode", o.gradient_mode},
                        {"interpolate", o.interpolate ? "true" : "false"},
                        {"t_stable_gap", o.t_stable_gap ? "true" : "false"},
                        {"weighting", o.weighting}},
                       {o.stays, o.events, o.icd9}, {o.out_file});
    }
    std::size_t points = 0;
    for (const auto& s : sets) points += s.points.size();
    out << sets.size() << " stays abstracted, " << points << " symbol points\n";
}

// Included stays plus their labels, in the deterministic (patient, time,
// stay) order of the input.
std::pair<std::vector<StayRecord>, std::vector<bool>> included_with_labels(
    const std::vector<StayRecord>& stays, const std::vector<CohortDecision>& aligned) {
    std::vector<StayRecord> included;
    std::vector<bool> labels;
    for (std::size_t i = 0; i < stays.size(); ++i) {
        if (!aligned[i].included) continue;
        included.push_back(stays[i]);
        labels.push_back(aligned[i].label.value_or(false));
    }
    return {included, labels};
}

void run_encode(const EncodeOpts& o, const GlobalOpts& g, std::ostream& out) {
    ensure_dir(o.out_dir);
    const KnowledgeBase kb = load_kb_or_builtin(o.kb_path);
    auto stays = load_normalized_stays(o.stays, o.events, o.icd9, nullptr, nullptr);
    std::vector<bool> labels(stays.size(), false);
    if (!o.decisions.empty()) {
        const auto aligned = align_decisions(stays, read_decisions_csv_file(o.decisions));
        std::tie(stays, labels) = included_with_labels(stays, aligned);
    }
    const EncodingVariant variant = variant_from_string(o.variant);
    const GradientMode mode = o.gradient_mode == "thresholded" ? GradientMode::thresholded
                                                               : GradientMode::simple;
    const InterpWeighting weighting =
        o.weighting == "as_printed" ? InterpWeighting::as_printed : InterpWeighting::standard;

    std::vector<StayRecord> plan_basis = stays;
    if (!o.folds.empty()) {
        if (o.fold < 0) fail(ErrorCode::BadArgument, "--folds needs --fold");
        const FoldAssignment folds = read_folds_csv_file(o.folds);
        plan_basis = select(stays, split_by_fold(stays, folds, o.fold).train);
    }
    const EncodingPlan plan =
        fit_encoding_plan(plan_basis, kb, variant, o.max_len_cap, mode, weighting);

    std::vector<EncodedFeatures> rows(stays.size());
    parallel_for(stays.size(), g.threads,
                 [&](std::size_t i) { rows[i] = encode_stay(stays[i], kb, plan); });
    {
        auto f = open_out(o.out_dir + "/encoded.jsonl");
        write_encoded_jsonl(f, rows);
    }
    write_json_file(o.out_dir + "/vocab.json", plan.vocab.to_json());
    write_json_file(o.out_dir + "/plan.json", plan.to_json());
    write_manifest(o.out_dir, "encode",
                   {{"stays", o.stays},
                    {"variant", o.variant},
                    {"decisions", o.decisions},
                    {"folds", o.folds},
                    {"fold", std::to_string(o.fold)},
                    {"max_len_cap", std::to_string(o.max_len_cap)},
                    {"gradient_mode", o.gradient_mode},
                    {"weighting", o.weighting}},
                   {o.stays, o.events, o.icd9, o.decisions, o.folds},
                   {o.out_dir + "/encoded.jsonl", o.out_dir + "/vocab.json",
                    o.out_dir + "/plan.json"});
    out << rows.size() << " stays encoded as " << o.variant << ", vocabulary "
        << plan.vocab.size() << ", max length " << plan.max_len << "\n";
}

void run_train(const TrainOpts& o, const GlobalOpts& g, std::ostream& out) {
    ensure_dir(o.out_dir);
    const EncodingPlan plan = EncodingPlan::from_json(read_json_file(o.plan));
    const auto stays = load_stay_rows(o.stays);
    const auto aligned = align_decisions(stays, read_decisions_csv_file(o.decisions));
    auto [included, labels] = included_with_labels(stays, aligned);
    const FoldAssignment folds = read_folds_csv_file(o.folds);
    const FoldSubsets subsets = split_by_fold(included, folds, o.fold);

    // Featurize from the encoded artifact to honour whatever plan produced
    // it; rows are matched to stays by id.
    const auto encoded = read_encoded_jsonl_file(o.encoded);
    std::map<std::string, const EncodedFeatures*> by_id;
    for (const auto& row : encoded) by_id[row.stay_id] = &row;
    auto dataset_for = [&](const std::vector<std::size_t>& idx) {
        Dataset data;
        data.stay_ids.resize(idx.size());
        data.features.resize(idx.size());
        data.labels.resize(idx.size());
        parallel_for(idx.size(), g.threads, [&](std::size_t i) {
            const StayRecord& stay = included[idx[i]];
            auto it = by_id.find(stay.stay_id);
            if (it == by_id.end()) {
                fail(ErrorCode::SchemaError, "stay " + stay.stay_id + " missing from " + o.encoded);
            }
            data.stay_ids[i] = stay.stay_id;
            data.features[i] = featurize(*it->second, plan);
            data.labels[i] = labels[idx[i]];
        });
        return data;
    };
    const Dataset train_set = dataset_for(subsets.train);
    const Dataset val_set = dataset_for(subsets.val);

    TrainConfig cfg = o.cfg;
    cfg.class_weighting = o.class_weighting;
    cfg.seed = derive_seed(g.seed, static_cast<std::uint64_t>(o.fold));
    TrainResult result = train(train_set, val_set, cfg);
    result.model.feature_spec = to_string(plan.variant);

    write_json_file(o.out_dir + "/model.json", result.model.to_json());
    {
        auto f = open_out(o.out_dir + "/train_log.csv");
        write_train_log_csv(f, result.log);
    }
    write_manifest(o.out_dir, "train",
                   {{"encoded", o.encoded},
                    {"plan", o.plan},
                    {"fold", std::to_string(o.fold)},
                    {"batch_size", std::to_string(cfg.batch_size)},
                    {"lr", format_double(cfg.lr)},
                    {"lr_decay", format_double(cfg.lr_decay)},
                    {"eval_every", std::to_string(cfg.eval_every)},
                    {"patience", std::to_string(cfg.patience)},
                    {"class_weighting", cfg.class_weighting ? "true" : "false"},
                    {"seed", std::to_string(g.seed)}},
                   {o.encoded, o.plan, o.stays, o.decisions, o.folds},
                   {o.out_dir + "/model.json", o.out_dir + "/train_log.csv"});
    out << "trained on " << train_set.size() << " stays, validated on " << val_set.size()
        << "; best validation AUPRC " << format_double(result.best_val_auprc) << " after "
        << result.steps << " steps\n";
}

ScoredSet score_dataset(const LinearModel& model, const Dataset& data) {
    ScoredSet scored;
    scored.reserve(data.size());
    const auto scores = predict(model, data.features);
    for (std::size_t i = 0; i < data.size(); ++i) {
        scored.push_back(Scored{data.stay_ids[i], scores[i], data.labels[i]});
    }
    return scored;
}

void run_evaluate(const EvaluateOpts& o, const GlobalOpts& g, std::ostream& out) {
    ensure_dir(o.out_dir);
    MetricsReport report;
    ScoredSet test_scored;
    if (!o.scores.empty()) {
        // Pre-scored mode: metrics straight from a scores file. Without an
        // explicit threshold it is fit on this same set; fine for smoke
        // checks, not for protocol runs.
        test_scored = read_scores_csv_file(o.scores);
        const double thr = o.threshold >= 0.0 ? o.threshold : best_threshold(test_scored);
        report = evaluate(test_scored, thr);
    } else {
        const EncodingPlan plan = EncodingPlan::from_json(read_json_file(o.plan));
        const LinearModel model = LinearModel::from_json(read_json_file(o.model));
        const auto stays = load_stay_rows(o.stays);
        const auto aligned = align_decisions(stays, read_decisions_csv_file(o.decisions));
        auto [included, labels] = included_with_labels(stays, aligned);
        const FoldAssignment folds = read_folds_csv_file(o.folds);
        const FoldSubsets subsets = split_by_fold(included, folds, o.fold);
        const auto encoded = read_encoded_jsonl_file(o.encoded);
        std::map<std::string, const EncodedFeatures*> by_id;
        for (const auto& row : encoded) by_id[row.stay_id] = &row;
        auto dataset_for = [&](const std::vector<std::size_t>& idx) {
            Dataset data;
            data.stay_ids.resize(idx.size());
            data.features.resize(idx.size());
            data.labels.resize(idx.size());
            parallel_for(idx.size(), g.threads, [&](std::size_t i) {
                const StayRecord& stay = included[idx[i]];
                auto it = by_id.find(stay.stay_id);
                if (it == by_id.end()) {
                    fail(ErrorCode::SchemaError,
                         "stay " + stay.stay_id + " missing from " + o.encoded);
                }
                data.stay_ids[i] = stay.stay_id;
                data.features[i] = featurize(*it->second, plan);
                data.labels[i] = labels[idx[i]];
            });
            return data;
        };
        const Dataset val_set = dataset_for(subsets.val);
        const Dataset test_set = dataset_for(subsets.test);
        const double thr =
            o.threshold >= 0.0 ? o.threshold : best_threshold(score_dataset(model, val_set));
        test_scored = score_dataset(model, test_set);
        report = evaluate(test_scored, thr);
    }
    {
        auto f = open_out(o.out_dir + "/scores.csv");
        write_scores_csv(f, test_scored);
    }
    write_json_file(o.out_dir + "/metrics.json", report.to_json());
    write_manifest(o.out_dir, "evaluate",
                   {{"encoded", o.encoded},
                    {"model", o.model},
                    {"scores", o.scores},
                    {"fold", std::to_string(o.fold)},
                    {"threshold", o.threshold >= 0.0 ? format_double(o.threshold) : "validation"}},
                   {o.encoded, o.plan, o.model, o.stays, o.decisions, o.folds, o.scores},
                   {o.out_dir + "/scores.csv", o.out_dir + "/metrics.json"});
    out << "auroc " << format_double(report.auroc) << "\n"
        << "f1 " << format_double(report.f1) << "\n"
        << "auprc " << format_double(report.auprc) << "\n"
        << "precision " << format_double(report.precision) << "\n"
        << "recall " << format_double(report.recall) << "\n"
        << "threshold " << format_double(report.threshold) << "\n";
}

void run_compare(const CompareOpts& o, std::ostream& out) {
    const MetricsReport a = MetricsReport::from_json(read_json_file(o.report_a));
    const MetricsReport b = MetricsReport::from_json(read_json_file(o.report_b));
    out << to_string(conclusively_better(a, b)) << "\n";
}

void run_aggregate_notes(const NotesOpts& o, const GlobalOpts&, std::ostream& out) {
    std::ifstream in(o.chunks, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + o.chunks);
    ScoredSet scored;
    bool all_labeled = true;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("stay_id") || !j.contains("chunk_probs")) {
            fail(ErrorCode::SchemaError,
                 o.chunks + " line " + std::to_string(line_no) +
                     ": expected {\"stay_id\", \"chunk_probs\"}");
        }
        Scored s;
        s.stay_id = j.at("stay_id").get<std::string>();
        s.score = aggregate_note_scores(j.at("chunk_probs").get<std::vector<double>>());
        if (j.contains("label")) {
            s.label = j.at("label").get<bool>();
        } else {
            all_labeled = false;
        }
        scored.push_back(std::move(s));
    }
    auto f = open_out(o.out_file);
    if (all_labeled && !scored.empty()) {
        write_scores_csv(f, scored);
    } else {
        f << "stay_id,score\n";
        for (const Scored& s : scored) write_csv_row(f, {s.stay_id, format_double(s.score)});
    }
    out << scored.size() << " notes aggregated\n";
}

void run_synth(const SynthOpts& o, const GlobalOpts& g, std::ostream& out) {
    ensure_dir(o.out_dir);
    SynthConfig cfg;
    cfg.n_patients = o.n;
    cfg.positive_rate = o.rate;
    cfg.theta = o.theta;
    cfg.seed = g.seed;
    synth_generate(cfg, o.out_dir);
    write_manifest(o.out_dir, "synth",
                   {{"n", std::to_string(o.n)},
                    {"rate", format_double(o.rate)},
                    {"theta", format_double(o.theta)},
                    {"seed", std::to_string(g.seed)}},
                   {},
                   {o.out_dir + "/events.csv", o.out_dir + "/stays.csv",
                    o.out_dir + "/icd9.csv", o.out_dir + "/truth.csv"});
    out << "synthetic cohort written to " << o.out_dir << "\n";
}

void run_pipeline(const PipelineOpts& o, const GlobalOpts& g, std::ostream& out) {
    ensure_dir(o.out_dir);
    const KnowledgeBase kb = load_kb_or_builtin(o.kb_path);

    IngestResult ingested = ingest_files(o.events, o.stays, o.icd9);
    NormalizeStats stats;
    for (StayRecord& stay : ingested.stays) stay = normalize(std::move(stay), {}, &stats);
    {
        auto f = open_out(o.out_dir + "/stays.jsonl");
        write_stays_jsonl(f, ingested.stays);
    }
    {
        auto f = open_out(o.out_dir + "/rejects.csv");
        write_rejects_csv(f, ingested.rejects);
    }

    CohortOptions cohort_options;
    cohort_options.year_window = year_window_from_string(o.year_window);
    const auto decisions = build_cohort(ingested.stays, kb, cohort_options);
    {
        auto f = open_out(o.out_dir + "/decisions.csv");
        write_decisions_csv(f, decisions);
    }
    const CohortReport report = cohort_report(ingested.stays, decisions);
    {
        auto f = open_out(o.out_dir + "/report.txt");
        f << report.to_text();
    }
    if (g.verbose) out << report.to_text();

    const FoldAssignment folds = stratified_folds(ingested.stays, decisions, o.k, g.seed);
    {
        auto f = open_out(o.out_dir + "/folds.csv");
        write_folds_csv(f, folds);
    }

    auto [included, labels] = included_with_labels(ingested.stays, decisions);

    AbstractionOptions abs_options;
    abs_options.gradient_mode = o.gradient_mode == "thresholded" ? GradientMode::thresholded
                                                                 : GradientMode::simple;
    abs_options.use_t_stable_as_max_gap = o.t_stable_gap;
    abs_options.interpolate = o.interpolate;
    abs_options.weighting =
        o.weighting == "as_printed" ? InterpWeighting::as_printed : InterpWeighting::standard;
    {
        std::vector<AbstractionSet> sets(included.size());
        parallel_for(included.size(), g.threads,
                     [&](std::size_t i) { sets[i] = abstract_stay(included[i], kb, abs_options); });
        auto f = open_out(o.out_dir + "/abstractions.jsonl");
        write_abstractions_jsonl(f, sets);
    }

    const EncodingVariant variant = variant_from_string(o.variant);
    std::vector<MetricsReport> fold_reports;
    for (int fold = 0; fold < o.k; ++fold) {
        const std::string fold_dir = o.out_dir + "/fold_" + std::to_string(fold);
        ensure_dir(fold_dir);
        const FoldSubsets subsets = split_by_fold(included, folds, fold);
        const EncodingPlan plan =
            fit_encoding_plan(select(included, subsets.train), kb, variant, o.max_len_cap,
                              abs_options.gradient_mode, abs_options.weighting);
        write_json_file(fold_dir + "/plan.json", plan.to_json());
        write_json_file(fold_dir + "/vocab.json", plan.vocab.to_json());

        const Dataset train_set = make_dataset(included, labels, subsets.train, kb, plan, g.threads);
        const Dataset val_set = make_dataset(included, labels, subsets.val, kb, plan, g.threads);
        const Dataset test_set = make_dataset(included, labels, subsets.test, kb, plan, g.threads);

        TrainConfig cfg = o.cfg;
        cfg.class_weighting = o.class_weighting;
        cfg.seed = derive_seed(g.seed, static_cast<std::uint64_t>(fold));
        TrainResult result = train(train_set, val_set, cfg);
        result.model.feature_spec = to_string(plan.variant);
        write_json_file(fold_dir + "/model.json", result.model.to_json());
        {
            auto f = open_out(fold_dir + "/train_log.csv");
            write_train_log_csv(f, result.log);
        }

        const double threshold = best_threshold(score_dataset(result.model, val_set));
        const ScoredSet test_scored = score_dataset(result.model, test_set);
        const MetricsReport fold_report = evaluate(test_scored, threshold);
        {
            auto f = open_out(fold_dir + "/scores.csv");
            write_scores_csv(f, test_scored);
        }
        write_json_file(fold_dir + "/metrics.json", fold_report.to_json());
        fold_reports.push_back(fold_report);
        if (g.verbose) {
            out << "fold " << fold << ": auroc " << format_double(fold_report.auroc) << ", auprc "
                << format_double(fold_report.auprc) << ", f1 " << format_double(fold_report.f1)
                << "\n";
        }
    }

    const FoldAggregate aggregate = aggregate_folds(fold_reports);
    write_json_file(o.out_dir + "/aggregate.json", aggregate.to_json());
    {
        auto f = open_out(o.out_dir + "/aggregate.txt");
        f << aggregate.to_text();
    }
    write_manifest(o.out_dir, "pipeline",
                   {{"events", o.events},
                    {"stays", o.stays},
                    {"icd9", o.icd9},
                    {"variant", o.variant},
                    {"k", std::to_string(o.k)},
                    {"year_window", o.year_window},
                    {"gradient_mode", o.gradient_mode},
                    {"seed", std::to_string(g.seed)}},
                   {o.events, o.stays, o.icd9},
                   {o.out_dir + "/decisions.csv", o.out_dir + "/folds.csv",
                    o.out_dir + "/aggregate.json"});
    out << aggregate.to_text();
}

// ---- config file splicing -------------------------------------------------

// Flags win on conflict: config-derived tokens are inserted right after the
// subcommand name, so later command-line tokens override them under the
// take-last policy.
std::vector<std::string> splice_config(const std::vector<std::string>& args) {
    if (args.empty() || args.front().empty() || args.front()[0] == '-') return args;
    std::string config_path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        }
    }
    if (config_path.empty()) return args;

    const nlohmann::json j = read_json_file(config_path);
    if (!j.is_object()) fail(ErrorCode::SchemaError, config_path + ": config must be a JSON object");
    std::vector<std::string> tokens;
    for (const auto& [key, value] : j.items()) {
        if (value.is_null()) continue;
        if (value.is_boolean()) {
            tokens.push_back(value.get<bool>() ? "--" + key : "--no-" + key);
        } else if (value.is_string()) {
            tokens.push_back("--" + key);
            tokens.push_back(value.get<std::string>());
        } else if (value.is_number() || value.is_array()) {
            if (value.is_array()) {
                fail(ErrorCode::SchemaError, config_path + ": array values unsupported for " + key);
            }
            tokens.push_back("--" + key);
            tokens.push_back(value.dump());
        } else {
            fail(ErrorCode::SchemaError, config_path + ": unsupported value type for " + key);
        }
    }
    std::vector<std::string> spliced;
    spliced.push_back(args.front());
    spliced.insert(spliced.end(), tokens.begin(), tokens.end());
    spliced.insert(spliced.end(), args.begin() + 1, args.end());
    return spliced;
}

CLI::Option* opt(CLI::App* cmd, const std::string& name, std::string& var,
                 const std::string& desc) {
    return cmd->add_option(name, var, desc)->take_last();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    GlobalOpts g;
    KbValidateOpts kb_o;
    IngestOpts in_o;
    CohortOpts co_o;
    SplitOpts sp_o;
    AbstractOpts ab_o;
    EncodeOpts en_o;
    TrainOpts tr_o;
    EvaluateOpts ev_o;
    CompareOpts cm_o;
    NotesOpts no_o;
    SynthOpts sy_o;
    PipelineOpts pi_o;

    CLI::App app{"temporal-abstraction pipeline for ICU unplanned-readmission prediction"};
    app.name("readmit");
    app.require_subcommand(1);
    app.add_option("--seed", g.seed, "base seed for all randomness")->take_last();
    app.add_option("--threads", g.threads, "worker threads for per-stay stages (0 = all cores)")
        ->take_last();
    app.add_flag("--verbose", g.verbose, "chattier progress output")->take_last();
    app.add_option("--config", g.config, "JSON config file; explicit flags win")->take_last();

    const auto gradient_modes = CLI::IsMember({"simple", "thresholded"});
    const auto weightings = CLI::IsMember({"standard", "as_printed"});
    const auto year_windows = CLI::IsMember({"calendar", "rolling"});
    const auto variants =
        CLI::IsMember({"charts_1hot", "charts_interpolated", "charts_1hot_gradients",
                       "charts_interpolated_gradients", "icd9_1hot", "icd9_text",
                       "demographics_1hot"});

    auto* kb_cmd = app.add_subcommand("kb-validate", "load and validate a knowledge base");
    kb_cmd->fallthrough();
    opt(kb_cmd, "--kb", kb_o.kb_path, "KB JSON file (default: built-in readmission KB)");
    opt(kb_cmd, "--emit", kb_o.emit_path, "write the validated KB back out as JSON");

    auto* ingest_cmd = app.add_subcommand("ingest", "read raw CSVs into normalized stays");
    ingest_cmd->fallthrough();
    opt(ingest_cmd, "--events", in_o.events, "events.csv")->required();
    opt(ingest_cmd, "--stays", in_o.stays, "stays.csv")->required();
    opt(ingest_cmd, "--icd9", in_o.icd9, "icd9.csv (optional)");
    opt(ingest_cmd, "--out", in_o.out_dir, "output directory")->required();

    auto* cohort_cmd = app.add_subcommand("cohort", "apply inclusion rules and label stays");
    cohort_cmd->fallthrough();
    opt(cohort_cmd, "--stays", co_o.stays, "stays.csv or stays.jsonl from ingest")->required();
    opt(cohort_cmd, "--events", co_o.events, "events.csv (required with raw CSV stays)");
    opt(cohort_cmd, "--icd9", co_o.icd9, "icd9.csv (optional)");
    opt(cohort_cmd, "--kb", co_o.kb_path, "KB JSON file (default: built-in)");
    opt(cohort_cmd, "--out", co_o.out_file, "decisions CSV path")->required();
    opt(cohort_cmd, "--report", co_o.report_file, "also write the counts table here");
    opt(cohort_cmd, "--year-window", co_o.year_window, "first-stay rule window")
        ->check(year_windows);

    auto* split_cmd = app.add_subcommand("split", "stratified patient-level folds");
    split_cmd->fallthrough();
    opt(split_cmd, "--stays", sp_o.stays, "stays.csv or stays.jsonl")->required();
    opt(split_cmd, "--decisions", sp_o.decisions, "decisions CSV from cohort")->required();
    opt(split_cmd, "--out", sp_o.out_file, "folds CSV path")->required();
    split_cmd->add_option("--k", sp_o.k, "number of folds")->take_last();

    auto* abstract_cmd = app.add_subcommand("abstract", "state and gradient abstractions");
    abstract_cmd->fallthrough();
    opt(abstract_cmd, "--stays", ab_o.stays, "stays.csv or stays.jsonl")->required();
    opt(abstract_cmd, "--events", ab_o.events, "events.csv (required with raw CSV stays)");
    opt(abstract_cmd, "--icd9", ab_o.icd9, "icd9.csv (optional)");
    opt(abstract_cmd, "--kb", ab_o.kb_path, "KB JSON file (default: built-in)");
    opt(abstract_cmd, "--out", ab_o.out_file, "abstractions JSONL path")->required();
    opt(abstract_cmd, "--gradient-mode", ab_o.gradient_mode, "simple or thresholded")
        ->check(gradient_modes);
    abstract_cmd->add_flag("--interpolate,!--no-interpolate", ab_o.interpolate,
                           "fill the multivariate grid before state abstraction")
        ->take_last();
    abstract_cmd->add_flag("--t-stable-gap,!--no-t-stable-gap", ab_o.t_stable_gap,
                           "use each concept's t_stable as the interval merge gap")
        ->take_last();
    opt(abstract_cmd, "--weighting", ab_o.weighting, "interpolation weighting")->check(weightings);

    auto* encode_cmd = app.add_subcommand("encode", "model-ready features for one variant");
    encode_cmd->fallthrough();
    opt(encode_cmd, "--stays", en_o.stays, "stays.csv or stays.jsonl")->required();
    opt(encode_cmd, "--events", en_o.events, "events.csv (required with raw CSV stays)");
    opt(encode_cmd, "--icd9", en_o.icd9, "icd9.csv (optional)");
    opt(encode_cmd, "--kb", en_o.kb_path, "KB JSON file (default: built-in)");
    opt(encode_cmd, "--decisions", en_o.decisions, "decisions CSV; keeps included stays only");
    opt(encode_cmd, "--folds", en_o.folds, "folds CSV; fit the plan on the training folds");
    encode_cmd->add_option("--fold", en_o.fold, "test fold index (with --folds)")->take_last();
    opt(encode_cmd, "--variant", en_o.variant, "encoding variant")->check(variants);
    encode_cmd->add_option("--max-len-cap", en_o.max_len_cap, "hard cap on padded length L")
        ->take_last();
    opt(encode_cmd, "--gradient-mode", en_o.gradient_mode, "simple or thresholded")
        ->check(gradient_modes);
    opt(encode_cmd, "--weighting", en_o.weighting, "interpolation weighting")->check(weightings);
    opt(encode_cmd, "--out", en_o.out_dir, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "fit the linear baseline on one fold");
    train_cmd->fallthrough();
    opt(train_cmd, "--stays", tr_o.stays, "stays.csv or stays.jsonl")->required();
    opt(train_cmd, "--encoded", tr_o.encoded, "encoded.jsonl from encode")->required();
    opt(train_cmd, "--plan", tr_o.plan, "plan.json from encode")->required();
    opt(train_cmd, "--decisions", tr_o.decisions, "decisions CSV")->required();
    opt(train_cmd, "--folds", tr_o.folds, "folds CSV")->required();
    train_cmd->add_option("--fold", tr_o.fold, "test fold index")->take_last();
    train_cmd->add_option("--batch-size", tr_o.cfg.batch_size, "mini-batch size")->take_last();
    train_cmd->add_option("--lr", tr_o.cfg.lr, "initial learning rate")->take_last();
    train_cmd->add_option("--lr-decay", tr_o.cfg.lr_decay, "decay per non-improvement")
        ->take_last();
    train_cmd->add_option("--eval-every", tr_o.cfg.eval_every, "steps between evaluations")
        ->take_last();
    train_cmd->add_option("--patience", tr_o.cfg.patience, "consecutive non-improvements to stop")
        ->take_last();
    train_cmd->add_flag("--class-weighting,!--no-class-weighting", tr_o.class_weighting,
                        "inverse-frequency loss weights")
        ->take_last();
    opt(train_cmd, "--out", tr_o.out_dir, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "score a fold and compute the five metrics");
    eval_cmd->fallthrough();
    opt(eval_cmd, "--scores", ev_o.scores, "pre-scored CSV; skips the model path");
    opt(eval_cmd, "--stays", ev_o.stays, "stays.csv or stays.jsonl");
    opt(eval_cmd, "--encoded", ev_o.encoded, "encoded.jsonl from encode");
    opt(eval_cmd, "--plan", ev_o.plan, "plan.json from encode");
    opt(eval_cmd, "--model", ev_o.model, "model.json from train");
    opt(eval_cmd, "--decisions", ev_o.decisions, "decisions CSV");
    opt(eval_cmd, "--folds", ev_o.folds, "folds CSV");
    eval_cmd->add_option("--fold", ev_o.fold, "test fold index")->take_last();
    eval_cmd->add_option("--threshold", ev_o.threshold,
                         "fixed decision threshold (default: F1-optimal on the validation fold)")
        ->take_last();
    opt(eval_cmd, "--out", ev_o.out_dir, "output directory")->required();

    auto* compare_cmd = app.add_subcommand("compare", "3-of-5 metric comparison of two reports");
    compare_cmd->fallthrough();
    compare_cmd->add_option("report_a", cm_o.report_a, "metrics.json of model A")->required();
    compare_cmd->add_option("report_b", cm_o.report_b, "metrics.json of model B")->required();

    auto* notes_cmd = app.add_subcommand("aggregate-notes", "per-note chunk score aggregation");
    notes_cmd->fallthrough();
    opt(notes_cmd, "--chunks", no_o.chunks, "JSONL with stay_id and chunk_probs")->required();
    opt(notes_cmd, "--out", no_o.out_file, "scores CSV path")->required();

    auto* synth_cmd = app.add_subcommand("synth", "deterministic synthetic dataset");
    synth_cmd->fallthrough();
    synth_cmd->add_option("--n", sy_o.n, "number of patients")->take_last();
    synth_cmd->add_option("--rate", sy_o.rate, "target positive rate")->take_last();
    synth_cmd->add_option("--theta", sy_o.theta, "signal strength in [0,1]")->take_last();
    opt(synth_cmd, "--out", sy_o.out_dir, "output directory")->required();

    auto* pipe_cmd = app.add_subcommand("pipeline", "ingest through evaluation, end to end");
    pipe_cmd->fallthrough();
    opt(pipe_cmd, "--events", pi_o.events, "events.csv")->required();
    opt(pipe_cmd, "--stays", pi_o.stays, "stays.csv")->required();
    opt(pipe_cmd, "--icd9", pi_o.icd9, "icd9.csv (optional)");
    opt(pipe_cmd, "--kb", pi_o.kb_path, "KB JSON file (default: built-in)");
    opt(pipe_cmd, "--variant", pi_o.variant, "encoding variant")->check(variants);
    opt(pipe_cmd, "--year-window", pi_o.year_window, "first-stay rule window")
        ->check(year_windows);
    opt(pipe_cmd, "--gradient-mode", pi_o.gradient_mode, "simple or thresholded")
        ->check(gradient_modes);
    opt(pipe_cmd, "--weighting", pi_o.weighting, "interpolation weighting")->check(weightings);
    pipe_cmd->add_flag("--interpolate,!--no-interpolate", pi_o.interpolate,
                       "fill the grid for the abstraction artifact")
        ->take_last();
    pipe_cmd->add_flag("--t-stable-gap,!--no-t-stable-gap", pi_o.t_stable_gap,
                       "use t_stable as the interval merge gap")
        ->take_last();
    pipe_cmd->add_option("--k", pi_o.k, "number of folds")->take_last();
    pipe_cmd->add_option("--max-len-cap", pi_o.max_len_cap, "hard cap on padded length L")
        ->take_last();
    pipe_cmd->add_option("--batch-size", pi_o.cfg.batch_size, "mini-batch size")->take_last();
    pipe_cmd->add_option("--lr", pi_o.cfg.lr, "initial learning rate")->take_last();
    pipe_cmd->add_option("--lr-decay", pi_o.cfg.lr_decay, "decay per non-improvement")
        ->take_last();
    pipe_cmd->add_option("--eval-every", pi_o.cfg.eval_every, "steps between evaluations")
        ->take_last();
    pipe_cmd->add_option("--patience", pi_o.cfg.patience, "consecutive non-improvements to stop")
        ->take_last();
    pipe_cmd->add_flag("--class-weighting,!--no-class-weighting", pi_o.class_weighting,
                       "inverse-frequency loss weights")
        ->take_last();
    opt(pipe_cmd, "--out", pi_o.out_dir, "output directory")->required();

    kb_cmd->callback([&] { run_kb_validate(kb_o, g, out); });
    ingest_cmd->callback([&] { run_ingest(in_o, g, out); });
    cohort_cmd->callback([&] { run_cohort(co_o, g, out); });
    split_cmd->callback([&] { run_split(sp_o, g, out); });
    abstract_cmd->callback([&] { run_abstract(ab_o, g, out); });
    encode_cmd->callback([&] { run_encode(en_o, g, out); });
    train_cmd->callback([&] { run_train(tr_o, g, out); });
    eval_cmd->callback([&] { run_evaluate(ev_o, g, out); });
    compare_cmd->callback([&] { run_compare(cm_o, out); });
    notes_cmd->callback([&] { run_aggregate_notes(no_o, g, out); });
    synth_cmd->callback([&] { run_synth(sy_o, g, out); });
    pipe_cmd->callback([&] { run_pipeline(pi_o, g, out); });

    try {
        std::vector<std::string> expanded = splice_config(args);
        std::reverse(expanded.begin(), expanded.end());
        app.parse(expanded);
    } catch (const CLI::CallForHelp&) {
        const auto parsed = app.get_subcommands();
        out << (parsed.empty() ? app.help() : parsed.back()->help());
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        err << "run 'readmit --help' for the command list\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace readmit
