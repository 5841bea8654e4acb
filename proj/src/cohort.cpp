#include "readmit/cohort.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "readmit/error.hpp"
#include "readmit/rng.hpp"
#include "readmit/timeutil.hpp"

namespace readmit {

const char* to_string(YearWindow w) {
    return w == YearWindow::calendar ? "calendar" : "rolling";
}

YearWindow year_window_from_string(const std::string& s) {
    if (s == "calendar") return YearWindow::calendar;
    if (s == "rolling") return YearWindow::rolling;
    fail(ErrorCode::BadArgument, "unknown year window: " + s);
}

namespace {

// Earlier admission, stay_id as the tie-break for identical admission times.
bool admitted_before(const StayRecord& a, const StayRecord& b) {
    if (a.icu_in != b.icu_in) return a.icu_in < b.icu_in;
    return a.stay_id < b.stay_id;
}

}  // namespace

std::vector<CohortDecision> apply_rules(const std::vector<StayRecord>& stays,
                                        const KnowledgeBase& kb, const CohortOptions& options) {
    std::unordered_map<std::string, std::vector<const StayRecord*>> by_patient;
    for (const StayRecord& stay : stays) by_patient[stay.patient_id].push_back(&stay);

    std::vector<CohortDecision> out;
    out.reserve(stays.size());
    for (const StayRecord& stay : stays) {
        CohortDecision d;
        d.stay_id = stay.stay_id;

        if (stay.age_years < 18) d.failed_rules.push_back("R1");

        const std::int64_t los = stay.icu_out - stay.icu_in;
        if (los < kMinLosSeconds || los > kMaxLosSeconds) d.failed_rules.push_back("R2");

        // R3 counts raw (normalized, pre-interpolation) samples per concept.
        std::unordered_map<std::string, std::size_t> sample_counts;
        for (const Sample& s : stay.samples) ++sample_counts[s.concept_id];
        bool sufficient = true;
        for (const ConceptDef& c : kb.concepts()) {
            auto it = sample_counts.find(c.concept_id);
            const std::size_t n = it == sample_counts.end() ? 0 : it->second;
            if (n < static_cast<std::size_t>(c.min_samples)) {
                sufficient = false;
                break;
            }
        }
        if (!sufficient) d.failed_rules.push_back("R3");

        if (stay.death_time && *stay.death_time <= stay.icu_out + kReadmissionWindowSeconds) {
            d.failed_rules.push_back("R4");
        }

        bool first = true;
        for (const StayRecord* other : by_patient.at(stay.patient_id)) {
            if (other->stay_id == stay.stay_id) continue;
            if (!admitted_before(*other, stay)) continue;
            if (options.year_window == YearWindow::calendar) {
                if (year_of(other->icu_in) == year_of(stay.icu_in)) {
                    first = false;
                    break;
                }
            } else {
                if (stay.icu_in - other->icu_in < kRollingYearSeconds) {
                    first = false;
                    break;
                }
            }
        }
        if (!first) d.failed_rules.push_back("R5");

        d.included = d.failed_rules.empty();
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<bool> label_readmission(const std::vector<StayRecord>& stays) {
    std::unordered_map<std::string, std::vector<const StayRecord*>> by_patient;
    for (const StayRecord& stay : stays) by_patient[stay.patient_id].push_back(&stay);

    std::vector<bool> labels;
    labels.reserve(stays.size());
    for (const StayRecord& stay : stays) {
        bool positive = false;
        for (const StayRecord* other : by_patient.at(stay.patient_id)) {
            if (other->stay_id == stay.stay_id) continue;
            if (other->icu_in > stay.icu_out &&
                other->icu_in <= stay.icu_out + kReadmissionWindowSeconds) {
                positive = true;
                break;
            }
        }
        labels.push_back(positive);
    }
    return labels;
}

std::vector<CohortDecision> build_cohort(const std::vector<StayRecord>& stays,
                                         const KnowledgeBase& kb, const CohortOptions& options) {
    std::vector<CohortDecision> decisions = apply_rules(stays, kb, options);
    const std::vector<bool> labels = label_readmission(stays);
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        if (decisions[i].included) decisions[i].label = labels[i];
    }
    return decisions;
}

FoldAssignment stratified_folds(const std::vector<StayRecord>& stays,
                                const std::vector<CohortDecision>& decisions, int k,
                                std::uint64_t seed) {
    if (k < 2) fail(ErrorCode::BadArgument, "fold count must be at least 2, got " + std::to_string(k));
    if (stays.size() != decisions.size()) {
        fail(ErrorCode::BadArgument, "stays and decisions must align");
    }

    std::map<std::string, bool> patient_label;  // ordered: deterministic iteration
    for (std::size_t i = 0; i < stays.size(); ++i) {
        if (!decisions[i].included) continue;
        bool& lbl = patient_label[stays[i].patient_id];
        if (decisions[i].label && *decisions[i].label) lbl = true;
    }
    if (patient_label.size() < static_cast<std::size_t>(k)) {
        fail(ErrorCode::TooFewPatients, "cohort has " + std::to_string(patient_label.size()) +
                                            " patients, need at least " + std::to_string(k));
    }

    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    for (const auto& [pid, lbl] : patient_label) (lbl ? positives : negatives).push_back(pid);

    FoldAssignment folds;
    folds.k = k;
    folds.seed = seed;
    Rng rng(seed);
    rng.shuffle(positives);
    rng.shuffle(negatives);
    // One continuing deal pointer across classes keeps fold sizes within one
    // of each other overall, not just within a class.
    std::size_t ptr = 0;
    for (const std::string& pid : positives) folds.fold_of[pid] = static_cast<int>(ptr++ % k);
    for (const std::string& pid : negatives) folds.fold_of[pid] = static_cast<int>(ptr++ % k);
    return folds;
}

double CohortReport::positive_rate() const {
    return included_stays == 0 ? 0.0
                               : static_cast<double>(positives) / static_cast<double>(included_stays);
}

std::string CohortReport::to_text() const {
    std::ostringstream os;
    os << "Cohort distribution (positive readmission / negative)\n";
    os << "              Ages 18-65            Ages > 65\n";
    auto cell = [](std::uint64_t pos, std::uint64_t neg) {
        std::ostringstream c;
        c << pos << " / " << neg;
        std::string s = c.str();
        if (s.size() < 20) s += std::string(20 - s.size(), ' ');
        return s;
    };
    os << "Male          " << cell(counts[0][0][1], counts[0][0][0]) << " "
       << cell(counts[0][1][1], counts[0][1][0]) << "\n";
    os << "Female        " << cell(counts[1][0][1], counts[1][0][0]) << " "
       << cell(counts[1][1][1], counts[1][1][0]) << "\n";
    os << "\n";
    os << "Stays seen: " << total_stays << "\n";
    os << "Included stays: " << included_stays << "\n";
    os << "Patients: " << patients << "\n";
    os << "Positive stays: " << positives << " (" << format_double(positive_rate() * 100.0)
       << "%)\n";
    return os.str();
}

void CohortReport::to_csv(std::ostream& out) const {
    out << "gender,age_bucket,positive,negative\n";
    const char* genders[2] = {"male", "female"};
    const char* buckets[2] = {"18-65", ">65"};
    for (int g = 0; g < 2; ++g) {
        for (int b = 0; b < 2; ++b) {
            write_csv_row(out, {genders[g], buckets[b], std::to_string(counts[g][b][1]),
                                std::to_string(counts[g][b][0])});
        }
    }
}

CohortReport cohort_report(const std::vector<StayRecord>& stays,
                           const std::vector<CohortDecision>& decisions) {
    if (stays.size() != decisions.size()) {
        fail(ErrorCode::BadArgument, "stays and decisions must align");
    }
    CohortReport report;
    report.total_stays = stays.size();
    std::set<std::string> patient_ids;
    for (std::size_t i = 0; i < stays.size(); ++i) {
        if (!decisions[i].included) continue;
        const StayRecord& stay = stays[i];
        const bool positive = decisions[i].label && *decisions[i].label;
        const int g = stay.gender == Gender::male ? 0 : 1;
        const int b = stay.age_years <= 65 ? 0 : 1;
        ++report.counts[g][b][positive ? 1 : 0];
        ++report.included_stays;
        if (positive) ++report.positives;
        patient_ids.insert(stay.patient_id);
    }
    report.patients = patient_ids.size();
    return report;
}

void write_decisions_csv(std::ostream& out, const std::vector<CohortDecision>& decisions) {
    out << "stay_id,included,failed_rules,label\n";
    for (const CohortDecision& d : decisions) {
        std::string rules;
        for (std::size_t i = 0; i < d.failed_rules.size(); ++i) {
            if (i) rules += ";";
            rules += d.failed_rules[i];
        }
        std::string label;
        if (d.label) label = *d.label ? "1" : "0";
        write_csv_row(out, {d.stay_id, d.included ? "true" : "false", rules, label});
    }
}

std::vector<CohortDecision> read_decisions_csv(std::istream& in, const std::string& name) {
    const CsvTable table = read_csv(in, name);
    const std::size_t c_stay = table.require_column("stay_id");
    const std::size_t c_inc = table.require_column("included");
    const std::size_t c_rules = table.require_column("failed_rules");
    const std::size_t c_label = table.require_column("label");
    std::vector<CohortDecision> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        CohortDecision d;
        d.stay_id = row[c_stay];
        if (row[c_inc] == "true") {
            d.included = true;
        } else if (row[c_inc] == "false") {
            d.included = false;
        } else {
            fail(ErrorCode::SchemaError, name + " line " + std::to_string(table.line_numbers[r]) +
                                             ": included must be true or false");
        }
        std::stringstream rules(row[c_rules]);
        std::string rule;
        while (std::getline(rules, rule, ';')) {
            if (!rule.empty()) d.failed_rules.push_back(rule);
        }
        if (!row[c_label].empty()) {
            if (row[c_label] != "0" && row[c_label] != "1") {
                fail(ErrorCode::SchemaError, name + " line " +
                                                 std::to_string(table.line_numbers[r]) +
                                                 ": label must be 0, 1 or empty");
            }
            d.label = row[c_label] == "1";
        }
        out.push_back(std::move(d));
    }
    return out;
}

void write_folds_csv(std::ostream& out, const FoldAssignment& folds) {
    out << "patient_id,fold\n";
    for (const auto& [pid, fold] : folds.fold_of) {
        write_csv_row(out, {pid, std::to_string(fold)});
    }
}

FoldAssignment read_folds_csv(std::istream& in, const std::string& name) {
    const CsvTable table = read_csv(in, name);
    const std::size_t c_pid = table.require_column("patient_id");
    const std::size_t c_fold = table.require_column("fold");
    FoldAssignment folds;
    int max_fold = 0;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        int fold = -1;
        try {
            fold = std::stoi(row[c_fold]);
        } catch (const std::exception&) {
            fail(ErrorCode::SchemaError, name + " line " + std::to_string(table.line_numbers[r]) +
                                             ": unparseable fold");
        }
        if (fold < 0) {
            fail(ErrorCode::SchemaError, name + " line " + std::to_string(table.line_numbers[r]) +
                                             ": fold must be non-negative");
        }
        if (!folds.fold_of.emplace(row[c_pid], fold).second) {
            fail(ErrorCode::SchemaError, name + ": duplicate patient " + row[c_pid]);
        }
        max_fold = std::max(max_fold, fold);
    }
    if (folds.fold_of.empty()) fail(ErrorCode::SchemaError, name + ": no fold rows");
    folds.k = max_fold + 1;
    return folds;
}

std::vector<CohortDecision> read_decisions_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return read_decisions_csv(in, path);
}

FoldAssignment read_folds_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return read_folds_csv(in, path);
}

}  // namespace readmit
