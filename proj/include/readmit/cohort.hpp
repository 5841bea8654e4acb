#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "readmit/csv.hpp"
#include "readmit/kb.hpp"
#include "readmit/series.hpp"

namespace readmit {

inline constexpr std::int64_t kReadmissionWindowSeconds = 30 * 86400;
inline constexpr std::int64_t kMinLosSeconds = 86400;
inline constexpr std::int64_t kMaxLosSeconds = 30 * 86400;
inline constexpr std::int64_t kRollingYearSeconds = 365 * 86400;

struct CohortDecision {
    std::string stay_id;
    bool included = false;
    std::vector<std::string> failed_rules;  // subset of {"R1",...,"R5"}, ascending
    std::optional<bool> label;              // present iff included

    bool operator==(const CohortDecision&) const = default;
};

enum class YearWindow { calendar, rolling };
const char* to_string(YearWindow w);
YearWindow year_window_from_string(const std::string& s);

struct CohortOptions {
    YearWindow year_window = YearWindow::calendar;
};

// Evaluates R1 (adult), R2 (length of stay 1..30 days), R3 (data
// sufficiency per KB concept), R4 (no death in stay or 30 days after) and
// R5 (first stay of the patient in the year) for every stay. All failures
// are recorded; nothing short-circuits, so rule order never matters. R5 is
// judged against the full stay list, included or not.
std::vector<CohortDecision> apply_rules(const std::vector<StayRecord>& stays,
                                        const KnowledgeBase& kb,
                                        const CohortOptions& options = {});

// True iff another stay of the same patient starts within (icu_out,
// icu_out + 30 days]. Judged against the full stay list.
std::vector<bool> label_readmission(const std::vector<StayRecord>& stays);

// apply_rules + label_readmission; labels attached to included stays only.
std::vector<CohortDecision> build_cohort(const std::vector<StayRecord>& stays,
                                         const KnowledgeBase& kb,
                                         const CohortOptions& options = {});

struct FoldAssignment {
    int k = 5;
    std::uint64_t seed = 0;
    std::map<std::string, int> fold_of;  // patient_id -> fold in [0, k)

    bool operator==(const FoldAssignment&) const = default;
};

// Patient-level stratified folds: a patient is positive if any included
// stay is, each class is shuffled deterministically by seed, and patients
// are dealt round-robin. All of a patient's stays share the fold.
FoldAssignment stratified_folds(const std::vector<StayRecord>& stays,
                                const std::vector<CohortDecision>& decisions, int k,
                                std::uint64_t seed);

struct CohortReport {
    // counts[gender][age_bucket][label]: gender 0=male 1=female,
    // bucket 0=18-65 1=>65, label 0=negative 1=positive
    std::uint64_t counts[2][2][2] = {};
    std::uint64_t total_stays = 0;     // all stays seen
    std::uint64_t included_stays = 0;
    std::uint64_t patients = 0;        // patients with at least one included stay
    std::uint64_t positives = 0;       // included positive stays

    double positive_rate() const;
    std::string to_text() const;
    void to_csv(std::ostream& out) const;
};

CohortReport cohort_report(const std::vector<StayRecord>& stays,
                           const std::vector<CohortDecision>& decisions);

void write_decisions_csv(std::ostream& out, const std::vector<CohortDecision>& decisions);
std::vector<CohortDecision> read_decisions_csv(std::istream& in, const std::string& name);
void write_folds_csv(std::ostream& out, const FoldAssignment& folds);
FoldAssignment read_folds_csv(std::istream& in, const std::string& name);
std::vector<CohortDecision> read_decisions_csv_file(const std::string& path);
FoldAssignment read_folds_csv_file(const std::string& path);

}  // namespace readmit
