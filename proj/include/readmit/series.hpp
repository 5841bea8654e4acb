#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "readmit/csv.hpp"

namespace readmit {

enum class Gender { male, female };

const char* to_string(Gender g);
std::optional<Gender> gender_from_string(const std::string& s);

struct Sample {
    std::string concept_id;
    std::int64_t t = 0;  // integer seconds, epoch or dataset-local offset
    double value = 0.0;

    bool operator==(const Sample&) const = default;
};

// One ICU stay with everything later stages need: identity and timing,
// demographics, the raw event samples, diagnosis codes, and an optional
// death time (absent means the patient is known alive).
struct StayRecord {
    std::string stay_id;
    std::string patient_id;
    std::int64_t icu_in = 0;
    std::int64_t icu_out = 0;
    int age_years = 0;
    Gender gender = Gender::male;
    std::string insurance;  // empty = unknown
    std::optional<std::int64_t> death_time;
    std::vector<Sample> samples;
    std::vector<std::pair<std::string, std::string>> icd9;  // (code, description), sequence order
    std::vector<double> note_chunk_probs;  // externally produced, may be empty

    bool operator==(const StayRecord&) const = default;
};

struct RejectRow {
    std::string source;   // file name
    std::size_t line = 0; // 1-based
    std::string reason;
};

struct IngestResult {
    std::vector<StayRecord> stays;  // sorted by (patient_id, icu_in, stay_id)
    std::vector<RejectRow> rejects;
};

// Reads the three CSV sources into StayRecords. Malformed rows and events
// that reference unknown stays are collected in rejects, never dropped
// silently; a missing column is fatal (SchemaError).
IngestResult ingest(std::istream& events, std::istream& stays, std::istream* icd9,
                    const std::string& events_name = "events.csv",
                    const std::string& stays_name = "stays.csv",
                    const std::string& icd9_name = "icd9.csv");
IngestResult ingest_files(const std::string& events_path, const std::string& stays_path,
                          const std::string& icd9_path = "");

// Parses just a stays.csv table into records with no samples attached
// (used where events are not needed, e.g. fold splitting).
std::vector<StayRecord> parse_stays_rows(const CsvTable& table, std::vector<RejectRow>* rejects);

struct NormalizeOptions {
    std::int64_t window_margin_seconds = 3600;  // samples allowed this far outside the stay
};

struct NormalizeStats {
    std::size_t dropped_nonfinite = 0;
    std::size_t dropped_outside_window = 0;
    std::size_t collapsed_duplicates = 0;
};

// Sorts samples by (concept_id, t), drops non-finite values and samples
// outside [icu_in - margin, icu_out + margin], and collapses exact duplicate
// timestamps per concept to the mean of their values. Idempotent.
StayRecord normalize(StayRecord stay, const NormalizeOptions& options = {},
                     NormalizeStats* stats = nullptr);

nlohmann::json stay_to_json(const StayRecord& stay);
StayRecord stay_from_json(const nlohmann::json& j);
void write_stays_jsonl(std::ostream& out, const std::vector<StayRecord>& stays);
std::vector<StayRecord> read_stays_jsonl(std::istream& in);
std::vector<StayRecord> read_stays_jsonl_file(const std::string& path);

void write_rejects_csv(std::ostream& out, const std::vector<RejectRow>& rejects);

}  // namespace readmit
