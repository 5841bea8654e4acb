#include "readmit/series.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>

#include "readmit/error.hpp"

namespace readmit {

const char* to_string(Gender g) {
    return g == Gender::male ? "male" : "female";
}

std::optional<Gender> gender_from_string(const std::string& s) {
    std::string low;
    low.reserve(s.size());
    for (char c : s) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (low == "male" || low == "m") return Gender::male;
    if (low == "female" || low == "f") return Gender::female;
    return std::nullopt;
}

namespace {

std::string trimmed(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::optional<std::int64_t> parse_i64(const std::string& raw) {
    const std::string s = trimmed(raw);
    if (s.empty()) return std::nullopt;
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return out;
}

std::optional<double> parse_real(const std::string& raw) {
    const std::string s = trimmed(raw);
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void reject(std::vector<RejectRow>* rejects, const std::string& source, std::size_t line,
            std::string reason) {
    if (rejects) rejects->push_back(RejectRow{source, line, std::move(reason)});
}

}  // namespace

std::vector<StayRecord> parse_stays_rows(const CsvTable& table, std::vector<RejectRow>* rejects) {
    const std::size_t c_stay = table.require_column("stay_id");
    const std::size_t c_patient = table.require_column("patient_id");
    const std::size_t c_in = table.require_column("intime");
    const std::size_t c_out = table.require_column("outtime");
    const std::size_t c_age = table.require_column("age");
    const std::size_t c_gender = table.require_column("gender");
    const std::size_t c_insurance = table.require_column("insurance");
    const std::size_t c_death = table.require_column("death_time");

    std::vector<StayRecord> out;
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.line_numbers[r];
        StayRecord stay;
        stay.stay_id = row[c_stay];
        stay.patient_id = row[c_patient];
        if (stay.stay_id.empty()) {
            reject(rejects, table.source, line, "empty stay_id");
            continue;
        }
        if (stay.patient_id.empty()) {
            reject(rejects, table.source, line, "empty patient_id");
            continue;
        }
        if (seen.count(stay.stay_id)) {
            reject(rejects, table.source, line, "duplicate stay_id " + stay.stay_id);
            continue;
        }
        auto in_t = parse_i64(row[c_in]);
        auto out_t = parse_i64(row[c_out]);
        if (!in_t) {
            reject(rejects, table.source, line, "unparseable intime: " + row[c_in]);
            continue;
        }
        if (!out_t) {
            reject(rejects, table.source, line, "unparseable outtime: " + row[c_out]);
            continue;
        }
        if (*in_t >= *out_t) {
            reject(rejects, table.source, line, "intime is not before outtime");
            continue;
        }
        stay.icu_in = *in_t;
        stay.icu_out = *out_t;
        auto age = parse_i64(row[c_age]);
        if (!age || *age < 0 || *age > 200) {
            reject(rejects, table.source, line, "unparseable age: " + row[c_age]);
            continue;
        }
        stay.age_years = static_cast<int>(*age);
        auto g = gender_from_string(row[c_gender]);
        if (!g) {
            reject(rejects, table.source, line, "unrecognized gender: " + row[c_gender]);
            continue;
        }
        stay.gender = *g;
        stay.insurance = trimmed(row[c_insurance]);
        const std::string death_raw = trimmed(row[c_death]);
        if (!death_raw.empty()) {
            auto d = parse_i64(death_raw);
            if (!d) {
                reject(rejects, table.source, line, "unparseable death_time: " + row[c_death]);
                continue;
            }
            stay.death_time = *d;
        }
        seen.emplace(stay.stay_id, out.size());
        out.push_back(std::move(stay));
    }
    return out;
}

IngestResult ingest(std::istream& events, std::istream& stays, std::istream* icd9,
                    const std::string& events_name, const std::string& stays_name,
                    const std::string& icd9_name) {
    IngestResult result;
    const CsvTable stays_table = read_csv(stays, stays_name);
    result.stays = parse_stays_rows(stays_table, &result.rejects);

    std::unordered_map<std::string, std::size_t> by_stay;
    by_stay.reserve(result.stays.size());
    for (std::size_t i = 0; i < result.stays.size(); ++i) by_stay.emplace(result.stays[i].stay_id, i);

    const CsvTable ev = read_csv(events, events_name);
    const std::size_t e_stay = ev.require_column("stay_id");
    const std::size_t e_patient = ev.require_column("patient_id");
    const std::size_t e_concept = ev.require_column("concept_id");
    const std::size_t e_time = ev.require_column("timestamp");
    const std::size_t e_value = ev.require_column("value");
    for (std::size_t r = 0; r < ev.rows.size(); ++r) {
        const auto& row = ev.rows[r];
        const std::size_t line = ev.line_numbers[r];
        auto it = by_stay.find(row[e_stay]);
        if (it == by_stay.end()) {
            reject(&result.rejects, ev.source, line, "unknown stay_id " + row[e_stay]);
            continue;
        }
        StayRecord& stay = result.stays[it->second];
        if (!row[e_patient].empty() && row[e_patient] != stay.patient_id) {
            reject(&result.rejects, ev.source, line,
                   "patient_id does not match stay " + row[e_stay]);
            continue;
        }
        if (row[e_concept].empty()) {
            reject(&result.rejects, ev.source, line, "empty concept_id");
            continue;
        }
        auto t = parse_i64(row[e_time]);
        if (!t) {
            reject(&result.rejects, ev.source, line, "unparseable timestamp: " + row[e_time]);
            continue;
        }
        auto v = parse_real(row[e_value]);
        if (!v) {
            reject(&result.rejects, ev.source, line, "unparseable value: " + row[e_value]);
            continue;
        }
        stay.samples.push_back(Sample{row[e_concept], *t, *v});
    }

    if (icd9) {
        const CsvTable dx = read_csv(*icd9, icd9_name);
        const std::size_t d_stay = dx.require_column("stay_id");
        const std::size_t d_seq = dx.require_column("seq");
        const std::size_t d_code = dx.require_column("code");
        const std::size_t d_desc = dx.require_column("description");
        std::unordered_map<std::string, std::vector<std::pair<std::int64_t, std::size_t>>> order;
        std::vector<std::pair<std::string, std::string>> entries;
        for (std::size_t r = 0; r < dx.rows.size(); ++r) {
            const auto& row = dx.rows[r];
            const std::size_t line = dx.line_numbers[r];
            auto it = by_stay.find(row[d_stay]);
            if (it == by_stay.end()) {
                reject(&result.rejects, dx.source, line, "unknown stay_id " + row[d_stay]);
                continue;
            }
            auto seq = parse_i64(row[d_seq]);
            if (!seq) {
                reject(&result.rejects, dx.source, line, "unparseable seq: " + row[d_seq]);
                continue;
            }
            if (row[d_code].empty()) {
                reject(&result.rejects, dx.source, line, "empty code");
                continue;
            }
            order[row[d_stay]].push_back({*seq, entries.size()});
            entries.push_back({row[d_code], row[d_desc]});
        }
        for (auto& [stay_id, seq_refs] : order) {
            // Stable on seq so equal sequence numbers keep file order.
            std::stable_sort(seq_refs.begin(), seq_refs.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            StayRecord& stay = result.stays[by_stay.at(stay_id)];
            for (const auto& [seq, idx] : seq_refs) stay.icd9.push_back(entries[idx]);
        }
    }

    std::sort(result.stays.begin(), result.stays.end(),
              [](const StayRecord& a, const StayRecord& b) {
                  if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
                  if (a.icu_in != b.icu_in) return a.icu_in < b.icu_in;
                  return a.stay_id < b.stay_id;
              });
    return result;
}

IngestResult ingest_files(const std::string& events_path, const std::string& stays_path,
                          const std::string& icd9_path) {
    std::ifstream events(events_path, std::ios::binary);
    if (!events) fail(ErrorCode::IoError, "cannot open " + events_path);
    std::ifstream stays(stays_path, std::ios::binary);
    if (!stays) fail(ErrorCode::IoError, "cannot open " + stays_path);
    std::ifstream icd9;
    std::istream* icd9_ptr = nullptr;
    if (!icd9_path.empty()) {
        icd9.open(icd9_path, std::ios::binary);
        if (!icd9) fail(ErrorCode::IoError, "cannot open " + icd9_path);
        icd9_ptr = &icd9;
    }
    return ingest(events, stays, icd9_ptr, events_path, stays_path, icd9_path);
}

StayRecord normalize(StayRecord stay, const NormalizeOptions& options, NormalizeStats* stats) {
    NormalizeStats local;
    const std::int64_t lo = stay.icu_in - options.window_margin_seconds;
    const std::int64_t hi = stay.icu_out + options.window_margin_seconds;

    std::vector<Sample> kept;
    kept.reserve(stay.samples.size());
    for (const Sample& s : stay.samples) {
        if (!std::isfinite(s.value)) {
            ++local.dropped_nonfinite;
            continue;
        }
        if (s.t < lo || s.t > hi) {
            ++local.dropped_outside_window;
            continue;
        }
        kept.push_back(s);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const Sample& a, const Sample& b) {
        if (a.concept_id != b.concept_id) return a.concept_id < b.concept_id;
        return a.t < b.t;
    });

    std::vector<Sample> collapsed;
    collapsed.reserve(kept.size());
    for (std::size_t i = 0; i < kept.size();) {
        std::size_t j = i + 1;
        double sum = kept[i].value;
        while (j < kept.size() && kept[j].concept_id == kept[i].concept_id && kept[j].t == kept[i].t) {
            sum += kept[j].value;
            ++j;
        }
        Sample s = kept[i];
        s.value = sum / static_cast<double>(j - i);
        local.collapsed_duplicates += (j - i) - 1;
        collapsed.push_back(std::move(s));
        i = j;
    }
    stay.samples = std::move(collapsed);
    if (stats) {
        stats->dropped_nonfinite += local.dropped_nonfinite;
        stats->dropped_outside_window += local.dropped_outside_window;
        stats->collapsed_duplicates += local.collapsed_duplicates;
    }
    return stay;
}

nlohmann::json stay_to_json(const StayRecord& stay) {
    nlohmann::json j;
    j["stay_id"] = stay.stay_id;
    j["patient_id"] = stay.patient_id;
    j["icu_in"] = stay.icu_in;
    j["icu_out"] = stay.icu_out;
    j["age"] = stay.age_years;
    j["gender"] = to_string(stay.gender);
    j["insurance"] = stay.insurance;
    if (stay.death_time) {
        j["death_time"] = *stay.death_time;
    } else {
        j["death_time"] = nullptr;
    }
    auto samples = nlohmann::json::array();
    for (const Sample& s : stay.samples) {
        samples.push_back(nlohmann::json::array({s.concept_id, s.t, s.value}));
    }
    j["samples"] = std::move(samples);
    auto icd9 = nlohmann::json::array();
    for (const auto& [code, desc] : stay.icd9) {
        icd9.push_back(nlohmann::json::array({code, desc}));
    }
    j["icd9"] = std::move(icd9);
    j["note_chunk_probs"] = stay.note_chunk_probs;
    return j;
}

StayRecord stay_from_json(const nlohmann::json& j) {
    try {
        StayRecord stay;
        stay.stay_id = j.at("stay_id").get<std::string>();
        stay.patient_id = j.at("patient_id").get<std::string>();
        stay.icu_in = j.at("icu_in").get<std::int64_t>();
        stay.icu_out = j.at("icu_out").get<std::int64_t>();
        stay.age_years = j.at("age").get<int>();
        auto g = gender_from_string(j.at("gender").get<std::string>());
        if (!g) fail(ErrorCode::SchemaError, "unrecognized gender in stay json");
        stay.gender = *g;
        stay.insurance = j.at("insurance").get<std::string>();
        if (!j.at("death_time").is_null()) stay.death_time = j.at("death_time").get<std::int64_t>();
        for (const auto& s : j.at("samples")) {
            stay.samples.push_back(Sample{s.at(0).get<std::string>(), s.at(1).get<std::int64_t>(),
                                          s.at(2).get<double>()});
        }
        for (const auto& d : j.at("icd9")) {
            stay.icd9.push_back({d.at(0).get<std::string>(), d.at(1).get<std::string>()});
        }
        if (j.contains("note_chunk_probs")) {
            stay.note_chunk_probs = j.at("note_chunk_probs").get<std::vector<double>>();
        }
        return stay;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("malformed stay json: ") + e.what());
    }
}

void write_stays_jsonl(std::ostream& out, const std::vector<StayRecord>& stays) {
    for (const StayRecord& stay : stays) out << stay_to_json(stay).dump() << "\n";
}

std::vector<StayRecord> read_stays_jsonl(std::istream& in) {
    std::vector<StayRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            fail(ErrorCode::SchemaError, "invalid json at line " + std::to_string(line_no));
        }
        out.push_back(stay_from_json(j));
    }
    return out;
}

std::vector<StayRecord> read_stays_jsonl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return read_stays_jsonl(in);
}

void write_rejects_csv(std::ostream& out, const std::vector<RejectRow>& rejects) {
    out << "source,line,reason\n";
    for (const RejectRow& r : rejects) {
        write_csv_row(out, {r.source, std::to_string(r.line), r.reason});
    }
}

}  // namespace readmit
