#include "readmit/kb.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "readmit/error.hpp"
#include "readmit/timeutil.hpp"

namespace readmit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool iequals(const std::string& a, const char* b) {
    std::size_t i = 0;
    for (; i < a.size() && b[i]; ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return i == a.size() && b[i] == '\0';
}

}  // namespace

const char* to_string(ConceptKind kind) {
    return kind == ConceptKind::lab ? "lab" : "chart";
}

ConceptKind concept_kind_from_string(const std::string& s) {
    if (s == "lab") return ConceptKind::lab;
    if (s == "chart") return ConceptKind::chart;
    fail(ErrorCode::SchemaError, "unknown concept kind '" + s + "'");
}

int ConceptDef::normal_band() const {
    for (std::size_t i = 0; i < state_cutoffs.size(); ++i)
        if (iequals(state_cutoffs[i].label, "normal")) return static_cast<int>(i);
    // No band named "Normal" (e.g. severe/moderate/mild): the middle band is
    // the in-range one.
    return static_cast<int>((state_cutoffs.size() - 1) / 2);
}

const std::string& ConceptDef::state_of(double value) const {
    return state_cutoffs[static_cast<std::size_t>(state_ordinal(value))].label;
}

int ConceptDef::state_ordinal(double value) const {
    if (!std::isfinite(value))
        fail(ErrorCode::BadArgument, "non-finite value for concept " + concept_id);
    const int m = normal_band();
    const int n = state_count();
    for (int i = 0; i < n; ++i) {
        const double b = state_cutoffs[static_cast<std::size_t>(i)].upper_bound;
        // Bands below normal exclude their upper boundary; the normal band and
        // bands above include it. Both normal-range endpoints therefore map to
        // the normal state.
        if (i < m ? value < b : value <= b) return i;
    }
    return n - 1;  // unreachable: last bound is +inf
}

std::vector<std::string> ConceptDef::state_labels() const {
    std::vector<std::string> out;
    out.reserve(state_cutoffs.size());
    for (const auto& band : state_cutoffs) out.push_back(band.label);
    return out;
}

KnowledgeBase::KnowledgeBase(std::string version, std::vector<ConceptDef> concepts)
    : version_(std::move(version)), concepts_(std::move(concepts)) {
    for (std::size_t i = 0; i < concepts_.size(); ++i)
        by_id_.emplace(concepts_[i].concept_id, i);
}

const ConceptDef* KnowledgeBase::find(const std::string& concept_id) const {
    auto it = by_id_.find(concept_id);
    return it == by_id_.end() ? nullptr : &concepts_[it->second];
}

const ConceptDef& KnowledgeBase::lookup(const std::string& id_or_name) const {
    if (const ConceptDef* c = find(id_or_name)) return *c;
    for (const auto& c : concepts_)
        if (c.name == id_or_name) return c;
    fail(ErrorCode::UnknownConcept, "no concept '" + id_or_name + "' in knowledge base");
}

namespace {

void validate_concept(const ConceptDef& c) {
    const std::string& id = c.concept_id;
    if (id.empty()) fail(ErrorCode::SchemaError, "concept with empty id");
    if (c.state_cutoffs.empty())
        fail(ErrorCode::InvalidCutoffs, id + ": no state cutoffs");
    if (c.state_cutoffs.back().upper_bound != kInf)
        fail(ErrorCode::InvalidCutoffs, id + ": final cutoff must be unbounded");
    std::set<std::string> labels;
    double prev = -kInf;
    for (const auto& band : c.state_cutoffs) {
        if (std::isnan(band.upper_bound))
            fail(ErrorCode::InvalidCutoffs, id + ": NaN cutoff");
        if (band.upper_bound <= prev)
            fail(ErrorCode::InvalidCutoffs, id + ": cutoff bounds not strictly increasing");
        prev = band.upper_bound;
        if (!labels.insert(band.label).second)
            fail(ErrorCode::InvalidCutoffs, id + ": duplicate state label '" + band.label + "'");
    }
    if (!(c.sig_delta > 0.0))
        fail(ErrorCode::NonPositiveParam, id + ": sig_delta must be > 0");
    if (c.t_stable_seconds <= 0)
        fail(ErrorCode::NonPositiveParam, id + ": t_stable_seconds must be > 0");
    if (c.min_samples < 1)
        fail(ErrorCode::NonPositiveParam, id + ": min_samples must be >= 1");
}

}  // namespace

KnowledgeBase load_kb(const nlohmann::json& doc) {
    if (!doc.is_object()) fail(ErrorCode::SchemaError, "KB document must be a JSON object");
    if (!doc.contains("concepts") || !doc["concepts"].is_array())
        fail(ErrorCode::SchemaError, "KB document missing 'concepts' array");
    std::string version = doc.value("version", std::string{});

    std::vector<ConceptDef> concepts;
    std::set<std::string> seen;
    for (const auto& jc : doc["concepts"]) {
        ConceptDef c;
        try {
            c.concept_id = jc.at("id").get<std::string>();
            c.name = jc.value("name", c.concept_id);
            c.kind = concept_kind_from_string(jc.at("kind").get<std::string>());
            c.unit = jc.value("unit", std::string{});
            for (const auto& pair : jc.at("cutoffs")) {
                if (!pair.is_array() || pair.size() != 2)
                    fail(ErrorCode::SchemaError, c.concept_id + ": cutoff entries must be [bound, label] pairs");
                StateBand band;
                band.upper_bound = pair[0].is_null() ? std::numeric_limits<double>::infinity()
                                                     : pair[0].get<double>();
                band.label = pair[1].get<std::string>();
                c.state_cutoffs.push_back(std::move(band));
            }
            c.sig_delta = jc.at("sig_delta").get<double>();
            c.t_stable_seconds = jc.at("t_stable_seconds").get<std::int64_t>();
            c.min_samples = jc.value("min_samples", c.kind == ConceptKind::lab ? 1 : 5);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::SchemaError, std::string("malformed concept entry: ") + e.what());
        }
        validate_concept(c);
        if (!seen.insert(c.concept_id).second)
            fail(ErrorCode::DuplicateConcept, "duplicate concept id '" + c.concept_id + "'");
        concepts.push_back(std::move(c));
    }
    if (concepts.empty()) fail(ErrorCode::EmptyKB, "knowledge base has no concepts");
    return KnowledgeBase(std::move(version), std::move(concepts));
}

KnowledgeBase load_kb_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaError, path + ": " + e.what());
    }
    return load_kb(doc);
}

nlohmann::json kb_to_json(const KnowledgeBase& kb) {
    nlohmann::json concepts = nlohmann::json::array();
    for (const auto& c : kb.concepts()) {
        nlohmann::json cutoffs = nlohmann::json::array();
        for (const auto& band : c.state_cutoffs) {
            nlohmann::json bound;
            if (std::isinf(band.upper_bound)) bound = nullptr;
            else bound = band.upper_bound;
            cutoffs.push_back(nlohmann::json::array({bound, band.label}));
        }
        concepts.push_back({
            {"id", c.concept_id},
            {"name", c.name},
            {"kind", to_string(c.kind)},
            {"unit", c.unit},
            {"cutoffs", cutoffs},
            {"sig_delta", c.sig_delta},
            {"t_stable_seconds", c.t_stable_seconds},
            {"min_samples", c.min_samples},
        });
    }
    return {{"version", kb.version()}, {"concepts", concepts}};
}

namespace {

constexpr std::int64_t kHours36 = 36 * kSecondsPerHour;
constexpr std::int64_t kHours2 = 2 * kSecondsPerHour;
constexpr std::int64_t kHours1 = kSecondsPerHour;

ConceptDef make_concept(const char* id, const char* name, ConceptKind kind, const char* unit,
                        double normal_lo, double normal_hi, double sig_delta,
                        std::int64_t t_stable, const char* low_label = "Low",
                        const char* normal_label = "Normal", const char* high_label = "High") {
    ConceptDef c;
    c.concept_id = id;
    c.name = name;
    c.kind = kind;
    c.unit = unit;
    c.state_cutoffs = {{normal_lo, low_label}, {normal_hi, normal_label}, {kInf, high_label}};
    c.sig_delta = sig_delta;
    c.t_stable_seconds = t_stable;
    c.min_samples = kind == ConceptKind::lab ? 1 : 5;
    return c;
}

}  // namespace

KnowledgeBase builtin_readmission_kb() {
    using enum ConceptKind;
    std::vector<ConceptDef> concepts = {
        make_concept("chloride", "Chloride", lab, "mEq/L", 96.0, 106.0, 5.0, kHours36),
        make_concept("creatinine", "Creatinine", lab, "mg/dL", 0.6, 1.3, 0.2, kHours36),
        make_concept("glucose", "Glucose", lab, "mg/dL", 70.0, 100.0, 10.0, kHours36),
        make_concept("hemoglobin", "Hemoglobin", lab, "g/dL", 11.0, 18.0, 2.0, kHours36),
        make_concept("pco2", "PCO2", lab, "mm Hg", 38.0, 42.0, 2.0, kHours36),
        make_concept("ph", "PH", lab, "pH", 7.34, 7.45, 0.05, kHours36),
        make_concept("phosphate", "Phosphate", lab, "mg/dL", 2.4, 4.1, 0.5, kHours36),
        make_concept("plt", "PLT", lab, "x10^9/L", 150.0, 400.0, 50.0, kHours36),
        make_concept("po2", "PO2", lab, "torr", 75.0, 100.0, 10.0, kHours36),
        make_concept("urea", "Urea", lab, "mg/dL", 10.0, 20.0, 5.0, kHours36),
        make_concept("sodium", "Sodium", lab, "mEq/L", 135.0, 145.0, 5.0, kHours36),
        make_concept("wbc", "WBC", lab, "x10^9/L", 4.5, 10.0, 1.0, kHours36),
        make_concept("body_temp", "Body Temp", chart, "C", 36.2, 37.2, 0.5, kHours2,
                     "Hypothermia", "Normal", "Fever"),
        make_concept("gcs", "Glasgow CS", chart, "", 8.0, 12.0, 2.0, kHours2,
                     "severe", "moderate", "mild"),
        make_concept("mean_pressure", "Mean Pressure", chart, "", 65.0, 80.0, 5.0, kHours1),
        make_concept("heart_rate", "Heart-Rate", chart, "bpm", 60.0, 80.0, 10.0, kHours1),
        make_concept("resp_rate", "Respiratory-Rate", chart, "breath/min", 7.0, 14.0, 3.0, kHours1),
    };
    return KnowledgeBase("readmission-1", std::move(concepts));
}

}  // namespace readmit
