#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace readmit {

enum class ConceptKind { lab, chart };

const char* to_string(ConceptKind kind);
ConceptKind concept_kind_from_string(const std::string& s);

// One ordinal value band. Bands are listed in ascending value order; the last
// band's upper_bound is +infinity.
struct StateBand {
    double upper_bound;
    std::string label;

    bool operator==(const StateBand&) const = default;
};

// Abstraction knowledge for one clinical concept: the value bands used for
// state discretization, the minimum change Delta that counts as a significant
// trend, the stability window used as the interval-merge gap, and the
// per-concept sample count required for cohort inclusion.
struct ConceptDef {
    std::string concept_id;
    std::string name;
    ConceptKind kind = ConceptKind::lab;
    std::string unit;
    std::vector<StateBand> state_cutoffs;
    double sig_delta = 0.0;
    std::int64_t t_stable_seconds = 0;
    int min_samples = 1;

    // Index of the band treated as the in-range ("normal") state. Both of
    // that band's boundary values belong to it; bands below are closed-open,
    // bands above are open-closed, so the cutoffs partition the real line.
    int normal_band() const;

    int state_count() const { return static_cast<int>(state_cutoffs.size()); }
    const std::string& state_of(double value) const;
    int state_ordinal(double value) const;  // ascending value order, 0-based
    std::vector<std::string> state_labels() const;

    bool operator==(const ConceptDef&) const = default;
};

class KnowledgeBase {
public:
    KnowledgeBase() = default;
    KnowledgeBase(std::string version, std::vector<ConceptDef> concepts);

    const std::string& version() const { return version_; }
    std::size_t size() const { return concepts_.size(); }
    const std::vector<ConceptDef>& concepts() const { return concepts_; }

    const ConceptDef* find(const std::string& concept_id) const;
    // Accepts either the concept_id or the display name; throws UnknownConcept.
    const ConceptDef& lookup(const std::string& id_or_name) const;

    bool operator==(const KnowledgeBase& other) const {
        return version_ == other.version_ && concepts_ == other.concepts_;
    }

private:
    std::string version_;
    std::vector<ConceptDef> concepts_;  // stable load order
    std::unordered_map<std::string, std::size_t> by_id_;
};

// Parses and validates a KB document. Throws EmptyKB, InvalidCutoffs,
// NonPositiveParam, DuplicateConcept, or SchemaError.
KnowledgeBase load_kb(const nlohmann::json& doc);
KnowledgeBase load_kb_file(const std::string& path);
nlohmann::json kb_to_json(const KnowledgeBase& kb);

// The built-in readmission knowledge base: 17 concepts (12 labs, 5 charts),
// three states each, derived from the published normal ranges.
KnowledgeBase builtin_readmission_kb();

}  // namespace readmit
