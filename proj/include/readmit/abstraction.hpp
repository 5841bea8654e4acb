#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "readmit/kb.hpp"
#include "readmit/series.hpp"

namespace readmit {

enum class InterpWeighting {
    standard,   // weights whose limits match the endpoints
    as_printed  // the swapped weighting as it appears in print, for comparison
};

// Linear interpolation between two known neighbours. Throws DegenerateSpan
// when the neighbours share a timestamp and OutOfSpan when t_query is not
// strictly between them.
double interpolate_at(std::int64_t t_prev, double v_prev, std::int64_t t_next, double v_next,
                      std::int64_t t_query, InterpWeighting weighting = InterpWeighting::standard);

// Dense multivariate view of one stay: times is the union of all sample
// timestamps, one column per KB concept in KB order. Cells with no value
// (concept never observed in this stay) hold NaN.
struct GridSeries {
    std::vector<std::string> concept_ids;
    std::vector<std::int64_t> times;
    std::vector<std::vector<double>> values;  // times.size() rows x concept_ids.size() cols

    std::size_t width() const { return concept_ids.size(); }
    std::size_t length() const { return times.size(); }
};

// Builds the grid: exact samples pass through, interior gaps are
// interpolated, cells outside a concept's observed span take the nearest
// observation. Throws UnknownConcept for samples not covered by the KB.
GridSeries fill_grid(const StayRecord& stay, const KnowledgeBase& kb,
                     InterpWeighting weighting = InterpWeighting::standard);

enum class SymbolKind { state, gradient };
const char* to_string(SymbolKind k);

struct SymbolPoint {
    std::string concept_id;
    std::int64_t t = 0;
    SymbolKind kind = SymbolKind::state;
    std::string label;

    bool operator==(const SymbolPoint&) const = default;
};

struct SymbolInterval {
    std::string concept_id;
    SymbolKind kind = SymbolKind::state;
    std::string label;
    std::int64_t start = 0;
    std::int64_t end = 0;

    bool operator==(const SymbolInterval&) const = default;
};

enum class GradientMode { simple, thresholded };
const char* to_string(GradientMode m);

inline constexpr std::int64_t kNoMaxGap = std::numeric_limits<std::int64_t>::max();

// Direction symbols for consecutive sample pairs of one concept, emitted at
// the later timestamp. Simple mode compares strictly; thresholded mode calls
// a move Stable while |delta| <= sig_delta.
std::vector<SymbolPoint> gradient_labels(const std::string& concept_id,
                                         const std::vector<Sample>& series, GradientMode mode,
                                         double sig_delta);

// Collapses a time-ordered run of identically labelled points into one
// interval; a label change or a gap above max_gap starts a new interval.
// Singleton runs become zero-length intervals.
std::vector<SymbolInterval> merge_intervals(const std::vector<SymbolPoint>& points,
                                            std::int64_t max_gap = kNoMaxGap);

struct AbstractionOptions {
    GradientMode gradient_mode = GradientMode::simple;
    bool use_t_stable_as_max_gap = false;
    bool interpolate = true;
    InterpWeighting weighting = InterpWeighting::standard;

    bool operator==(const AbstractionOptions&) const = default;
};

struct AbstractionSet {
    std::string stay_id;
    std::vector<SymbolPoint> points;       // sorted by (t, concept_id, kind, label)
    std::vector<SymbolInterval> intervals;
    AbstractionOptions options;

    bool operator==(const AbstractionSet&) const = default;
};

// Full per-stay abstraction: state points from the filled grid (or from raw
// samples when options.interpolate is off), gradient points from raw
// samples, and merged intervals for both kinds.
AbstractionSet abstract_stay(const StayRecord& stay, const KnowledgeBase& kb,
                             const AbstractionOptions& options = {});

nlohmann::json abstraction_to_json(const AbstractionSet& abs);
AbstractionSet abstraction_from_json(const nlohmann::json& j);
void write_abstractions_jsonl(std::ostream& out, const std::vector<AbstractionSet>& sets);
std::vector<AbstractionSet> read_abstractions_jsonl(std::istream& in);
std::vector<AbstractionSet> read_abstractions_jsonl_file(const std::string& path);

}  // namespace readmit
