#include "readmit/abstraction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "readmit/error.hpp"

namespace readmit {

double interpolate_at(std::int64_t t_prev, double v_prev, std::int64_t t_next, double v_next,
                      std::int64_t t_query, InterpWeighting weighting) {
    if (t_prev >= t_next) {
        fail(ErrorCode::DegenerateSpan, "interpolation span is empty: t_prev=" +
                                            std::to_string(t_prev) +
                                            " t_next=" + std::to_string(t_next));
    }
    if (t_query <= t_prev || t_query >= t_next) {
        fail(ErrorCode::OutOfSpan, "t_query=" + std::to_string(t_query) +
                                       " outside open span (" + std::to_string(t_prev) + ", " +
                                       std::to_string(t_next) + ")");
    }
    const double span = static_cast<double>(t_next - t_prev);
    const double w_prev = static_cast<double>(t_next - t_query) / span;
    const double w_next = static_cast<double>(t_query - t_prev) / span;
    if (weighting == InterpWeighting::as_printed) {
        return v_prev * w_next + v_next * w_prev;
    }
    return v_prev * w_prev + v_next * w_next;
}

const char* to_string(SymbolKind k) {
    return k == SymbolKind::state ? "state" : "gradient";
}

const char* to_string(GradientMode m) {
    return m == GradientMode::simple ? "simple" : "thresholded";
}

GridSeries fill_grid(const StayRecord& stay, const KnowledgeBase& kb, InterpWeighting weighting) {
    GridSeries grid;
    for (const ConceptDef& c : kb.concepts()) grid.concept_ids.push_back(c.concept_id);

    std::map<std::string, std::vector<const Sample*>> per_concept;
    std::set<std::int64_t> time_set;
    for (const Sample& s : stay.samples) {
        if (!kb.find(s.concept_id)) {
            fail(ErrorCode::UnknownConcept,
                 "sample concept " + s.concept_id + " not in KB for stay " + stay.stay_id);
        }
        per_concept[s.concept_id].push_back(&s);
        time_set.insert(s.t);
    }
    grid.times.assign(time_set.begin(), time_set.end());
    for (auto& [id, samples] : per_concept) {
        std::sort(samples.begin(), samples.end(),
                  [](const Sample* a, const Sample* b) { return a->t < b->t; });
    }

    const double missing = std::numeric_limits<double>::quiet_NaN();
    grid.values.assign(grid.times.size(), std::vector<double>(grid.concept_ids.size(), missing));
    for (std::size_t d = 0; d < grid.concept_ids.size(); ++d) {
        auto it = per_concept.find(grid.concept_ids[d]);
        if (it == per_concept.end()) continue;  // never observed: stays missing
        const std::vector<const Sample*>& obs = it->second;
        std::size_t next = 0;  // first observation with obs[next]->t >= current time
        for (std::size_t r = 0; r < grid.times.size(); ++r) {
            const std::int64_t t = grid.times[r];
            while (next < obs.size() && obs[next]->t < t) ++next;
            if (next < obs.size() && obs[next]->t == t) {
                grid.values[r][d] = obs[next]->value;
            } else if (next == 0) {
                grid.values[r][d] = obs.front()->value;  // before first observation
            } else if (next == obs.size()) {
                grid.values[r][d] = obs.back()->value;  // after last observation
            } else {
                grid.values[r][d] = interpolate_at(obs[next - 1]->t, obs[next - 1]->value,
                                                   obs[next]->t, obs[next]->value, t, weighting);
            }
        }
    }
    return grid;
}

std::vector<SymbolPoint> gradient_labels(const std::string& concept_id,
                                         const std::vector<Sample>& series, GradientMode mode,
                                         double sig_delta) {
    std::vector<SymbolPoint> out;
    if (series.size() < 2) return out;
    out.reserve(series.size() - 1);
    for (std::size_t i = 1; i < series.size(); ++i) {
        const double prev = series[i - 1].value;
        const double cur = series[i].value;
        const char* label = nullptr;
        if (mode == GradientMode::simple) {
            label = cur > prev ? "Increasing" : cur < prev ? "Decreasing" : "Stable";
        } else {
            const double delta = cur - prev;
            label = std::fabs(delta) <= sig_delta ? "Stable"
                    : delta > 0.0                 ? "Increasing"
                                                  : "Decreasing";
        }
        out.push_back(SymbolPoint{concept_id, series[i].t, SymbolKind::gradient, label});
    }
    return out;
}

std::vector<SymbolInterval> merge_intervals(const std::vector<SymbolPoint>& points,
                                            std::int64_t max_gap) {
    std::vector<SymbolInterval> out;
    for (std::size_t i = 0; i < points.size();) {
        std::size_t j = i + 1;
        while (j < points.size() && points[j].label == points[i].label &&
               points[j].t - points[j - 1].t <= max_gap) {
            ++j;
        }
        out.push_back(SymbolInterval{points[i].concept_id, points[i].kind, points[i].label,
                                     points[i].t, points[j - 1].t});
        i = j;
    }
    return out;
}

namespace {

void sort_points(std::vector<SymbolPoint>& points) {
    std::sort(points.begin(), points.end(), [](const SymbolPoint& a, const SymbolPoint& b) {
        if (a.t != b.t) return a.t < b.t;
        if (a.concept_id != b.concept_id) return a.concept_id < b.concept_id;
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.label < b.label;
    });
}

}  // namespace

AbstractionSet abstract_stay(const StayRecord& stay, const KnowledgeBase& kb,
                             const AbstractionOptions& options) {
    AbstractionSet abs;
    abs.stay_id = stay.stay_id;
    abs.options = options;

    if (options.interpolate) {
        const GridSeries grid = fill_grid(stay, kb, options.weighting);
        for (std::size_t r = 0; r < grid.length(); ++r) {
            for (std::size_t d = 0; d < grid.width(); ++d) {
                const double v = grid.values[r][d];
                if (std::isnan(v)) continue;
                const ConceptDef& c = *kb.find(grid.concept_ids[d]);
                abs.points.push_back(SymbolPoint{c.concept_id, grid.times[r], SymbolKind::state,
                                                 c.state_of(v)});
            }
        }
    }

    // Raw per-concept series drive gradients always, and states too when
    // interpolation is off.
    std::map<std::string, std::vector<Sample>> per_concept;
    for (const Sample& s : stay.samples) {
        const ConceptDef* c = kb.find(s.concept_id);
        if (!c) {
            fail(ErrorCode::UnknownConcept,
                 "sample concept " + s.concept_id + " not in KB for stay " + stay.stay_id);
        }
        per_concept[s.concept_id].push_back(s);
    }
    for (auto& [id, series] : per_concept) {
        std::sort(series.begin(), series.end(),
                  [](const Sample& a, const Sample& b) { return a.t < b.t; });
        const ConceptDef& c = *kb.find(id);
        if (!options.interpolate) {
            for (const Sample& s : series) {
                abs.points.push_back(
                    SymbolPoint{id, s.t, SymbolKind::state, c.state_of(s.value)});
            }
        }
        auto grads = gradient_labels(id, series, options.gradient_mode, c.sig_delta);
        abs.points.insert(abs.points.end(), grads.begin(), grads.end());
    }
    sort_points(abs.points);

    // Intervals per (concept, kind) from the time-ordered points.
    std::map<std::pair<std::string, SymbolKind>, std::vector<SymbolPoint>> groups;
    for (const SymbolPoint& p : abs.points) groups[{p.concept_id, p.kind}].push_back(p);
    for (const auto& [key, pts] : groups) {
        std::int64_t max_gap = kNoMaxGap;
        if (options.use_t_stable_as_max_gap) {
            max_gap = kb.find(key.first)->t_stable_seconds;
        }
        auto merged = merge_intervals(pts, max_gap);
        abs.intervals.insert(abs.intervals.end(), merged.begin(), merged.end());
    }
    return abs;
}

namespace {

SymbolKind kind_from_string(const std::string& s) {
    if (s == "state") return SymbolKind::state;
    if (s == "gradient") return SymbolKind::gradient;
    fail(ErrorCode::SchemaError, "unknown symbol kind: " + s);
}

GradientMode mode_from_string(const std::string& s) {
    if (s == "simple") return GradientMode::simple;
    if (s == "thresholded") return GradientMode::thresholded;
    fail(ErrorCode::SchemaError, "unknown gradient mode: " + s);
}

}  // namespace

nlohmann::json abstraction_to_json(const AbstractionSet& abs) {
    nlohmann::json j;
    j["stay_id"] = abs.stay_id;
    auto points = nlohmann::json::array();
    for (const SymbolPoint& p : abs.points) {
        points.push_back(nlohmann::json::array({p.concept_id, p.t, to_string(p.kind), p.label}));
    }
    j["points"] = std::move(points);
    auto intervals = nlohmann::json::array();
    for (const SymbolInterval& iv : abs.intervals) {
        intervals.push_back(
            nlohmann::json::array({iv.concept_id, to_string(iv.kind), iv.label, iv.start, iv.end}));
    }
    j["intervals"] = std::move(intervals);
    j["options"] = {{"gradient_mode", to_string(abs.options.gradient_mode)},
                    {"use_t_stable_as_max_gap", abs.options.use_t_stable_as_max_gap},
                    {"interpolate", abs.options.interpolate},
                    {"weighting", abs.options.weighting == InterpWeighting::standard
                                      ? "standard"
                                      : "as_printed"}};
    return j;
}

AbstractionSet abstraction_from_json(const nlohmann::json& j) {
    try {
        AbstractionSet abs;
        abs.stay_id = j.at("stay_id").get<std::string>();
        for (const auto& p : j.at("points")) {
            abs.points.push_back(SymbolPoint{p.at(0).get<std::string>(),
                                             p.at(1).get<std::int64_t>(),
                                             kind_from_string(p.at(2).get<std::string>()),
                                             p.at(3).get<std::string>()});
        }
        for (const auto& iv : j.at("intervals")) {
            abs.intervals.push_back(SymbolInterval{
                iv.at(0).get<std::string>(), kind_from_string(iv.at(1).get<std::string>()),
                iv.at(2).get<std::string>(), iv.at(3).get<std::int64_t>(),
                iv.at(4).get<std::int64_t>()});
        }
        if (j.contains("options")) {
            const auto& o = j.at("options");
            abs.options.gradient_mode = mode_from_string(o.at("gradient_mode").get<std::string>());
            abs.options.use_t_stable_as_max_gap = o.at("use_t_stable_as_max_gap").get<bool>();
            abs.options.interpolate = o.at("interpolate").get<bool>();
            abs.options.weighting = o.at("weighting").get<std::string>() == "as_printed"
                                        ? InterpWeighting::as_printed
                                        : InterpWeighting::standard;
        }
        return abs;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("malformed abstraction json: ") + e.what());
    }
}

void write_abstractions_jsonl(std::ostream& out, const std::vector<AbstractionSet>& sets) {
    for (const AbstractionSet& abs : sets) out << abstraction_to_json(abs).dump() << "\n";
}

std::vector<AbstractionSet> read_abstractions_jsonl(std::istream& in) {
    std::vector<AbstractionSet> out;
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
        out.push_back(abstraction_from_json(j));
    }
    return out;
}

std::vector<AbstractionSet> read_abstractions_jsonl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return read_abstractions_jsonl(in);
}

}  // namespace readmit
