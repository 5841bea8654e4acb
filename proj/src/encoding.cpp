#include "readmit/encoding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "readmit/error.hpp"

namespace readmit {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> data_tokens) {
    std::set<std::string> unique(data_tokens.begin(), data_tokens.end());
    unique.erase("<pad>");
    unique.erase("<unk>");
    tokens_.reserve(unique.size() + 2);
    tokens_.push_back("<pad>");
    tokens_.push_back("<unk>");
    for (auto& t : unique) tokens_.push_back(t);
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return index_.count(token) > 0; }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        fail(ErrorCode::BadArgument, "token id out of range: " + std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

nlohmann::json Vocabulary::to_json() const { return nlohmann::json(tokens_); }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() < 2 || j.at(0) != "<pad>" || j.at(1) != "<unk>") {
        fail(ErrorCode::SchemaError, "vocabulary must be a list starting with <pad>, <unk>");
    }
    Vocabulary v;
    v.tokens_.clear();
    v.index_.clear();
    for (const auto& t : j) {
        if (!t.is_string()) fail(ErrorCode::SchemaError, "vocabulary entries must be strings");
        v.tokens_.push_back(t.get<std::string>());
    }
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
            fail(ErrorCode::SchemaError, "duplicate vocabulary token: " + v.tokens_[i]);
        }
    }
    return v;
}

std::string state_token(const std::string& concept_id, const std::string& label) {
    return "s:" + concept_id + ":" + label;
}

std::string gradient_token(const std::string& concept_id, const std::string& label) {
    return "g:" + concept_id + ":" + label;
}

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

const char* to_string(EncodingVariant v) {
    switch (v) {
        case EncodingVariant::charts_1hot: return "charts_1hot";
        case EncodingVariant::charts_interpolated: return "charts_interpolated";
        case EncodingVariant::charts_1hot_gradients: return "charts_1hot_gradients";
        case EncodingVariant::charts_interpolated_gradients:
            return "charts_interpolated_gradients";
        case EncodingVariant::icd9_1hot: return "icd9_1hot";
        case EncodingVariant::icd9_text: return "icd9_text";
        case EncodingVariant::demographics_1hot: return "demographics_1hot";
    }
    return "charts_1hot";
}

EncodingVariant variant_from_string(const std::string& s) {
    if (s == "charts_1hot") return EncodingVariant::charts_1hot;
    if (s == "charts_interpolated") return EncodingVariant::charts_interpolated;
    if (s == "charts_1hot_gradients") return EncodingVariant::charts_1hot_gradients;
    if (s == "charts_interpolated_gradients") return EncodingVariant::charts_interpolated_gradients;
    if (s == "icd9_1hot") return EncodingVariant::icd9_1hot;
    if (s == "icd9_text") return EncodingVariant::icd9_text;
    if (s == "demographics_1hot") return EncodingVariant::demographics_1hot;
    fail(ErrorCode::BadArgument, "unknown encoding variant: " + s);
}

bool variant_uses_gradients(EncodingVariant v) {
    return v == EncodingVariant::charts_1hot_gradients ||
           v == EncodingVariant::charts_interpolated_gradients;
}

bool variant_is_matrix(EncodingVariant v) {
    return v == EncodingVariant::charts_interpolated ||
           v == EncodingVariant::charts_interpolated_gradients;
}

std::vector<int> demographics_one_hot(const StayRecord& stay, const DemographicsSpec& spec) {
    if (stay.age_years < 18) {
        fail(ErrorCode::AgeBelowAdult,
             "stay " + stay.stay_id + " has age " + std::to_string(stay.age_years));
    }
    std::vector<int> bits(spec.width(), 0);
    bits[stay.age_years <= 65 ? 0 : 1] = 1;
    bits[stay.gender == Gender::male ? 2 : 3] = 1;
    std::size_t slot = 0;  // catch-all for unseen or empty insurance
    for (std::size_t i = 1; i < spec.insurance_categories.size(); ++i) {
        if (spec.insurance_categories[i] == stay.insurance) {
            slot = i;
            break;
        }
    }
    bits[4 + slot] = 1;
    return bits;
}

std::vector<int> flatten_one_hot(const AbstractionSet& abs, const Vocabulary& vocab, std::size_t L,
                                 bool include_gradients) {
    std::vector<SymbolPoint> points;
    for (const SymbolPoint& p : abs.points) {
        if (p.kind == SymbolKind::state || include_gradients) points.push_back(p);
    }
    std::sort(points.begin(), points.end(), [](const SymbolPoint& a, const SymbolPoint& b) {
        if (a.t != b.t) return a.t < b.t;
        if (a.concept_id != b.concept_id) return a.concept_id < b.concept_id;
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.label < b.label;
    });
    std::vector<int> out;
    out.reserve(L);
    for (const SymbolPoint& p : points) {
        if (out.size() >= L) break;
        const std::string token = p.kind == SymbolKind::state
                                      ? state_token(p.concept_id, p.label)
                                      : gradient_token(p.concept_id, p.label);
        out.push_back(vocab.id(token));
    }
    out.resize(L, kPadId);
    return out;
}

std::vector<std::vector<int>> encode_multivariate(const GridSeries& grid, const KnowledgeBase& kb) {
    std::vector<std::vector<int>> out(grid.length(), std::vector<int>(grid.width(), kMissingOrdinal));
    for (std::size_t d = 0; d < grid.width(); ++d) {
        const ConceptDef* c = kb.find(grid.concept_ids[d]);
        if (!c) fail(ErrorCode::UnknownConcept, "grid concept not in KB: " + grid.concept_ids[d]);
        for (std::size_t r = 0; r < grid.length(); ++r) {
            const double v = grid.values[r][d];
            if (!std::isnan(v)) out[r][d] = static_cast<int>(c->state_ordinal(v));
        }
    }
    return out;
}

namespace {

int gradient_ordinal(const std::string& label) {
    if (label == "Decreasing") return 0;
    if (label == "Stable") return 1;
    return 2;
}

}  // namespace

std::vector<std::vector<int>> encode_multivariate_with_gradients(const GridSeries& grid,
                                                                 const StayRecord& stay,
                                                                 const KnowledgeBase& kb,
                                                                 GradientMode mode) {
    std::vector<std::vector<int>> out = encode_multivariate(grid, kb);
    const std::size_t D = grid.width();
    for (auto& row : out) row.resize(2 * D, kMissingOrdinal);

    std::map<std::string, std::vector<Sample>> per_concept;
    for (const Sample& s : stay.samples) per_concept[s.concept_id].push_back(s);
    for (std::size_t d = 0; d < D; ++d) {
        auto it = per_concept.find(grid.concept_ids[d]);
        if (it == per_concept.end()) continue;
        std::vector<Sample>& series = it->second;
        std::sort(series.begin(), series.end(),
                  [](const Sample& a, const Sample& b) { return a.t < b.t; });
        const ConceptDef& c = *kb.find(grid.concept_ids[d]);
        const auto grads = gradient_labels(c.concept_id, series, mode, c.sig_delta);
        // Each grid row carries the direction of the latest gradient point at
        // or before its time; rows before the second sample stay missing.
        std::size_t g = 0;
        int current = kMissingOrdinal;
        for (std::size_t r = 0; r < grid.length(); ++r) {
            while (g < grads.size() && grads[g].t <= grid.times[r]) {
                current = gradient_ordinal(grads[g].label);
                ++g;
            }
            out[r][D + d] = current;
        }
    }
    return out;
}

std::vector<int> icd9_one_hot(const std::vector<std::pair<std::string, std::string>>& codes,
                              const Vocabulary& vocab, std::size_t L) {
    std::vector<int> out;
    out.reserve(L);
    for (const auto& [code, desc] : codes) {
        if (out.size() >= L) break;
        out.push_back(vocab.id(code));
    }
    out.resize(L, kPadId);
    return out;
}

std::string demographic_sentence(const StayRecord& stay) {
    return "Patient is a " + std::to_string(stay.age_years) + "-year-old " +
           to_string(stay.gender) + ".";
}

std::string icd9_text(const StayRecord& stay) {
    std::string out = demographic_sentence(stay);
    out += " Procedures patient went through and doctor's diagnoses:";
    for (std::size_t i = 0; i < stay.icd9.size(); ++i) {
        out += i == 0 ? " " : ", ";
        out += stay.icd9[i].second;
    }
    return out;
}

nlohmann::json EncodingPlan::to_json() const {
    nlohmann::json j;
    j["variant"] = to_string(variant);
    j["vocab"] = vocab.to_json();
    j["max_len"] = max_len;
    j["insurance_categories"] = demographics.insurance_categories;
    j["concat_demographics"] = concat_demographics;
    j["concept_ids"] = concept_ids;
    j["states_per_concept"] = states_per_concept;
    j["gradient_mode"] = to_string(gradient_mode);
    j["weighting"] = weighting == InterpWeighting::standard ? "standard" : "as_printed";
    return j;
}

EncodingPlan EncodingPlan::from_json(const nlohmann::json& j) {
    try {
        EncodingPlan plan;
        plan.variant = variant_from_string(j.at("variant").get<std::string>());
        plan.vocab = Vocabulary::from_json(j.at("vocab"));
        plan.max_len = j.at("max_len").get<std::size_t>();
        plan.demographics.insurance_categories =
            j.at("insurance_categories").get<std::vector<std::string>>();
        plan.concat_demographics = j.at("concat_demographics").get<bool>();
        plan.concept_ids = j.at("concept_ids").get<std::vector<std::string>>();
        plan.states_per_concept = j.at("states_per_concept").get<std::vector<std::size_t>>();
        plan.gradient_mode = j.at("gradient_mode").get<std::string>() == "thresholded"
                                 ? GradientMode::thresholded
                                 : GradientMode::simple;
        plan.weighting = j.at("weighting").get<std::string>() == "as_printed"
                             ? InterpWeighting::as_printed
                             : InterpWeighting::standard;
        return plan;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("malformed encoding plan: ") + e.what());
    }
}

namespace {

AbstractionOptions flatten_options(const EncodingPlan& plan) {
    AbstractionOptions opt;
    opt.gradient_mode = plan.gradient_mode;
    opt.use_t_stable_as_max_gap = false;
    // Token-sequence variants stay on raw samples; the interpolated grid
    // belongs to the matrix variants.
    opt.interpolate = false;
    opt.weighting = plan.weighting;
    return opt;
}

std::size_t stay_sequence_length(const StayRecord& stay, const KnowledgeBase& kb,
                                 const EncodingPlan& plan, std::vector<std::string>* tokens_out) {
    const AbstractionSet abs = abstract_stay(stay, kb, flatten_options(plan));
    std::size_t n = 0;
    for (const SymbolPoint& p : abs.points) {
        const bool keep = p.kind == SymbolKind::state || variant_uses_gradients(plan.variant);
        if (!keep) continue;
        ++n;
        if (tokens_out) {
            tokens_out->push_back(p.kind == SymbolKind::state
                                      ? state_token(p.concept_id, p.label)
                                      : gradient_token(p.concept_id, p.label));
        }
    }
    return n;
}

std::size_t grid_length(const StayRecord& stay) {
    std::set<std::int64_t> times;
    for (const Sample& s : stay.samples) times.insert(s.t);
    return times.size();
}

}  // namespace

EncodingPlan fit_encoding_plan(const std::vector<StayRecord>& training_stays,
                               const KnowledgeBase& kb, EncodingVariant variant,
                               std::size_t max_len_cap, GradientMode mode,
                               InterpWeighting weighting) {
    EncodingPlan plan;
    plan.variant = variant;
    plan.gradient_mode = mode;
    plan.weighting = weighting;
    for (const ConceptDef& c : kb.concepts()) {
        plan.concept_ids.push_back(c.concept_id);
        plan.states_per_concept.push_back(c.state_count());
    }
    plan.concat_demographics = variant != EncodingVariant::icd9_text &&
                               variant != EncodingVariant::demographics_1hot;

    std::set<std::string> insurances;
    for (const StayRecord& stay : training_stays) {
        if (!stay.insurance.empty()) insurances.insert(stay.insurance);
    }
    plan.demographics.insurance_categories.assign({"<other>"});
    plan.demographics.insurance_categories.insert(plan.demographics.insurance_categories.end(),
                                                  insurances.begin(), insurances.end());

    std::vector<std::string> data_tokens;
    std::size_t max_len = 0;
    switch (variant) {
        case EncodingVariant::charts_1hot:
        case EncodingVariant::charts_1hot_gradients:
            for (const StayRecord& stay : training_stays) {
                max_len = std::max(max_len, stay_sequence_length(stay, kb, plan, &data_tokens));
            }
            break;
        case EncodingVariant::charts_interpolated:
        case EncodingVariant::charts_interpolated_gradients:
            for (const StayRecord& stay : training_stays) {
                max_len = std::max(max_len, grid_length(stay));
            }
            break;
        case EncodingVariant::icd9_1hot:
            for (const StayRecord& stay : training_stays) {
                max_len = std::max(max_len, stay.icd9.size());
                for (const auto& [code, desc] : stay.icd9) data_tokens.push_back(code);
            }
            break;
        case EncodingVariant::icd9_text:
            for (const StayRecord& stay : training_stays) {
                auto words = tokenize_words(icd9_text(stay));
                max_len = std::max(max_len, words.size());
                data_tokens.insert(data_tokens.end(), words.begin(), words.end());
            }
            break;
        case EncodingVariant::demographics_1hot:
            max_len = plan.demographics.width();
            break;
    }
    plan.vocab = Vocabulary(std::move(data_tokens));
    if (max_len_cap > 0) max_len = std::min(max_len, max_len_cap);
    plan.max_len = std::max<std::size_t>(max_len, 1);
    return plan;
}

EncodedFeatures encode_stay(const StayRecord& stay, const KnowledgeBase& kb,
                            const EncodingPlan& plan) {
    EncodedFeatures enc;
    enc.stay_id = stay.stay_id;
    enc.variant = plan.variant;
    switch (plan.variant) {
        case EncodingVariant::charts_1hot:
        case EncodingVariant::charts_1hot_gradients: {
            const AbstractionSet abs = abstract_stay(stay, kb, flatten_options(plan));
            enc.token_ids = flatten_one_hot(abs, plan.vocab, plan.max_len,
                                            variant_uses_gradients(plan.variant));
            std::size_t n = 0;
            for (const SymbolPoint& p : abs.points) {
                if (p.kind == SymbolKind::state || variant_uses_gradients(plan.variant)) ++n;
            }
            enc.length = std::min(n, plan.max_len);
            break;
        }
        case EncodingVariant::charts_interpolated:
        case EncodingVariant::charts_interpolated_gradients: {
            const GridSeries grid = fill_grid(stay, kb, plan.weighting);
            enc.matrix = plan.variant == EncodingVariant::charts_interpolated
                             ? encode_multivariate(grid, kb)
                             : encode_multivariate_with_gradients(grid, stay, kb,
                                                                  plan.gradient_mode);
            if (enc.matrix.size() > plan.max_len) enc.matrix.resize(plan.max_len);
            enc.length = enc.matrix.size();
            break;
        }
        case EncodingVariant::icd9_1hot:
            enc.token_ids = icd9_one_hot(stay.icd9, plan.vocab, plan.max_len);
            enc.length = std::min(stay.icd9.size(), plan.max_len);
            break;
        case EncodingVariant::icd9_text: {
            enc.text = icd9_text(stay);
            enc.length = tokenize_words(enc.text).size();
            break;
        }
        case EncodingVariant::demographics_1hot:
            enc.bits = demographics_one_hot(stay, plan.demographics);
            enc.length = enc.bits.size();
            break;
    }
    if (plan.concat_demographics) {
        enc.demo_bits = demographics_one_hot(stay, plan.demographics);
    }
    return enc;
}

nlohmann::json encoded_to_json(const EncodedFeatures& enc) {
    nlohmann::json j;
    j["stay_id"] = enc.stay_id;
    j["variant"] = to_string(enc.variant);
    if (variant_is_matrix(enc.variant)) {
        j["payload"] = enc.matrix;
    } else if (enc.variant == EncodingVariant::icd9_text) {
        j["payload"] = enc.text;
    } else if (enc.variant == EncodingVariant::demographics_1hot) {
        j["payload"] = enc.bits;
    } else {
        j["payload"] = enc.token_ids;
    }
    j["length"] = enc.length;
    if (!enc.demo_bits.empty()) j["demo"] = enc.demo_bits;
    return j;
}

EncodedFeatures encoded_from_json(const nlohmann::json& j) {
    try {
        EncodedFeatures enc;
        enc.stay_id = j.at("stay_id").get<std::string>();
        enc.variant = variant_from_string(j.at("variant").get<std::string>());
        const auto& payload = j.at("payload");
        if (variant_is_matrix(enc.variant)) {
            enc.matrix = payload.get<std::vector<std::vector<int>>>();
        } else if (enc.variant == EncodingVariant::icd9_text) {
            enc.text = payload.get<std::string>();
        } else if (enc.variant == EncodingVariant::demographics_1hot) {
            enc.bits = payload.get<std::vector<int>>();
        } else {
            enc.token_ids = payload.get<std::vector<int>>();
        }
        enc.length = j.at("length").get<std::size_t>();
        if (j.contains("demo")) enc.demo_bits = j.at("demo").get<std::vector<int>>();
        return enc;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("malformed encoded row: ") + e.what());
    }
}

void write_encoded_jsonl(std::ostream& out, const std::vector<EncodedFeatures>& rows) {
    for (const EncodedFeatures& enc : rows) out << encoded_to_json(enc).dump() << "\n";
}

std::vector<EncodedFeatures> read_encoded_jsonl(std::istream& in) {
    std::vector<EncodedFeatures> out;
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
        out.push_back(encoded_from_json(j));
    }
    return out;
}

std::vector<EncodedFeatures> read_encoded_jsonl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return read_encoded_jsonl(in);
}

}  // namespace readmit
