#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "readmit/abstraction.hpp"
#include "readmit/kb.hpp"
#include "readmit/series.hpp"

namespace readmit {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kMissingOrdinal = -1;

// Token table with reserved ids 0 (<pad>) and 1 (<unk>), data tokens sorted
// lexicographically from index 2. Built only from training-fold data so the
// mapping never leaks evaluation information.
class Vocabulary {
  public:
    Vocabulary();
    explicit Vocabulary(std::vector<std::string> data_tokens);  // deduplicates and sorts

    int id(const std::string& token) const;  // kUnkId when absent
    bool contains(const std::string& token) const;
    const std::string& token(int id) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    nlohmann::json to_json() const;  // JSON list in index order
    static Vocabulary from_json(const nlohmann::json& j);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

std::string state_token(const std::string& concept_id, const std::string& label);
std::string gradient_token(const std::string& concept_id, const std::string& label);

// Lowercases and splits on non-alphanumeric characters; empty pieces dropped.
std::vector<std::string> tokenize_words(const std::string& text);

enum class EncodingVariant {
    charts_1hot,
    charts_interpolated,
    charts_1hot_gradients,
    charts_interpolated_gradients,
    icd9_1hot,
    icd9_text,
    demographics_1hot
};
const char* to_string(EncodingVariant v);
EncodingVariant variant_from_string(const std::string& s);
bool variant_uses_gradients(EncodingVariant v);
bool variant_is_matrix(EncodingVariant v);

// Insurance categories from the training fold; index 0 is the catch-all for
// unseen or empty values so exactly one bit per group is always set.
struct DemographicsSpec {
    std::vector<std::string> insurance_categories = {"<other>"};

    std::size_t width() const { return 2 + 2 + insurance_categories.size(); }
    bool operator==(const DemographicsSpec&) const = default;
};

std::vector<int> demographics_one_hot(const StayRecord& stay, const DemographicsSpec& spec);

std::vector<int> flatten_one_hot(const AbstractionSet& abs, const Vocabulary& vocab, std::size_t L,
                                 bool include_gradients);

// T x D for states, T x 2D when with_gradients: the right half holds the
// direction of the most recent raw gradient at or before each grid time
// (Decreasing=0, Stable=1, Increasing=2). Unobserved cells carry
// kMissingOrdinal.
std::vector<std::vector<int>> encode_multivariate(const GridSeries& grid, const KnowledgeBase& kb);
std::vector<std::vector<int>> encode_multivariate_with_gradients(const GridSeries& grid,
                                                                 const StayRecord& stay,
                                                                 const KnowledgeBase& kb,
                                                                 GradientMode mode);

std::vector<int> icd9_one_hot(const std::vector<std::pair<std::string, std::string>>& codes,
                              const Vocabulary& vocab, std::size_t L);

std::string demographic_sentence(const StayRecord& stay);
std::string icd9_text(const StayRecord& stay);

// Everything needed to encode any stay consistently with the training fold:
// the variant, its vocabulary, the padded length L, and the demographics
// layout. concat_demographics controls whether encoded stays also carry the
// demographic bit vector for downstream concatenation.
struct EncodingPlan {
    EncodingVariant variant = EncodingVariant::charts_1hot;
    Vocabulary vocab;
    std::size_t max_len = 0;  // L
    DemographicsSpec demographics;
    bool concat_demographics = true;
    std::vector<std::string> concept_ids;       // matrix column order (KB order)
    std::vector<std::size_t> states_per_concept;
    GradientMode gradient_mode = GradientMode::simple;
    InterpWeighting weighting = InterpWeighting::standard;

    nlohmann::json to_json() const;
    static EncodingPlan from_json(const nlohmann::json& j);
    bool operator==(const EncodingPlan&) const = default;
};

struct EncodedFeatures {
    std::string stay_id;
    EncodingVariant variant = EncodingVariant::charts_1hot;
    std::vector<int> token_ids;              // token-sequence variants
    std::vector<std::vector<int>> matrix;    // matrix variants
    std::vector<int> bits;                   // demographics_1hot
    std::string text;                        // icd9_text
    std::size_t length = 0;                  // pre-padding length (rows for matrices)
    std::vector<int> demo_bits;              // present when the plan concatenates demographics

    bool operator==(const EncodedFeatures&) const = default;
};

// Derives L, the vocabulary, and the demographics layout from training-fold
// stays only. max_len_cap bounds L (0 = no cap).
EncodingPlan fit_encoding_plan(const std::vector<StayRecord>& training_stays,
                               const KnowledgeBase& kb, EncodingVariant variant,
                               std::size_t max_len_cap = 0, GradientMode mode = GradientMode::simple,
                               InterpWeighting weighting = InterpWeighting::standard);

EncodedFeatures encode_stay(const StayRecord& stay, const KnowledgeBase& kb,
                            const EncodingPlan& plan);

nlohmann::json encoded_to_json(const EncodedFeatures& enc);
EncodedFeatures encoded_from_json(const nlohmann::json& j);
void write_encoded_jsonl(std::ostream& out, const std::vector<EncodedFeatures>& rows);
std::vector<EncodedFeatures> read_encoded_jsonl(std::istream& in);
std::vector<EncodedFeatures> read_encoded_jsonl_file(const std::string& path);

}  // namespace readmit
