#include "readmit/features.hpp"

#include <algorithm>

#include "readmit/error.hpp"

namespace readmit {

namespace {

std::size_t base_width(const EncodingPlan& plan) {
    switch (plan.variant) {
        case EncodingVariant::charts_1hot:
        case EncodingVariant::charts_1hot_gradients:
        case EncodingVariant::icd9_1hot:
        case EncodingVariant::icd9_text:
            return plan.vocab.size();
        case EncodingVariant::charts_interpolated:
        case EncodingVariant::charts_interpolated_gradients: {
            std::size_t w = 0;
            for (std::size_t s : plan.states_per_concept) w += s;
            if (plan.variant == EncodingVariant::charts_interpolated_gradients) {
                w += 3 * plan.concept_ids.size();
            }
            return w;
        }
        case EncodingVariant::demographics_1hot:
            return plan.demographics.width();
    }
    return 0;
}

}  // namespace

std::size_t feature_width(const EncodingPlan& plan) {
    std::size_t w = base_width(plan);
    if (plan.concat_demographics) w += plan.demographics.width();
    return w;
}

std::vector<double> featurize(const EncodedFeatures& enc, const EncodingPlan& plan) {
    if (enc.variant != plan.variant) {
        fail(ErrorCode::BadArgument, std::string("encoded row variant ") + to_string(enc.variant) +
                                         " does not match plan variant " +
                                         to_string(plan.variant));
    }
    std::vector<double> out(base_width(plan), 0.0);
    switch (plan.variant) {
        case EncodingVariant::charts_1hot:
        case EncodingVariant::charts_1hot_gradients:
        case EncodingVariant::icd9_1hot: {
            const std::size_t n = std::min(enc.length, enc.token_ids.size());
            for (std::size_t i = 0; i < n; ++i) {
                const int id = enc.token_ids[i];
                if (id >= 0 && static_cast<std::size_t>(id) < out.size()) out[id] += 1.0;
            }
            const double denom = std::max<std::size_t>(n, 1);
            for (double& v : out) v /= denom;
            break;
        }
        case EncodingVariant::charts_interpolated:
        case EncodingVariant::charts_interpolated_gradients: {
            const std::size_t D = plan.concept_ids.size();
            std::vector<std::size_t> offsets(D, 0);
            std::size_t acc = 0;
            for (std::size_t d = 0; d < D; ++d) {
                offsets[d] = acc;
                acc += plan.states_per_concept[d];
            }
            const std::size_t grad_base = acc;
            const double denom = std::max<std::size_t>(enc.matrix.size(), 1);
            for (const auto& row : enc.matrix) {
                for (std::size_t d = 0; d < D && d < row.size(); ++d) {
                    const int ord = row[d];
                    if (ord >= 0 && static_cast<std::size_t>(ord) < plan.states_per_concept[d]) {
                        out[offsets[d] + static_cast<std::size_t>(ord)] += 1.0;
                    }
                }
                if (plan.variant == EncodingVariant::charts_interpolated_gradients) {
                    for (std::size_t d = 0; d < D && D + d < row.size(); ++d) {
                        const int ord = row[D + d];
                        if (ord >= 0 && ord < 3) {
                            out[grad_base + 3 * d + static_cast<std::size_t>(ord)] += 1.0;
                        }
                    }
                }
            }
            for (double& v : out) v /= denom;
            break;
        }
        case EncodingVariant::icd9_text: {
            const auto words = tokenize_words(enc.text);
            for (const std::string& w : words) {
                const int id = plan.vocab.id(w);
                if (static_cast<std::size_t>(id) < out.size()) out[id] += 1.0;
            }
            const double denom = std::max<std::size_t>(words.size(), 1);
            for (double& v : out) v /= denom;
            break;
        }
        case EncodingVariant::demographics_1hot:
            for (std::size_t i = 0; i < enc.bits.size() && i < out.size(); ++i) {
                out[i] = static_cast<double>(enc.bits[i]);
            }
            break;
    }
    if (plan.concat_demographics) {
        out.reserve(out.size() + enc.demo_bits.size());
        if (enc.demo_bits.size() != plan.demographics.width()) {
            fail(ErrorCode::DimensionMismatch,
                 "encoded row " + enc.stay_id + " carries " +
                     std::to_string(enc.demo_bits.size()) + " demographic bits, plan expects " +
                     std::to_string(plan.demographics.width()));
        }
        for (int b : enc.demo_bits) out.push_back(static_cast<double>(b));
    }
    return out;
}

}  // namespace readmit
