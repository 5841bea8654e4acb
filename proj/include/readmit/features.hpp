#pragma once

#include <vector>

#include "readmit/encoding.hpp"

namespace readmit {

// Fixed-width real vector for the linear baseline. Token-sequence variants
// become token-frequency histograms over the vocabulary, matrix variants
// become per-column state (and gradient direction) frequency histograms,
// icd9_text becomes a bag of words, demographics pass through as bits.
// The plan's demographic bits are appended when concat_demographics is set.
std::size_t feature_width(const EncodingPlan& plan);
std::vector<double> featurize(const EncodedFeatures& enc, const EncodingPlan& plan);

}  // namespace readmit
