#pragma once

#include <cstdint>
#include <string>

namespace readmit {

// Generator knobs. theta controls how strongly injected trend instability
// predicts readmission: an unstable stay is positive with probability
// rate*(1+theta), a stable one with rate*(1-theta), so the overall positive
// rate stays at `positive_rate` and theta=0 removes all signal.
struct SynthConfig {
    std::size_t n_patients = 1000;
    double positive_rate = 0.25;
    double theta = 1.0;
    std::uint64_t seed = 17;
};

// Writes events.csv, stays.csv, icd9.csv and a truth.csv sidecar
// (stay_id,patient_id,unstable,planned_positive) into out_dir. Byte-stable
// for a fixed config. A small share of stays is crafted to violate exactly
// one cohort rule each; planned readmission stays land in the same calendar
// year so the first-per-year rule keeps them out of the cohort while their
// admission still creates the label.
void synth_generate(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace readmit
