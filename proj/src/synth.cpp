#include "readmit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <vector>

#include "readmit/csv.hpp"
#include "readmit/error.hpp"
#include "readmit/kb.hpp"
#include "readmit/rng.hpp"
#include "readmit/series.hpp"
#include "readmit/timeutil.hpp"

namespace readmit {

namespace {

constexpr std::int64_t kChartPeriod = 2 * kSecondsPerHour;
constexpr std::int64_t kLabPeriod = kSecondsPerDay;
constexpr std::int64_t kChartSignalPeriod = 8 * kSecondsPerHour;
constexpr std::int64_t kLabSignalPeriod = 60 * kSecondsPerHour;

const std::vector<std::pair<const char*, const char*>>& icd9_pool() {
    static const std::vector<std::pair<const char*, const char*>> pool = {
        {"428.0", "Congestive heart failure, unspecified"},
        {"584.9", "Acute kidney failure, unspecified"},
        {"038.9", "Unspecified septicemia"},
        {"410.71", "Subendocardial infarction, initial episode of care"},
        {"486", "Pneumonia, organism unspecified"},
        {"518.81", "Acute respiratory failure"},
        {"250.00", "Diabetes mellitus without mention of complication"},
        {"403.90", "Hypertensive chronic kidney disease, unspecified"},
        {"427.31", "Atrial fibrillation"},
        {"599.0", "Urinary tract infection, site not specified"},
        {"285.9", "Anemia, unspecified"},
        {"276.2", "Acidosis"},
        {"507.0", "Pneumonitis due to inhalation of food or vomitus"},
        {"995.92", "Severe sepsis"},
        {"571.5", "Cirrhosis of liver without mention of alcohol"},
    };
    return pool;
}

struct NormalBandGeometry {
    double center = 0.0;
    double halfwidth = 1.0;
};

NormalBandGeometry band_geometry(const ConceptDef& c) {
    const std::size_t nb = c.normal_band();
    const double hi = c.state_cutoffs[nb].upper_bound;
    const double lo = nb == 0 ? hi - 2.0 : c.state_cutoffs[nb - 1].upper_bound;
    NormalBandGeometry g;
    g.center = (lo + hi) / 2.0;
    g.halfwidth = (hi - lo) / 2.0;
    return g;
}

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

struct PlannedStay {
    std::string stay_id;
    std::string patient_id;
    std::int64_t icu_in = 0;
    std::int64_t icu_out = 0;
    int age = 0;
    const char* gender = "male";
    const char* insurance = "Private";
    std::int64_t death_time = -1;  // -1 = alive
    bool unstable = false;
    bool planned_positive = false;
    std::string drop_concept;  // R3 fixture: this concept gets no samples
    std::vector<std::size_t> icd9_indices;
};

const char* pick_insurance(Rng& rng) {
    const double r = rng.uniform01();
    if (r < 0.45) return "Medicare";
    if (r < 0.80) return "Private";
    if (r < 0.95) return "Medicaid";
    return "Self Pay";
}

std::vector<std::size_t> pick_icd9(Rng& rng) {
    std::vector<std::size_t> all(icd9_pool().size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rng.shuffle(all);
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 6));
    all.resize(n);
    return all;
}

void write_stay_events(std::ostream& out, const PlannedStay& stay, const KnowledgeBase& kb,
                       Rng& rng) {
    for (const ConceptDef& c : kb.concepts()) {
        // Draws below happen unconditionally so the stream stays aligned
        // whether or not this concept is suppressed.
        const NormalBandGeometry g = band_geometry(c);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = (stay.unstable ? 1.3 : 0.3) * g.halfwidth;
        const bool chart = c.kind == ConceptKind::chart;
        const std::int64_t period = chart ? kChartPeriod : kLabPeriod;
        const std::int64_t signal_period = chart ? kChartSignalPeriod : kLabSignalPeriod;
        std::int64_t t = stay.icu_in +
                         (chart ? rng.uniform_int(0, 1800) : rng.uniform_int(1800, 10800));
        const bool suppressed = stay.drop_concept == c.concept_id;
        while (t <= stay.icu_out) {
            const double angle = 2.0 * std::numbers::pi *
                                     static_cast<double>(t - stay.icu_in) /
                                     static_cast<double>(signal_period) +
                                 phase;
            const double noise = rng.normal(0.0, 0.08 * g.halfwidth);
            const double value = g.center + amp * std::sin(angle) + noise;
            if (!suppressed) {
                write_csv_row(out, {stay.stay_id, stay.patient_id, c.concept_id,
                                    std::to_string(t), format_double(round3(value))});
            }
            const std::int64_t jitter = chart ? rng.uniform_int(-600, 600)
                                              : rng.uniform_int(-3600, 3600);
            t += period + jitter;
        }
    }
}

}  // namespace

void synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
    if (cfg.n_patients < 10) {
        fail(ErrorCode::BadArgument, "n_patients must be at least 10");
    }
    if (!(cfg.positive_rate > 0.0 && cfg.positive_rate < 1.0)) {
        fail(ErrorCode::BadArgument, "positive_rate must lie in (0,1)");
    }
    if (!(cfg.theta >= 0.0 && cfg.theta <= 1.0)) {
        fail(ErrorCode::BadArgument, "theta must lie in [0,1]");
    }

    const KnowledgeBase kb = builtin_readmission_kb();
    Rng rng(cfg.seed);

    // Admissions span February through September 2015 so every planned
    // readmission (at most stay end + 28 days) stays inside the year.
    const std::int64_t window_start = epoch_from_civil(2015, 2, 1);
    const std::int64_t window_days = 241;

    const auto p_positive = [&](bool unstable) {
        const double p = unstable ? cfg.positive_rate * (1.0 + cfg.theta)
                                  : cfg.positive_rate * (1.0 - cfg.theta);
        return std::clamp(p, 0.0, 1.0);
    };

    std::vector<PlannedStay> stays;
    std::size_t stay_counter = 0;
    const auto next_stay_id = [&] {
        char buf[16];
        std::snprintf(buf, sizeof buf, "s%07zu", ++stay_counter);
        return std::string(buf);
    };

    for (std::size_t p = 1; p <= cfg.n_patients; ++p) {
        char pid_buf[16];
        std::snprintf(pid_buf, sizeof pid_buf, "p%06zu", p);
        const std::string pid(pid_buf);

        const double kind_roll = rng.uniform01();
        PlannedStay stay;
        stay.stay_id = next_stay_id();
        stay.patient_id = pid;
        stay.age = static_cast<int>(rng.uniform_int(18, 89));
        stay.gender = rng.bernoulli(0.5) ? "female" : "male";
        stay.insurance = pick_insurance(rng);
        stay.icu_in = window_start + rng.uniform_int(0, window_days - 1) * kSecondsPerDay +
                      rng.uniform_int(0, kSecondsPerDay - 1);
        std::int64_t los =
            rng.uniform_int(static_cast<std::int64_t>(1.3 * kSecondsPerDay),
                            static_cast<std::int64_t>(5.5 * kSecondsPerDay));
        stay.unstable = rng.bernoulli(0.5);
        stay.icd9_indices = pick_icd9(rng);

        bool regular = false;
        if (kind_roll < 0.01) {
            stay.age = static_cast<int>(rng.uniform_int(10, 17));  // fails R1
        } else if (kind_roll < 0.03) {
            // Fails R4: death during the stay or inside the 30-day window.
            stay.death_time = rng.bernoulli(0.5)
                                  ? stay.icu_in + rng.uniform_int(kSecondsPerHour, los)
                                  : stay.icu_in + los + rng.uniform_int(0, 20 * kSecondsPerDay);
        } else if (kind_roll < 0.05) {
            los = rng.uniform_int(6 * kSecondsPerHour, 20 * kSecondsPerHour);  // fails R2
        } else if (kind_roll < 0.065) {
            const auto& concepts = kb.concepts();
            stay.drop_concept =
                concepts[static_cast<std::size_t>(
                             rng.uniform_int(0, static_cast<std::int64_t>(concepts.size()) - 1))]
                    .concept_id;  // fails R3
        } else {
            regular = true;
        }
        stay.icu_out = stay.icu_in + los;
        stay.planned_positive = regular && rng.bernoulli(p_positive(stay.unstable));
        stays.push_back(stay);

        if (stays.back().planned_positive) {
            PlannedStay readmit;
            readmit.stay_id = next_stay_id();
            readmit.patient_id = pid;
            readmit.age = stays.back().age;
            readmit.gender = stays.back().gender;
            readmit.insurance = stays.back().insurance;
            readmit.icu_in =
                stays.back().icu_out + rng.uniform_int(kSecondsPerDay, 28 * kSecondsPerDay);
            readmit.icu_out = readmit.icu_in +
                              rng.uniform_int(static_cast<std::int64_t>(1.3 * kSecondsPerDay),
                                              static_cast<std::int64_t>(5.5 * kSecondsPerDay));
            readmit.unstable = rng.bernoulli(0.5);
            readmit.icd9_indices = pick_icd9(rng);
            stays.push_back(readmit);
        }
    }

    std::ofstream stays_out(out_dir + "/stays.csv", std::ios::binary);
    std::ofstream events_out(out_dir + "/events.csv", std::ios::binary);
    std::ofstream icd9_out(out_dir + "/icd9.csv", std::ios::binary);
    std::ofstream truth_out(out_dir + "/truth.csv", std::ios::binary);
    if (!stays_out || !events_out || !icd9_out || !truth_out) {
        fail(ErrorCode::IoError, "cannot write into " + out_dir);
    }

    stays_out << "stay_id,patient_id,intime,outtime,age,gender,insurance,death_time\n";
    events_out << "stay_id,patient_id,concept_id,timestamp,value\n";
    icd9_out << "stay_id,seq,code,description\n";
    truth_out << "stay_id,patient_id,unstable,planned_positive\n";

    for (const PlannedStay& stay : stays) {
        write_csv_row(stays_out,
                      {stay.stay_id, stay.patient_id, std::to_string(stay.icu_in),
                       std::to_string(stay.icu_out), std::to_string(stay.age), stay.gender,
                       stay.insurance,
                       stay.death_time < 0 ? "" : std::to_string(stay.death_time)});
        write_stay_events(events_out, stay, kb, rng);
        for (std::size_t i = 0; i < stay.icd9_indices.size(); ++i) {
            const auto& [code, desc] = icd9_pool()[stay.icd9_indices[i]];
            write_csv_row(icd9_out, {stay.stay_id, std::to_string(i + 1), code, desc});
        }
        write_csv_row(truth_out, {stay.stay_id, stay.patient_id, stay.unstable ? "1" : "0",
                                  stay.planned_positive ? "1" : "0"});
    }
}

}  // namespace readmit
