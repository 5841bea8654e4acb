#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "readmit/cohort.hpp"
#include "readmit/error.hpp"
#include "readmit/kb.hpp"
#include "readmit/timeutil.hpp"

using namespace readmit;

namespace {

// Jan 10 2015, noon. Calendar arithmetic below keeps everything in 2015
// unless a test says otherwise.
const std::int64_t kBase = epoch_from_civil(2015, 1, 10) + 12 * 3600;

// A stay that satisfies every inclusion rule: adult, two-day LOS, enough
// samples for each KB concept, no death.
StayRecord good_stay(const KnowledgeBase& kb, const std::string& stay_id,
                     const std::string& patient_id, std::int64_t icu_in) {
    StayRecord s;
    s.stay_id = stay_id;
    s.patient_id = patient_id;
    s.icu_in = icu_in;
    s.icu_out = icu_in + 2 * kSecondsPerDay;
    s.age_years = 54;
    s.gender = Gender::female;
    s.insurance = "Medicare";
    for (const ConceptDef& c : kb.concepts()) {
        for (int i = 0; i < c.min_samples; ++i) {
            s.samples.push_back({c.concept_id, icu_in + 600 + i * 3600, 1.0});
        }
    }
    return s;
}

std::map<std::string, CohortDecision> by_stay(const std::vector<CohortDecision>& ds) {
    std::map<std::string, CohortDecision> m;
    for (const CohortDecision& d : ds) m[d.stay_id] = d;
    return m;
}

}  // namespace

TEST_CASE("single-rule fixtures are excluded for exactly that rule") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays;

    stays.push_back(good_stay(kb, "ok", "p0", kBase));

    StayRecord minor = good_stay(kb, "r1", "p1", kBase);
    minor.age_years = 17;
    stays.push_back(minor);

    StayRecord brief = good_stay(kb, "r2", "p2", kBase);
    brief.icu_out = brief.icu_in + kMinLosSeconds - 1;
    stays.push_back(brief);

    StayRecord sparse = good_stay(kb, "r3", "p3", kBase);
    std::erase_if(sparse.samples, [](const Sample& x) { return x.concept_id == "wbc"; });
    stays.push_back(sparse);

    StayRecord died = good_stay(kb, "r4", "p4", kBase);
    died.death_time = died.icu_out + 10 * kSecondsPerDay;
    stays.push_back(died);

    StayRecord second = good_stay(kb, "r5", "p0", kBase + 90 * kSecondsPerDay);
    stays.push_back(second);  // same patient, same calendar year

    const auto d = by_stay(apply_rules(stays, kb));
    CHECK(d.at("ok").included);
    CHECK(d.at("ok").failed_rules.empty());
    CHECK(d.at("r1").failed_rules == std::vector<std::string>{"R1"});
    CHECK(d.at("r2").failed_rules == std::vector<std::string>{"R2"});
    CHECK(d.at("r3").failed_rules == std::vector<std::string>{"R3"});
    CHECK(d.at("r4").failed_rules == std::vector<std::string>{"R4"});
    CHECK(d.at("r5").failed_rules == std::vector<std::string>{"R5"});
    for (const char* id : {"r1", "r2", "r3", "r4", "r5"}) {
        CHECK(!d.at(id).included);
        CHECK(d.at(id).label == std::nullopt);
    }
}

TEST_CASE("length-of-stay bounds are inclusive") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays;

    StayRecord one_day = good_stay(kb, "lo", "p1", kBase);
    one_day.icu_out = one_day.icu_in + kMinLosSeconds;
    StayRecord thirty = good_stay(kb, "hi", "p2", kBase);
    thirty.icu_out = thirty.icu_in + kMaxLosSeconds;
    StayRecord over = good_stay(kb, "over", "p3", kBase);
    over.icu_out = over.icu_in + kMaxLosSeconds + 1;
    stays = {one_day, thirty, over};

    const auto d = by_stay(apply_rules(stays, kb));
    CHECK(d.at("lo").failed_rules.empty());
    CHECK(d.at("hi").failed_rules.empty());
    CHECK(d.at("over").failed_rules == std::vector<std::string>{"R2"});
}

TEST_CASE("death exactly at the 30-day mark still excludes") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord edge = good_stay(kb, "edge", "p1", kBase);
    edge.death_time = edge.icu_out + 30 * kSecondsPerDay;
    StayRecord past = good_stay(kb, "past", "p2", kBase);
    past.death_time = past.icu_out + 30 * kSecondsPerDay + 1;

    const auto d = by_stay(apply_rules({edge, past}, kb));
    CHECK(d.at("edge").failed_rules == std::vector<std::string>{"R4"});
    CHECK(d.at("past").failed_rules.empty());
}

TEST_CASE("chart concepts need five samples, labs one") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord four_charts = good_stay(kb, "c4", "p1", kBase);
    // drop one heart_rate sample, leaving four
    auto it = std::find_if(four_charts.samples.begin(), four_charts.samples.end(),
                           [](const Sample& x) { return x.concept_id == "heart_rate"; });
    four_charts.samples.erase(it);

    const auto d = by_stay(apply_rules({four_charts}, kb));
    CHECK(d.at("c4").failed_rules == std::vector<std::string>{"R3"});
}

TEST_CASE("rule evaluation does not short-circuit") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord multi = good_stay(kb, "multi", "p1", kBase);
    multi.age_years = 16;
    multi.icu_out = multi.icu_in + 3600;  // forty minutes short of a day
    multi.death_time = multi.icu_out + 1000;
    const auto d = by_stay(apply_rules({multi}, kb));
    CHECK(d.at("multi").failed_rules == std::vector<std::string>{"R1", "R2", "R4"});
}

TEST_CASE("calendar year rule keeps the earliest stay per year") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays = {
        good_stay(kb, "jan", "p1", kBase),
        good_stay(kb, "jun", "p1", kBase + 150 * kSecondsPerDay),
        good_stay(kb, "next_year", "p1", epoch_from_civil(2016, 3, 1)),
    };
    const auto d = by_stay(apply_rules(stays, kb));
    CHECK(d.at("jan").included);
    CHECK(d.at("jun").failed_rules == std::vector<std::string>{"R5"});
    CHECK(d.at("next_year").included);
}

TEST_CASE("excluded earlier stays still block the year") {
    // the January stay dies (R4) but remains the patient's first 2015 stay,
    // so the June stay is still not first-in-year
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord jan = good_stay(kb, "jan", "p1", kBase);
    jan.death_time = jan.icu_out + 1;
    StayRecord jun = good_stay(kb, "jun", "p1", kBase + 150 * kSecondsPerDay);
    const auto d = by_stay(apply_rules({jan, jun}, kb));
    CHECK(d.at("jan").failed_rules == std::vector<std::string>{"R4"});
    CHECK(d.at("jun").failed_rules == std::vector<std::string>{"R5"});
}

TEST_CASE("simultaneous stays tie-break on stay id") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays = {
        good_stay(kb, "b", "p1", kBase),
        good_stay(kb, "a", "p1", kBase),
    };
    const auto d = by_stay(apply_rules(stays, kb));
    CHECK(d.at("a").included);
    CHECK(d.at("b").failed_rules == std::vector<std::string>{"R5"});
}

TEST_CASE("rolling window replaces the calendar rule") {
    const KnowledgeBase kb = builtin_readmission_kb();
    // Dec 1 then Feb 1: different calendar years but only 62 days apart
    StayRecord dec = good_stay(kb, "dec", "p1", epoch_from_civil(2015, 12, 1));
    StayRecord feb = good_stay(kb, "feb", "p1", epoch_from_civil(2016, 2, 1));
    CohortOptions calendar;
    CohortOptions rolling;
    rolling.year_window = YearWindow::rolling;

    auto d = by_stay(apply_rules({dec, feb}, kb, calendar));
    CHECK(d.at("dec").included);
    CHECK(d.at("feb").included);

    d = by_stay(apply_rules({dec, feb}, kb, rolling));
    CHECK(d.at("dec").included);
    CHECK(d.at("feb").failed_rules == std::vector<std::string>{"R5"});
}

TEST_CASE("labels follow the 30-day readmission window") {
    const KnowledgeBase kb = builtin_readmission_kb();
    auto readmit_after = [&](const char* suffix, std::int64_t gap) {
        std::vector<StayRecord> stays = {
            good_stay(kb, std::string("idx_") + suffix, std::string("p_") + suffix, kBase)};
        StayRecord next = good_stay(kb, std::string("re_") + suffix, std::string("p_") + suffix,
                                    stays[0].icu_out + gap);
        stays.push_back(next);
        const auto d = by_stay(build_cohort(stays, kb));
        return d.at(std::string("idx_") + suffix).label;
    };
    CHECK(readmit_after("ten", 10 * kSecondsPerDay) == true);
    CHECK(readmit_after("edge", 30 * kSecondsPerDay) == true);
    CHECK(readmit_after("past", 30 * kSecondsPerDay + 1) == false);
    CHECK(readmit_after("month", 31 * kSecondsPerDay) == false);
}

TEST_CASE("excluded readmission stays still create labels") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord idx = good_stay(kb, "idx", "p1", kBase);
    // the follow-up dies, failing R4, but its arrival still marks the index
    StayRecord follow = good_stay(kb, "re", "p1", idx.icu_out + 5 * kSecondsPerDay);
    follow.death_time = follow.icu_out + 1;
    const auto d = by_stay(build_cohort({idx, follow}, kb));
    CHECK(d.at("idx").included);
    CHECK(d.at("idx").label == true);
    CHECK(!d.at("re").included);
}

TEST_CASE("decisions are independent of input order") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays = {
        good_stay(kb, "s1", "p1", kBase),
        good_stay(kb, "s2", "p1", kBase + 20 * kSecondsPerDay),
        good_stay(kb, "s3", "p2", kBase),
        good_stay(kb, "s4", "p3", kBase),
    };
    stays[3].age_years = 15;
    auto sorted_decisions = [&](std::vector<StayRecord> order) {
        auto ds = build_cohort(order, kb);
        std::sort(ds.begin(), ds.end(),
                  [](const CohortDecision& a, const CohortDecision& b) {
                      return a.stay_id < b.stay_id;
                  });
        return ds;
    };
    const auto forward = sorted_decisions(stays);
    std::reverse(stays.begin(), stays.end());
    const auto reversed = sorted_decisions(stays);
    CHECK(forward == reversed);
}

TEST_CASE("stratified folds are patient-disjoint and balanced") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays;
    std::vector<CohortDecision> decisions;
    for (int i = 0; i < 10; ++i) {
        StayRecord s = good_stay(kb, "s" + std::to_string(i), "p" + std::to_string(i), kBase);
        CohortDecision d;
        d.stay_id = s.stay_id;
        d.included = true;
        d.label = i < 2;  // two positives
        stays.push_back(std::move(s));
        decisions.push_back(std::move(d));
    }
    const FoldAssignment folds = stratified_folds(stays, decisions, 5, 17);
    CHECK(folds.k == 5);
    REQUIRE(folds.fold_of.size() == 10);

    std::map<int, int> sizes;
    std::map<int, int> positives;
    for (int i = 0; i < 10; ++i) {
        const int f = folds.fold_of.at("p" + std::to_string(i));
        sizes[f]++;
        if (i < 2) positives[f]++;
    }
    REQUIRE(sizes.size() == 5);
    for (const auto& [fold, n] : sizes) CHECK(n == 2);
    // two positives dealt round-robin can never share a fold
    for (const auto& [fold, n] : positives) CHECK(n <= 1);
}

TEST_CASE("fold assignment is seed-deterministic and seed-sensitive") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays;
    std::vector<CohortDecision> decisions;
    for (int i = 0; i < 40; ++i) {
        StayRecord s = good_stay(kb, "s" + std::to_string(i), "p" + std::to_string(i), kBase);
        CohortDecision d;
        d.stay_id = s.stay_id;
        d.included = true;
        d.label = i % 4 == 0;
        stays.push_back(std::move(s));
        decisions.push_back(std::move(d));
    }
    const FoldAssignment a = stratified_folds(stays, decisions, 5, 42);
    const FoldAssignment b = stratified_folds(stays, decisions, 5, 42);
    CHECK(a == b);
    const FoldAssignment c = stratified_folds(stays, decisions, 5, 43);
    CHECK(a.fold_of != c.fold_of);
}

TEST_CASE("a patient with any positive stay counts as positive") {
    const KnowledgeBase kb = builtin_readmission_kb();
    // p1 has two stays in different years with mixed labels
    std::vector<StayRecord> stays = {
        good_stay(kb, "s1", "p1", kBase),
        good_stay(kb, "s2", "p1", epoch_from_civil(2016, 2, 1)),
        good_stay(kb, "s3", "p2", kBase),
        good_stay(kb, "s4", "p3", kBase),
        good_stay(kb, "s5", "p4", kBase),
    };
    std::vector<CohortDecision> decisions(5);
    decisions[0] = {"s1", true, {}, false};
    decisions[1] = {"s2", true, {}, true};
    decisions[2] = {"s3", true, {}, true};
    decisions[3] = {"s4", true, {}, false};
    decisions[4] = {"s5", true, {}, false};
    const FoldAssignment folds = stratified_folds(stays, decisions, 2, 1);
    // four patients, and p1 appears exactly once despite two stays
    CHECK(folds.fold_of.size() == 4);
    CHECK(folds.fold_of.count("p1") == 1);
    // the two positive patients (p1, p2) split across the folds
    CHECK(folds.fold_of.at("p1") != folds.fold_of.at("p2"));
}

TEST_CASE("few distinct patients cannot fill the folds") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays = {good_stay(kb, "s1", "p1", kBase),
                                     good_stay(kb, "s2", "p2", kBase)};
    std::vector<CohortDecision> decisions(2);
    decisions[0] = {"s1", true, {}, true};
    decisions[1] = {"s2", true, {}, false};
    CHECK_THROWS_AS(stratified_folds(stays, decisions, 5, 1), Error);  // TooFewPatients
}

TEST_CASE("decisions csv round-trip") {
    std::vector<CohortDecision> ds(3);
    ds[0] = {"s1", true, {}, true};
    ds[1] = {"s2", false, {"R2", "R5"}, std::nullopt};
    ds[2] = {"s3", true, {}, false};
    std::ostringstream out;
    write_decisions_csv(out, ds);
    std::istringstream in(out.str());
    const auto back = read_decisions_csv(in, "d.csv");
    CHECK(back == ds);
}

TEST_CASE("folds csv round-trip") {
    FoldAssignment folds;
    folds.k = 3;
    folds.seed = 9;
    folds.fold_of = {{"p1", 0}, {"p2", 2}, {"p3", 1}};
    std::ostringstream out;
    write_folds_csv(out, folds);
    std::istringstream in(out.str());
    const FoldAssignment back = read_folds_csv(in, "f.csv");
    CHECK(back.k == 3);
    CHECK(back.fold_of == folds.fold_of);
}

TEST_CASE("cohort report counts the demographic cells") {
    const KnowledgeBase kb = builtin_readmission_kb();
    std::vector<StayRecord> stays;
    std::vector<std::tuple<int, Gender, bool>> specs = {
        {30, Gender::male, true},  {40, Gender::male, false},  {70, Gender::female, true},
        {80, Gender::female, false}, {50, Gender::female, false},
    };
    for (std::size_t i = 0; i < specs.size(); ++i) {
        StayRecord s = good_stay(kb, "s" + std::to_string(i), "p" + std::to_string(i), kBase);
        s.age_years = std::get<0>(specs[i]);
        s.gender = std::get<1>(specs[i]);
        stays.push_back(std::move(s));
    }
    std::vector<CohortDecision> decisions;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        decisions.push_back({"s" + std::to_string(i), true, {}, std::get<2>(specs[i])});
    }
    const CohortReport r = cohort_report(stays, decisions);
    CHECK(r.included_stays == 5);
    CHECK(r.positives == 2);
    CHECK(r.positive_rate() == doctest::Approx(0.4));
    CHECK(r.counts[0][0][1] == 1);  // young male positive
    CHECK(r.counts[1][1][0] == 1);  // older female negative
    const std::string text = r.to_text();
    CHECK(text.find("Ages 18-65") != std::string::npos);
    CHECK(text.find("1 / 1") != std::string::npos);  // young male cell
}
