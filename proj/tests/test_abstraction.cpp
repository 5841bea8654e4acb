#include <doctest.h>

#include <cmath>
#include <sstream>

#include "readmit/abstraction.hpp"
#include "readmit/error.hpp"
#include "readmit/kb.hpp"
#include "readmit/rng.hpp"

using namespace readmit;

namespace {

StayRecord grid_stay() {
    StayRecord s;
    s.stay_id = "s1";
    s.patient_id = "p1";
    s.icu_in = 0;
    s.icu_out = 100000;
    s.age_years = 50;
    s.gender = Gender::male;
    s.insurance = "Private";
    return s;
}

}  // namespace

TEST_CASE("interpolation hits the midpoint exactly") {
    CHECK(interpolate_at(0, 10.0, 2, 20.0, 1) == 15.0);
}

TEST_CASE("interpolation weights approach the nearer endpoint") {
    // query 1/10 of the span from the left neighbour
    CHECK(interpolate_at(0, 10.0, 10, 20.0, 1) == doctest::Approx(11.0).epsilon(1e-12));
    CHECK(interpolate_at(0, 10.0, 10, 20.0, 9) == doctest::Approx(19.0).epsilon(1e-12));
}

TEST_CASE("as-printed weighting swaps the weights") {
    // the published form pairs each value with the distance to its own
    // neighbour, so the same query lands near the far endpoint instead
    CHECK(interpolate_at(0, 10.0, 10, 20.0, 1, InterpWeighting::as_printed) ==
          doctest::Approx(19.0).epsilon(1e-12));
}

TEST_CASE("interpolation rejects degenerate and out-of-span queries") {
    CHECK_THROWS_AS(interpolate_at(5, 1.0, 5, 2.0, 5), Error);       // DegenerateSpan
    CHECK_THROWS_AS(interpolate_at(0, 1.0, 10, 2.0, 0), Error);      // at the left edge
    CHECK_THROWS_AS(interpolate_at(0, 1.0, 10, 2.0, 10), Error);     // at the right edge
    CHECK_THROWS_AS(interpolate_at(0, 1.0, 10, 2.0, 11), Error);     // outside
}

TEST_CASE("interpolation stays between the endpoints") {
    Rng rng(404);
    for (int i = 0; i < 2000; ++i) {
        const std::int64_t t0 = rng.uniform_int(-1000, 1000);
        const std::int64_t t1 = t0 + rng.uniform_int(2, 5000);
        const std::int64_t q = t0 + rng.uniform_int(1, t1 - t0 - 1);
        const double v0 = rng.uniform01() * 200.0 - 100.0;
        const double v1 = rng.uniform01() * 200.0 - 100.0;
        const double out = interpolate_at(t0, v0, t1, v1, q);
        CHECK(out >= std::min(v0, v1) - 1e-12);
        CHECK(out <= std::max(v0, v1) + 1e-12);
    }
}

TEST_CASE("fill_grid interpolates interior gaps and extends edges") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord s = grid_stay();
    s.samples = {{"heart_rate", 0, 60.0},
                 {"heart_rate", 2000, 80.0},
                 {"body_temp", 1000, 37.0}};
    const GridSeries grid = fill_grid(s, kb);
    REQUIRE(grid.times == std::vector<std::int64_t>{0, 1000, 2000});
    REQUIRE(grid.width() == kb.size());

    std::size_t hr = 0, temp = 0;
    for (std::size_t c = 0; c < grid.concept_ids.size(); ++c) {
        if (grid.concept_ids[c] == "heart_rate") hr = c;
        if (grid.concept_ids[c] == "body_temp") temp = c;
    }
    CHECK(grid.values[0][hr] == 60.0);
    CHECK(grid.values[1][hr] == 70.0);  // interpolated interior cell
    CHECK(grid.values[2][hr] == 80.0);
    CHECK(grid.values[0][temp] == 37.0);  // nearest observation before the span
    CHECK(grid.values[1][temp] == 37.0);
    CHECK(grid.values[2][temp] == 37.0);  // and after it

    // concepts never observed in this stay stay empty
    std::size_t wbc = 0;
    for (std::size_t c = 0; c < grid.concept_ids.size(); ++c) {
        if (grid.concept_ids[c] == "wbc") wbc = c;
    }
    CHECK(std::isnan(grid.values[0][wbc]));
}

TEST_CASE("fill_grid keeps KB column order") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord s = grid_stay();
    s.samples = {{"heart_rate", 0, 60.0}};
    const GridSeries grid = fill_grid(s, kb);
    REQUIRE(grid.concept_ids.size() == kb.size());
    for (std::size_t c = 0; c < kb.size(); ++c) {
        CHECK(grid.concept_ids[c] == kb.concepts()[c].concept_id);
    }
}

TEST_CASE("fill_grid rejects samples outside the KB") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord s = grid_stay();
    s.samples = {{"unknown_lab", 0, 1.0}};
    CHECK_THROWS_AS(fill_grid(s, kb), Error);
}

TEST_CASE("simple gradients are a strict trichotomy") {
    const std::vector<Sample> series = {
        {"glucose", 0, 100.0}, {"glucose", 10, 105.0}, {"glucose", 20, 105.0}, {"glucose", 30, 90.0}};
    const auto grads = gradient_labels("glucose", series, GradientMode::simple, 10.0);
    REQUIRE(grads.size() == 3);
    CHECK(grads[0].label == "Increasing");
    CHECK(grads[0].t == 10);  // emitted at the later timestamp
    CHECK(grads[1].label == "Stable");
    CHECK(grads[2].label == "Decreasing");
    CHECK(grads[2].kind == SymbolKind::gradient);
}

TEST_CASE("thresholded gradients treat small moves as stable") {
    const std::vector<Sample> series = {
        {"glucose", 0, 100.0}, {"glucose", 10, 105.0}, {"glucose", 20, 116.0}};
    const auto grads = gradient_labels("glucose", series, GradientMode::thresholded, 10.0);
    REQUIRE(grads.size() == 2);
    CHECK(grads[0].label == "Stable");      // |+5| <= 10
    CHECK(grads[1].label == "Increasing");  // |+11| > 10

    // a move of exactly sig_delta still counts as Stable
    const std::vector<Sample> edge = {{"glucose", 0, 100.0}, {"glucose", 10, 110.0}};
    CHECK(gradient_labels("glucose", edge, GradientMode::thresholded, 10.0)[0].label == "Stable");
}

TEST_CASE("gradient oracle agreement on random series") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Sample> series;
        const int n = static_cast<int>(rng.uniform_int(0, 20));
        std::int64_t t = 0;
        for (int i = 0; i < n; ++i) {
            t += rng.uniform_int(1, 100);
            series.push_back({"x", t, std::round(rng.uniform01() * 40.0) / 4.0});
        }
        const double delta = rng.uniform01() * 2.0;
        for (GradientMode mode : {GradientMode::simple, GradientMode::thresholded}) {
            const auto got = gradient_labels("x", series, mode, delta);
            REQUIRE(got.size() == (series.empty() ? 0 : series.size() - 1));
            for (std::size_t i = 1; i < series.size(); ++i) {
                const double d = series[i].value - series[i - 1].value;
                std::string want;
                if (mode == GradientMode::simple) {
                    want = d > 0 ? "Increasing" : d < 0 ? "Decreasing" : "Stable";
                } else {
                    want = std::fabs(d) <= delta ? "Stable" : d > 0 ? "Increasing" : "Decreasing";
                }
                CHECK(got[i - 1].label == want);
                CHECK(got[i - 1].t == series[i].t);
            }
        }
    }
}

TEST_CASE("merge collapses runs and splits on label changes") {
    const std::vector<SymbolPoint> points = {{"hr", 0, SymbolKind::state, "A"},
                                             {"hr", 10, SymbolKind::state, "A"},
                                             {"hr", 20, SymbolKind::state, "B"},
                                             {"hr", 30, SymbolKind::state, "A"}};
    const auto intervals = merge_intervals(points);
    REQUIRE(intervals.size() == 3);
    CHECK(intervals[0].label == "A");
    CHECK(intervals[0].start == 0);
    CHECK(intervals[0].end == 10);
    CHECK(intervals[1].label == "B");
    CHECK(intervals[1].start == 20);
    CHECK(intervals[1].end == 20);  // singleton run
    CHECK(intervals[2].start == 30);
}

TEST_CASE("merge splits runs whose gap exceeds max_gap") {
    const std::vector<SymbolPoint> points = {{"hr", 0, SymbolKind::state, "A"},
                                             {"hr", 100, SymbolKind::state, "A"},
                                             {"hr", 1000, SymbolKind::state, "A"}};
    const auto intervals = merge_intervals(points, 500);
    REQUIRE(intervals.size() == 2);
    CHECK(intervals[0].start == 0);
    CHECK(intervals[0].end == 100);
    CHECK(intervals[1].start == 1000);
    CHECK(intervals[1].end == 1000);

    // a gap exactly at max_gap still merges
    const auto merged = merge_intervals(points, 900);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].end == 1000);
}

TEST_CASE("abstract_stay emits sorted points and per-concept intervals") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord s = grid_stay();
    s.samples = {{"heart_rate", 0, 70.0},
                 {"heart_rate", 1000, 75.0},
                 {"heart_rate", 2000, 90.0},
                 {"body_temp", 500, 36.5}};
    const AbstractionSet abs = abstract_stay(s, kb);
    CHECK(abs.stay_id == "s1");
    REQUIRE(!abs.points.empty());
    for (std::size_t i = 1; i < abs.points.size(); ++i) {
        const SymbolPoint& a = abs.points[i - 1];
        const SymbolPoint& b = abs.points[i];
        const auto ka = std::tie(a.t, a.concept_id, a.kind, a.label);
        const auto kb2 = std::tie(b.t, b.concept_id, b.kind, b.label);
        CHECK(ka <= kb2);
    }

    // with interpolation the grid has 4 distinct times and both concepts
    // get a state at each of them
    int hr_states = 0, temp_states = 0;
    for (const SymbolPoint& p : abs.points) {
        if (p.kind != SymbolKind::state) continue;
        if (p.concept_id == "heart_rate") hr_states++;
        if (p.concept_id == "body_temp") temp_states++;
    }
    CHECK(hr_states == 4);
    CHECK(temp_states == 4);

    // gradients always come from the raw samples, never the filled grid
    int hr_grads = 0;
    for (const SymbolPoint& p : abs.points) {
        if (p.kind == SymbolKind::gradient && p.concept_id == "heart_rate") hr_grads++;
    }
    CHECK(hr_grads == 2);
}

TEST_CASE("abstract_stay without interpolation sticks to raw sample times") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord s = grid_stay();
    s.samples = {{"heart_rate", 0, 70.0}, {"body_temp", 500, 36.5}};
    AbstractionOptions options;
    options.interpolate = false;
    const AbstractionSet abs = abstract_stay(s, kb, options);
    int states = 0;
    for (const SymbolPoint& p : abs.points) {
        if (p.kind == SymbolKind::state) states++;
    }
    CHECK(states == 2);  // one per raw sample, no grid fill
}

TEST_CASE("abstraction jsonl round-trip") {
    const KnowledgeBase kb = builtin_readmission_kb();
    StayRecord s = grid_stay();
    s.samples = {{"heart_rate", 0, 70.0}, {"heart_rate", 9000, 90.0}};
    AbstractionOptions options;
    options.gradient_mode = GradientMode::thresholded;
    const AbstractionSet abs = abstract_stay(s, kb, options);

    std::ostringstream out;
    write_abstractions_jsonl(out, {abs});
    std::istringstream in(out.str());
    const auto back = read_abstractions_jsonl(in);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == abs);
}
