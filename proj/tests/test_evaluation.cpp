#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "siamattack/error.hpp"
#include "siamattack/evaluation.hpp"

using namespace siam;
namespace fs = std::filesystem;

namespace {

AttackRun tiny_run() {
    AttackRun run;
    run.sequence = "seq_a";
    run.mode = "one-shot";
    run.epsilon = 16.0f;
    run.gen_calls = 1;
    run.restarts = 0;
    run.frames.push_back({0, 1, Box(10, 10, 4, 4), Box(10, 10, 4, 4), 0, 0, 1.0f, -1, 0.0});
    // Tracked frame: pred offset (3,4) from gt -> center error 5, iou known.
    run.frames.push_back({1, 0, Box(13, 14, 4, 4), Box(10, 10, 4, 4), 0, 0, 0.9f, -1, 1.0});
    // Skipped frame never enters metrics.
    run.frames.push_back({2, 2, Box(0, 0, 1, 1), Box(10, 10, 4, 4), 0, 0, 0.0f, -1, 0.0});
    // Perfect tracked frame.
    run.frames.push_back({3, 0, Box(10, 10, 4, 4), Box(10, 10, 4, 4), 0, 0, 0.8f, -1, 1.0});
    return run;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("precision thresholds are inclusive") {
    CHECK(precision_at({5.0f, 25.0f, 10.0f}, 20.0f) == doctest::Approx(2.0f / 3.0f));
    CHECK(precision_at({20.0f}, 20.0f) == doctest::Approx(1.0f));
    CHECK(precision_at({20.001f}, 20.0f) == doctest::Approx(0.0f));
    CHECK(precision_at({}, 20.0f) == 0.0f);
}

TEST_CASE("success curve thresholds are strict and averaged") {
    SUBCASE("all-perfect overlaps lose only the threshold-1 bucket") {
        const SuccessCurve c = success_curve({1.0f, 1.0f});
        REQUIRE(c.thresholds.size() == 21);
        REQUIRE(c.values.size() == 21);
        CHECK(c.thresholds[0] == doctest::Approx(0.0f));
        CHECK(c.thresholds[20] == doctest::Approx(1.0f));
        CHECK(c.values[0] == doctest::Approx(1.0f));
        CHECK(c.values[20] == doctest::Approx(0.0f));  // 1.0 > 1.0 is false
        CHECK(c.auc == doctest::Approx(20.0f / 21.0f));
    }
    SUBCASE("all-zero overlaps never clear any threshold") {
        const SuccessCurve c = success_curve({0.0f, 0.0f, 0.0f});
        CHECK(c.auc == doctest::Approx(0.0f));
        CHECK(c.values[0] == doctest::Approx(0.0f));  // 0 > 0 is false
    }
    SUBCASE("a single mid overlap clears the lower half") {
        const SuccessCurve c = success_curve({0.5f});
        // 0.5 > i/20 holds for i = 0..9, fails from 0.5 onward.
        CHECK(c.auc == doctest::Approx(10.0f / 21.0f));
        CHECK(c.values[9] == doctest::Approx(1.0f));
        CHECK(c.values[10] == doctest::Approx(0.0f));
    }
}

TEST_CASE("curve values match direct counting on random data") {
    Rng rng(33, 0);
    std::vector<float> overlaps(1000), errors(1000);
    for (auto& v : overlaps) v = rng.uniform();
    for (auto& v : errors) v = rng.uniform(0.0f, 60.0f);

    for (const float t : {5.0f, 20.0f, 35.0f}) {
        int hits = 0;
        for (float e : errors) hits += e <= t;
        CHECK(precision_at(errors, t) ==
              doctest::Approx(static_cast<float>(hits) / 1000.0f).epsilon(1e-6));
    }

    const SuccessCurve c = success_curve(overlaps);
    double area = 0.0;
    for (int i = 0; i <= 20; ++i) {
        const float th = static_cast<float>(i) / 20.0f;
        int above = 0;
        for (float v : overlaps) above += v > th;
        const float frac = static_cast<float>(above) / 1000.0f;
        CHECK(c.values[static_cast<size_t>(i)] == doctest::Approx(frac).epsilon(1e-6));
        area += frac;
    }
    CHECK(c.auc == doctest::Approx(static_cast<float>(area / 21.0)).epsilon(1e-5));
}

TEST_CASE("summaries keep only tracked frames") {
    const SequenceResult r = summarize(tiny_run());
    CHECK(r.sequence == "seq_a");
    CHECK(r.mode == "one-shot");
    CHECK(r.tracked_frames == 2);
    CHECK(r.total_frames == 4);
    REQUIRE(r.overlaps.size() == 2);
    REQUIRE(r.center_errors.size() == 2);
    CHECK(r.center_errors[0] == doctest::Approx(5.0f));  // hypot(3,4)
    CHECK(r.center_errors[1] == doctest::Approx(0.0f));
    // Boxes 4x4 offset by (3,4): 1x0 intersection -> iou 0.
    CHECK(r.overlaps[0] == doctest::Approx(0.0f));
    CHECK(r.overlaps[1] == doctest::Approx(1.0f));
    CHECK(r.target_errors.empty());
    CHECK(r.total_ms == doctest::Approx(2.0));
}

TEST_CASE("targeted precision reads the target errors") {
    AttackRun run = tiny_run();
    run.has_target = true;
    run.frames[1].tx = 13.0f;  // tracked pred center (13,14)
    run.frames[1].ty = 14.0f;
    run.frames[3].tx = 40.0f;  // far from pred (10,10)
    run.frames[3].ty = 10.0f;
    const SequenceResult r = summarize(run);
    REQUIRE(r.target_errors.size() == 2);
    CHECK(r.target_errors[0] == doctest::Approx(0.0f));
    CHECK(r.target_errors[1] == doctest::Approx(30.0f));
    CHECK(targeted_precision(r, 20.0f) == doctest::Approx(0.5f));

    const SequenceResult plain = summarize(tiny_run());
    CHECK_THROWS_AS(targeted_precision(plain, 20.0f), ConfigError);
}

TEST_CASE("aggregation pools frames across sequences") {
    AttackRun a = tiny_run();
    AttackRun b = tiny_run();
    b.sequence = "seq_b";
    b.restarts = 2;
    b.gen_calls = 3;
    // Push one more tracked frame into b with center error 25 (not within 20).
    b.frames.push_back({4, 0, Box(35, 10, 4, 4), Box(10, 10, 4, 4), 0, 0, 0.5f, -1, 1.0});

    const std::vector<SequenceResult> rs = {summarize(a), summarize(b)};
    const AggregateMetrics m = aggregate(rs);
    CHECK(m.sequences == 2);
    CHECK(m.tracked_frames == 5);
    // Frame-pooled: errors {5,0,5,0,25}, 4 of 5 within 20 px.
    CHECK(m.precision20 == doctest::Approx(4.0f / 5.0f));
    CHECK(m.restarts == 2);
    CHECK(m.mean_gen_calls == doctest::Approx(2.0));
    // Overlaps {0,1,0,1,0}: mean 0.4.
    CHECK(m.mean_iou == doctest::Approx(0.4f).epsilon(1e-6));
    CHECK(m.mode == "one-shot");

    CHECK_THROWS_AS(aggregate({}), ConfigError);
}

TEST_CASE("cost report groups by mode") {
    AttackRun a = tiny_run();
    AttackRun b = tiny_run();
    b.sequence = "seq_b";
    b.mode = "clean";
    b.gen_calls = 0;
    const std::vector<SequenceResult> rs = {summarize(a), summarize(b)};
    const std::vector<CostRow> rows = cost_report(rs);
    REQUIRE(rows.size() == 2);
    // Deterministic mode order: lexicographic.
    CHECK(rows[0].mode == "clean");
    CHECK(rows[1].mode == "one-shot");
    CHECK(rows[0].sequences == 1);
    CHECK(rows[1].mean_gen_calls == doctest::Approx(1.0));
    CHECK(rows[0].ms_per_frame == doctest::Approx(1.0));  // 2 ms over 2 tracked
}

TEST_CASE("reports are emitted deterministically") {
    AttackRun a = tiny_run();
    AttackRun b = tiny_run();
    b.sequence = "seq_b";
    b.mode = "clean";
    const std::vector<SequenceResult> rs = {summarize(a), summarize(b)};

    const fs::path dir1 = "eval_report_1";
    const fs::path dir2 = "eval_report_2";
    emit_report(rs, dir1.string());
    emit_report(rs, dir2.string());

    for (const char* name :
         {"per_sequence.csv", "aggregate.csv", "precision_curve.svg", "success_curve.svg"}) {
        CAPTURE(name);
        REQUIRE(fs::exists(dir1 / name));
        CHECK(slurp(dir1 / name) == slurp(dir2 / name));
    }
    // cost.csv exists but carries timing, so only its header is pinned.
    REQUIRE(fs::exists(dir1 / "cost.csv"));
    std::ifstream cost(dir1 / "cost.csv");
    std::string header;
    std::getline(cost, header);
    CHECK(header.find("mode") != std::string::npos);
    CHECK(header.find("ms_per_frame") != std::string::npos);
    cost.close();

    const std::string per_seq = slurp(dir1 / "per_sequence.csv");
    CHECK(per_seq.find("seq_a") != std::string::npos);
    CHECK(per_seq.find("seq_b") != std::string::npos);
    CHECK(per_seq.find("ms") == std::string::npos);  // no timing column here

    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("svg plots reject mismatched series") {
    // Emitting a report with no results is the error path callers hit first.
    CHECK_THROWS_AS(emit_report({}, "eval_report_empty"), ConfigError);
    fs::remove_all("eval_report_empty");
}
