#pragma once

#include <string>
#include <vector>

#include "siamattack/attack_runtime.hpp"

namespace siam {

// Fraction of frames whose center error is <= threshold (inclusive). Empty
// input warns on stderr and returns 0.
float precision_at(const std::vector<float>& center_errors, float threshold_px);

// Overlap success at 21 thresholds i/20: fraction of overlaps strictly above
// each. auc is the mean of the 21 values.
struct SuccessCurve {
    std::vector<float> thresholds;
    std::vector<float> values;
    float auc = 0.0f;
};
SuccessCurve success_curve(const std::vector<float>& overlaps);

// Frame-level quantities of one run, restricted to tracked (status 0) frames.
// Init and skipped frames never enter metrics.
struct SequenceResult {
    std::string sequence;
    std::string mode;
    float epsilon = 0.0f;
    uint64_t gen_calls = 0;
    int restarts = 0;
    int tracked_frames = 0;
    int total_frames = 0;
    bool has_target = false;
    std::vector<float> overlaps;
    std::vector<float> center_errors;
    std::vector<float> target_errors;  // distance to the target center, has_target only
    double total_ms = 0.0;
};
SequenceResult summarize(const AttackRun& run);

// Precision of the tracker's center against the attack's target centers.
float targeted_precision(const SequenceResult& r, float threshold_px);

// Pooled over all tracked frames of all sequences (not a per-sequence mean).
struct AggregateMetrics {
    std::string mode;
    int sequences = 0;
    int tracked_frames = 0;
    float precision20 = 0.0f;
    float success_auc = 0.0f;
    float mean_iou = 0.0f;
    float targeted_precision20 = 0.0f;  // 0 when no run carries targets
    int restarts = 0;                   // summed
    double mean_gen_calls = 0.0;
};
AggregateMetrics aggregate(const std::vector<SequenceResult>& results);

// Restart protocol run: zero-overlap frames count as failures, the next four
// frames are skipped, and the tracker reinitializes from ground truth on the
// fifth. attack may be null for a clean baseline.
AttackRun run_with_restarts(const TrackerNet& net, const Sequence& seq,
                            AttackPolicy* attack = nullptr, int skip_after_failure = 5);

// Generator calls and wall time per mode.
struct CostRow {
    std::string mode;
    int sequences = 0;
    double mean_gen_calls = 0.0;
    double ms_per_frame = 0.0;
};
std::vector<CostRow> cost_report(const std::vector<SequenceResult>& results);

// Writes per_sequence.csv, aggregate.csv, cost.csv, and the precision and
// success curve SVGs under out_dir. Everything except cost.csv's timing
// column is byte-reproducible for identical inputs.
void emit_report(const std::vector<SequenceResult>& results, const std::string& out_dir);

}  // namespace siam
