#pragma once

#include <string>
#include <utility>
#include <vector>

#include "siamattack/data.hpp"
#include "siamattack/generator.hpp"
#include "siamattack/tracker.hpp"

namespace siam {

// One perturbation per direction index k = 0..K-1, all generated from the
// same template with the matching condition mask.
struct PerturbationBank {
    std::vector<Perturbation> perturbations;
    int num_directions = 0;
    int displacement = 0;
    float box_side = 0.0f;
    float epsilon = 0.0f;
    uint64_t template_hash = 0;  // fnv1a64 of the template crop bytes

    int size() const { return static_cast<int>(perturbations.size()); }
};

// K conditional forward passes, one per direction.
PerturbationBank build_bank(const GeneratorNet& gen, const Tensor& template_chw, int K, int d,
                            float box_side, const AnchorGrid& grid);

// Desired target center per frame, in frame pixels. Centers are clamped to
// stay `margin` pixels inside the frame so late frames keep a reachable
// target instead of one sliding off the image.
struct TargetTrajectory {
    std::vector<float> cx, cy;

    int size() const { return static_cast<int>(cx.size()); }
};

TargetTrajectory fixed_direction_trajectory(const Sequence& seq, float dx, float dy,
                                            float margin = 10.0f);
TargetTrajectory gt_offset_trajectory(const Sequence& seq, float ox, float oy,
                                      float margin = 10.0f);
// Linear interpolation through waypoints, spread evenly over the frames.
TargetTrajectory polyline_trajectory(const Sequence& seq,
                                     const std::vector<std::pair<float, float>>& waypoints,
                                     float margin = 10.0f);

// Chooses which perturbation (if any) each tracked frame gets. prepare runs
// once per sequence before frame 1 and is not repeated on restarts.
class AttackPolicy {
  public:
    virtual ~AttackPolicy() = default;
    virtual void prepare(const TrackerNet& net, const Sequence& seq) = 0;
    virtual const Perturbation* select(int frame, const TrackerState& state,
                                       const ImageU8& image) = 0;
    virtual std::string mode() const = 0;
    virtual int last_direction() const { return -1; }
    virtual float epsilon() const = 0;
    virtual int bank_size() const { return 0; }
};

// Generates one perturbation from the first-frame template and replays it on
// every subsequent frame. One generator call per sequence.
class OneShotPolicy : public AttackPolicy {
  public:
    explicit OneShotPolicy(const GeneratorNet& gen) : gen_(gen) {}

    void prepare(const TrackerNet& net, const Sequence& seq) override;
    const Perturbation* select(int frame, const TrackerState& state,
                               const ImageU8& image) override;
    std::string mode() const override { return "one-shot"; }
    float epsilon() const override { return gen_.cfg().epsilon; }

  private:
    const GeneratorNet& gen_;
    Perturbation pert_;
};

// Builds a direction bank in prepare (K generator calls), then per frame picks
// the bank entry whose angle is nearest the desired motion, i.e. the vector
// from the tracker's current center to the next target center. A zero desired
// vector or an exact angular tie keeps the previous index.
class TrajectoryPolicy : public AttackPolicy {
  public:
    TrajectoryPolicy(const GeneratorNet& gen, const TargetTrajectory& traj, int K, int d,
                     float box_side);
    // Prebuilt bank; prepare is a no-op and no generator calls happen.
    TrajectoryPolicy(const PerturbationBank& bank, const TargetTrajectory& traj);

    void prepare(const TrackerNet& net, const Sequence& seq) override;
    const Perturbation* select(int frame, const TrackerState& state,
                               const ImageU8& image) override;
    std::string mode() const override { return "targeted"; }
    int last_direction() const override { return prev_; }
    float epsilon() const override { return bank_.epsilon; }
    int bank_size() const override { return bank_.size(); }

  private:
    const GeneratorNet* gen_ = nullptr;
    const TargetTrajectory& traj_;
    int want_k_ = 0, want_d_ = 0;
    float want_side_ = 0.0f;
    PerturbationBank bank_;
    int prev_ = 0;
};

// Regenerates the perturbation every frame from the current search crop
// resized to the template input. T generator calls for T tracked frames.
class PerFramePolicy : public AttackPolicy {
  public:
    explicit PerFramePolicy(const GeneratorNet& gen) : gen_(gen) {}

    void prepare(const TrackerNet& net, const Sequence& seq) override;
    const Perturbation* select(int frame, const TrackerState& state,
                               const ImageU8& image) override;
    std::string mode() const override { return "per-frame-baseline"; }
    float epsilon() const override { return gen_.cfg().epsilon; }

  private:
    const GeneratorNet& gen_;
    Perturbation pert_;
};

struct FrameRecord {
    int frame = 0;
    int status = 0;  // 0 tracked, 1 init, 2 skipped after a failure
    Box pred{0.0f, 0.0f, 1.0f, 1.0f};
    Box gt{0.0f, 0.0f, 1.0f, 1.0f};
    float tx = 0.0f, ty = 0.0f;  // target center, meaningful when has_target
    float conf = 0.0f;
    int dir = -1;
    double ms = 0.0;  // wall time of the tracking step, excluded from determinism checks
};

struct AttackRun {
    std::string sequence;
    std::string mode;
    float epsilon = 0.0f;
    int bank_size = 0;
    uint64_t gen_calls = 0;
    int restarts = 0;
    bool has_target = false;
    std::vector<FrameRecord> frames;
};

struct RunOptions {
    bool restart_protocol = false;  // zero-overlap frames trigger reinit
    int skip_after_failure = 5;     // failure at f reinitializes at f+skip
};

// Shared driver: frame 0 initializes from ground truth, later frames run
// track_step with the policy's perturbation. Under the restart protocol a
// zero-IoU frame counts a failure, the next skip-1 frames are skipped, and the
// tracker reinitializes from ground truth after them. gen_calls covers
// prepare plus all selects.
AttackRun run_sequence(const TrackerNet& net, const Sequence& seq, AttackPolicy* attack,
                       const TargetTrajectory* traj = nullptr, const RunOptions& opts = {});

AttackRun clean_baseline(const TrackerNet& net, const Sequence& seq,
                         const RunOptions& opts = {});
AttackRun one_shot_attack(const TrackerNet& net, const GeneratorNet& gen, const Sequence& seq,
                          const RunOptions& opts = {});
AttackRun per_frame_baseline_attack(const TrackerNet& net, const GeneratorNet& gen,
                                    const Sequence& seq, const RunOptions& opts = {});
// Uses a prebuilt bank; gen_calls reflects only calls made inside the run (0).
AttackRun follow_trajectory(const TrackerNet& net, const PerturbationBank& bank,
                            const Sequence& seq, const TargetTrajectory& traj,
                            const RunOptions& opts = {});
// Builds the bank from the sequence's own template inside the run, so
// gen_calls lands at the bank size.
AttackRun targeted_attack(const TrackerNet& net, const GeneratorNet& gen, const Sequence& seq,
                          const TargetTrajectory& traj, int K, int d, float box_side,
                          const RunOptions& opts = {});

// CSV with `# key=value` metadata lines, then one row per frame.
void save_attack_run(const std::string& path, const AttackRun& run);
AttackRun load_attack_run(const std::string& path);

}  // namespace siam
