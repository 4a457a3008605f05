#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siamattack/geometry.hpp"
#include "siamattack/image.hpp"

namespace siam {

enum class MotionModel { kConstantVelocity, kSinusoidal, kRandomWalk };

// Recipe for one synthetic sequence: a textured sprite moving over a textured
// noise background, optional distractor sprites, optional slow size drift.
// Identical spec (seed included) renders bit-identical frames.
struct SyntheticSpec {
    int frame_w = 320;
    int frame_h = 240;
    int num_frames = 120;
    float sprite_w = 48;
    float sprite_h = 36;
    MotionModel motion = MotionModel::kConstantVelocity;
    int distractors = 2;
    float scale_drift = 0.0f;  // relative size oscillation amplitude
    uint64_t seed = 0;
};

struct VideoClip {
    std::vector<ImageU8> frames;
    std::vector<Box> gt;
};

VideoClip generate_video(const SyntheticSpec& spec);

// One sequence, either backed by frame files on disk (decoded on demand) or
// held in memory. Ground truth is always resident.
class Sequence {
  public:
    static Sequence from_dir(const std::string& dir);
    static Sequence in_memory(std::string name, VideoClip clip);

    const std::string& name() const { return name_; }
    int size() const { return static_cast<int>(gt_.size()); }
    ImageU8 frame(int i) const;
    const Box& gt(int i) const { return gt_[static_cast<size_t>(i)]; }
    const std::vector<Box>& gt_all() const { return gt_; }

  private:
    std::string name_;
    std::vector<std::string> paths_;
    std::vector<ImageU8> mem_;
    std::vector<Box> gt_;
};

struct Dataset {
    std::vector<Sequence> sequences;
};

// Loads every sequence directory under `root` (sorted by name). Each sequence
// directory holds numbered frame images plus groundtruth.txt with one
// `x,y,w,h` corner-form line per frame.
Dataset load_dataset(const std::string& root);

// Deterministic spec for sequence `index` of a split. Split seeds are
// disjoint: train 1000+i, val 2000+i, test 3000+i.
SyntheticSpec corpus_spec(const std::string& split, int index, int num_frames = 120);

// Renders and writes train/val/test splits under `out_dir`:
//   out_dir/<split>/seq_<idx>/{00000.png, ..., groundtruth.txt}
struct CorpusConfig {
    std::string out_dir;
    int train = 200;
    int val = 20;
    int test = 30;
    int num_frames = 120;
};
void write_corpus(const CorpusConfig& cfg);

}  // namespace siam
