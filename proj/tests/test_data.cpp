#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "siamattack/data.hpp"
#include "siamattack/error.hpp"

using namespace siam;
namespace fs = std::filesystem;

namespace {

SyntheticSpec base_spec() {
    SyntheticSpec s;
    s.frame_w = 320;
    s.frame_h = 240;
    s.num_frames = 20;
    s.seed = 123;
    return s;
}

}  // namespace

TEST_CASE("video generation is bit-reproducible") {
    const SyntheticSpec s = base_spec();
    const VideoClip a = generate_video(s);
    const VideoClip b = generate_video(s);
    REQUIRE(a.frames.size() == b.frames.size());
    for (size_t i = 0; i < a.frames.size(); ++i) {
        REQUIRE(a.frames[i].px == b.frames[i].px);
        CHECK(a.gt[i].cx == b.gt[i].cx);
        CHECK(a.gt[i].w == b.gt[i].w);
    }
    SyntheticSpec s2 = s;
    s2.seed += 1;
    const VideoClip c = generate_video(s2);
    CHECK(a.frames[0].px != c.frames[0].px);
}

TEST_CASE("constant velocity moves the target linearly between bounces") {
    SyntheticSpec s = base_spec();
    s.motion = MotionModel::kConstantVelocity;
    s.distractors = 0;
    s.scale_drift = 0.0f;
    const VideoClip clip = generate_video(s);
    // Far from the walls the center displacement per frame is constant.
    const float vx = clip.gt[1].cx - clip.gt[0].cx;
    const float vy = clip.gt[1].cy - clip.gt[0].cy;
    bool near_wall = false;
    for (int t = 1; t + 1 < static_cast<int>(clip.gt.size()); ++t) {
        const Box& b = clip.gt[static_cast<size_t>(t)];
        if (b.x1() < 5.0f || b.y1() < 5.0f || b.x2() > 315.0f || b.y2() > 235.0f)
            near_wall = true;
        if (near_wall) break;
        CHECK(clip.gt[static_cast<size_t>(t + 1)].cx - b.cx == doctest::Approx(vx).epsilon(1e-3));
        CHECK(clip.gt[static_cast<size_t>(t + 1)].cy - b.cy == doctest::Approx(vy).epsilon(1e-3));
    }
}

TEST_CASE("ground truth stays inside the frame for every corpus spec") {
    for (const char* split : {"train", "val", "test"}) {
        for (int idx = 0; idx < 4; ++idx) {
            const SyntheticSpec s = corpus_spec(split, idx, 40);
            const VideoClip clip = generate_video(s);
            for (const Box& b : clip.gt) {
                CHECK(b.x1() >= 0.0f);
                CHECK(b.y1() >= 0.0f);
                CHECK(b.x2() <= static_cast<float>(s.frame_w));
                CHECK(b.y2() <= static_cast<float>(s.frame_h));
            }
        }
    }
}

TEST_CASE("corpus specs use disjoint split seeds") {
    CHECK(corpus_spec("train", 0).seed == 1000);
    CHECK(corpus_spec("val", 3).seed == 2003);
    CHECK(corpus_spec("test", 29).seed == 3029);
    CHECK_THROWS_AS(corpus_spec("bogus", 0), ConfigError);
}

TEST_CASE("groundtruth corner format parses into center boxes") {
    const fs::path dir = fs::path("test_data_seq") / "seq_000";
    fs::create_directories(dir);
    ImageU8 img(24, 32);
    write_image((dir / "00000.png").string(), img);
    write_image((dir / "00001.png").string(), img);
    {
        std::ofstream gt(dir / "groundtruth.txt");
        gt << "10,20,30,40\n";
        gt << "11.5,21.5,8,8\n";
    }
    const Sequence seq = Sequence::from_dir(dir.string());
    CHECK(seq.size() == 2);
    CHECK(seq.gt(0).cx == doctest::Approx(25.0f));
    CHECK(seq.gt(0).cy == doctest::Approx(40.0f));
    CHECK(seq.gt(0).w == doctest::Approx(30.0f));
    CHECK(seq.gt(0).h == doctest::Approx(40.0f));
    CHECK(seq.gt(1).cx == doctest::Approx(15.5f));
    CHECK(seq.frame(1).w == 32);
    fs::remove_all("test_data_seq");
}

TEST_CASE("malformed ground truth reports file and line") {
    const fs::path dir = fs::path("test_data_bad") / "seq_000";
    fs::create_directories(dir);
    write_image((dir / "00000.png").string(), ImageU8(8, 8));
    write_image((dir / "00001.png").string(), ImageU8(8, 8));
    {
        std::ofstream gt(dir / "groundtruth.txt");
        gt << "1,2,3,4\n";
        gt << "5,6,seven,8\n";
    }
    try {
        Sequence::from_dir(dir.string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("groundtruth.txt") != std::string::npos);
        CHECK(msg.find(":2") != std::string::npos);
    }
    fs::remove_all("test_data_bad");
}

TEST_CASE("frame and ground truth count mismatch is an error") {
    const fs::path dir = fs::path("test_data_mismatch") / "seq_000";
    fs::create_directories(dir);
    write_image((dir / "00000.png").string(), ImageU8(8, 8));
    {
        std::ofstream gt(dir / "groundtruth.txt");
        gt << "1,2,3,4\n";
        gt << "1,2,3,4\n";
    }
    CHECK_THROWS_AS(Sequence::from_dir(dir.string()), ParseError);
    fs::remove_all("test_data_mismatch");
}

TEST_CASE("written corpus loads back identically") {
    CorpusConfig cfg;
    cfg.out_dir = "test_data_corpus";
    cfg.train = 1;
    cfg.val = 1;
    cfg.test = 1;
    cfg.num_frames = 6;
    write_corpus(cfg);

    const Dataset train = load_dataset("test_data_corpus/train");
    REQUIRE(train.sequences.size() == 1);
    const Sequence& seq = train.sequences[0];
    CHECK(seq.name() == "seq_000");
    REQUIRE(seq.size() == 6);

    // Disk round-trip preserves rendered frames bitwise and boxes to the
    // 1e-3 precision of the ground truth file.
    const VideoClip clip = generate_video(corpus_spec("train", 0, 6));
    for (int i = 0; i < 6; ++i) {
        REQUIRE(seq.frame(i).px == clip.frames[static_cast<size_t>(i)].px);
        CHECK(seq.gt(i).cx ==
              doctest::Approx(clip.gt[static_cast<size_t>(i)].cx).epsilon(1e-3));
        CHECK(seq.gt(i).w ==
              doctest::Approx(clip.gt[static_cast<size_t>(i)].w).epsilon(1e-3));
    }
    fs::remove_all("test_data_corpus");
}

TEST_CASE("in-memory and from-dir sequences expose the same interface") {
    const VideoClip clip = generate_video(base_spec());
    const Sequence seq = Sequence::in_memory("mem", clip);
    CHECK(seq.name() == "mem");
    CHECK(seq.size() == 20);
    CHECK(seq.frame(3).px == clip.frames[3].px);
    CHECK(seq.gt(3).cx == clip.gt[3].cx);
}

TEST_CASE("load_dataset on a missing directory throws") {
    CHECK_THROWS_AS(load_dataset("definitely_not_here"), IoError);
}
