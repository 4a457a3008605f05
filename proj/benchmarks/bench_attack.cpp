// Microbenchmarks for the pieces that dominate attack cost: one generator
// call, the additive apply, a tracker step, and bank construction. The
// one-shot story is cost accounting, so these numbers back the cost report.

#include <benchmark/benchmark.h>

#include "siamattack/attack_runtime.hpp"
#include "siamattack/data.hpp"
#include "siamattack/generator.hpp"
#include "siamattack/geometry.hpp"
#include "siamattack/image.hpp"
#include "siamattack/tracker.hpp"

using namespace siam;

namespace {

Tensor random_template(uint64_t seed) {
    Rng rng(seed, 0);
    return Tensor::uniform({3, 127, 127}, 0.0f, 1.0f, rng);
}

VideoClip small_clip(int frames) {
    SyntheticSpec spec;
    spec.num_frames = frames;
    spec.seed = 77;
    return generate_video(spec);
}

}  // namespace

static void BM_generator_forward(benchmark::State& state) {
    Rng rng(1, 0);
    const GeneratorNet gen(GeneratorConfig{}, rng);
    const Tensor z = random_template(2);
    for (auto _ : state) {
        Perturbation p = generate(gen, z);
        benchmark::DoNotOptimize(p.delta.data());
    }
}
BENCHMARK(BM_generator_forward)->Unit(benchmark::kMillisecond);

static void BM_apply_perturbation(benchmark::State& state) {
    Rng rng(3, 0);
    const Tensor search = Tensor::uniform({3, 255, 255}, 0.0f, 1.0f, rng);
    Perturbation p;
    p.delta = Tensor::uniform({3, 255, 255}, -0.1f, 0.1f, rng);
    p.epsilon = 16.0f;
    for (auto _ : state) {
        Tensor adv = apply(search, p);
        benchmark::DoNotOptimize(adv.data());
    }
}
BENCHMARK(BM_apply_perturbation)->Unit(benchmark::kMicrosecond);

static void BM_tracker_forward(benchmark::State& state) {
    Rng rng(4, 0);
    const TrackerNet net(TrackerConfig{}, rng);
    const TemplateEmbed emb = net.embed_template_value(random_template(5));
    Rng srng(6, 0);
    const Tensor search = Tensor::uniform({3, 255, 255}, 0.0f, 1.0f, srng);
    for (auto _ : state) {
        ScoreMaps maps = net.forward_value(emb, search);
        benchmark::DoNotOptimize(maps.cls.data());
    }
}
BENCHMARK(BM_tracker_forward)->Unit(benchmark::kMillisecond);

static void BM_track_step(benchmark::State& state) {
    Rng rng(7, 0);
    const TrackerNet net(TrackerConfig{}, rng);
    const VideoClip clip = small_clip(2);
    TrackerState st = track_init(net, clip.frames[0], clip.gt[0]);
    for (auto _ : state) {
        TrackerState local = st;
        StepResult r = track_step(net, local, clip.frames[1]);
        benchmark::DoNotOptimize(r.conf);
    }
}
BENCHMARK(BM_track_step)->Unit(benchmark::kMillisecond);

static void BM_build_bank(benchmark::State& state) {
    Rng rng(8, 0);
    GeneratorConfig gcfg;
    gcfg.conditional = true;
    const GeneratorNet gen(gcfg, rng);
    const Tensor z = random_template(9);
    const TrackerConfig tcfg;
    const AnchorGrid grid = make_anchor_grid(tcfg.score_size, tcfg.stride, tcfg.ratios,
                                             tcfg.base_scale, 127.0f);
    const int K = static_cast<int>(state.range(0));
    for (auto _ : state) {
        PerturbationBank bank = build_bank(gen, z, K, 4, 64.0f, grid);
        benchmark::DoNotOptimize(bank.perturbations.data());
    }
}
BENCHMARK(BM_build_bank)->Arg(4)->Arg(12)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
