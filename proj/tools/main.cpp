#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "siamattack/attack_runtime.hpp"
#include "siamattack/attack_train.hpp"
#include "siamattack/data.hpp"
#include "siamattack/error.hpp"
#include "siamattack/evaluation.hpp"
#include "siamattack/generator.hpp"
#include "siamattack/losses.hpp"
#include "siamattack/tracker.hpp"

namespace fs = std::filesystem;
using namespace siam;

namespace {

void write_effective_config(CLI::App& app, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir + "/effective_config.ini");
    if (!out) throw IoError("cannot write effective config under " + out_dir);
    out << app.config_to_str(true, true);
}

// Index-sharded loop; fn must be safe to run concurrently for distinct i.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    const int count = std::min(workers, n);
    threads.reserve(static_cast<size_t>(count));
    for (int w = 0; w < count; ++w) {
        threads.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    }
    for (auto& t : threads) t.join();
}

TargetTrajectory parse_trajectory(const std::string& spec, const Sequence& seq) {
    const size_t colon = spec.find(':');
    if (colon == std::string::npos)
        throw ConfigError("trajectory '" + spec +
                          "': expected fixed:dx,dy | gt-offset:ox,oy | polyline:x,y;x,y;...");
    const std::string kind = spec.substr(0, colon);
    const std::string rest = spec.substr(colon + 1);
    auto parse_pair = [&](const std::string& s) {
        const size_t comma = s.find(',');
        if (comma == std::string::npos)
            throw ConfigError("trajectory '" + spec + "': expected two comma-separated numbers");
        try {
            return std::make_pair(std::stof(s.substr(0, comma)), std::stof(s.substr(comma + 1)));
        } catch (const std::exception&) {
            throw ConfigError("trajectory '" + spec + "': bad number in '" + s + "'");
        }
    };
    if (kind == "fixed") {
        auto [dx, dy] = parse_pair(rest);
        return fixed_direction_trajectory(seq, dx, dy);
    }
    if (kind == "gt-offset") {
        auto [ox, oy] = parse_pair(rest);
        return gt_offset_trajectory(seq, ox, oy);
    }
    if (kind == "polyline") {
        std::vector<std::pair<float, float>> pts;
        size_t start = 0;
        while (start <= rest.size()) {
            const size_t semi = rest.find(';', start);
            const std::string part =
                semi == std::string::npos ? rest.substr(start) : rest.substr(start, semi - start);
            if (!part.empty()) pts.push_back(parse_pair(part));
            if (semi == std::string::npos) break;
            start = semi + 1;
        }
        return polyline_trajectory(seq, pts);
    }
    throw ConfigError("trajectory '" + spec + "': unknown kind '" + kind + "'");
}

struct GenDataArgs {
    std::string out;
    int train = 200, val = 20, test = 30, frames = 120;
};

struct TrainTrackerArgs {
    std::string data, out;
    TrackerTrainConfig train;
};

struct TrainAttackArgs {
    std::string data, tracker, out;
    std::string mode = "untargeted";
    AttackTrainConfig cfg;
};

struct AttackArgs {
    std::string data, tracker, generator, out;
    std::string mode = "one-shot";
    std::string trajectory = "fixed:3,3";
    bool restarts = false;
    int skip = 5;
    int directions = 12;
    int shift_d = 4;
    float box_side = 64.0f;
    int workers = 1;
};

struct EvalArgs {
    std::string runs, out;
};

struct AblateArgs {
    std::string data, tracker, out;
    std::string mode = "toggles";
    int epochs = 2;
    float epsilon = 16.0f;
    uint64_t seed = 7;
    int max_eval_seqs = 0;  // 0 = all
    int workers = 1;
};

int cmd_gen_data(const GenDataArgs& a) {
    CorpusConfig cfg;
    cfg.out_dir = a.out;
    cfg.train = a.train;
    cfg.val = a.val;
    cfg.test = a.test;
    cfg.num_frames = a.frames;
    write_corpus(cfg);
    std::printf("corpus written to %s (%d train / %d val / %d test, %d frames)\n",
                a.out.c_str(), a.train, a.val, a.test, a.frames);
    return 0;
}

int cmd_train_tracker(const TrainTrackerArgs& a) {
    const std::string train_dir = a.data + "/train";
    if (!fs::is_directory(train_dir))
        throw IoError(train_dir + " not found; run `siamattack gen-data` first");
    Dataset data = load_dataset(train_dir);
    fs::create_directories(a.out);
    TrackerTrainConfig tcfg = a.train;
    if (tcfg.log_path.empty()) tcfg.log_path = a.out + "/train_log.csv";
    TrackerNet net = train_tracker(data, tcfg);
    net.save(a.out + "/tracker.ckpt");
    std::printf("tracker saved to %s/tracker.ckpt\n", a.out.c_str());
    return 0;
}

int cmd_train_attack(const TrainAttackArgs& a) {
    const std::string train_dir = a.data + "/train";
    if (!fs::is_directory(train_dir))
        throw IoError(train_dir + " not found; run `siamattack gen-data` first");
    if (!fs::exists(a.tracker))
        throw IoError(a.tracker + " not found; run `siamattack train-tracker` first");
    Dataset data = load_dataset(train_dir);
    TrackerNet net = TrackerNet::load(a.tracker);
    fs::create_directories(a.out);

    AttackTrainConfig cfg = a.cfg;
    cfg.targeted = a.mode == "targeted";
    if (cfg.log_path.empty()) cfg.log_path = a.out + "/attack_log.csv";
    GeneratorConfig gcfg;
    gcfg.conditional = cfg.targeted;
    gcfg.epsilon = cfg.epsilon;
    GeneratorNet gen = train_generator(net, data, gcfg, cfg);
    gen.save(a.out + "/generator.ckpt");
    std::printf("generator saved to %s/generator.ckpt\n", a.out.c_str());
    return 0;
}

int cmd_attack(const AttackArgs& a) {
    if (!fs::is_directory(a.data))
        throw IoError(a.data + " not found; run `siamattack gen-data` first");
    if (!fs::exists(a.tracker))
        throw IoError(a.tracker + " not found; run `siamattack train-tracker` first");
    const bool needs_gen = a.mode != "clean";
    if (needs_gen && !fs::exists(a.generator))
        throw IoError(a.generator + " not found; run `siamattack train-attack` first");

    Dataset data = load_dataset(a.data);
    if (data.sequences.empty()) throw IoError("no sequences under " + a.data);
    TrackerNet net = TrackerNet::load(a.tracker);
    std::unique_ptr<GeneratorNet> gen;
    if (needs_gen) gen = std::make_unique<GeneratorNet>(GeneratorNet::load(a.generator));
    fs::create_directories(a.out);

    RunOptions opts;
    opts.restart_protocol = a.restarts;
    opts.skip_after_failure = a.skip;

    const int n = static_cast<int>(data.sequences.size());
    std::vector<AttackRun> runs(static_cast<size_t>(n));
    parallel_for(n, a.workers, [&](int i) {
        const Sequence& seq = data.sequences[static_cast<size_t>(i)];
        AttackRun run;
        if (a.mode == "clean") {
            run = clean_baseline(net, seq, opts);
        } else if (a.mode == "one-shot") {
            run = one_shot_attack(net, *gen, seq, opts);
        } else if (a.mode == "per-frame-baseline") {
            run = per_frame_baseline_attack(net, *gen, seq, opts);
        } else if (a.mode == "targeted") {
            const TargetTrajectory traj = parse_trajectory(a.trajectory, seq);
            run = targeted_attack(net, *gen, seq, traj, a.directions, a.shift_d, a.box_side,
                                  opts);
        } else {
            throw ConfigError("attack: unknown mode '" + a.mode + "'");
        }
        runs[static_cast<size_t>(i)] = std::move(run);
    });

    for (const AttackRun& run : runs)
        save_attack_run(a.out + "/run_" + run.sequence + ".csv", run);
    std::printf("%d runs written to %s\n", n, a.out.c_str());
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    if (!fs::is_directory(a.runs))
        throw IoError(a.runs + " not found; run `siamattack attack` first");
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(a.runs))
        if (e.is_regular_file() && e.path().extension() == ".csv" &&
            e.path().filename().string().rfind("run_", 0) == 0)
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw IoError("no run files under " + a.runs + "; run `siamattack attack` first");

    std::vector<SequenceResult> results;
    results.reserve(files.size());
    for (const std::string& f : files) results.push_back(summarize(load_attack_run(f)));
    emit_report(results, a.out);
    std::printf("report written to %s\n", a.out.c_str());
    return 0;
}

// Small train+eval sweeps for the loss-term table and the displacement sweep.
int cmd_ablate(const AblateArgs& a) {
    const std::string train_dir = a.data + "/train";
    const std::string test_dir = a.data + "/test";
    if (!fs::is_directory(train_dir) || !fs::is_directory(test_dir))
        throw IoError(a.data + " lacks train/ or test/; run `siamattack gen-data` first");
    if (!fs::exists(a.tracker))
        throw IoError(a.tracker + " not found; run `siamattack train-tracker` first");

    Dataset train_data = load_dataset(train_dir);
    Dataset test_data = load_dataset(test_dir);
    if (a.max_eval_seqs > 0 &&
        static_cast<int>(test_data.sequences.size()) > a.max_eval_seqs)
        test_data.sequences.resize(static_cast<size_t>(a.max_eval_seqs));
    TrackerNet net = TrackerNet::load(a.tracker);
    fs::create_directories(a.out);

    struct Variant {
        std::string label;
        AttackTrainConfig cfg;
    };
    std::vector<Variant> variants;
    AttackTrainConfig base;
    base.epochs = a.epochs;
    base.epsilon = a.epsilon;
    base.seed = a.seed;

    if (a.mode == "toggles") {
        Variant full{"full", base};
        Variant fool_only{"fool-only", base};
        fool_only.cfg.loss.shift_cls = false;
        fool_only.cfg.loss.shift_reg = false;
        Variant shift_only{"shift-only", base};
        shift_only.cfg.loss.fool_cls = false;
        shift_only.cfg.loss.fool_reg = false;
        variants = {full, fool_only, shift_only};
    } else if (a.mode == "d-sweep") {
        for (int d : {2, 4, 6, 8, 10}) {
            Variant v{"d=" + std::to_string(d), base};
            v.cfg.loss.shift_d = d;
            variants.push_back(v);
        }
    } else {
        throw ConfigError("ablate: unknown mode '" + a.mode + "' (toggles|d-sweep)");
    }

    std::ofstream table(a.out + "/ablation.csv");
    if (!table) throw IoError("cannot write " + a.out + "/ablation.csv");
    table << "variant,precision20,success_auc,mean_iou,restarts\n";
    for (const Variant& v : variants) {
        GeneratorConfig gcfg;
        gcfg.epsilon = v.cfg.epsilon;
        GeneratorNet gen = train_generator(net, train_data, gcfg, v.cfg);

        const int n = static_cast<int>(test_data.sequences.size());
        std::vector<SequenceResult> results(static_cast<size_t>(n));
        RunOptions opts;
        opts.restart_protocol = true;
        parallel_for(n, a.workers, [&](int i) {
            results[static_cast<size_t>(i)] = summarize(
                one_shot_attack(net, gen, test_data.sequences[static_cast<size_t>(i)], opts));
        });
        const AggregateMetrics m = aggregate(results);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%d\n", v.label.c_str(),
                      static_cast<double>(m.precision20), static_cast<double>(m.success_auc),
                      static_cast<double>(m.mean_iou), m.restarts);
        table << buf;
        std::printf("ablate %s: precision20=%.3f auc=%.3f restarts=%d\n", v.label.c_str(),
                    static_cast<double>(m.precision20), static_cast<double>(m.success_auc),
                    m.restarts);
    }
    std::printf("ablation table written to %s/ablation.csv\n", a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"siamese tracker perturbation toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file; sections name subcommands");
    app.allow_config_extras(CLI::config_extras_mode::error);

    GenDataArgs gd;
    auto* gen_data = app.add_subcommand("gen-data", "render the synthetic corpus");
    gen_data->add_option("--out", gd.out, "corpus root")->required()->envname("SIAMATTACK_OUT");
    gen_data->add_option("--train", gd.train, "training sequences");
    gen_data->add_option("--val", gd.val, "validation sequences");
    gen_data->add_option("--test", gd.test, "test sequences");
    gen_data->add_option("--frames", gd.frames, "frames per sequence");

    TrainTrackerArgs tt;
    auto* train_tracker_cmd = app.add_subcommand("train-tracker", "train the tracker");
    train_tracker_cmd->add_option("--data", tt.data, "corpus root")->required();
    train_tracker_cmd->add_option("--out", tt.out, "output dir")
        ->required()
        ->envname("SIAMATTACK_OUT");
    train_tracker_cmd->add_option("--epochs", tt.train.epochs, "epochs");
    train_tracker_cmd->add_option("--pairs", tt.train.pairs_per_epoch, "pairs per epoch");
    train_tracker_cmd->add_option("--lr", tt.train.lr, "learning rate");
    train_tracker_cmd->add_option("--reg-weight", tt.train.reg_weight, "regression weight");
    train_tracker_cmd->add_option("--seed", tt.train.seed, "rng seed");

    TrainAttackArgs ta;
    auto* train_attack_cmd =
        app.add_subcommand("train-attack", "train a perturbation generator");
    train_attack_cmd->add_option("--data", ta.data, "corpus root")->required();
    train_attack_cmd->add_option("--tracker", ta.tracker, "tracker checkpoint")->required();
    train_attack_cmd->add_option("--out", ta.out, "output dir")
        ->required()
        ->envname("SIAMATTACK_OUT");
    train_attack_cmd->add_option("--mode", ta.mode, "untargeted|targeted")
        ->check(CLI::IsMember({"untargeted", "targeted"}));
    train_attack_cmd->add_option("--epsilon", ta.cfg.epsilon, "pixel budget (0-255 scale)");
    train_attack_cmd->add_option("--epochs", ta.cfg.epochs, "epochs");
    train_attack_cmd->add_option("--lr", ta.cfg.lr, "learning rate");
    train_attack_cmd->add_option("--stride", ta.cfg.frame_stride, "search frame stride");
    train_attack_cmd->add_option("--searches", ta.cfg.searches_per_template,
                                 "search crops per template");
    train_attack_cmd->add_option("--seed", ta.cfg.seed, "rng seed");
    train_attack_cmd->add_option("--directions", ta.cfg.num_directions,
                                 "direction bank size (targeted)");
    train_attack_cmd->add_option("--shift-d", ta.cfg.loss.shift_d,
                                 "target displacement in cells");
    train_attack_cmd->add_option("--box-side", ta.cfg.loss.target_box_side,
                                 "target box side (px)");
    train_attack_cmd->add_option("--tau", ta.cfg.loss.tau, "clean selection threshold");
    train_attack_cmd->add_flag("--fool-cls,!--no-fool-cls", ta.cfg.loss.fool_cls,
                               "fooling classification term");
    train_attack_cmd->add_flag("--fool-reg,!--no-fool-reg", ta.cfg.loss.fool_reg,
                               "fooling size term");
    train_attack_cmd->add_flag("--shift-cls,!--no-shift-cls", ta.cfg.loss.shift_cls,
                               "shift classification term");
    train_attack_cmd->add_flag("--shift-reg,!--no-shift-reg", ta.cfg.loss.shift_reg,
                               "shift regression term");

    AttackArgs at;
    auto* attack_cmd = app.add_subcommand("attack", "run the tracker under attack");
    attack_cmd->add_option("--data", at.data, "split dir (e.g. corpus/test)")->required();
    attack_cmd->add_option("--tracker", at.tracker, "tracker checkpoint")->required();
    attack_cmd->add_option("--generator", at.generator,
                           "generator checkpoint (all modes except clean)");
    attack_cmd->add_option("--out", at.out, "run output dir")
        ->required()
        ->envname("SIAMATTACK_OUT");
    attack_cmd->add_option("--mode", at.mode, "clean|one-shot|targeted|per-frame-baseline")
        ->check(CLI::IsMember({"clean", "one-shot", "targeted", "per-frame-baseline"}));
    attack_cmd->add_option("--trajectory", at.trajectory,
                           "fixed:dx,dy | gt-offset:ox,oy | polyline:x,y;x,y;...");
    attack_cmd->add_flag("--restarts", at.restarts, "restart protocol");
    attack_cmd->add_option("--skip", at.skip, "frames skipped after a failure");
    attack_cmd->add_option("--directions", at.directions, "bank size (targeted)");
    attack_cmd->add_option("--shift-d", at.shift_d, "bank displacement in cells");
    attack_cmd->add_option("--box-side", at.box_side, "bank target box side");
    attack_cmd->add_option("--workers", at.workers, "parallel sequences")
        ->check(CLI::PositiveNumber);

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "summarize runs into a report");
    eval_cmd->add_option("--runs", ev.runs, "dir of run_*.csv files")->required();
    eval_cmd->add_option("--out", ev.out, "report dir")->required()->envname("SIAMATTACK_OUT");

    AblateArgs ab;
    auto* ablate_cmd = app.add_subcommand("ablate", "loss-term and displacement sweeps");
    ablate_cmd->add_option("--data", ab.data, "corpus root")->required();
    ablate_cmd->add_option("--tracker", ab.tracker, "tracker checkpoint")->required();
    ablate_cmd->add_option("--out", ab.out, "output dir")
        ->required()
        ->envname("SIAMATTACK_OUT");
    ablate_cmd->add_option("--mode", ab.mode, "toggles|d-sweep")
        ->check(CLI::IsMember({"toggles", "d-sweep"}));
    ablate_cmd->add_option("--epochs", ab.epochs, "train epochs per variant");
    ablate_cmd->add_option("--epsilon", ab.epsilon, "pixel budget");
    ablate_cmd->add_option("--seed", ab.seed, "rng seed");
    ablate_cmd->add_option("--max-eval-seqs", ab.max_eval_seqs,
                           "cap test sequences (0 = all)");
    ablate_cmd->add_option("--workers", ab.workers, "parallel sequences")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen_data->parsed()) {
            write_effective_config(app, gd.out);
            return cmd_gen_data(gd);
        }
        if (train_tracker_cmd->parsed()) {
            write_effective_config(app, tt.out);
            return cmd_train_tracker(tt);
        }
        if (train_attack_cmd->parsed()) {
            write_effective_config(app, ta.out);
            return cmd_train_attack(ta);
        }
        if (attack_cmd->parsed()) {
            write_effective_config(app, at.out);
            return cmd_attack(at);
        }
        if (eval_cmd->parsed()) {
            write_effective_config(app, ev.out);
            return cmd_eval(ev);
        }
        if (ablate_cmd->parsed()) {
            write_effective_config(app, ab.out);
            return cmd_ablate(ab);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
