#include "siamattack/attack_runtime.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "siamattack/error.hpp"

namespace siam {

PerturbationBank build_bank(const GeneratorNet& gen, const Tensor& template_chw, int K, int d,
                            float box_side, const AnchorGrid& grid) {
    if (!gen.conditional())
        throw ConditioningError("direction banks need a conditional generator");
    if (K < 1) throw ConfigError("bank: need at least one direction");
    PerturbationBank bank;
    bank.num_directions = K;
    bank.displacement = d;
    bank.box_side = box_side;
    bank.epsilon = gen.cfg().epsilon;
    bank.template_hash = fnv1a64(template_chw.data(),
                                 static_cast<size_t>(template_chw.numel()) * sizeof(float));
    bank.perturbations.reserve(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        const ConditionMask mask = make_direction_mask(k, K, d, box_side, grid);
        bank.perturbations.push_back(generate(gen, template_chw, &mask));
    }
    return bank;
}

namespace {

std::pair<float, float> frame_clamp(float x, float y, int w, int h, float margin) {
    const float lx = std::min(margin, (static_cast<float>(w) - 1.0f) / 2.0f);
    const float ly = std::min(margin, (static_cast<float>(h) - 1.0f) / 2.0f);
    return {std::clamp(x, lx, static_cast<float>(w) - 1.0f - lx),
            std::clamp(y, ly, static_cast<float>(h) - 1.0f - ly)};
}

}  // namespace

TargetTrajectory fixed_direction_trajectory(const Sequence& seq, float dx, float dy,
                                            float margin) {
    if (seq.size() == 0) throw ConfigError("trajectory: empty sequence");
    const ImageU8 f0 = seq.frame(0);
    const Box& g0 = seq.gt(0);
    TargetTrajectory t;
    for (int i = 0; i < seq.size(); ++i) {
        auto [x, y] = frame_clamp(g0.cx + dx * static_cast<float>(i),
                                  g0.cy + dy * static_cast<float>(i), f0.w, f0.h, margin);
        t.cx.push_back(x);
        t.cy.push_back(y);
    }
    return t;
}

TargetTrajectory gt_offset_trajectory(const Sequence& seq, float ox, float oy, float margin) {
    if (seq.size() == 0) throw ConfigError("trajectory: empty sequence");
    const ImageU8 f0 = seq.frame(0);
    TargetTrajectory t;
    for (int i = 0; i < seq.size(); ++i) {
        auto [x, y] = frame_clamp(seq.gt(i).cx + ox, seq.gt(i).cy + oy, f0.w, f0.h, margin);
        t.cx.push_back(x);
        t.cy.push_back(y);
    }
    return t;
}

TargetTrajectory polyline_trajectory(const Sequence& seq,
                                     const std::vector<std::pair<float, float>>& waypoints,
                                     float margin) {
    if (seq.size() == 0) throw ConfigError("trajectory: empty sequence");
    if (waypoints.size() < 2) throw ConfigError("trajectory: need at least two waypoints");
    const ImageU8 f0 = seq.frame(0);
    const int T = seq.size();
    const int segs = static_cast<int>(waypoints.size()) - 1;
    TargetTrajectory t;
    for (int i = 0; i < T; ++i) {
        const float u = T > 1 ? static_cast<float>(i) / static_cast<float>(T - 1) : 0.0f;
        const float su = u * static_cast<float>(segs);
        const int s = std::min(static_cast<int>(su), segs - 1);
        const float a = su - static_cast<float>(s);
        const float x = waypoints[s].first + a * (waypoints[s + 1].first - waypoints[s].first);
        const float y =
            waypoints[s].second + a * (waypoints[s + 1].second - waypoints[s].second);
        auto [cx, cy] = frame_clamp(x, y, f0.w, f0.h, margin);
        t.cx.push_back(cx);
        t.cy.push_back(cy);
    }
    return t;
}

void OneShotPolicy::prepare(const TrackerNet&, const Sequence& seq) {
    const Box& g0 = seq.gt(0);
    const Tensor chw = to_chw(seq.frame(0));
    const Tensor crop =
        crop_region(chw, g0.cx, g0.cy, context_side(g0), gen_.cfg().in_size);
    pert_ = generate(gen_, crop, nullptr);
}

const Perturbation* OneShotPolicy::select(int, const TrackerState&, const ImageU8&) {
    return &pert_;
}

TrajectoryPolicy::TrajectoryPolicy(const GeneratorNet& gen, const TargetTrajectory& traj,
                                   int K, int d, float box_side)
    : gen_(&gen), traj_(traj), want_k_(K), want_d_(d), want_side_(box_side) {}

TrajectoryPolicy::TrajectoryPolicy(const PerturbationBank& bank, const TargetTrajectory& traj)
    : traj_(traj), bank_(bank) {
    if (bank_.perturbations.empty()) throw ConfigError("trajectory policy: empty bank");
}

void TrajectoryPolicy::prepare(const TrackerNet& net, const Sequence& seq) {
    prev_ = 0;
    if (!gen_) return;  // prebuilt bank
    const Box& g0 = seq.gt(0);
    const Tensor chw = to_chw(seq.frame(0));
    const Tensor crop =
        crop_region(chw, g0.cx, g0.cy, context_side(g0), gen_->cfg().in_size);
    const TrackerConfig& t = net.cfg();
    const AnchorGrid grid =
        make_anchor_grid(t.score_size, t.stride, t.ratios, t.base_scale,
                         static_cast<float>(t.search_size - 1) / 2.0f);
    bank_ = build_bank(*gen_, crop, want_k_, want_d_, want_side_, grid);
}

const Perturbation* TrajectoryPolicy::select(int frame, const TrackerState& state,
                                             const ImageU8&) {
    const int K = bank_.size();
    const double dx = static_cast<double>(traj_.cx[static_cast<size_t>(frame)]) - state.cx;
    const double dy = static_cast<double>(traj_.cy[static_cast<size_t>(frame)]) - state.cy;
    int idx = prev_;
    if (dx * dx + dy * dy >= 1e-12) {
        const double theta = std::atan2(dy, dx);
        const double two_pi = 6.283185307179586;
        double best = -1.0;
        idx = -1;
        for (int k = 0; k < K; ++k) {
            const double bin = two_pi * static_cast<double>(k) / static_cast<double>(K);
            const double dist = std::abs(std::remainder(theta - bin, two_pi));
            if (idx < 0 || dist < best) {
                best = dist;
                idx = k;
            } else if (dist == best && k == prev_) {
                idx = k;  // exact tie keeps the previous direction
            }
        }
    }
    prev_ = idx;
    return &bank_.perturbations[static_cast<size_t>(idx)];
}

void PerFramePolicy::prepare(const TrackerNet&, const Sequence&) {}

const Perturbation* PerFramePolicy::select(int, const TrackerState& state,
                                           const ImageU8& image) {
    const Tensor chw = to_chw(image);
    const Box cur(state.cx, state.cy, state.w, state.h);
    const Tensor crop = crop_region(chw, state.cx, state.cy, 2.0f * context_side(cur),
                                    gen_.cfg().in_size);
    pert_ = generate(gen_, crop, nullptr);
    return &pert_;
}

AttackRun run_sequence(const TrackerNet& net, const Sequence& seq, AttackPolicy* attack,
                       const TargetTrajectory* traj, const RunOptions& opts) {
    if (seq.size() < 1) throw ConfigError("run: empty sequence");
    if (traj && traj->size() < seq.size())
        throw ConfigError("run: trajectory shorter than sequence");
    if (opts.restart_protocol && opts.skip_after_failure < 1)
        throw ConfigError("run: skip_after_failure must be >= 1");

    AttackRun run;
    run.sequence = seq.name();
    run.mode = attack ? attack->mode() : "clean";
    run.has_target = traj != nullptr;

    const uint64_t calls_before = generator_call_count();
    if (attack) {
        attack->prepare(net, seq);
        run.epsilon = attack->epsilon();
        run.bank_size = attack->bank_size();
    }

    TrackerState state = track_init(net, seq.frame(0), seq.gt(0));
    auto record_non_tracked = [&](int i, int status) {
        FrameRecord rec;
        rec.frame = i;
        rec.status = status;
        rec.gt = seq.gt(i);
        rec.pred = rec.gt;
        rec.conf = status == 1 ? 1.0f : 0.0f;
        if (traj) {
            rec.tx = traj->cx[static_cast<size_t>(i)];
            rec.ty = traj->cy[static_cast<size_t>(i)];
        }
        run.frames.push_back(rec);
    };
    record_non_tracked(0, 1);

    int reinit_at = -1;
    for (int i = 1; i < seq.size(); ++i) {
        if (reinit_at >= 0 && i < reinit_at) {
            record_non_tracked(i, 2);
            continue;
        }
        if (reinit_at == i) {
            state = track_init(net, seq.frame(i), seq.gt(i));
            record_non_tracked(i, 1);
            reinit_at = -1;
            continue;
        }

        const ImageU8 image = seq.frame(i);
        const auto t0 = std::chrono::steady_clock::now();
        const Perturbation* p = attack ? attack->select(i, state, image) : nullptr;
        const StepResult sr = track_step(net, state, image, p);
        const auto t1 = std::chrono::steady_clock::now();

        FrameRecord rec;
        rec.frame = i;
        rec.status = 0;
        rec.pred = sr.box;
        rec.gt = seq.gt(i);
        rec.conf = sr.conf;
        rec.dir = attack ? attack->last_direction() : -1;
        rec.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (traj) {
            rec.tx = traj->cx[static_cast<size_t>(i)];
            rec.ty = traj->cy[static_cast<size_t>(i)];
        }
        run.frames.push_back(rec);

        if (opts.restart_protocol && iou(sr.box, rec.gt) == 0.0f) {
            run.restarts += 1;
            reinit_at = i + opts.skip_after_failure;
        }
    }
    run.gen_calls = generator_call_count() - calls_before;
    return run;
}

AttackRun clean_baseline(const TrackerNet& net, const Sequence& seq, const RunOptions& opts) {
    return run_sequence(net, seq, nullptr, nullptr, opts);
}

AttackRun one_shot_attack(const TrackerNet& net, const GeneratorNet& gen, const Sequence& seq,
                          const RunOptions& opts) {
    OneShotPolicy policy(gen);
    return run_sequence(net, seq, &policy, nullptr, opts);
}

AttackRun per_frame_baseline_attack(const TrackerNet& net, const GeneratorNet& gen,
                                    const Sequence& seq, const RunOptions& opts) {
    PerFramePolicy policy(gen);
    return run_sequence(net, seq, &policy, nullptr, opts);
}

AttackRun follow_trajectory(const TrackerNet& net, const PerturbationBank& bank,
                            const Sequence& seq, const TargetTrajectory& traj,
                            const RunOptions& opts) {
    TrajectoryPolicy policy(bank, traj);
    return run_sequence(net, seq, &policy, &traj, opts);
}

AttackRun targeted_attack(const TrackerNet& net, const GeneratorNet& gen, const Sequence& seq,
                          const TargetTrajectory& traj, int K, int d, float box_side,
                          const RunOptions& opts) {
    TrajectoryPolicy policy(gen, traj, K, d, box_side);
    return run_sequence(net, seq, &policy, &traj, opts);
}

void save_attack_run(const std::string& path, const AttackRun& run) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "# sequence=%s\n# mode=%s\n# epsilon=%.6f\n# bank_size=%d\n"
                  "# gen_calls=%llu\n# restarts=%d\n# has_target=%d\n",
                  run.sequence.c_str(), run.mode.c_str(), static_cast<double>(run.epsilon),
                  run.bank_size, static_cast<unsigned long long>(run.gen_calls), run.restarts,
                  run.has_target ? 1 : 0);
    out << buf;
    out << "frame,status,pred_cx,pred_cy,pred_w,pred_h,gt_cx,gt_cy,gt_w,gt_h,"
           "tx,ty,conf,dir,ms\n";
    for (const FrameRecord& r : run.frames) {
        std::snprintf(buf, sizeof(buf),
                      "%d,%d,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.6f,%d,%.3f\n",
                      r.frame, r.status, static_cast<double>(r.pred.cx),
                      static_cast<double>(r.pred.cy), static_cast<double>(r.pred.w),
                      static_cast<double>(r.pred.h), static_cast<double>(r.gt.cx),
                      static_cast<double>(r.gt.cy), static_cast<double>(r.gt.w),
                      static_cast<double>(r.gt.h), static_cast<double>(r.tx),
                      static_cast<double>(r.ty), static_cast<double>(r.conf), r.dir, r.ms);
        out << buf;
    }
    if (!out) throw IoError("write failed for " + path);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

float parse_float_at(const std::string& s, const std::string& path, int lineno) {
    float v = 0.0f;
    const auto* b = s.data();
    const auto res = std::from_chars(b, b + s.size(), v);
    if (res.ec != std::errc() || res.ptr != b + s.size())
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
    return v;
}

int parse_int_at(const std::string& s, const std::string& path, int lineno) {
    int v = 0;
    const auto* b = s.data();
    const auto res = std::from_chars(b, b + s.size(), v);
    if (res.ec != std::errc() || res.ptr != b + s.size())
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad integer '" + s + "'");
    return v;
}

}  // namespace

AttackRun load_attack_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    AttackRun run;
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad metadata line");
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            key.erase(key.find_last_not_of(' ') + 1);
            const std::string val = line.substr(eq + 1);
            if (key == "sequence") run.sequence = val;
            else if (key == "mode") run.mode = val;
            else if (key == "epsilon") run.epsilon = parse_float_at(val, path, lineno);
            else if (key == "bank_size") run.bank_size = parse_int_at(val, path, lineno);
            else if (key == "gen_calls")
                run.gen_calls = static_cast<uint64_t>(
                    std::strtoull(val.c_str(), nullptr, 10));
            else if (key == "restarts") run.restarts = parse_int_at(val, path, lineno);
            else if (key == "has_target")
                run.has_target = parse_int_at(val, path, lineno) != 0;
            else
                throw ParseError(path + ":" + std::to_string(lineno) + ": unknown key '" +
                                 key + "'");
            continue;
        }
        if (!header_seen) {  // column header row
            header_seen = true;
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 15)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 15 fields, got " +
                             std::to_string(f.size()));
        FrameRecord r;
        r.frame = parse_int_at(f[0], path, lineno);
        r.status = parse_int_at(f[1], path, lineno);
        r.pred = Box(parse_float_at(f[2], path, lineno), parse_float_at(f[3], path, lineno),
                     parse_float_at(f[4], path, lineno), parse_float_at(f[5], path, lineno));
        r.gt = Box(parse_float_at(f[6], path, lineno), parse_float_at(f[7], path, lineno),
                   parse_float_at(f[8], path, lineno), parse_float_at(f[9], path, lineno));
        r.tx = parse_float_at(f[10], path, lineno);
        r.ty = parse_float_at(f[11], path, lineno);
        r.conf = parse_float_at(f[12], path, lineno);
        r.dir = parse_int_at(f[13], path, lineno);
        r.ms = parse_float_at(f[14], path, lineno);
        run.frames.push_back(r);
    }
    if (!header_seen) throw ParseError(path + ": missing header row");
    return run;
}

}  // namespace siam
