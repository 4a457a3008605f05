#include "siamattack/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "siamattack/error.hpp"
#include "siamattack/report.hpp"

namespace siam {

float precision_at(const std::vector<float>& center_errors, float threshold_px) {
    if (center_errors.empty()) {
        std::fprintf(stderr, "precision_at: no tracked frames, returning 0\n");
        return 0.0f;
    }
    int64_t hits = 0;
    for (float e : center_errors)
        if (e <= threshold_px) ++hits;
    return static_cast<float>(hits) / static_cast<float>(center_errors.size());
}

SuccessCurve success_curve(const std::vector<float>& overlaps) {
    SuccessCurve c;
    double sum = 0.0;
    for (int i = 0; i <= 20; ++i) {
        const float t = static_cast<float>(i) / 20.0f;
        c.thresholds.push_back(t);
        float v = 0.0f;
        if (!overlaps.empty()) {
            int64_t hits = 0;
            for (float o : overlaps)
                if (o > t) ++hits;
            v = static_cast<float>(hits) / static_cast<float>(overlaps.size());
        }
        c.values.push_back(v);
        sum += v;
    }
    c.auc = static_cast<float>(sum / 21.0);
    return c;
}

SequenceResult summarize(const AttackRun& run) {
    SequenceResult r;
    r.sequence = run.sequence;
    r.mode = run.mode;
    r.epsilon = run.epsilon;
    r.gen_calls = run.gen_calls;
    r.restarts = run.restarts;
    r.total_frames = static_cast<int>(run.frames.size());
    r.has_target = run.has_target;
    for (const FrameRecord& f : run.frames) {
        if (f.status != 0) continue;
        ++r.tracked_frames;
        r.overlaps.push_back(iou(f.pred, f.gt));
        r.center_errors.push_back(
            std::hypot(f.pred.cx - f.gt.cx, f.pred.cy - f.gt.cy));
        if (run.has_target)
            r.target_errors.push_back(std::hypot(f.pred.cx - f.tx, f.pred.cy - f.ty));
        r.total_ms += f.ms;
    }
    return r;
}

float targeted_precision(const SequenceResult& r, float threshold_px) {
    if (!r.has_target) throw ConfigError("targeted_precision: run has no target trajectory");
    return precision_at(r.target_errors, threshold_px);
}

AttackRun run_with_restarts(const TrackerNet& net, const Sequence& seq, AttackPolicy* attack,
                            int skip_after_failure) {
    RunOptions opts;
    opts.restart_protocol = true;
    opts.skip_after_failure = skip_after_failure;
    return run_sequence(net, seq, attack, nullptr, opts);
}

namespace {

struct Pooled {
    std::vector<const SequenceResult*> rs;
    std::vector<float> overlaps, center_errors, target_errors;
    int tracked = 0, restarts = 0;
    double gen_calls = 0.0, ms = 0.0;
    bool has_target = false;
};

std::map<std::string, Pooled> pool_by_mode(const std::vector<SequenceResult>& results) {
    std::map<std::string, Pooled> pools;
    for (const auto& r : results) {
        Pooled& p = pools[r.mode];
        p.rs.push_back(&r);
        p.overlaps.insert(p.overlaps.end(), r.overlaps.begin(), r.overlaps.end());
        p.center_errors.insert(p.center_errors.end(), r.center_errors.begin(),
                               r.center_errors.end());
        p.target_errors.insert(p.target_errors.end(), r.target_errors.begin(),
                               r.target_errors.end());
        p.tracked += r.tracked_frames;
        p.restarts += r.restarts;
        p.gen_calls += static_cast<double>(r.gen_calls);
        p.ms += r.total_ms;
        p.has_target = p.has_target || r.has_target;
    }
    return pools;
}

AggregateMetrics aggregate_pool(const std::string& mode, const Pooled& p) {
    AggregateMetrics m;
    m.mode = mode;
    m.sequences = static_cast<int>(p.rs.size());
    m.tracked_frames = p.tracked;
    m.precision20 = p.center_errors.empty() ? 0.0f : precision_at(p.center_errors, 20.0f);
    m.success_auc = success_curve(p.overlaps).auc;
    if (!p.overlaps.empty()) {
        double s = 0.0;
        for (float o : p.overlaps) s += o;
        m.mean_iou = static_cast<float>(s / static_cast<double>(p.overlaps.size()));
    }
    if (p.has_target && !p.target_errors.empty())
        m.targeted_precision20 = precision_at(p.target_errors, 20.0f);
    m.restarts = p.restarts;
    m.mean_gen_calls =
        p.rs.empty() ? 0.0 : p.gen_calls / static_cast<double>(p.rs.size());
    return m;
}

}  // namespace

AggregateMetrics aggregate(const std::vector<SequenceResult>& results) {
    if (results.empty()) throw ConfigError("aggregate: no results");
    Pooled all;
    for (const auto& r : results) {
        all.rs.push_back(&r);
        all.overlaps.insert(all.overlaps.end(), r.overlaps.begin(), r.overlaps.end());
        all.center_errors.insert(all.center_errors.end(), r.center_errors.begin(),
                                 r.center_errors.end());
        all.target_errors.insert(all.target_errors.end(), r.target_errors.begin(),
                                 r.target_errors.end());
        all.tracked += r.tracked_frames;
        all.restarts += r.restarts;
        all.gen_calls += static_cast<double>(r.gen_calls);
        all.has_target = all.has_target || r.has_target;
    }
    return aggregate_pool(results.front().mode, all);
}

std::vector<CostRow> cost_report(const std::vector<SequenceResult>& results) {
    std::vector<CostRow> rows;
    for (const auto& [mode, p] : pool_by_mode(results)) {
        CostRow row;
        row.mode = mode;
        row.sequences = static_cast<int>(p.rs.size());
        row.mean_gen_calls =
            p.rs.empty() ? 0.0 : p.gen_calls / static_cast<double>(p.rs.size());
        row.ms_per_frame = p.tracked > 0 ? p.ms / static_cast<double>(p.tracked) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

void emit_report(const std::vector<SequenceResult>& results, const std::string& out_dir) {
    if (results.empty()) throw ConfigError("emit_report: no results");
    std::filesystem::create_directories(out_dir);
    const auto pools = pool_by_mode(results);
    char buf[512];

    {
        std::ofstream out(out_dir + "/per_sequence.csv");
        if (!out) throw IoError("cannot write " + out_dir + "/per_sequence.csv");
        out << "mode,sequence,epsilon,gen_calls,restarts,tracked_frames,total_frames,"
               "precision20,success_auc,mean_iou,targeted_precision20\n";
        for (const auto& [mode, p] : pools) {
            for (const SequenceResult* r : p.rs) {
                const SuccessCurve sc = success_curve(r->overlaps);
                double miou = 0.0;
                for (float o : r->overlaps) miou += o;
                if (!r->overlaps.empty()) miou /= static_cast<double>(r->overlaps.size());
                const float p20 =
                    r->center_errors.empty() ? 0.0f : precision_at(r->center_errors, 20.0f);
                const float tp = r->has_target && !r->target_errors.empty()
                                     ? precision_at(r->target_errors, 20.0f)
                                     : 0.0f;
                std::snprintf(buf, sizeof(buf), "%s,%s,%.3f,%llu,%d,%d,%d,%.6f,%.6f,%.6f,%.6f\n",
                              mode.c_str(), r->sequence.c_str(),
                              static_cast<double>(r->epsilon),
                              static_cast<unsigned long long>(r->gen_calls), r->restarts,
                              r->tracked_frames, r->total_frames, static_cast<double>(p20),
                              static_cast<double>(sc.auc), miou, static_cast<double>(tp));
                out << buf;
            }
        }
    }

    {
        std::ofstream out(out_dir + "/aggregate.csv");
        if (!out) throw IoError("cannot write " + out_dir + "/aggregate.csv");
        out << "mode,sequences,tracked_frames,precision20,success_auc,mean_iou,"
               "targeted_precision20,restarts,mean_gen_calls\n";
        for (const auto& [mode, p] : pools) {
            const AggregateMetrics m = aggregate_pool(mode, p);
            std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.6f,%.6f,%.6f,%.6f,%d,%.3f\n",
                          m.mode.c_str(), m.sequences, m.tracked_frames,
                          static_cast<double>(m.precision20),
                          static_cast<double>(m.success_auc),
                          static_cast<double>(m.mean_iou),
                          static_cast<double>(m.targeted_precision20), m.restarts,
                          m.mean_gen_calls);
            out << buf;
        }
    }

    {
        std::ofstream out(out_dir + "/cost.csv");
        if (!out) throw IoError("cannot write " + out_dir + "/cost.csv");
        out << "mode,sequences,mean_gen_calls,ms_per_frame\n";
        for (const CostRow& row : cost_report(results)) {
            std::snprintf(buf, sizeof(buf), "%s,%d,%.3f,%.3f\n", row.mode.c_str(),
                          row.sequences, row.mean_gen_calls, row.ms_per_frame);
            out << buf;
        }
    }

    std::vector<PlotSeries> prec_series, succ_series;
    for (const auto& [mode, p] : pools) {
        PlotSeries prec;
        prec.label = mode;
        for (int t = 0; t <= 50; ++t) {
            prec.x.push_back(static_cast<float>(t));
            prec.y.push_back(p.center_errors.empty()
                                 ? 0.0f
                                 : precision_at(p.center_errors, static_cast<float>(t)));
        }
        prec_series.push_back(std::move(prec));

        const SuccessCurve sc = success_curve(p.overlaps);
        PlotSeries succ;
        succ.label = mode;
        succ.x = sc.thresholds;
        succ.y = sc.values;
        succ_series.push_back(std::move(succ));
    }
    write_svg_plot(out_dir + "/precision_curve.svg", "Center error precision",
                   "threshold (px)", "precision", prec_series);
    write_svg_plot(out_dir + "/success_curve.svg", "Overlap success", "IoU threshold",
                   "success rate", succ_series);
}

}  // namespace siam
