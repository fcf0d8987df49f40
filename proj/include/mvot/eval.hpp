#pragma once

// Evaluation harness: MOT-style sequence ingestion, synthetic sequence
// generation, real-time protocol with frame deadlines (accuracy/robustness),
// and the instrumented scaling benchmark.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mvot/errors.hpp"
#include "mvot/geometry.hpp"
#include "mvot/image_io.hpp"
#include "mvot/rng.hpp"
#include "mvot/tensor.hpp"
#include "mvot/tracker.hpp"

namespace mvot {

// ---------------------------------------------------------------------------
// sequences

struct Sequence {
    std::vector<Tensor> frames;                   // 3xHxW, may be empty for ground-truth-only use
    std::vector<std::map<int, Box>> ground_truth;  // per frame: target id -> box
    double fps = 25.0;
    int dropped_rows = 0;  // degenerate ground-truth rows skipped on load

    std::size_t frame_count() const { return std::max(frames.size(), ground_truth.size()); }
};

// Ground truth rows are "frame,id,left,top,width,height,..." with 1-based
// frame indices. Rows with non-positive extents are dropped with a warning
// count; anything unparsable is an error carrying the line number.
inline std::vector<std::map<int, Box>> parse_mot_ground_truth(std::istream& in, int* dropped = nullptr) {
    std::vector<std::map<int, Box>> gt;
    std::string line;
    int line_no = 0;
    int drop_count = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<float> fields;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            try {
                fields.push_back(std::stof(cell));
            } catch (const std::exception&) {
                throw FormatError("ground truth line " + std::to_string(line_no) + ": bad field '" + cell + "'");
            }
        }
        if (fields.size() < 6)
            throw FormatError("ground truth line " + std::to_string(line_no) + ": expected at least 6 fields");
        const int frame = static_cast<int>(fields[0]);
        const int id = static_cast<int>(fields[1]);
        if (frame < 1) throw FormatError("ground truth line " + std::to_string(line_no) + ": frame index < 1");
        if (fields[4] <= 0.0f || fields[5] <= 0.0f) {
            ++drop_count;
            continue;
        }
        if (static_cast<std::size_t>(frame) > gt.size()) gt.resize(static_cast<std::size_t>(frame));
        gt[static_cast<std::size_t>(frame - 1)][id] = Box::from_corner(fields[2], fields[3], fields[4], fields[5]);
    }
    if (dropped) *dropped = drop_count;
    return gt;
}

inline void write_mot_ground_truth(const std::string& path, const std::vector<std::map<int, Box>>& gt) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    char buf[160];
    for (std::size_t frame = 0; frame < gt.size(); ++frame) {
        for (const auto& [id, box] : gt[frame]) {
            std::snprintf(buf, sizeof(buf), "%zu,%d,%.2f,%.2f,%.2f,%.2f,1,-1,-1,-1\n", frame + 1, id, box.left(),
                          box.top(), box.w, box.h);
            f << buf;
        }
    }
}

// Loads ground truth plus the numbered PPM frames next to it. An empty
// frames directory string loads ground truth only.
inline Sequence load_mot_sequence(const std::string& gt_path, const std::string& frames_dir, double fps = 25.0) {
    std::ifstream f(gt_path);
    if (!f) throw IoError("cannot open ground truth '" + gt_path + "'");
    Sequence seq;
    seq.fps = fps;
    seq.ground_truth = parse_mot_ground_truth(f, &seq.dropped_rows);

    if (!frames_dir.empty()) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(frames_dir))
            if (entry.path().extension() == ".ppm") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.size() < seq.ground_truth.size())
            throw FormatError("frames directory '" + frames_dir + "' holds " + std::to_string(files.size()) +
                              " frames but ground truth references " + std::to_string(seq.ground_truth.size()));
        seq.frames.reserve(files.size());
        for (const auto& file : files) seq.frames.push_back(read_ppm(file.string()));
        for (const Tensor& frame : seq.frames)
            if (!frame.same_shape(seq.frames.front())) throw FormatError("frame extents vary across the sequence");
    }
    return seq;
}

// ---------------------------------------------------------------------------
// synthetic sequences

struct SynthObject {
    float w = 32.0f;
    float h = 32.0f;
    float vx = 0.0f;
    float vy = 0.0f;
    float cx0 = -1.0f;  // negative = auto placement
    float cy0 = -1.0f;
};

struct SynthSpec {
    int width = 640;
    int height = 480;
    int frames = 60;
    std::uint64_t seed = 1;
    float background = 96.0f / 255.0f;
    // noise block side in pixels; 0 picks min(w,h)/3 per object, which keeps
    // the correlation plateau wider than one score cell at every object size
    int texture_grain = 0;
    std::vector<SynthObject> objects;
};

namespace detail {

struct SynthTexture {
    int w = 0, h = 0;
    std::vector<float> rgb;  // h*w*3, values quantized to k/255
};

// blockwise noise; the grain sets the autocorrelation length of the patch
inline SynthTexture make_texture(Rng& rng, int w, int h, int grain) {
    SynthTexture t;
    t.w = w;
    t.h = h;
    t.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    const int bw = (w + grain - 1) / grain, bh = (h + grain - 1) / grain;
    std::vector<float> blocks(static_cast<std::size_t>(bw) * bh * 3);
    for (float& v : blocks) v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                t.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
                    blocks[(static_cast<std::size_t>(y / grain) * bw + x / grain) * 3 + c];
    return t;
}

}  // namespace detail

// Distinctly textured rectangles moving at constant velocity over a uniform
// background, reflecting off the frame borders; ground truth is exact.
inline Sequence synth_sequence(const SynthSpec& spec) {
    if (spec.objects.empty()) throw ArgumentError("synth_sequence: no objects");
    if (spec.frames < 1 || spec.width < 1 || spec.height < 1) throw ArgumentError("synth_sequence: bad extents");
    for (const SynthObject& o : spec.objects)
        if (o.w > static_cast<float>(spec.width) || o.h > static_cast<float>(spec.height))
            throw ArgumentError("synth_sequence: object larger than frame");

    Rng rng(spec.seed);
    const int n = static_cast<int>(spec.objects.size());

    std::vector<detail::SynthTexture> textures;
    std::vector<float> cx(static_cast<std::size_t>(n)), cy(static_cast<std::size_t>(n));
    std::vector<float> vx(static_cast<std::size_t>(n)), vy(static_cast<std::size_t>(n));
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    for (int p = 0; p < n; ++p) {
        const SynthObject& o = spec.objects[static_cast<std::size_t>(p)];
        const int grain = spec.texture_grain > 0
                              ? spec.texture_grain
                              : std::max(2, static_cast<int>(std::lround(std::min(o.w, o.h) / 3.0f)));
        textures.push_back(detail::make_texture(rng, static_cast<int>(std::lround(o.w)),
                                                static_cast<int>(std::lround(o.h)), grain));
        if (o.cx0 >= 0.0f) {
            cx[static_cast<std::size_t>(p)] = o.cx0;
            cy[static_cast<std::size_t>(p)] = o.cy0;
        } else {
            // deterministic grid placement away from the borders
            const int col = p % cols, row = p / cols;
            const int rows = (n + cols - 1) / cols;
            cx[static_cast<std::size_t>(p)] =
                static_cast<float>(spec.width) * (static_cast<float>(col) + 0.5f) / static_cast<float>(cols);
            cy[static_cast<std::size_t>(p)] =
                static_cast<float>(spec.height) * (static_cast<float>(row) + 0.5f) / static_cast<float>(rows);
        }
        vx[static_cast<std::size_t>(p)] = o.vx;
        vy[static_cast<std::size_t>(p)] = o.vy;
        const float half_w = 0.5f * o.w, half_h = 0.5f * o.h;
        if (cx[static_cast<std::size_t>(p)] - half_w < 0.0f ||
            cx[static_cast<std::size_t>(p)] + half_w > static_cast<float>(spec.width) ||
            cy[static_cast<std::size_t>(p)] - half_h < 0.0f ||
            cy[static_cast<std::size_t>(p)] + half_h > static_cast<float>(spec.height))
            throw ArgumentError("synth_sequence: object " + std::to_string(p) + " does not fit at t=0");
    }

    Sequence seq;
    seq.fps = 25.0;
    seq.frames.reserve(static_cast<std::size_t>(spec.frames));
    seq.ground_truth.resize(static_cast<std::size_t>(spec.frames));

    for (int f = 0; f < spec.frames; ++f) {
        Tensor frame = Tensor::full({3, spec.height, spec.width}, spec.background);
        for (int p = 0; p < n; ++p) {
            const SynthObject& o = spec.objects[static_cast<std::size_t>(p)];
            const detail::SynthTexture& tex = textures[static_cast<std::size_t>(p)];
            const Box box{cx[static_cast<std::size_t>(p)], cy[static_cast<std::size_t>(p)], o.w, o.h};
            seq.ground_truth[static_cast<std::size_t>(f)][p + 1] = box;

            const int left = static_cast<int>(std::lround(box.left()));
            const int top = static_cast<int>(std::lround(box.top()));
            for (int ty = 0; ty < tex.h; ++ty) {
                const int y = top + ty;
                if (y < 0 || y >= spec.height) continue;
                for (int tx = 0; tx < tex.w; ++tx) {
                    const int x = left + tx;
                    if (x < 0 || x >= spec.width) continue;
                    for (int c = 0; c < 3; ++c)
                        frame.at(c, y, x) = tex.rgb[(static_cast<std::size_t>(ty) * tex.w + tx) * 3 + c];
                }
            }
        }
        seq.frames.push_back(std::move(frame));

        // advance with border reflection
        for (int p = 0; p < n; ++p) {
            const SynthObject& o = spec.objects[static_cast<std::size_t>(p)];
            const float half_w = 0.5f * o.w, half_h = 0.5f * o.h;
            float& x = cx[static_cast<std::size_t>(p)];
            float& y = cy[static_cast<std::size_t>(p)];
            if (x + vx[static_cast<std::size_t>(p)] - half_w < 0.0f ||
                x + vx[static_cast<std::size_t>(p)] + half_w > static_cast<float>(spec.width))
                vx[static_cast<std::size_t>(p)] = -vx[static_cast<std::size_t>(p)];
            if (y + vy[static_cast<std::size_t>(p)] - half_h < 0.0f ||
                y + vy[static_cast<std::size_t>(p)] + half_h > static_cast<float>(spec.height))
                vy[static_cast<std::size_t>(p)] = -vy[static_cast<std::size_t>(p)];
            x += vx[static_cast<std::size_t>(p)];
            y += vy[static_cast<std::size_t>(p)];
        }
    }
    return seq;
}

// ---------------------------------------------------------------------------
// real-time protocol

struct LatencyModel {
    enum class Mode { Measured, Injected };
    Mode mode = Mode::Measured;
    double injected_ms = 0.0;
    std::vector<double> per_frame_ms;  // optional override, indexed by frame

    double resolve(int frame, double measured_ms) const {
        if (mode == Mode::Measured) return measured_ms;
        if (static_cast<std::size_t>(frame) < per_frame_ms.size())
            return per_frame_ms[static_cast<std::size_t>(frame)];
        return injected_ms;
    }
};

struct TargetReport {
    int id = 0;
    int evaluated = 0;
    int failures = 0;
    double accuracy = 0.0;
    double robustness = 1.0;
};

struct EvalReport {
    double fps_budget = 20.0;
    double gamma = 30.0;
    double accuracy = 0.0;    // unweighted mean over targets
    double robustness = 0.0;  // unweighted mean over targets
    int failures = 0;
    int frames_total = 0;      // tracked frames (sequence minus the init frame)
    int frames_processed = 0;  // met their deadline and produced fresh output
    int frames_reused = 0;     // deadline overrun, previous prediction reused
    std::string latency_mode;
    std::vector<TargetReport> per_target;
    std::vector<double> frame_latency_ms;  // latency of each processed frame

    std::string to_text() const;
    std::string to_csv() const;
};

// Hooks so the protocol can drive either the real tracker or an oracle stub.
struct ProtocolHooks {
    // (re)initialize the given targets on a frame
    std::function<void(int frame, const std::vector<std::pair<int, Box>>&)> init;
    // process a frame, returning predictions for every active target
    std::function<std::vector<TrackOutput>(int frame)> track;
};

namespace detail {

struct TargetProtocolState {
    Box prediction;
    int failures = 0;
    int evaluated = 0;
    double iou_sum = 0.0;
    int excluded_until = 0;  // first frame scored again after a failure
    int reinit_at = -1;      // frame at which ground truth re-initializes the target
};

}  // namespace detail

// Deadline-driven evaluation: each frame arrives at its budgeted time; while
// the tracker overruns, arriving frames reuse the last available prediction.
// A target fails when its scored IoU reaches 0; it is re-initialized from
// ground truth 5 frames later and the gap (failure exclusive, re-init
// inclusive) is excluded from accuracy.
inline EvalReport run_vot_rt_protocol(const ProtocolHooks& hooks, const Sequence& seq, double fps_budget,
                                      const LatencyModel& latency, double gamma = 30.0) {
    if (seq.ground_truth.empty()) throw ArgumentError("vot-rt: sequence has no ground truth");
    const int total_frames = static_cast<int>(seq.frame_count());
    if (total_frames < 2) throw ArgumentError("vot-rt: need at least two frames");

    EvalReport report;
    report.fps_budget = fps_budget;
    report.gamma = gamma;
    report.latency_mode = latency.mode == LatencyModel::Mode::Measured ? "measured" : "injected";
    report.frames_total = total_frames - 1;

    // initial targets come from frame 0 ground truth
    std::vector<std::pair<int, Box>> init_boxes(seq.ground_truth[0].begin(), seq.ground_truth[0].end());
    if (init_boxes.empty()) throw ArgumentError("vot-rt: no targets in frame 0 ground truth");
    hooks.init(0, init_boxes);

    std::map<int, detail::TargetProtocolState> targets;
    for (const auto& [id, box] : init_boxes) targets[id].prediction = box;

    const double budget_ms = 1000.0 / fps_budget;
    double next_free = 0.0;

    for (int f = 1; f < total_frames; ++f) {
        // protocol-level re-initializations scheduled for this frame
        for (auto& [id, tstate] : targets) {
            if (tstate.reinit_at != f) continue;
            const auto& gt = seq.ground_truth[static_cast<std::size_t>(f)];
            const auto it = gt.find(id);
            if (it == gt.end()) {
                ++tstate.reinit_at;  // target absent, postpone
                ++tstate.excluded_until;
                continue;
            }
            hooks.init(f, {{id, it->second}});
            tstate.prediction = it->second;
            tstate.reinit_at = -1;
        }

        const double arrival = static_cast<double>(f) * budget_ms;
        const bool fresh = next_free <= arrival;
        if (fresh) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::vector<TrackOutput> outs = hooks.track(f);
            const double measured =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            const double lat = latency.resolve(f, measured);
            next_free = arrival + lat;
            ++report.frames_processed;
            report.frame_latency_ms.push_back(lat);
            for (const TrackOutput& out : outs) {
                auto it = targets.find(out.id);
                if (it != targets.end()) it->second.prediction = out.box;
            }
        } else {
            ++report.frames_reused;
        }

        // score this frame
        for (auto& [id, tstate] : targets) {
            if (f < tstate.excluded_until) continue;
            const auto& gt = seq.ground_truth[static_cast<std::size_t>(f)];
            const auto it = gt.find(id);
            if (it == gt.end()) continue;
            const float overlap = iou(tstate.prediction, it->second);
            ++tstate.evaluated;
            tstate.iou_sum += overlap;
            if (overlap <= 0.0f) {
                ++tstate.failures;
                tstate.reinit_at = f + 5;
                tstate.excluded_until = f + 6;
            }
        }
    }

    double acc_sum = 0.0, rob_sum = 0.0;
    int scored_targets = 0;
    for (const auto& [id, tstate] : targets) {
        TargetReport tr;
        tr.id = id;
        tr.evaluated = tstate.evaluated;
        tr.failures = tstate.failures;
        if (tstate.evaluated > 0) {
            tr.accuracy = tstate.iou_sum / tstate.evaluated;
            tr.robustness = std::exp(-gamma * static_cast<double>(tstate.failures) / tstate.evaluated);
            acc_sum += tr.accuracy;
            rob_sum += tr.robustness;
            ++scored_targets;
        }
        report.failures += tstate.failures;
        report.per_target.push_back(tr);
    }
    if (scored_targets > 0) {
        report.accuracy = acc_sum / scored_targets;
        report.robustness = rob_sum / scored_targets;
    }
    return report;
}

// Runs the protocol on a real tracker; targets are initialized (and after
// failures re-initialized) from ground truth.
inline EvalReport run_vot_rt(TrackerState& tracker, const Sequence& seq, double fps_budget,
                             const LatencyModel& latency, double gamma = 30.0) {
    if (seq.frames.empty()) throw ArgumentError("vot-rt: sequence has no frames");
    ProtocolHooks hooks;
    hooks.init = [&](int frame, const std::vector<std::pair<int, Box>>& boxes) {
        for (const auto& [id, box] : boxes) {
            if (detail::find_target(tracker, id)) remove_target(id, tracker);
            add_target(seq.frames[static_cast<std::size_t>(frame)], id, box, tracker);
        }
    };
    hooks.track = [&](int frame) { return track_frame(seq.frames[static_cast<std::size_t>(frame)], tracker); };
    return run_vot_rt_protocol(hooks, seq, fps_budget, latency, gamma);
}

// Oracle self-test: predictions equal ground truth, isolating the protocol.
inline EvalReport run_vot_rt_oracle(const Sequence& seq, double fps_budget, const LatencyModel& latency,
                                    double gamma = 30.0) {
    ProtocolHooks hooks;
    hooks.init = [](int, const std::vector<std::pair<int, Box>>&) {};
    hooks.track = [&](int frame) {
        std::vector<TrackOutput> outs;
        for (const auto& [id, box] : seq.ground_truth[static_cast<std::size_t>(frame)])
            outs.push_back(TrackOutput{id, box, 1.0f});
        return outs;
    };
    return run_vot_rt_protocol(hooks, seq, fps_budget, latency, gamma);
}

// ---------------------------------------------------------------------------
// report formatting

inline std::string EvalReport::to_text() const {
    std::ostringstream out;
    out << "vot-rt report\n";
    out << "fps_budget: " << fps_budget << "\n";
    out << "gamma: " << gamma << "\n";
    out << "robustness_formula: exp(-gamma*failures/evaluated_frames)\n";
    out << "aggregation: unweighted_mean_over_targets\n";
    out << "latency_mode: " << latency_mode << "\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "accuracy: %.6f\nrobustness: %.6f\nfailures: %d\n", accuracy, robustness,
                  failures);
    out << buf;
    out << "frames_total: " << frames_total << "\n";
    out << "frames_processed: " << frames_processed << "\n";
    out << "frames_reused: " << frames_reused << "\n";
    if (!frame_latency_ms.empty()) {
        double sum = 0.0, peak = 0.0;
        for (double v : frame_latency_ms) {
            sum += v;
            peak = std::max(peak, v);
        }
        std::snprintf(buf, sizeof(buf), "latency_ms_mean: %.3f\nlatency_ms_max: %.3f\n",
                      sum / static_cast<double>(frame_latency_ms.size()), peak);
        out << buf;
    }
    out << "per_target:\n";
    out << "  id evaluated failures accuracy robustness\n";
    for (const TargetReport& t : per_target) {
        std::snprintf(buf, sizeof(buf), "  %d %d %d %.6f %.6f\n", t.id, t.evaluated, t.failures, t.accuracy,
                      t.robustness);
        out << buf;
    }
    return out.str();
}

inline std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "key,value\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "fps_budget,%g\ngamma,%g\naccuracy,%.6f\nrobustness,%.6f\nfailures,%d\n",
                  fps_budget, gamma, accuracy, robustness, failures);
    out << buf;
    out << "robustness_formula,exp(-gamma*failures/evaluated_frames)\n";
    out << "latency_mode," << latency_mode << "\n";
    out << "frames_total," << frames_total << "\n";
    out << "frames_processed," << frames_processed << "\n";
    out << "frames_reused," << frames_reused << "\n";
    if (!frame_latency_ms.empty()) {
        double sum = 0.0, peak = 0.0;
        for (double v : frame_latency_ms) {
            sum += v;
            peak = std::max(peak, v);
        }
        std::snprintf(buf, sizeof(buf), "latency_ms_mean,%.3f\nlatency_ms_max,%.3f\n",
                      sum / static_cast<double>(frame_latency_ms.size()), peak);
        out << buf;
    }
    for (const TargetReport& t : per_target) {
        std::snprintf(buf, sizeof(buf), "target,%d,%d,%d,%.6f,%.6f\n", t.id, t.evaluated, t.failures, t.accuracy,
                      t.robustness);
        out << buf;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// scaling benchmark

struct BenchRow {
    int targets = 0;
    double shared_ms = 0.0;      // backbone + FPN median
    double per_target_ms = 0.0;  // (total - shared) / N median
    double total_ms = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Median per-frame timings for each target count, one warm-up pass per
// configuration. The frame content is seeded noise so that feature maps are
// non-degenerate.
inline std::vector<BenchRow> bench_scaling(int frame_w, int frame_h, const std::vector<int>& target_counts,
                                           int repetitions, const TrackerConfig& config = {},
                                           std::uint64_t seed = 1234) {
    if (repetitions < 1) throw ArgumentError("bench_scaling: repetitions must be >= 1");
    for (int n : target_counts)
        if (n < 1) throw ArgumentError("bench_scaling: target counts must be >= 1");

    Rng rng(seed);
    Tensor frame({3, frame_h, frame_w});
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = rng.next_float();

    std::vector<BenchRow> rows;
    for (int n : target_counts) {
        TrackerState st = make_tracker(config, seeded_tracker_weights(seed));
        std::vector<std::pair<int, Box>> boxes;
        const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
        const int rows_n = (n + cols - 1) / cols;
        for (int p = 0; p < n; ++p) {
            const float cx = static_cast<float>(frame_w) * (static_cast<float>(p % cols) + 0.5f) / cols;
            const float cy = static_cast<float>(frame_h) * (static_cast<float>(p / cols) + 0.5f) / rows_n;
            boxes.emplace_back(p + 1, Box{cx, cy, 40.0f, 40.0f});
        }
        init_targets(frame, boxes, st);
        track_frame(frame, st);  // warm-up

        std::vector<double> shared, total;
        for (int r = 0; r < repetitions; ++r) {
            track_frame(frame, st);
            shared.push_back(st.counters.last_shared_ms);
            total.push_back(st.counters.last_total_ms);
        }
        BenchRow row;
        row.targets = n;
        row.shared_ms = detail::median(shared);
        row.total_ms = detail::median(total);
        row.per_target_ms = (row.total_ms - row.shared_ms) / static_cast<double>(n);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mvot
