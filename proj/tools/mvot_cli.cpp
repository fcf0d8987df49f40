// Command-line entry points: track, eval, synth, init-weights, bench.
// Exit codes: 0 success, 1 runtime/IO failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvot/eval.hpp"
#include "mvot/image_io.hpp"
#include "mvot/tracker.hpp"
#include "mvot/weights_io.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string weights_path;
    bool correlation_only = false;
    std::vector<std::string> disabled_penalties;
    double beta = 0.04;
    double window_influence = 0.42;
    double tau = 0.15;
    std::uint64_t seed = 42;
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--weights", opt.weights_path, "weights file (SMWT format)");
    cmd->add_flag("--correlation-only", opt.correlation_only, "bypass the learned RPN heads");
    cmd->add_option("--disable-penalty", opt.disabled_penalties, "disable a penalty stage")
        ->check(CLI::IsMember({"shape", "distractor", "erosion", "spatial"}));
    cmd->add_option("--beta", opt.beta, "shape penalty strength");
    cmd->add_option("--window-influence", opt.window_influence, "spatial window blend weight");
    cmd->add_option("--tau", opt.tau, "confidence floor for the inertia fallback");
    cmd->add_option("--seed", opt.seed, "seed for generated weights / data");
}

mvot::TrackerConfig make_config(const CommonOptions& opt) {
    mvot::TrackerConfig cfg;
    cfg.correlation_only = opt.correlation_only;
    cfg.penalty.beta = static_cast<float>(opt.beta);
    cfg.penalty.window_influence = static_cast<float>(opt.window_influence);
    cfg.penalty.confidence_floor = static_cast<float>(opt.tau);
    for (const std::string& name : opt.disabled_penalties) {
        if (name == "shape") cfg.penalty.shape_enabled = false;
        if (name == "distractor") cfg.penalty.distractor_enabled = false;
        if (name == "erosion") cfg.penalty.erosion_enabled = false;
        if (name == "spatial") cfg.penalty.spatial_enabled = false;
    }
    return cfg;
}

mvot::TrackerWeights load_or_seed_weights(const CommonOptions& opt) {
    if (!opt.weights_path.empty()) return mvot::tracker_weights_from_named(mvot::load_weights(opt.weights_path));
    return mvot::seeded_tracker_weights(opt.seed);
}

// init file rows: "id,left,top,width,height"
std::vector<std::pair<int, mvot::Box>> parse_init_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw mvot::IoError("cannot open init file '" + path + "'");
    std::vector<std::pair<int, mvot::Box>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<float> fields;
        while (std::getline(row, cell, ',')) fields.push_back(std::stof(cell));
        if (fields.size() < 5)
            throw mvot::FormatError("init file line " + std::to_string(line_no) + ": expected id,left,top,w,h");
        out.emplace_back(static_cast<int>(fields[0]),
                         mvot::Box::from_corner(fields[1], fields[2], fields[3], fields[4]));
    }
    if (out.empty()) throw mvot::FormatError("init file '" + path + "' holds no boxes");
    return out;
}

std::vector<mvot::Tensor> load_frames(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".ppm") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw mvot::IoError("no .ppm frames in '" + dir + "'");
    std::vector<mvot::Tensor> frames;
    frames.reserve(files.size());
    for (const auto& file : files) frames.push_back(mvot::read_ppm(file.string()));
    return frames;
}

void write_results_row(std::ofstream& out, int frame, int id, const mvot::Box& box, float confidence) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.4f,%.4f,%.4f,%.4f,%.6f\n", frame, id, box.left(), box.top(), box.w,
                  box.h, confidence);
    out << buf;
}

// ---------------------------------------------------------------------------

int run_track(const CommonOptions& common, const std::string& frames_dir, const std::string& init_path,
              const std::string& out_path) {
    const std::vector<mvot::Tensor> frames = load_frames(frames_dir);
    const auto init_boxes = parse_init_file(init_path);

    mvot::TrackerState st = mvot::make_tracker(make_config(common), load_or_seed_weights(common));
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw mvot::IoError("cannot open '" + out_path + "' for writing");

    mvot::init_targets(frames[0], init_boxes, st);
    for (const auto& [id, box] : init_boxes) write_results_row(out, 1, id, box, 1.0f);
    for (std::size_t f = 1; f < frames.size(); ++f) {
        const auto outputs = mvot::track_frame(frames[f], st);
        for (const auto& o : outputs) write_results_row(out, static_cast<int>(f) + 1, o.id, o.box, o.confidence);
    }
    return 0;
}

int run_eval(const CommonOptions& common, const std::string& gt_path, const std::string& frames_dir,
             const std::string& out_prefix, const std::vector<double>& budgets, bool self_test,
             double latency_inject_ms, bool latency_injected) {
    mvot::Sequence seq = mvot::load_mot_sequence(gt_path, self_test ? "" : frames_dir);
    if (seq.dropped_rows > 0)
        std::cerr << "warning: dropped " << seq.dropped_rows << " degenerate ground-truth rows\n";

    mvot::LatencyModel latency;
    if (latency_injected) {
        latency.mode = mvot::LatencyModel::Mode::Injected;
        latency.injected_ms = latency_inject_ms;
    }

    for (double budget : budgets) {
        mvot::EvalReport report;
        if (self_test) {
            report = mvot::run_vot_rt_oracle(seq, budget, latency);
        } else {
            mvot::TrackerState st = mvot::make_tracker(make_config(common), load_or_seed_weights(common));
            report = mvot::run_vot_rt(st, seq, budget, latency);
        }
        char suffix[64];
        std::snprintf(suffix, sizeof(suffix), "_fps%g", budget);
        const std::string text_path = out_prefix + suffix + ".txt";
        const std::string csv_path = out_prefix + suffix + ".csv";
        std::ofstream text(text_path, std::ios::trunc);
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!text || !csv) throw mvot::IoError("cannot write reports at prefix '" + out_prefix + "'");
        text << report.to_text();
        csv << report.to_csv();
        std::cout << report.to_text();
    }
    return 0;
}

int run_synth(std::uint64_t seed, const std::string& out_dir, int objects, int num_frames, int width, int height,
              int object_size, int speed) {
    mvot::SynthSpec spec;
    spec.width = width;
    spec.height = height;
    spec.frames = num_frames;
    spec.seed = seed;
    const int dirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
    for (int p = 0; p < objects; ++p) {
        mvot::SynthObject obj;
        obj.w = static_cast<float>(object_size);
        obj.h = static_cast<float>(object_size);
        obj.vx = static_cast<float>(speed * dirs[p % 8][0]);
        obj.vy = static_cast<float>(speed * dirs[p % 8][1]);
        spec.objects.push_back(obj);
    }
    const mvot::Sequence seq = mvot::synth_sequence(spec);

    fs::create_directories(out_dir);
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06zu.ppm", f + 1);
        mvot::write_ppm((fs::path(out_dir) / name).string(), seq.frames[f]);
    }
    mvot::write_mot_ground_truth((fs::path(out_dir) / "gt.txt").string(), seq.ground_truth);
    return 0;
}

int run_init_weights(std::uint64_t seed, const std::string& out_path) {
    const mvot::TrackerWeights w = mvot::seeded_tracker_weights(seed);
    mvot::save_weights(out_path, mvot::tracker_weights_to_named(w));
    return 0;
}

int run_bench(const CommonOptions& common, int width, int height, const std::vector<int>& targets, int reps,
              const std::string& out_path) {
    const auto rows = mvot::bench_scaling(width, height, targets, reps, make_config(common), common.seed);
    std::ostringstream csv;
    csv << "targets,shared_ms,per_target_ms,total_ms\n";
    std::printf("%8s %12s %15s %12s\n", "targets", "shared_ms", "per_target_ms", "total_ms");
    for (const auto& row : rows) {
        std::printf("%8d %12.3f %15.4f %12.3f\n", row.targets, row.shared_ms, row.per_target_ms, row.total_ms);
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%d,%.3f,%.4f,%.3f\n", row.targets, row.shared_ms, row.per_target_ms,
                      row.total_ms);
        csv << buf;
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw mvot::IoError("cannot open '" + out_path + "' for writing");
        out << csv.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiple visual object tracker"};
    app.require_subcommand(1);
    // config sections are named after the subcommand, e.g. [track]
    app.set_config("--config", "", "key-value config file; command-line flags override");

    CommonOptions track_opt, eval_opt, bench_opt;

    // track
    auto* track = app.add_subcommand("track", "track initialized targets through a frame directory");
    track->fallthrough();
    std::string track_frames, track_init, track_out = "results.csv";
    add_common_flags(track, track_opt);
    track->add_option("--frames", track_frames, "directory of .ppm frames")->required();
    track->add_option("--init", track_init, "frame-0 boxes, rows id,left,top,w,h");
    track->add_option("--out", track_out, "results file");

    // eval
    auto* eval = app.add_subcommand("eval", "run the real-time protocol against ground truth");
    eval->fallthrough();
    std::string eval_gt, eval_frames, eval_out = "report";
    std::string eval_budgets = "20,25";
    bool self_test = false;
    double latency_ms = 0.0;
    add_common_flags(eval, eval_opt);
    eval->add_option("--gt", eval_gt, "MOT-style ground truth file")->required();
    eval->add_option("--frames", eval_frames, "directory of .ppm frames");
    eval->add_option("--out", eval_out, "report path prefix");
    eval->add_option("--fps-budget", eval_budgets, "comma-separated throughput thresholds");
    eval->add_flag("--self-test", self_test, "score oracle predictions instead of the tracker");
    auto* latency_flag =
        eval->add_option("--latency-inject-ms", latency_ms, "deterministic per-frame latency instead of wall time");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic sequence (frames + ground truth)");
    synth->fallthrough();
    std::string synth_out;
    int synth_objects = 4, synth_frames = 60, synth_w = 640, synth_h = 480, synth_size = 48, synth_speed = 5;
    std::uint64_t synth_seed = 42;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--objects", synth_objects, "object count");
    synth->add_option("--num-frames", synth_frames, "frame count");
    synth->add_option("--width", synth_w, "frame width");
    synth->add_option("--height", synth_h, "frame height");
    synth->add_option("--object-size", synth_size, "square object side in px");
    synth->add_option("--speed", synth_speed, "object speed in px/frame");
    synth->add_option("--seed", synth_seed, "texture/placement seed");

    // init-weights
    auto* init_w = app.add_subcommand("init-weights", "write a seeded weights file");
    init_w->fallthrough();
    std::string weights_out = "weights.smwt";
    std::uint64_t weights_seed = 42;
    init_w->add_option("--out", weights_out, "weights file path");
    init_w->add_option("--seed", weights_seed, "initialization seed");

    // bench
    auto* bench = app.add_subcommand("bench", "instrumented scaling benchmark");
    bench->fallthrough();
    std::string bench_targets = "1,8,32", bench_out;
    int bench_w = 640, bench_h = 480, bench_reps = 5;
    add_common_flags(bench, bench_opt);
    bench->add_option("--targets", bench_targets, "comma-separated target counts");
    bench->add_option("--width", bench_w, "frame width");
    bench->add_option("--height", bench_h, "frame height");
    bench->add_option("--reps", bench_reps, "timed repetitions per configuration");
    bench->add_option("--out", bench_out, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    auto parse_list = [](const std::string& text) {
        std::vector<double> out;
        std::stringstream ss(text);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
        return out;
    };

    try {
        if (track->parsed()) {
            if (track_init.empty()) {
                std::cerr << "track: --init is required (frame-0 boxes)\n" << track->help();
                return 2;
            }
            if (track_opt.weights_path.empty() && !track_opt.correlation_only) {
                std::cerr << "track: provide --weights or set --correlation-only\n" << track->help();
                return 2;
            }
            return run_track(track_opt, track_frames, track_init, track_out);
        }
        if (eval->parsed()) {
            if (!self_test && eval_frames.empty()) {
                std::cerr << "eval: --frames is required unless --self-test is set\n" << eval->help();
                return 2;
            }
            if (!self_test && eval_opt.weights_path.empty() && !eval_opt.correlation_only) {
                std::cerr << "eval: provide --weights or set --correlation-only\n" << eval->help();
                return 2;
            }
            return run_eval(eval_opt, eval_gt, eval_frames, eval_out, parse_list(eval_budgets), self_test,
                            latency_ms, latency_flag->count() > 0);
        }
        if (synth->parsed())
            return run_synth(synth_seed, synth_out, synth_objects, synth_frames, synth_w, synth_h, synth_size,
                             synth_speed);
        if (init_w->parsed()) return run_init_weights(weights_seed, weights_out);
        if (bench->parsed()) {
            std::vector<int> counts;
            for (double v : parse_list(bench_targets)) counts.push_back(static_cast<int>(v));
            return run_bench(bench_opt, bench_w, bench_h, counts, bench_reps, bench_out);
        }
    } catch (const mvot::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
