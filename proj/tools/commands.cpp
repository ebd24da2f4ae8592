#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "keysort/assembly.hpp"
#include "keysort/io.hpp"
#include "keysort/kf_demo.hpp"
#include "keysort/map_codec.hpp"
#include "keysort/map_io.hpp"
#include "keysort/metrics.hpp"
#include "keysort/synth.hpp"
#include "keysort/tracker.hpp"

namespace fs = std::filesystem;

namespace keysort::cli {
namespace {

enum class Verbosity { quiet, info, debug };

// KEYSORT_LOG=quiet|info|debug; warnings are shown unless quiet.
class Log {
public:
    explicit Log(std::ostream& err) : err_(err) {
        const char* v = std::getenv("KEYSORT_LOG");
        const std::string s = v ? v : "info";
        if (s == "quiet" || s == "0") level_ = Verbosity::quiet;
        else if (s == "debug" || s == "2") level_ = Verbosity::debug;
    }
    void warn(const std::string& m) const {
        if (level_ != Verbosity::quiet) err_ << "warning: " << m << '\n';
    }
    void info(const std::string& m) const {
        if (level_ != Verbosity::quiet) err_ << m << '\n';
    }
    void debug(const std::string& m) const {
        if (level_ == Verbosity::debug) err_ << m << '\n';
    }
    void error(const std::string& m) const { err_ << "error: " << m << '\n'; }

private:
    std::ostream& err_;
    Verbosity level_ = Verbosity::info;
};

std::ifstream open_in(const std::string& path, const char* what) {
    if (!fs::exists(path)) throw InputError(std::string(what) + " not found: " + path);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError(std::string("cannot open ") + what + ": " + path);
    return is;
}

std::ofstream open_out(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    return os;
}

Skeleton load_skeleton(const std::string& path) {
    if (path.empty()) return cattle_skeleton();
    auto is = open_in(path, "config");
    return Skeleton(read_skeleton(is));
}

std::vector<double> parse_list(const std::string& s, std::size_t n, const char* what) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        double x = 0.0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
        if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
            throw InputError(std::string("bad number in ") + what + ": " + tok);
        v.push_back(x);
    }
    if (v.size() == 1) v.assign(n, v[0]);
    if (v.size() != n) throw InputError(std::string(what) + " needs 1 or " + std::to_string(n) + " values");
    return v;
}

std::string frame_file_name(std::size_t frame, bool text) {
    std::ostringstream os;
    os << "frame_" << std::setw(6) << std::setfill('0') << frame << (text ? ".ksmap.txt" : ".ksmap");
    return os.str();
}

// ------------------------------------------------------------------------------------
// encode

struct EncodeOptions {
    std::string annotations, skeleton, out;
    std::size_t width = 0, height = 0;
    bool text = false;
};

int cmd_encode(const EncodeOptions& o, const Log& log) {
    const Skeleton skel = load_skeleton(o.skeleton);
    auto is = open_in(o.annotations, "annotations");
    const DetectionsFile ann = read_detections(is, skel);
    const std::size_t w = o.width ? o.width : ann.header.width;
    const std::size_t h = o.height ? o.height : ann.header.height;
    if (w == 0 || h == 0) throw InputError("image size unknown: pass --width/--height or set it in the header");
    fs::create_directories(o.out);
    for (std::size_t i = 0; i < ann.frames.size(); ++i) {
        const auto& fr = ann.frames[i];
        for (std::size_t p = 0; p < fr.poses.size(); ++p)
            if (!is_valid_pose(skel, fr.poses[p]))
                throw InputError("frame " + std::to_string(fr.frame_index) + " pose " + std::to_string(p) +
                                     ": root or every dominant connection missing",
                                 i + 2);
        std::vector<std::string> warnings;
        const MapStack maps = encode_maps(fr.poses, skel, skel.encoder(), w, h, &warnings);
        for (const auto& m : warnings) log.warn(m);
        auto os = open_out((fs::path(o.out) / frame_file_name(fr.frame_index, o.text)).string());
        if (o.text) {
            write_map_text(os, maps);
        } else {
            write_map_binary(os, maps);
        }
    }
    log.info("encoded " + std::to_string(ann.frames.size()) + " frames");
    return kOk;
}

// ------------------------------------------------------------------------------------
// decode-assemble

struct DecodeOptions {
    std::vector<std::string> maps;
    std::string skeleton, out;
    double threshold = 0.4, nms = 7.0, gate_frac = 0.05;
};

std::vector<std::pair<std::size_t, fs::path>> collect_map_files(const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        if (!fs::exists(in)) throw InputError("maps not found: " + in);
        if (fs::is_directory(in)) {
            for (const auto& e : fs::directory_iterator(in))
                if (e.is_regular_file()) files.push_back(e.path());
        } else {
            files.push_back(in);
        }
    }
    std::sort(files.begin(), files.end());
    static const std::regex frame_re(R"(frame_(\d+)\.ksmap(\.txt)?$)");
    std::vector<std::pair<std::size_t, fs::path>> out;
    std::size_t next = 0;
    for (const auto& f : files) {
        std::smatch m;
        const std::string name = f.filename().string();
        const std::size_t idx = std::regex_search(name, m, frame_re) ? std::stoul(m[1].str()) : next;
        out.emplace_back(idx, f);
        next = idx + 1;
    }
    std::sort(out.begin(), out.end());
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].first == out[i - 1].first)
            throw InputError("two map files for frame " + std::to_string(out[i].first));
    return out;
}

MapStack read_any_map(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw InputError("cannot open " + p.string());
    char first = 0;
    is.get(first);
    is.seekg(0);
    try {
        return first == 'K' && p.extension() == ".txt" ? read_map_text(is) : read_map_binary(is);
    } catch (const std::runtime_error& e) {
        throw InputError(p.string() + ": " + e.what());
    }
}

int cmd_decode_assemble(const DecodeOptions& o, const Log& log) {
    const Skeleton skel = load_skeleton(o.skeleton);
    const auto files = collect_map_files(o.maps);
    DetectionsFile out{{skel.name(), 0, 0, "detections"}, {}};
    const DecodeParams dp{o.threshold, o.nms, 5};
    const AssemblyParams ap{o.gate_frac};
    for (const auto& [frame, path] : files) {
        const MapStack maps = read_any_map(path);
        if (!maps.matches(skel)) throw InputError(path.string() + ": map channels do not match the skeleton");
        out.header.width = maps.width;
        out.header.height = maps.height;
        const CandidateSet cands = decode_candidates(maps.prob, dp);
        const auto skels = assemble(cands, maps, skel, ap);
        PoseFrame pf{frame, {}};
        for (const auto& s : skels) {
            Pose p = s.pose;
            p.frame_index = frame;
            pf.poses.push_back(std::move(p));
        }
        log.debug("frame " + std::to_string(frame) + ": " + std::to_string(pf.poses.size()) + " skeletons");
        out.frames.push_back(std::move(pf));
    }
    auto os = open_out(o.out);
    write_detections(os, out, skel);
    log.info("assembled " + std::to_string(out.frames.size()) + " frames");
    return kOk;
}

// ------------------------------------------------------------------------------------
// track

struct TrackOptions {
    std::string detections, skeleton, out;
    std::string r_star = "4";
    TrackerConfig cfg;
    bool no_adaptive = false, no_impute = false;
};

int cmd_track(const TrackOptions& o, const Log& log) {
    const Skeleton skel = load_skeleton(o.skeleton);
    auto is = open_in(o.detections, "detections");
    const DetectionsFile det = read_detections(is, skel);
    TrackerConfig cfg = o.cfg;
    cfg.adaptive = !o.no_adaptive;
    cfg.impute = !o.no_impute;
    if (!(cfg.gate_px >= 0.0) || !(cfg.freq_memory > 0.0 && cfg.freq_memory < 1.0) || !(cfg.r_scale > 0.0) ||
        !(cfg.q_pos_factor > 0.0) || !(cfg.q_vel_factor > 0.0) || !(cfg.p0_factor > 0.0) || !(cfg.coord_scale > 0.0))
        throw InputError("tracker parameters out of range");
    Tracker tracker(skel, parse_list(o.r_star, skel.size(), "--r-star"), cfg);
    TracksFile out{skel.name(), {}};
    std::optional<std::size_t> last;
    for (std::size_t i = 0; i < det.frames.size(); ++i) {
        const auto& fr = det.frames[i];
        for (std::size_t p = 0; p < fr.poses.size(); ++p)
            if (!is_valid_pose(skel, fr.poses[p]))
                throw InputError("frame " + std::to_string(fr.frame_index) + " pose " + std::to_string(p) +
                                     " is not a valid skeleton",
                                 i + 2);
        // Frames absent from the input are tracked as empty frames.
        if (last)
            for (std::size_t f = *last + 1; f < fr.frame_index; ++f) out.frames.push_back(tracker.step({}, f));
        out.frames.push_back(tracker.step(fr.poses, fr.frame_index));
        last = fr.frame_index;
    }
    auto os = open_out(o.out);
    write_tracks(os, out, skel);
    std::set<std::size_t> ids;
    for (const auto& f : out.frames)
        for (const auto& t : f.tracks) ids.insert(t.id);
    log.info("tracked " + std::to_string(out.frames.size()) + " frames, " + std::to_string(ids.size()) + " tracklets");
    return kOk;
}

// ------------------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
    std::string predictions, truth, skeleton, out, csv, samples;
    std::string source = "posterior";
    EvalParams params;
};

std::string peek_format(const std::string& path) {
    auto is = open_in(path, "predictions");
    std::string line;
    while (std::getline(is, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    if (line.empty()) return {};
    try {
        return json::parse(line).value("format", "");
    } catch (const json::exception&) {
        throw InputError("malformed header", 1);
    }
}

int cmd_evaluate(const EvaluateOptions& o, const Log& log) {
    const Skeleton skel = load_skeleton(o.skeleton);
    if (o.source != "posterior" && o.source != "observed") throw InputError("--source must be posterior or observed");
    auto ts = open_in(o.truth, "ground truth");
    const DetectionsFile truth = read_detections(ts, skel);

    std::map<std::size_t, std::vector<Pose>> predicted;
    std::vector<TrackFrame> tracks;
    const std::string format = peek_format(o.predictions);
    auto ps = open_in(o.predictions, "predictions");
    if (format == "keysort-tracks") {
        tracks = read_tracks(ps, skel).frames;
        for (const auto& fr : tracks) {
            std::set<std::size_t> seen;
            auto& poses = predicted[fr.frame_index];
            for (const auto& t : fr.tracks) {
                if (!seen.insert(t.id).second)
                    throw InputError("tracklet id " + std::to_string(t.id) + " appears twice in frame " +
                                     std::to_string(fr.frame_index));
                const Pose& p = o.source == "posterior" ? t.posterior : t.observed;
                if (p.present_count() > 0) poses.push_back(p);
            }
        }
    } else if (format == "keysort-detections" || format.empty()) {
        for (auto& fr : read_detections(ps, skel).frames) predicted[fr.frame_index] = std::move(fr.poses);
    } else {
        throw InputError("unsupported predictions format: " + format);
    }

    std::set<std::size_t> truth_frames;
    for (const auto& fr : truth.frames) truth_frames.insert(fr.frame_index);
    for (const auto& [f, poses] : predicted)
        if (!truth_frames.count(f) && !poses.empty())
            throw InputError("predictions for frame " + std::to_string(f) + " have no ground truth");

    std::vector<std::vector<Pose>> gt_frames, pred_frames;
    for (const auto& fr : truth.frames) {
        gt_frames.push_back(fr.poses);
        const auto it = predicted.find(fr.frame_index);
        pred_frames.push_back(it == predicted.end() ? std::vector<Pose>{} : it->second);
    }
    const EvalReport report = evaluate(gt_frames, pred_frames, skel, o.params, tracks);
    for (const auto& w : report.warnings) log.warn(w);
    {
        auto os = open_out(o.out);
        os << report_to_json(report).dump(2) << '\n';
    }
    if (!o.csv.empty()) {
        auto os = open_out(o.csv);
        write_report_csv(os, report);
    }
    if (!o.samples.empty()) {
        auto os = open_out(o.samples);
        write_samples_csv(os, report);
    }
    const auto eta = report.recovery.rate();
    log.info("evaluated " + std::to_string(report.frames) + " frames, eta " + (eta ? std::to_string(*eta) : "null"));
    return kOk;
}

// ------------------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    std::string scenario, skeleton, truth, detections;
};

int cmd_simulate(const SimulateOptions& o, const Log& log) {
    const Skeleton skel = load_skeleton(o.skeleton);
    auto is = open_in(o.scenario, "config");
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("scenario config: ") + e.what());
    }
    const ScenarioConfig cfg = scenario_from_json(j, skel);
    const auto truth = generate(cfg, skel);
    const auto det = corrupt(truth, cfg, skel);
    {
        auto os = open_out(o.truth);
        write_detections(os, truth_from(truth, skel, cfg.width, cfg.height), skel);
    }
    {
        auto os = open_out(o.detections);
        write_detections(os, detections_from(det, skel, cfg.width, cfg.height), skel);
    }
    log.info("simulated " + std::to_string(truth.size()) + " frames of " + std::to_string(cfg.animals.size()) +
             " animals");
    return kOk;
}

// ------------------------------------------------------------------------------------
// kf-demo

struct KfDemoOptions {
    std::string mode = "adaptive", out;
    KfDemoConfig cfg;
};

int cmd_kf_demo(const KfDemoOptions& o, const Log& log) {
    KfMode mode;
    try {
        mode = parse_kf_mode(o.mode);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    const KfDemoSeries s = run_kf_demo(o.cfg, mode);
    auto os = open_out(o.out);
    os << "step,truth,observation,estimate,alpha,gamma\n";
    for (std::size_t t = 0; t < s.truth.size(); ++t)
        os << t << ',' << json(s.truth[t]).dump() << ',' << json(s.observation[t]).dump() << ','
           << json(s.estimate[t]).dump() << ',' << json(s.alpha[t]).dump() << ',' << json(s.gamma[t]).dump() << '\n';
    const std::size_t sw = std::min(o.cfg.switch_at, s.truth.size());
    if (sw > 0 && sw < s.truth.size())
        log.info(std::string(to_string(mode)) + ": rmse before switch " +
                 std::to_string(rmse(s.estimate, s.truth, 0, sw)) + ", after " +
                 std::to_string(rmse(s.estimate, s.truth, sw, s.truth.size())));
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const Log log(err);
    CLI::App app{"Multi-animal keypoint map codec, skeleton assembly and KeySORT tracking"};
    app.name("keysort");
    app.require_subcommand(1);

    EncodeOptions enc;
    auto* encode = app.add_subcommand("encode", "Encode annotated poses into map files, one per frame");
    encode->add_option("--annotations", enc.annotations, "Annotation file (detections format)")->required();
    encode->add_option("--skeleton", enc.skeleton, "Skeleton config (default: built-in cattle6)");
    encode->add_option("--out", enc.out, "Output directory")->required();
    encode->add_option("--width", enc.width, "Image width (overrides the header)");
    encode->add_option("--height", enc.height, "Image height (overrides the header)");
    encode->add_flag("--text", enc.text, "Write the lossless text container instead of binary");

    DecodeOptions dec;
    auto* decode = app.add_subcommand("decode-assemble", "Decode map files and assemble skeletons");
    decode->add_option("--maps", dec.maps, "Map files or directories")->required();
    decode->add_option("--skeleton", dec.skeleton, "Skeleton config (default: built-in cattle6)");
    decode->add_option("--out", dec.out, "Output detections file")->required();
    decode->add_option("--threshold", dec.threshold, "Candidate probability threshold")->capture_default_str();
    decode->add_option("--nms", dec.nms, "Non-maximum suppression radius, px")->capture_default_str();
    decode->add_option("--gate-frac", dec.gate_frac, "Association gate as a fraction of the image diagonal")
        ->capture_default_str();

    TrackOptions trk;
    auto* track = app.add_subcommand("track", "Track skeletons across frames");
    track->add_option("--detections", trk.detections, "Detections file")->required();
    track->add_option("--skeleton", trk.skeleton, "Skeleton config (default: built-in cattle6)");
    track->add_option("--out", trk.out, "Output tracks file")->required();
    track->add_option("--gate", trk.cfg.gate_px, "Association gate on psi, original-image px")->capture_default_str();
    track->add_option("--max-missed", trk.cfg.max_missed_frames, "Consecutive misses tolerated")->capture_default_str();
    track->add_option("--maturity", trk.cfg.maturity_age, "Updates before misses are tolerated")->capture_default_str();
    track->add_option("--impute-max", trk.cfg.impute_max_consecutive, "Max consecutive imputed frames")
        ->capture_default_str();
    track->add_option("--impute-freq", trk.cfg.impute_freq_threshold, "Observation frequency needed to impute")
        ->capture_default_str();
    track->add_option("--freq-memory", trk.cfg.freq_memory, "Memory factor of the observation frequency")
        ->capture_default_str();
    track->add_option("--r-star", trk.r_star, "Per-keypoint observation variance, one value or one per category")
        ->capture_default_str();
    track->add_option("--r-scale", trk.cfg.r_scale, "R = R* x r-scale")->capture_default_str();
    track->add_option("--q-pos", trk.cfg.q_pos_factor, "Position system noise factor")->capture_default_str();
    track->add_option("--q-vel", trk.cfg.q_vel_factor, "Velocity system noise factor")->capture_default_str();
    track->add_option("--p0", trk.cfg.p0_factor, "Initial covariance factor on Q")->capture_default_str();
    track->add_option("--coord-scale", trk.cfg.coord_scale, "Original-image px per input px")->capture_default_str();
    track->add_option("--sign-window", trk.cfg.sign_window, "Innovation sign window")->capture_default_str();
    track->add_flag("--no-adaptive", trk.no_adaptive, "Use the standard Kalman update");
    track->add_flag("--no-impute", trk.no_impute, "Disable keypoint imputation");

    EvaluateOptions ev;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate tracks or detections against ground truth");
    evaluate_cmd->add_option("--predictions", ev.predictions, "Tracks or detections file")->required();
    evaluate_cmd->add_option("--truth", ev.truth, "Ground-truth file (detections format)")->required();
    evaluate_cmd->add_option("--skeleton", ev.skeleton, "Skeleton config (default: built-in cattle6)");
    evaluate_cmd->add_option("--out", ev.out, "Report (JSON)")->required();
    evaluate_cmd->add_option("--csv", ev.csv, "Per-category summary table (CSV)");
    evaluate_cmd->add_option("--samples", ev.samples, "Raw samples for plotting (CSV)");
    evaluate_cmd->add_option("--source", ev.source, "Track coordinates to evaluate: posterior or observed")
        ->capture_default_str();
    evaluate_cmd->add_option("--pair-gate", ev.params.pair_gate, "Skeleton pairing gate, original-image px")
        ->capture_default_str();
    evaluate_cmd->add_option("--coord-scale", ev.params.coord_scale, "Original-image px per input px")
        ->capture_default_str();

    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic scene and its detections");
    simulate->add_option("--scenario", sim.scenario, "Scenario config")->required();
    simulate->add_option("--skeleton", sim.skeleton, "Skeleton config (default: built-in cattle6)");
    simulate->add_option("--truth", sim.truth, "Output ground-truth file")->required();
    simulate->add_option("--detections", sim.detections, "Output detections file")->required();

    KfDemoOptions kf;
    auto* kfdemo = app.add_subcommand("kf-demo", "One-dimensional regime-switch filter comparison");
    kfdemo->add_option("--mode", kf.mode, "standard, standard-oracle, adaptive or adaptive-unmitigated")
        ->capture_default_str();
    kfdemo->add_option("--out", kf.out, "Output CSV")->required();
    kfdemo->add_option("--steps", kf.cfg.steps, "Number of steps")->capture_default_str();
    kfdemo->add_option("--switch-at", kf.cfg.switch_at, "Step at which the process noise jumps")->capture_default_str();
    kfdemo->add_option("--q", kf.cfg.q, "Process noise variance before the switch")->capture_default_str();
    kfdemo->add_option("--q-factor", kf.cfg.q_factor, "Process noise multiplier after the switch")
        ->capture_default_str();
    kfdemo->add_option("--r", kf.cfg.r, "Observation noise variance")->capture_default_str();
    kfdemo->add_option("--sign-window", kf.cfg.sign_window, "Innovation sign window")->capture_default_str();
    kfdemo->add_option("--seed", kf.cfg.seed, "Random seed")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInvalidInput;
    }

    try {
        if (*encode) return cmd_encode(enc, log);
        if (*decode) return cmd_decode_assemble(dec, log);
        if (*track) return cmd_track(trk, log);
        if (*evaluate_cmd) return cmd_evaluate(ev, log);
        if (*simulate) return cmd_simulate(sim, log);
        if (*kfdemo) return cmd_kf_demo(kf, log);
    } catch (const InputError& e) {
        log.error(e.what());
        return kInvalidInput;
    } catch (const std::invalid_argument& e) {
        log.error(e.what());
        return kInvalidInput;
    } catch (const std::exception& e) {
        log.error(e.what());
        return kRuntimeFailure;
    }
    return kInvalidInput;
}

}  // namespace keysort::cli
