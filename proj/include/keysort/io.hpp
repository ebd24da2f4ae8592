#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "keysort/metrics.hpp"
#include "keysort/pose.hpp"
#include "keysort/skeleton.hpp"
#include "keysort/synth.hpp"
#include "keysort/tracker.hpp"

// Text formats. Every document starts with a "format" name and an integer "version".
//
//   skeleton config    one JSON object
//   scenario config    one JSON object
//   detections         JSON lines: header, then {"frame_index", "poses": [{cat: [x, y] | null}]}
//   tracks             JSON lines: header, then {"frame_index", "tracks": [...]}
//   evaluation report  one JSON object, plus CSV tables for plotting

namespace keysort {

using nlohmann::json;

/// Malformed or inconsistent input. `line` is 1-based when known.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

inline constexpr int kFormatVersion = 1;

namespace detail {

inline void check_header(const json& j, const std::string& format, std::size_t line = 0) {
    if (!j.is_object() || !j.contains("format") || j.at("format") != format)
        throw InputError("expected a '" + format + "' document", line);
    if (!j.contains("version") || !j.at("version").is_number_integer() || j.at("version").get<int>() != kFormatVersion)
        throw InputError("unsupported " + format + " version", line);
}

inline json point_json(Point p) { return json::array({p.x, p.y}); }

inline Point point_from(const json& j, std::size_t line = 0) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw InputError("expected [x, y]", line);
    const Point p{j[0].get<double>(), j[1].get<double>()};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InputError("non-finite coordinate", line);
    return p;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace detail

inline json pose_json(const Pose& p, const Skeleton& skel) {
    json o = json::object();
    for (std::size_t k = 0; k < skel.size(); ++k)
        o[skel.category(k)] = p.has(k) ? detail::point_json(p.at(k)) : json(nullptr);
    return o;
}

inline Pose pose_from_json(const json& j, const Skeleton& skel, std::size_t frame, std::size_t line = 0) {
    if (!j.is_object()) throw InputError("pose must be an object", line);
    Pose p(skel.size(), frame);
    for (const auto& [key, value] : j.items()) {
        const auto k = skel.find(key);
        if (!k) throw InputError("unknown category '" + key + "'", line);
        if (!value.is_null()) p.coords[*k] = detail::point_from(value, line);
    }
    return p;
}

// ---------------------------------------------------------------------------------------
// Skeleton config

inline json skeleton_to_json(const SkeletonSpec& s) {
    json j{{"format", "keysort-skeleton"}, {"version", kFormatVersion}, {"name", s.name},
           {"categories", s.categories}, {"root", s.root}};
    j["connections"] = json::array();
    for (const auto& c : s.connections) {
        json cj{{"parent", c.parent}, {"child", c.child}};
        if (c.training_only) cj["training_only"] = true;
        j["connections"].push_back(cj);
    }
    j["dominant"] = json::array();
    for (const auto& d : s.dominant) j["dominant"].push_back({{"parent", d.parent}, {"child", d.child}, {"beta", d.beta}});
    j["reference"] = {{"parent", s.reference.parent}, {"child", s.reference.child}};
    j["symmetric"] = json::array();
    for (const auto& [l, r] : s.symmetric) j["symmetric"].push_back({l, r});
    j["encoder"] = {{"theta", s.encoder.theta}, {"gamma", s.encoder.gamma}, {"kernel_extent", s.encoder.kernel_extent}};
    return j;
}

/// Parses and validates a skeleton config; violations are reported together.
inline SkeletonSpec skeleton_from_json(const json& j) {
    detail::check_header(j, "keysort-skeleton");
    SkeletonSpec s;
    try {
        s.name = detail::get_or<std::string>(j, "name", "");
        s.categories = j.at("categories").get<std::vector<std::string>>();
        s.root = j.at("root").get<std::string>();
        for (const auto& c : j.at("connections"))
            s.connections.push_back({c.at("parent").get<std::string>(), c.at("child").get<std::string>(),
                                     detail::get_or<bool>(c, "training_only", false)});
        for (const auto& d : j.at("dominant"))
            s.dominant.push_back({d.at("parent").get<std::string>(), d.at("child").get<std::string>(),
                                  detail::get_or<double>(d, "beta", 1.0)});
        s.reference = {j.at("reference").at("parent").get<std::string>(),
                       j.at("reference").at("child").get<std::string>()};
        if (j.contains("symmetric"))
            for (const auto& pair : j.at("symmetric")) {
                const auto v = pair.get<std::vector<std::string>>();
                if (v.size() != 2) throw InputError("symmetric entries must name two categories");
                s.symmetric.emplace_back(v[0], v[1]);
            }
        if (j.contains("encoder")) {
            const auto& e = j.at("encoder");
            s.encoder.theta = detail::get_or<double>(e, "theta", s.encoder.theta);
            s.encoder.gamma = detail::get_or<double>(e, "gamma", s.encoder.gamma);
            s.encoder.kernel_extent = detail::get_or<double>(e, "kernel_extent", s.encoder.kernel_extent);
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("skeleton config: ") + e.what());
    }
    const auto violations = validate_spec(s);
    if (!violations.empty()) {
        std::string msg = "skeleton config invalid";
        for (const auto& v : violations) msg += "; " + v;
        throw InputError(msg);
    }
    return s;
}

inline SkeletonSpec read_skeleton(std::istream& is) {
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("skeleton config: ") + e.what());
    }
    return skeleton_from_json(j);
}

// ---------------------------------------------------------------------------------------
// Detections (also used for ground truth and annotations)

struct DetectionsHeader {
    std::string skeleton;
    std::size_t width = 0;
    std::size_t height = 0;
    std::string kind = "detections";  // "detections", "ground-truth" or "annotations"
};

struct PoseFrame {
    std::size_t frame_index = 0;
    std::vector<Pose> poses;

    friend bool operator==(const PoseFrame&, const PoseFrame&) = default;
};

struct DetectionsFile {
    DetectionsHeader header;
    std::vector<PoseFrame> frames;
};

inline void write_detections(std::ostream& os, const DetectionsFile& f, const Skeleton& skel) {
    os << json{{"format", "keysort-detections"}, {"version", kFormatVersion}, {"kind", f.header.kind},
               {"skeleton", f.header.skeleton}, {"width", f.header.width}, {"height", f.header.height},
               {"categories", skel.categories()}}
              .dump()
       << '\n';
    for (const auto& fr : f.frames) {
        json poses = json::array();
        for (const auto& p : fr.poses) poses.push_back(pose_json(p, skel));
        os << json{{"frame_index", fr.frame_index}, {"poses", poses}}.dump() << '\n';
    }
    if (!os) throw std::runtime_error("failed writing detections");
}

namespace detail {

// Reads non-empty lines, tracking 1-based line numbers.
template <typename Fn>
void for_each_json_line(std::istream& is, Fn&& fn) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError(std::string("malformed record: ") + e.what(), n);
        }
        fn(j, n);
    }
}

inline std::size_t frame_index_of(const json& j, std::size_t line, const std::optional<std::size_t>& previous) {
    if (!j.contains("frame_index") || !j.at("frame_index").is_number_unsigned())
        throw InputError("record needs a non-negative integer frame_index", line);
    const auto f = j.at("frame_index").get<std::size_t>();
    if (previous && f <= *previous) throw InputError("frame_index must increase strictly", line);
    return f;
}

}  // namespace detail

/// Reads a detections file. An empty stream yields no header and no frames.
inline DetectionsFile read_detections(std::istream& is, const Skeleton& skel) {
    DetectionsFile f;
    bool have_header = false;
    std::optional<std::size_t> previous;
    detail::for_each_json_line(is, [&](const json& j, std::size_t line) {
        if (!have_header) {
            detail::check_header(j, "keysort-detections", line);
            f.header.kind = detail::get_or<std::string>(j, "kind", "detections");
            f.header.skeleton = detail::get_or<std::string>(j, "skeleton", "");
            f.header.width = detail::get_or<std::size_t>(j, "width", 0);
            f.header.height = detail::get_or<std::size_t>(j, "height", 0);
            if (j.contains("categories") && j.at("categories").get<std::vector<std::string>>() != skel.categories())
                throw InputError("categories do not match the skeleton config", line);
            have_header = true;
            return;
        }
        PoseFrame fr;
        fr.frame_index = detail::frame_index_of(j, line, previous);
        previous = fr.frame_index;
        if (!j.contains("poses") || !j.at("poses").is_array()) throw InputError("record needs a poses array", line);
        for (const auto& p : j.at("poses")) fr.poses.push_back(pose_from_json(p, skel, fr.frame_index, line));
        f.frames.push_back(std::move(fr));
    });
    return f;
}

inline DetectionsFile detections_from(const std::vector<DetectionFrame>& frames, const Skeleton& skel,
                                      std::size_t width, std::size_t height) {
    DetectionsFile f{{skel.name(), width, height, "detections"}, {}};
    for (const auto& fr : frames) f.frames.push_back({fr.frame_index, fr.poses});
    return f;
}

inline DetectionsFile truth_from(const GroundTruthSequence& seq, const Skeleton& skel, std::size_t width,
                                 std::size_t height) {
    DetectionsFile f{{skel.name(), width, height, "ground-truth"}, {}};
    for (const auto& fr : seq) f.frames.push_back({fr.frame_index, fr.poses});
    return f;
}

// ---------------------------------------------------------------------------------------
// Tracks

struct TracksFile {
    std::string skeleton;
    std::vector<TrackFrame> frames;
};

inline json tracked_pose_json(const TrackedPose& t, const Skeleton& skel) {
    json imputed = json::array();
    for (std::size_t k = 0; k < t.imputed.size(); ++k)
        if (t.imputed[k]) imputed.push_back(skel.category(k));
    return {{"id", t.id},
            {"initiated", t.initiated},
            {"observed", pose_json(t.observed, skel)},
            {"prior", pose_json(t.prior, skel)},
            {"posterior", pose_json(t.posterior, skel)},
            {"imputed", imputed},
            {"alpha", t.alpha},
            {"gamma", t.gamma},
            {"psi", t.psi ? json(*t.psi) : json(nullptr)}};
}

inline void write_tracks(std::ostream& os, const TracksFile& f, const Skeleton& skel) {
    os << json{{"format", "keysort-tracks"}, {"version", kFormatVersion}, {"skeleton", f.skeleton},
               {"categories", skel.categories()}}
              .dump()
       << '\n';
    for (const auto& fr : f.frames) {
        json tracks = json::array();
        for (const auto& t : fr.tracks) tracks.push_back(tracked_pose_json(t, skel));
        os << json{{"frame_index", fr.frame_index}, {"tracks", tracks}}.dump() << '\n';
    }
    if (!os) throw std::runtime_error("failed writing tracks");
}

inline TracksFile read_tracks(std::istream& is, const Skeleton& skel) {
    TracksFile f;
    bool have_header = false;
    std::optional<std::size_t> previous;
    detail::for_each_json_line(is, [&](const json& j, std::size_t line) {
        if (!have_header) {
            detail::check_header(j, "keysort-tracks", line);
            f.skeleton = detail::get_or<std::string>(j, "skeleton", "");
            if (j.contains("categories") && j.at("categories").get<std::vector<std::string>>() != skel.categories())
                throw InputError("categories do not match the skeleton config", line);
            have_header = true;
            return;
        }
        TrackFrame fr;
        fr.frame_index = detail::frame_index_of(j, line, previous);
        previous = fr.frame_index;
        try {
            for (const auto& t : j.at("tracks")) {
                TrackedPose tp;
                tp.id = t.at("id").get<std::size_t>();
                tp.initiated = detail::get_or<bool>(t, "initiated", false);
                tp.observed = pose_from_json(t.at("observed"), skel, fr.frame_index, line);
                tp.prior = pose_from_json(t.at("prior"), skel, fr.frame_index, line);
                tp.posterior = pose_from_json(t.at("posterior"), skel, fr.frame_index, line);
                tp.imputed.assign(skel.size(), false);
                for (const auto& name : t.at("imputed")) {
                    const auto k = skel.find(name.get<std::string>());
                    if (!k) throw InputError("unknown imputed category", line);
                    tp.imputed[*k] = true;
                }
                tp.alpha = t.at("alpha").get<double>();
                tp.gamma = t.at("gamma").get<double>();
                if (!t.at("psi").is_null()) tp.psi = t.at("psi").get<double>();
                fr.tracks.push_back(std::move(tp));
            }
        } catch (const json::exception& e) {
            throw InputError(std::string("malformed track record: ") + e.what(), line);
        }
        f.frames.push_back(std::move(fr));
    });
    return f;
}

// ---------------------------------------------------------------------------------------
// Scenario config

inline std::vector<double> per_category(const json& j, const Skeleton& skel, const char* what) {
    if (j.is_number()) return std::vector<double>(skel.size(), j.get<double>());
    if (!j.is_object()) throw InputError(std::string("scenario: ") + what + " must be a number or a category map");
    std::vector<double> out(skel.size(), 0.0);
    for (const auto& [key, value] : j.items()) {
        const auto k = skel.find(key);
        if (!k) throw InputError(std::string("scenario: unknown category in ") + what + ": " + key);
        out[*k] = value.get<double>();
    }
    return out;
}

inline ScenarioConfig scenario_from_json(const json& j, const Skeleton& skel) {
    detail::check_header(j, "keysort-scenario");
    ScenarioConfig c;
    try {
        c.width = detail::get_or<std::size_t>(j, "width", c.width);
        c.height = detail::get_or<std::size_t>(j, "height", c.height);
        c.frames = detail::get_or<std::size_t>(j, "frames", c.frames);
        c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
        c.template_offsets.assign(skel.size(), std::nullopt);
        for (const auto& [key, value] : j.at("template").items()) {
            const auto k = skel.find(key);
            if (!k) throw InputError("scenario: unknown template category " + key);
            if (!value.is_null()) c.template_offsets[*k] = detail::point_from(value);
        }
        c.template_jitter = detail::get_or<double>(j, "template_jitter", c.template_jitter);
        c.jitter_correlation = detail::get_or<double>(j, "jitter_correlation", c.jitter_correlation);
        c.detection_noise = per_category(j.value("detection_noise", json(0.0)), skel, "detection_noise");
        c.dropout = per_category(j.value("dropout", json(0.0)), skel, "dropout");
        for (const auto& a : j.at("animals")) {
            AnimalConfig ac;
            if (a.contains("start") && !a.at("start").is_null()) ac.start = detail::point_from(a.at("start"));
            ac.heading = detail::get_or<double>(a, "heading", 0.0);
            ac.size = detail::get_or<double>(a, "size", 1.0);
            for (const auto& s : a.value("schedule", json::array())) {
                RegimeSegment seg;
                seg.start = detail::get_or<std::size_t>(s, "start", 0);
                seg.regime = parse_regime(s.at("regime").get<std::string>());
                if (s.contains("velocity")) seg.velocity = detail::point_from(s.at("velocity"));
                seg.process_noise = detail::get_or<double>(s, "process_noise", 0.0);
                if (s.contains("turn_velocity")) seg.turn_velocity = detail::point_from(s.at("turn_velocity"));
                seg.turn_after = detail::get_or<std::size_t>(s, "turn_after", 0);
                ac.schedule.push_back(seg);
            }
            c.animals.push_back(std::move(ac));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("scenario config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    try {
        validate_scenario(c, skel);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    return c;
}

inline json scenario_to_json(const ScenarioConfig& c, const Skeleton& skel) {
    json tpl = json::object();
    for (std::size_t k = 0; k < skel.size(); ++k)
        tpl[skel.category(k)] = c.template_offsets[k] ? detail::point_json(*c.template_offsets[k]) : json(nullptr);
    json noise = json::object(), drop = json::object();
    for (std::size_t k = 0; k < skel.size(); ++k) {
        noise[skel.category(k)] = c.detection_noise[k];
        drop[skel.category(k)] = c.dropout[k];
    }
    json animals = json::array();
    for (const auto& a : c.animals) {
        json sched = json::array();
        for (const auto& s : a.schedule)
            sched.push_back({{"start", s.start},
                             {"regime", to_string(s.regime)},
                             {"velocity", detail::point_json(s.velocity)},
                             {"process_noise", s.process_noise},
                             {"turn_velocity", detail::point_json(s.turn_velocity)},
                             {"turn_after", s.turn_after}});
        animals.push_back({{"start", a.start ? detail::point_json(*a.start) : json(nullptr)},
                           {"heading", a.heading},
                           {"size", a.size},
                           {"schedule", sched}});
    }
    return {{"format", "keysort-scenario"},
            {"version", kFormatVersion},
            {"width", c.width},
            {"height", c.height},
            {"frames", c.frames},
            {"seed", c.seed},
            {"template", tpl},
            {"template_jitter", c.template_jitter},
            {"jitter_correlation", c.jitter_correlation},
            {"detection_noise", noise},
            {"dropout", drop},
            {"animals", animals}};
}

// ---------------------------------------------------------------------------------------
// Evaluation report

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json quantiles_json(const QuantileSummary& q) {
    return {{"count", q.count}, {"q05", optional_json(q.q05)}, {"q50", optional_json(q.q50)}, {"q95", optional_json(q.q95)}};
}

inline json report_to_json(const EvalReport& r) {
    json cats = json::array();
    for (const auto& c : r.categories)
        cats.push_back({{"category", c.category},
                        {"recovered", c.recovery.recovered},
                        {"ground_truth", c.recovery.total},
                        {"eta", optional_json(c.recovery.rate())},
                        {"relative_error_mean", optional_json(c.rel_error_mean)},
                        {"relative_error_std", optional_json(c.rel_error_std)},
                        {"relative_error_count", c.rel_error_count},
                        {"frame_difference_observed", quantiles_json(c.frame_diff_observed)},
                        {"frame_difference_posterior", quantiles_json(c.frame_diff_posterior)}});
    return {{"format", "keysort-report"},
            {"version", kFormatVersion},
            {"frames", r.frames},
            {"eta", optional_json(r.recovery.rate())},
            {"unpaired_ground_truth", r.unpaired_gt},
            {"unpaired_predictions", r.unpaired_pred},
            {"categories", cats},
            {"warnings", r.warnings}};
}

/// Per-category summary table (one row per category).
inline void write_report_csv(std::ostream& os, const EvalReport& r) {
    auto cell = [&](const std::optional<double>& v) {
        if (v) os << json(*v).dump();
    };
    os << "category,eta,relative_error_mean,relative_error_std,fd_observed_q05,fd_observed_q50,fd_observed_q95,"
          "fd_posterior_q05,fd_posterior_q50,fd_posterior_q95\n";
    for (const auto& c : r.categories) {
        os << c.category << ',';
        cell(c.recovery.rate());
        os << ',';
        cell(c.rel_error_mean);
        os << ',';
        cell(c.rel_error_std);
        for (const auto* q : {&c.frame_diff_observed, &c.frame_diff_posterior}) {
            os << ',';
            cell(q->q05);
            os << ',';
            cell(q->q50);
            os << ',';
            cell(q->q95);
        }
        os << '\n';
    }
}

/// Long-format samples for plotting: series,category,value.
inline void write_samples_csv(std::ostream& os, const EvalReport& r) {
    os << "series,category,value\n";
    auto dump = [&](const char* series, const std::vector<std::vector<double>>& per_cat) {
        for (std::size_t k = 0; k < per_cat.size() && k < r.categories.size(); ++k)
            for (double v : per_cat[k]) os << series << ',' << r.categories[k].category << ',' << json(v).dump() << '\n';
    };
    dump("relative_error", r.rel_error_samples);
    dump("frame_difference_observed", r.frame_diffs.observed);
    dump("frame_difference_posterior", r.frame_diffs.posterior);
}

}  // namespace keysort
