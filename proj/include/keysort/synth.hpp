#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "keysort/assembly.hpp"
#include "keysort/assignment.hpp"
#include "keysort/map_codec.hpp"
#include "keysort/pose.hpp"
#include "keysort/skeleton.hpp"

// Synthetic multi-animal scenes: ground-truth skeleton trajectories driven by simple
// behavioural regimes, and a detection model that adds noise and drops keypoints.

namespace keysort {

enum class Regime { stationary, walking, abrupt_turn };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::stationary: return "stationary";
        case Regime::walking: return "walking";
        case Regime::abrupt_turn: return "abrupt-turn";
    }
    return "?";
}

inline Regime parse_regime(const std::string& s) {
    if (s == "stationary") return Regime::stationary;
    if (s == "walking") return Regime::walking;
    if (s == "abrupt-turn") return Regime::abrupt_turn;
    throw std::invalid_argument("unknown regime: " + s);
}

/// One stretch of an animal's schedule, active from `start` until the next segment.
/// An abrupt turn moves with `velocity` until `start + turn_after`, then with `turn_velocity`.
struct RegimeSegment {
    std::size_t start = 0;
    Regime regime = Regime::stationary;
    Point velocity{0.0, 0.0};       // px per frame; ignored when stationary
    double process_noise = 0.0;     // per-axis std of the root position noise, px per frame
    Point turn_velocity{0.0, 0.0};
    std::size_t turn_after = 0;
};

struct AnimalConfig {
    std::optional<Point> start;  // root position; automatic grid placement when empty
    double heading = 0.0;        // radians; the template faces +x at heading 0
    double size = 1.0;           // template scale factor
    std::vector<RegimeSegment> schedule;
};

struct ScenarioConfig {
    std::size_t width = 640;
    std::size_t height = 480;
    std::size_t frames = 100;
    std::uint64_t seed = 1;
    // Root-relative keypoint positions per category; the root entry must be (0, 0).
    std::vector<std::optional<Point>> template_offsets;
    double template_jitter = 0.0;         // stationary std of the offset jitter, px
    double jitter_correlation = 0.9;      // frame-to-frame AR(1) coefficient of the jitter
    std::vector<AnimalConfig> animals;
    std::vector<double> detection_noise;  // per-category std, px
    std::vector<double> dropout;          // per-category probability
};

struct GroundTruthFrame {
    std::size_t frame_index = 0;
    std::vector<Pose> poses;             // one per animal
    std::vector<Regime> regimes;

    friend bool operator==(const GroundTruthFrame&, const GroundTruthFrame&) = default;
};

using GroundTruthSequence = std::vector<GroundTruthFrame>;

struct DetectionFrame {
    std::size_t frame_index = 0;
    std::vector<Pose> poses;
    std::vector<std::size_t> sources;  // animal index per pose; not serialized

    friend bool operator==(const DetectionFrame&, const DetectionFrame&) = default;
};

inline void validate_scenario(const ScenarioConfig& cfg, const Skeleton& skel) {
    const std::size_t c = skel.size();
    if (cfg.template_offsets.size() != c) throw std::invalid_argument("scenario: template needs one entry per category");
    const auto& root = cfg.template_offsets[skel.root()];
    if (!root || root->x != 0.0 || root->y != 0.0) throw std::invalid_argument("scenario: root template offset must be (0, 0)");
    Pose tpl(c);
    tpl.coords = cfg.template_offsets;
    if (!is_valid_pose(skel, tpl)) throw std::invalid_argument("scenario: template lacks a dominant connection");
    if (cfg.detection_noise.size() != c || cfg.dropout.size() != c)
        throw std::invalid_argument("scenario: detection noise and dropout need one entry per category");
    for (double s : cfg.detection_noise)
        if (!(s >= 0.0)) throw std::invalid_argument("scenario: detection noise must be >= 0");
    for (double p : cfg.dropout)
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("scenario: dropout must lie in [0, 1]");
    if (!(cfg.template_jitter >= 0.0)) throw std::invalid_argument("scenario: jitter must be >= 0");
    if (!(cfg.jitter_correlation >= 0.0 && cfg.jitter_correlation < 1.0))
        throw std::invalid_argument("scenario: jitter correlation must lie in [0, 1)");
    if (cfg.width == 0 || cfg.height == 0) throw std::invalid_argument("scenario: empty arena");
    for (const auto& a : cfg.animals) {
        if (!(a.size > 0.0)) throw std::invalid_argument("scenario: animal size must be positive");
        for (std::size_t i = 0; i < a.schedule.size(); ++i) {
            if (i > 0 && a.schedule[i].start <= a.schedule[i - 1].start)
                throw std::invalid_argument("scenario: schedule starts must increase");
            if (!(a.schedule[i].process_noise >= 0.0))
                throw std::invalid_argument("scenario: process noise must be >= 0");
        }
    }
}

namespace detail {

inline Point rotate(Point p, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * p.x - s * p.y, s * p.x + c * p.y};
}

inline double template_radius(const ScenarioConfig& cfg) {
    double r = 0.0;
    for (const auto& o : cfg.template_offsets)
        if (o) r = std::max(r, norm(*o));
    return r;
}

// Root positions on a regular grid of cells wide enough for two template radii.
inline std::vector<Point> auto_positions(const ScenarioConfig& cfg) {
    double max_size = 1.0;
    for (const auto& a : cfg.animals) max_size = std::max(max_size, a.size);
    const double cell = 2.0 * template_radius(cfg) * max_size + 20.0;
    const auto cols = static_cast<std::size_t>(static_cast<double>(cfg.width) / cell);
    const auto rows = static_cast<std::size_t>(static_cast<double>(cfg.height) / cell);
    if (cols * rows < cfg.animals.size())
        throw std::invalid_argument("scenario: arena too small for " + std::to_string(cfg.animals.size()) +
                                    " animals");
    std::vector<Point> out;
    for (std::size_t i = 0; i < cfg.animals.size(); ++i)
        out.push_back({(static_cast<double>(i % cols) + 0.5) * cell, (static_cast<double>(i / cols) + 0.5) * cell});
    return out;
}

inline const RegimeSegment* active_segment(const AnimalConfig& a, std::size_t frame) {
    const RegimeSegment* seg = nullptr;
    for (const auto& s : a.schedule)
        if (s.start <= frame) seg = &s;
    return seg;
}

inline Point segment_velocity(const RegimeSegment& s, std::size_t frame) {
    switch (s.regime) {
        case Regime::stationary: return {0.0, 0.0};
        case Regime::walking: return s.velocity;
        case Regime::abrupt_turn: return frame >= s.start + s.turn_after ? s.turn_velocity : s.velocity;
    }
    return {0.0, 0.0};
}

}  // namespace detail

/// Ground-truth poses for every animal and frame. Deterministic per seed.
inline GroundTruthSequence generate(const ScenarioConfig& cfg, const Skeleton& skel) {
    validate_scenario(cfg, skel);
    const std::size_t c = skel.size();
    const auto grid = detail::auto_positions(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    struct AnimalState {
        Point root;
        std::vector<Point> jitter;
    };
    std::vector<AnimalState> state;
    for (std::size_t i = 0; i < cfg.animals.size(); ++i) {
        AnimalState s{cfg.animals[i].start.value_or(grid[i]), std::vector<Point>(c, Point{0.0, 0.0})};
        for (auto& j : s.jitter) j = {cfg.template_jitter * normal(rng), cfg.template_jitter * normal(rng)};
        state.push_back(std::move(s));
    }

    const double rho = cfg.jitter_correlation;
    const double innov = cfg.template_jitter * std::sqrt(1.0 - rho * rho);
    GroundTruthSequence seq;
    for (std::size_t f = 0; f < cfg.frames; ++f) {
        GroundTruthFrame frame{f, {}, {}};
        for (std::size_t i = 0; i < cfg.animals.size(); ++i) {
            const AnimalConfig& a = cfg.animals[i];
            AnimalState& s = state[i];
            const RegimeSegment* seg = detail::active_segment(a, f);
            if (f > 0) {
                if (seg) {
                    s.root = s.root + detail::segment_velocity(*seg, f);
                    if (seg->process_noise > 0.0)
                        s.root = s.root + Point{seg->process_noise * normal(rng), seg->process_noise * normal(rng)};
                }
                if (cfg.template_jitter > 0.0)
                    for (auto& j : s.jitter) j = rho * j + Point{innov * normal(rng), innov * normal(rng)};
            }
            Pose p(c, f);
            for (std::size_t k = 0; k < c; ++k) {
                if (!cfg.template_offsets[k]) continue;
                const Point local = k == skel.root() ? Point{0.0, 0.0} : a.size * *cfg.template_offsets[k] + s.jitter[k];
                p.coords[k] = s.root + detail::rotate(local, a.heading);
            }
            frame.poses.push_back(std::move(p));
            frame.regimes.push_back(seg ? seg->regime : Regime::stationary);
        }
        seq.push_back(std::move(frame));
    }
    return seq;
}

/// Detections from ground truth: keypoints outside the arena or dropped with their category's
/// probability vanish, the rest get iid Gaussian noise; poses left invalid are removed.
/// Deterministic per seed; uses a random stream independent from generate().
inline std::vector<DetectionFrame> corrupt(const GroundTruthSequence& truth, const ScenarioConfig& cfg,
                                           const Skeleton& skel) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0xdecu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double w = static_cast<double>(cfg.width);
    const double h = static_cast<double>(cfg.height);
    std::vector<DetectionFrame> out;
    for (const auto& frame : truth) {
        DetectionFrame det{frame.frame_index, {}, {}};
        for (std::size_t i = 0; i < frame.poses.size(); ++i) {
            const Pose& t = frame.poses[i];
            Pose p(t.size(), t.frame_index);
            for (std::size_t k = 0; k < t.size(); ++k) {
                // Draws happen for every keypoint so streams stay aligned across configs.
                const double u = uniform(rng);
                const Point n{normal(rng), normal(rng)};
                if (!t.has(k) || u < cfg.dropout[k]) continue;
                const Point q = t.at(k) + cfg.detection_noise[k] * n;
                if (q.x < 0.0 || q.y < 0.0 || q.x > w - 1.0 || q.y > h - 1.0) continue;
                p.coords[k] = q;
            }
            if (!is_valid_pose(skel, p)) continue;
            det.poses.push_back(std::move(p));
            det.sources.push_back(i);
        }
        out.push_back(std::move(det));
    }
    return out;
}

/// Anatomical template for the six-keypoint cattle skeleton, facing +x, in pixels at
/// roughly 480 px frame width.
inline std::vector<std::optional<Point>> cattle_template() {
    // w, t, h, n, lh, rh
    return {Point{0.0, 0.0}, Point{-60.0, 0.0}, Point{20.0, 0.0}, Point{34.0, 5.0}, Point{-39.0, -12.5},
            Point{-39.0, 12.5}};
}

// ---------------------------------------------------------------------------------------
// Parallel-row scene where optimal assignment shifts every pair by one row

struct ParallelRowsScene {
    Skeleton skeleton;                          // categories a, b; single dominant connection a->b
    MapStack maps;                              // exact maps from all six ground-truth animals
    CandidateSet candidates;                    // detected keypoints only
    std::vector<std::optional<std::size_t>> truth;  // per 'a' candidate: index of its true 'b' candidate
    double gate = 0.0;                          // 5% of the image diagonal
};

inline SkeletonSpec two_point_spec() {
    SkeletonSpec s;
    s.name = "two-point";
    s.categories = {"a", "b"};
    s.root = "a";
    s.connections = {{"a", "b", false}};
    s.dominant = {{"a", "b", 1.0}};
    s.reference = {"a", "b"};
    return s;
}

/// Six column-aligned a->b rows 25 px apart, 60 px long, on a 640x480 image (gate 40 px).
/// The first 'a' and the last 'b' are not detected.
inline ParallelRowsScene parallel_rows_scene() {
    const std::size_t rows = 6;
    const double spacing = 25.0;
    ParallelRowsScene scene{Skeleton(two_point_spec()), {}, CandidateSet(2), {}, 0.0};
    std::vector<Pose> truth;
    for (std::size_t i = 0; i < rows; ++i) {
        Pose p(2, 0);
        const double y = 140.0 + spacing * static_cast<double>(i);
        p.coords[0] = Point{100.0, y};
        p.coords[1] = Point{160.0, y};
        truth.push_back(p);
    }
    scene.maps = encode_maps(truth, scene.skeleton, scene.skeleton.encoder(), 640, 480);
    scene.gate = 0.05 * std::hypot(640.0, 480.0);
    for (std::size_t i = 1; i < rows; ++i) scene.candidates[0].push_back({0, *truth[i].coords[0], 1.0});
    for (std::size_t i = 0; i + 1 < rows; ++i) scene.candidates[1].push_back({1, *truth[i].coords[1], 1.0});
    // 'a' candidate j is row j + 1, whose 'b' is candidate j + 1 (undetected for the last row).
    for (std::size_t j = 0; j < scene.candidates[0].size(); ++j) {
        const std::size_t b = j + 1;
        scene.truth.push_back(b < scene.candidates[1].size() ? std::optional<std::size_t>(b) : std::nullopt);
    }
    return scene;
}

/// Number of 'a' candidates whose outcome is right: paired with their true partner, or left
/// unpaired when that partner was not detected.
inline std::size_t correct_outcomes(const Matching& m, const std::vector<std::optional<std::size_t>>& truth) {
    std::vector<std::optional<std::size_t>> got(truth.size());
    for (const auto& a : m) got[a.row] = a.col;
    std::size_t n = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (got[i] == truth[i]) ++n;
    return n;
}

}  // namespace keysort
