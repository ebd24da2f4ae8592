#pragma once

// Scenario builders shared by unit and acceptance tests.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "keysort/pose.hpp"
#include "keysort/skeleton.hpp"
#include "keysort/synth.hpp"

namespace scenes {

using keysort::AnimalConfig;
using keysort::Point;
using keysort::Regime;
using keysort::RegimeSegment;
using keysort::ScenarioConfig;

inline ScenarioConfig cattle_base(std::size_t frames, std::uint64_t seed, double noise, double dropout) {
    ScenarioConfig c;
    c.width = 640;
    c.height = 480;
    c.frames = frames;
    c.seed = seed;
    c.template_offsets = keysort::cattle_template();
    c.detection_noise.assign(6, noise);
    c.dropout.assign(6, dropout);
    return c;
}

inline AnimalConfig stationary_animal(Point start, double heading, double wander = 0.0) {
    AnimalConfig a;
    a.start = start;
    a.heading = heading;
    a.schedule = {RegimeSegment{0, Regime::stationary, {0.0, 0.0}, wander, {0.0, 0.0}, 0}};
    return a;
}

inline AnimalConfig walking_animal(Point start, Point velocity, double wander = 0.0) {
    AnimalConfig a;
    a.start = start;
    a.heading = std::atan2(velocity.y, velocity.x);
    a.schedule = {RegimeSegment{0, Regime::walking, velocity, wander, {0.0, 0.0}, 0}};
    return a;
}

// Three lying animals and one slowly walking animal.
inline ScenarioConfig mostly_stationary(std::size_t frames, std::uint64_t seed, double noise, double dropout) {
    ScenarioConfig c = cattle_base(frames, seed, noise, dropout);
    c.template_jitter = 0.3;
    c.jitter_correlation = 0.95;
    c.animals = {stationary_animal({120.0, 120.0}, 0.3, 0.05), stationary_animal({480.0, 110.0}, 2.5, 0.05),
                 stationary_animal({150.0, 360.0}, -0.8, 0.05),
                 walking_animal({300.0, 300.0}, {0.6, -0.2}, 0.05)};
    return c;
}

// An animal that stands still, then starts walking forward at `speed` px per frame.
inline ScenarioConfig starts_walking(std::size_t frames, std::size_t start_walking, double speed) {
    ScenarioConfig c = cattle_base(frames, 7, 0.0, 0.0);
    AnimalConfig a;
    a.start = Point{150.0, 240.0};
    a.heading = 0.0;
    a.schedule = {RegimeSegment{0, Regime::stationary, {0.0, 0.0}, 0.0, {0.0, 0.0}, 0},
                  RegimeSegment{start_walking, Regime::walking, {speed, 0.0}, 0.0, {0.0, 0.0}, 0}};
    c.animals = {a};
    return c;
}

// Random poses of the cattle skeleton; keypoints of different animals stay `min_separation` apart.
inline std::vector<keysort::Pose> random_herd(std::mt19937_64& rng, std::size_t animals, std::size_t width,
                                              std::size_t height, double min_separation, double min_size = 0.8,
                                              double max_size = 1.2) {
    std::uniform_real_distribution<double> ux(70.0, static_cast<double>(width) - 70.0);
    std::uniform_real_distribution<double> uy(70.0, static_cast<double>(height) - 70.0);
    std::uniform_real_distribution<double> angle(-3.14159, 3.14159);
    std::uniform_real_distribution<double> size(min_size, max_size);
    std::uniform_real_distribution<double> presence(0.0, 1.0);
    const auto tpl = keysort::cattle_template();
    std::vector<keysort::Pose> out;
    std::size_t attempts = 0;
    while (out.size() < animals && ++attempts < 100000) {
        const Point root{ux(rng), uy(rng)};
        const double a = angle(rng);
        const double s = size(rng);
        keysort::Pose p(tpl.size(), 0);
        const keysort::Skeleton& skel = keysort::cattle_skeleton();
        for (std::size_t k = 0; k < tpl.size(); ++k) {
            // Root and tail always present; other keypoints missing 10% of the time, taking
            // their descendants with them.
            const auto parent = skel.parent(k);
            if (parent && !p.has(*parent)) continue;
            if (k != 0 && k != 1 && presence(rng) < 0.1) continue;
            const Point o = s * *tpl[k];
            p.coords[k] = root + Point{std::cos(a) * o.x - std::sin(a) * o.y, std::sin(a) * o.x + std::cos(a) * o.y};
        }
        bool ok = true;
        for (const auto& q : out)
            for (std::size_t i = 0; i < p.size() && ok; ++i)
                for (std::size_t j = 0; j < q.size() && ok; ++j)
                    if (p.has(i) && q.has(j) && keysort::distance(p.at(i), q.at(j)) < min_separation) ok = false;
        if (ok) out.push_back(std::move(p));
    }
    return out;
}

}  // namespace scenes
