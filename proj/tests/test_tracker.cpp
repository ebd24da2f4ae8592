#include <gtest/gtest.h>

#include <random>
#include <set>

#include "keysort/synth.hpp"
#include "keysort/tracker.hpp"
#include "support/scenes.hpp"

using namespace keysort;

namespace {

const Skeleton& skel() { return cattle_skeleton(); }

std::vector<double> r_star() { return std::vector<double>(6, 4.0); }

Pose animal_at(Point root, std::size_t frame = 0) {
    Pose p(skel().size(), frame);
    const auto tpl = cattle_template();
    for (std::size_t k = 0; k < skel().size(); ++k) p.coords[k] = root + *tpl[k];
    return p;
}

Pose without(Pose p, const char* category) {
    p.coords[skel().index(category)].reset();
    return p;
}

TrackFrame step_one(Tracker& t, const Pose& p, std::size_t frame) { return t.step(std::vector<Pose>{p}, frame); }

TrackFrame step_none(Tracker& t, std::size_t frame) { return t.step(std::vector<Pose>{}, frame); }

}  // namespace

TEST(BuildModel, Dimensions) {
    const TrackerModel m = build_model(skel(), r_star());
    EXPECT_EQ(m.state_dim(), 24);
    EXPECT_EQ(m.obs_dim(), 12);
    EXPECT_NO_THROW(m.filter.check());
}

TEST(BuildModel, ObservationRowsSumTheChain) {
    const TrackerModel m = build_model(skel(), r_star());
    const auto w = static_cast<Eigen::Index>(skel().index("w"));
    const auto h = static_cast<Eigen::Index>(skel().index("h"));
    const auto n = static_cast<Eigen::Index>(skel().index("n"));
    VectorXd head_row = VectorXd::Zero(24);
    head_row(2 * w) = 1;
    head_row(2 * h) = 1;
    EXPECT_EQ(VectorXd(m.filter.H.row(2 * h)), head_row);
    VectorXd nose_row = head_row;
    nose_row(2 * n) = 1;
    EXPECT_EQ(VectorXd(m.filter.H.row(2 * n)), nose_row);
    // y rows use the odd state entries; velocities never enter H.
    EXPECT_EQ(m.filter.H(2 * n + 1, 2 * h + 1), 1.0);
    EXPECT_TRUE(m.filter.H.rightCols(12).isZero());
}

TEST(BuildModel, NoiseScaling) {
    TrackerConfig cfg;
    std::vector<double> r{1, 2, 3, 4, 5, 6};
    const TrackerModel m = build_model(skel(), r, cfg);
    EXPECT_DOUBLE_EQ(m.filter.R(4, 4), 3.0 * cfg.r_scale);
    const double mean_r = 3.5 * cfg.r_scale;
    EXPECT_DOUBLE_EQ(m.filter.Q(0, 0), mean_r * cfg.q_pos_factor);
    EXPECT_DOUBLE_EQ(m.filter.Q(23, 23), mean_r * cfg.q_vel_factor);
    EXPECT_DOUBLE_EQ(m.P0(0, 0), m.filter.Q(0, 0) * cfg.p0_factor);
}

TEST(BuildModel, RejectsBadNoise) {
    EXPECT_THROW(build_model(skel(), std::vector<double>(5, 1.0)), std::invalid_argument);
    std::vector<double> r = r_star();
    r[2] = 0.0;
    EXPECT_THROW(build_model(skel(), r), std::invalid_argument);
}

TEST(Psi, Examples) {
    const Pose p = animal_at({100, 100});
    EXPECT_DOUBLE_EQ(*psi(p, p), 0.0);

    Pose obs(6), pred(6);
    obs.coords[0] = Point{0, 0};
    obs.coords[1] = Point{10, 0};
    pred.coords[0] = Point{3, 4};
    pred.coords[1] = Point{10, 0};
    pred.coords[2] = Point{500, 500};  // not observed, ignored
    EXPECT_DOUBLE_EQ(*psi(obs, pred), 2.5);

    Pose root_only(6);
    root_only.coords[0] = Point{10, 0};
    EXPECT_DOUBLE_EQ(*psi(root_only, pred), std::hypot(7.0, 4.0));
    Pose displaced(6);
    displaced.coords[0] = Point{0, 10};
    Pose origin(6);
    origin.coords[0] = Point{0, 0};
    EXPECT_DOUBLE_EQ(*psi(displaced, origin), 10.0);
    EXPECT_FALSE(psi(Pose(6), origin));
}

TEST(RunningFreq, Examples) {
    EXPECT_DOUBLE_EQ(running_freq(1.0, false), 0.8);
    EXPECT_DOUBLE_EQ(running_freq(0.8, false), 0.64);
    EXPECT_DOUBLE_EQ(running_freq(0.0, true), 0.2);
}

TEST(Tracker, StationaryAnimalKeepsItsIdAndConverges) {
    Tracker t(skel(), r_star());
    const Pose p = animal_at({200.25, 150.5});
    for (std::size_t f = 0; f < 10; ++f) {
        const TrackFrame out = step_one(t, p, f);
        ASSERT_EQ(out.tracks.size(), 1u);
        EXPECT_EQ(out.tracks[0].id, 1u);
        EXPECT_EQ(out.tracks[0].initiated, f == 0);
        for (std::size_t k = 0; k < 6; ++k) EXPECT_LE(distance(out.tracks[0].posterior.at(k), p.at(k)), 1e-6);
    }
    EXPECT_EQ(t.tracklets().size(), 1u);
}

TEST(Tracker, FourMissedFramesTerminate) {
    Tracker t(skel(), r_star());
    const Pose p = animal_at({200, 150});
    for (std::size_t f = 0; f < 5; ++f) step_one(t, p, f);
    for (std::size_t f = 5; f < 9; ++f) step_none(t, f);
    EXPECT_TRUE(t.tracklets().empty());
    const TrackFrame back = step_one(t, p, 9);
    EXPECT_EQ(back.tracks[0].id, 2u);
    EXPECT_TRUE(back.tracks[0].initiated);
}

TEST(Tracker, ThreeMissedFramesAreBridged) {
    Tracker t(skel(), r_star());
    const Pose p = animal_at({200, 150});
    for (std::size_t f = 0; f < 5; ++f) step_one(t, p, f);
    for (std::size_t f = 5; f < 8; ++f) step_none(t, f);
    const TrackFrame back = step_one(t, p, 8);
    EXPECT_EQ(back.tracks[0].id, 1u);
    EXPECT_FALSE(back.tracks[0].initiated);
}

TEST(Tracker, ImmatureTrackletDiesOnFirstMiss) {
    Tracker t(skel(), r_star());
    const Pose p = animal_at({200, 150});
    step_one(t, p, 0);
    step_one(t, p, 1);
    step_none(t, 2);
    EXPECT_TRUE(t.tracklets().empty());
}

TEST(Tracker, NoseImputedAfterShortGapOnly) {
    Tracker t(skel(), r_star());
    const Pose p = animal_at({200, 150});
    const Pose q = without(p, "n");
    const auto n = skel().index("n");
    for (std::size_t f = 0; f < 5; ++f) step_one(t, p, f);

    TrackFrame out = step_one(t, q, 5);
    ASSERT_TRUE(out.tracks[0].imputed[n]);
    EXPECT_EQ(out.tracks[0].posterior.at(n), out.tracks[0].prior.at(n));
    EXPECT_LE(distance(out.tracks[0].posterior.at(n), p.at(n)), 1e-6);

    out = step_one(t, q, 6);
    EXPECT_TRUE(out.tracks[0].imputed[n]);
    out = step_one(t, q, 7);
    EXPECT_FALSE(out.tracks[0].imputed[n]);
    EXPECT_FALSE(out.tracks[0].posterior.has(n));
}

TEST(Tracker, LowFrequencyKeypointIsNotImputed) {
    Tracker t(skel(), r_star());
    const Pose p = animal_at({200, 150});
    const Pose q = without(p, "n");
    const auto n = skel().index("n");
    // Frequency after initiation then eight misses with one sighting: well below 0.5.
    step_one(t, p, 0);
    for (std::size_t f = 1; f < 9; ++f) step_one(t, q, f);
    step_one(t, p, 9);
    const TrackFrame out = step_one(t, q, 10);
    EXPECT_FALSE(out.tracks[0].imputed[n]);
}

TEST(Tracker, ImputationCanBeDisabled) {
    TrackerConfig cfg;
    cfg.impute = false;
    Tracker t(skel(), r_star(), cfg);
    const Pose p = animal_at({200, 150});
    for (std::size_t f = 0; f < 5; ++f) step_one(t, p, f);
    const TrackFrame out = step_one(t, without(p, "n"), 5);
    EXPECT_FALSE(out.tracks[0].posterior.has(skel().index("n")));
}

TEST(Tracker, NeverObservedKeypointFollowsItsParent) {
    Tracker t(skel(), r_star());
    const auto h = skel().index("h");
    const auto n = skel().index("n");
    for (std::size_t f = 0; f < 30; ++f) {
        const Pose p = without(animal_at({100.0 + 2.0 * static_cast<double>(f), 150.0}, f), "n");
        step_one(t, p, f);
        const Pose est = t.pose_from_state(t.tracklets()[0].filter.x, f);
        EXPECT_EQ(est.at(n), est.at(h));
    }
}

TEST(Tracker, GammaZeroEqualsNonAdaptive) {
    const auto cfg = scenes::mostly_stationary(60, 31, 2.0, 0.1);
    const auto det = corrupt(generate(cfg, skel()), cfg, skel());
    TrackerConfig zero;
    zero.forced_gamma = 0.0;
    TrackerConfig plain;
    plain.adaptive = false;
    Tracker a(skel(), r_star(), zero), b(skel(), r_star(), plain);
    for (const auto& frame : det) EXPECT_EQ(a.step(frame.poses, frame.frame_index), b.step(frame.poses, frame.frame_index));
}

TEST(Tracker, IdsAreNeverReused) {
    std::mt19937_64 rng(17);
    std::bernoulli_distribution present(0.6);
    Tracker t(skel(), r_star());
    std::set<std::size_t> retired, live;
    for (std::size_t f = 0; f < 200; ++f) {
        std::vector<Pose> poses;
        for (int a = 0; a < 3; ++a)
            if (present(rng)) poses.push_back(animal_at({120.0 + 180.0 * a, 200.0}, f));
        const TrackFrame out = t.step(poses, f);
        std::set<std::size_t> now;
        for (const auto& tp : out.tracks) {
            EXPECT_TRUE(now.insert(tp.id).second);
            EXPECT_FALSE(retired.count(tp.id)) << "id " << tp.id << " reused at frame " << f;
        }
        std::set<std::size_t> alive;
        for (const auto& tr : t.tracklets()) alive.insert(tr.id);
        for (auto id : live)
            if (!alive.count(id)) retired.insert(id);
        live = alive;
    }
}

TEST(Tracker, FollowsAWalkingAnimal) {
    Tracker t(skel(), r_star());
    for (std::size_t f = 0; f < 40; ++f) {
        const TrackFrame out = step_one(t, animal_at({100.0 + 3.0 * static_cast<double>(f), 200.0}, f), f);
        ASSERT_EQ(out.tracks.size(), 1u);
        EXPECT_EQ(out.tracks[0].id, 1u);
    }
}

TEST(Tracker, GateZeroInitiatesEveryFrame) {
    TrackerConfig cfg;
    cfg.gate_px = 0.0;
    Tracker t(skel(), r_star(), cfg);
    for (std::size_t f = 0; f < 5; ++f) {
        const TrackFrame out = step_one(t, animal_at({100.0 + static_cast<double>(f), 200.0}, f), f);
        EXPECT_TRUE(out.tracks[0].initiated);
        EXPECT_EQ(out.tracks[0].id, f + 1);
    }
}

TEST(Tracker, CoordScaleAppliesToTheGate) {
    TrackerConfig cfg;
    cfg.coord_scale = 10.0;  // a 3 px jump becomes 30 px, beyond the 25 px gate
    Tracker t(skel(), r_star(), cfg);
    for (std::size_t f = 0; f < 5; ++f) step_one(t, animal_at({100, 200}, f), f);
    EXPECT_TRUE(step_one(t, animal_at({103, 200}, 5), 5).tracks[0].initiated);
}

TEST(Tracker, InvalidObservationThrows) {
    Tracker t(skel(), r_star());
    Pose p(6);
    p.coords[skel().index("t")] = Point{1, 1};
    EXPECT_THROW(step_one(t, p, 0), std::invalid_argument);
}

TEST(Tracker, EmptyFrameIsEmpty) {
    Tracker t(skel(), r_star());
    EXPECT_TRUE(step_none(t, 0).tracks.empty());
}
