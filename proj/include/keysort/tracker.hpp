#pragma once

#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "keysort/assignment.hpp"
#include "keysort/kalman.hpp"
#include "keysort/pose.hpp"
#include "keysort/skeleton.hpp"

namespace keysort {

struct TrackerConfig {
    double gate_px = 25.0;            // max psi for an association, original-image pixels
    std::size_t max_missed_frames = 3;
    std::size_t maturity_age = 3;     // completed updates before misses are tolerated
    std::size_t impute_max_consecutive = 2;
    double impute_freq_threshold = 0.5;
    double freq_memory = 0.8;
    double r_scale = 1e-2;
    double q_pos_factor = 1e-5;
    double q_vel_factor = 1e-7;
    double p0_factor = 1e10;
    double coord_scale = 1.0;         // original-image pixels per input pixel
    std::size_t sign_window = 8;
    bool adaptive = true;
    bool impute = true;
    std::optional<double> forced_gamma;
};

/// Filter matrices over the hierarchical state: for every category (in skeleton order) two
/// position entries (absolute for the root, offset from the parent otherwise), followed by
/// the matching velocity entries. Observations are absolute (x, y) per category.
struct TrackerModel {
    FilterModel filter;
    MatrixXd P0;
    std::size_t categories = 0;

    Eigen::Index state_dim() const { return filter.state_dim(); }
    Eigen::Index obs_dim() const { return filter.obs_dim(); }
};

inline TrackerModel build_model(const Skeleton& skel, std::span<const double> r_star, const TrackerConfig& cfg = {}) {
    const std::size_t c = skel.size();
    if (r_star.size() != c) throw std::invalid_argument("build_model: R* needs one variance per category");
    for (double v : r_star)
        if (!(v > 0.0)) throw std::invalid_argument("build_model: R* must be positive");
    const auto half = static_cast<Eigen::Index>(2 * c);
    const auto n = 2 * half;
    TrackerModel m;
    m.categories = c;
    m.filter.Phi = MatrixXd::Identity(n, n);
    m.filter.Phi.topRightCorner(half, half) = MatrixXd::Identity(half, half);
    m.filter.H = MatrixXd::Zero(half, n);
    for (std::size_t k = 0; k < c; ++k) {
        std::vector<std::size_t> chain{k};
        for (auto a : skel.ancestors(k)) chain.push_back(a);
        for (auto j : chain) {
            m.filter.H(static_cast<Eigen::Index>(2 * k), static_cast<Eigen::Index>(2 * j)) = 1.0;
            m.filter.H(static_cast<Eigen::Index>(2 * k + 1), static_cast<Eigen::Index>(2 * j + 1)) = 1.0;
        }
    }
    VectorXd r(half);
    for (std::size_t k = 0; k < c; ++k) {
        r(static_cast<Eigen::Index>(2 * k)) = r_star[k] * cfg.r_scale;
        r(static_cast<Eigen::Index>(2 * k + 1)) = r_star[k] * cfg.r_scale;
    }
    m.filter.R = r.asDiagonal();
    const double mean_r = r.mean();
    VectorXd q(n);
    q.head(half).setConstant(mean_r * cfg.q_pos_factor);
    q.tail(half).setConstant(mean_r * cfg.q_vel_factor);
    m.filter.Q = q.asDiagonal();
    m.P0 = m.filter.Q * cfg.p0_factor;
    return m;
}

/// Mean distance over categories present in `observed`; empty when nothing is observed.
inline std::optional<double> psi(const Pose& observed, const Pose& predicted) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < observed.size(); ++k) {
        if (!observed.has(k) || !predicted.has(k)) continue;
        sum += distance(observed.at(k), predicted.at(k));
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

/// f_t = (1 - memory) * observed + memory * f_{t-1}
inline double running_freq(double f_prev, bool observed, double memory = 0.8) {
    return (1.0 - memory) * (observed ? 1.0 : 0.0) + memory * f_prev;
}

struct Tracklet {
    std::size_t id = 0;
    FilterState filter;
    std::size_t age = 0;     // completed updates since initiation
    std::size_t missed = 0;  // consecutive frames without an association
    std::vector<double> freq;
    std::vector<std::optional<std::size_t>> last_seen;
    Pose observed;
    Pose prior;
    Pose posterior;
};

/// One tracklet's output for a frame.
struct TrackedPose {
    std::size_t id = 0;
    Pose observed;
    Pose prior;      // empty for a tracklet initiated this frame
    Pose posterior;  // observed categories plus imputed ones
    std::vector<bool> imputed;
    double alpha = 1.0;
    double gamma = 0.0;
    std::optional<double> psi;
    bool initiated = false;

    friend bool operator==(const TrackedPose&, const TrackedPose&) = default;
};

struct TrackFrame {
    std::size_t frame_index = 0;
    std::vector<TrackedPose> tracks;

    friend bool operator==(const TrackFrame&, const TrackFrame&) = default;
};

/// Online multi-animal skeleton tracker: one adaptive Kalman filter per tracklet, Hungarian
/// association on psi, lifecycle rules and keypoint-level imputation.
class Tracker {
public:
    Tracker(Skeleton skel, std::vector<double> r_star, TrackerConfig cfg = {})
        : skel_(std::move(skel)), cfg_(cfg), model_(build_model(skel_, r_star, cfg_)) {}

    const Skeleton& skeleton() const { return skel_; }
    const TrackerConfig& config() const { return cfg_; }
    const TrackerModel& model() const { return model_; }
    const std::vector<Tracklet>& tracklets() const { return live_; }

    /// Absolute pose implied by a state vector.
    Pose pose_from_state(const VectorXd& x, std::size_t frame) const {
        const VectorXd z = model_.filter.H * x;
        Pose p(skel_.size(), frame);
        for (std::size_t k = 0; k < skel_.size(); ++k)
            p.coords[k] = Point{z(static_cast<Eigen::Index>(2 * k)), z(static_cast<Eigen::Index>(2 * k + 1))};
        return p;
    }

    TrackFrame step(std::span<const Pose> skeletons, std::size_t frame_index) {
        for (const auto& s : skeletons)
            if (!is_valid_pose(skel_, s)) throw std::invalid_argument("tracker: invalid skeleton observation");

        for (auto& t : live_) {
            t.filter = advance(model_.filter, std::move(t.filter));
            t.prior = pose_from_state(t.filter.x, frame_index);
        }

        CostMatrix costs(static_cast<Eigen::Index>(skeletons.size()), static_cast<Eigen::Index>(live_.size()));
        for (std::size_t i = 0; i < skeletons.size(); ++i)
            for (std::size_t j = 0; j < live_.size(); ++j) {
                const auto d = psi(skeletons[i], live_[j].prior);
                costs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    d ? *d * cfg_.coord_scale : kForbidden;
            }
        const Matching matches = hungarian(costs, cfg_.gate_px);

        std::vector<char> obs_used(skeletons.size(), 0);
        std::vector<char> trk_used(live_.size(), 0);
        TrackFrame out{frame_index, {}};
        for (const auto& m : matches) {
            obs_used[m.row] = 1;
            trk_used[m.col] = 1;
            out.tracks.push_back(update_tracklet(live_[m.col], skeletons[m.row], frame_index, m.cost));
        }

        std::vector<Tracklet> survivors;
        for (std::size_t j = 0; j < live_.size(); ++j) {
            Tracklet& t = live_[j];
            if (!trk_used[j]) {
                if (t.age < cfg_.maturity_age) continue;
                if (++t.missed > cfg_.max_missed_frames) continue;
            }
            survivors.push_back(std::move(t));
        }
        live_ = std::move(survivors);

        for (std::size_t i = 0; i < skeletons.size(); ++i)
            if (!obs_used[i]) out.tracks.push_back(initiate(skeletons[i], frame_index));
        return out;
    }

private:
    TrackedPose update_tracklet(Tracklet& t, const Pose& obs, std::size_t frame, double cost) {
        const auto k = model_.obs_dim();
        VectorXd z = VectorXd::Zero(k);
        ObservationMask mask(static_cast<std::size_t>(k), false);
        for (std::size_t c = 0; c < skel_.size(); ++c) {
            if (!obs.has(c)) continue;
            z(static_cast<Eigen::Index>(2 * c)) = obs.at(c).x;
            z(static_cast<Eigen::Index>(2 * c + 1)) = obs.at(c).y;
            mask[2 * c] = mask[2 * c + 1] = true;
        }
        if (cfg_.adaptive) {
            AdaptiveOptions opts;
            opts.forced_gamma = cfg_.forced_gamma;
            t.filter = update_adaptive(model_.filter, std::move(t.filter), z, mask, opts);
        } else {
            t.filter = update_standard(model_.filter, std::move(t.filter), z, mask);
        }
        ++t.age;
        t.missed = 0;
        t.observed = obs;
        t.observed.frame_index = frame;

        const Pose full = pose_from_state(t.filter.x, frame);
        TrackedPose tp;
        tp.id = t.id;
        tp.observed = t.observed;
        tp.prior = t.prior;
        tp.posterior = Pose(skel_.size(), frame);
        tp.imputed.assign(skel_.size(), false);
        for (std::size_t c = 0; c < skel_.size(); ++c) {
            const bool seen = obs.has(c);
            t.freq[c] = running_freq(t.freq[c], seen, cfg_.freq_memory);
            if (seen) {
                t.last_seen[c] = frame;
                tp.posterior.coords[c] = full.coords[c];
            } else if (cfg_.impute && t.last_seen[c] && frame - *t.last_seen[c] <= cfg_.impute_max_consecutive &&
                       t.freq[c] > cfg_.impute_freq_threshold) {
                tp.posterior.coords[c] = t.prior.coords[c];
                tp.imputed[c] = true;
            }
        }
        t.posterior = tp.posterior;
        tp.alpha = t.filter.last_alpha;
        tp.gamma = t.filter.last_gamma;
        tp.psi = cost;
        return tp;
    }

    TrackedPose initiate(const Pose& obs, std::size_t frame) {
        const std::size_t c = skel_.size();
        const auto n = model_.state_dim();
        VectorXd x = VectorXd::Zero(n);
        // Reconstructed absolute position per category; missing keypoints sit on their parent.
        std::vector<Point> abs(c);
        for (auto k : skel_.rank_order()) {
            const auto parent = skel_.parent(k);
            Point offset{0.0, 0.0};
            if (!parent) {
                offset = obs.at(k);
                abs[k] = offset;
            } else {
                if (obs.has(k)) offset = obs.at(k) - abs[*parent];
                abs[k] = abs[*parent] + offset;
            }
            x(static_cast<Eigen::Index>(2 * k)) = offset.x;
            x(static_cast<Eigen::Index>(2 * k + 1)) = offset.y;
        }
        Tracklet t;
        t.id = next_id_++;
        t.filter = FilterState::initial(std::move(x), model_.P0, model_.obs_dim(), cfg_.sign_window);
        t.freq.assign(c, 0.0);
        t.last_seen.assign(c, std::nullopt);
        for (std::size_t k = 0; k < c; ++k)
            if (obs.has(k)) {
                t.freq[k] = 1.0;
                t.last_seen[k] = frame;
            }
        t.observed = obs;
        t.observed.frame_index = frame;
        t.prior = Pose(c, frame);
        t.posterior = Pose(c, frame);
        const Pose full = pose_from_state(t.filter.x, frame);
        for (std::size_t k = 0; k < c; ++k)
            if (obs.has(k)) t.posterior.coords[k] = full.coords[k];

        TrackedPose tp;
        tp.id = t.id;
        tp.observed = t.observed;
        tp.prior = t.prior;
        tp.posterior = t.posterior;
        tp.imputed.assign(c, false);
        tp.initiated = true;
        live_.push_back(std::move(t));
        return tp;
    }

    Skeleton skel_;
    TrackerConfig cfg_;
    TrackerModel model_;
    std::vector<Tracklet> live_;
    std::size_t next_id_ = 1;
};

}  // namespace keysort
