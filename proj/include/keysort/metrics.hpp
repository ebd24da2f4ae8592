#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "keysort/assignment.hpp"
#include "keysort/grid.hpp"
#include "keysort/map_codec.hpp"
#include "keysort/pose.hpp"
#include "keysort/skeleton.hpp"
#include "keysort/tracker.hpp"

namespace keysort {

inline std::optional<double> ratio(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den;
}

// ---------------------------------------------------------------------------------------
// Precision / recall on maps

struct PRCounts {
    double tp = 0.0;  // mean of the two counting directions, may be fractional
    double fp = 0.0;
    double fn = 0.0;

    std::optional<double> precision() const { return ratio(tp, tp + fp); }
    std::optional<double> recall() const { return ratio(tp, tp + fn); }

    PRCounts& operator+=(const PRCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
};

struct PRReport {
    std::vector<std::string> categories;
    std::vector<PRCounts> per_category;
    PRCounts overall;
};

/// Quadratically interpolated map value; 0 outside the grid.
inline double probability_at(const Grid& g, Point p) {
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= static_cast<double>(g.width()) - 1.0 &&
          p.y <= static_cast<double>(g.height()) - 1.0))
        return 0.0;
    return interpolate(g, p);
}

/// Ground-truth keypoints are checked against the predicted maps and candidates against the
/// ground-truth maps; a true positive is the mean of both directions' hit counts.
inline PRReport precision_recall(std::span<const Pose> gt_poses, const CandidateSet& candidates,
                                 const MapStack& gt_maps, const MapStack& pred_maps, double cutoff = 0.5) {
    const std::size_t c = gt_maps.prob.size();
    if (pred_maps.prob.size() != c || candidates.size() != c)
        throw std::invalid_argument("precision_recall: category count mismatch");
    PRReport rep;
    rep.categories = gt_maps.prob_names;
    rep.per_category.resize(c);
    for (std::size_t k = 0; k < c; ++k) {
        double gt_hit = 0.0, cand_hit = 0.0;
        PRCounts& pc = rep.per_category[k];
        for (const auto& p : gt_poses) {
            if (!p.has(k)) continue;
            if (probability_at(pred_maps.prob[k], p.at(k)) >= cutoff) {
                gt_hit += 1.0;
            } else {
                pc.fn += 1.0;
            }
        }
        for (const auto& cand : candidates[k]) {
            if (probability_at(gt_maps.prob[k], cand.position) >= cutoff) {
                cand_hit += 1.0;
            } else {
                pc.fp += 1.0;
            }
        }
        pc.tp = 0.5 * (gt_hit + cand_hit);
        rep.overall += pc;
    }
    return rep;
}

// ---------------------------------------------------------------------------------------
// Skeleton pairing and per-keypoint statistics

/// Mean distance over categories present in both poses.
inline std::optional<double> mean_shared_distance(const Pose& a, const Pose& b) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
        if (!a.has(k) || !b.has(k)) continue;
        sum += distance(a.at(k), b.at(k));
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

struct SkeletonPair {
    std::size_t gt = 0;
    std::size_t pred = 0;
    double cost = 0.0;
};

struct Pairing {
    std::vector<SkeletonPair> pairs;
    std::vector<std::size_t> unpaired_gt;
    std::vector<std::size_t> unpaired_pred;
};

/// Hungarian pairing on mean shared-keypoint distance, dropping pairs above `max_loss`
/// (measured after multiplying by `coord_scale`).
inline Pairing pair_skeletons(std::span<const Pose> gt, std::span<const Pose> pred, double max_loss = 50.0,
                              double coord_scale = 1.0) {
    CostMatrix costs(static_cast<Eigen::Index>(gt.size()), static_cast<Eigen::Index>(pred.size()));
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t j = 0; j < pred.size(); ++j) {
            const auto d = mean_shared_distance(gt[i], pred[j]);
            costs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d ? *d * coord_scale : kForbidden;
        }
    Pairing out;
    std::vector<char> gt_used(gt.size(), 0), pred_used(pred.size(), 0);
    for (const auto& a : hungarian(costs, max_loss)) {
        out.pairs.push_back({a.row, a.col, a.cost});
        gt_used[a.row] = 1;
        pred_used[a.col] = 1;
    }
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (!gt_used[i]) out.unpaired_gt.push_back(i);
    for (std::size_t j = 0; j < pred.size(); ++j)
        if (!pred_used[j]) out.unpaired_pred.push_back(j);
    return out;
}

struct RecoveryCounts {
    std::size_t recovered = 0;
    std::size_t total = 0;

    std::optional<double> rate() const {
        return ratio(static_cast<double>(recovered), static_cast<double>(total));
    }
    RecoveryCounts& operator+=(const RecoveryCounts& o) {
        recovered += o.recovered;
        total += o.total;
        return *this;
    }
};

struct RecoveryReport {
    std::vector<RecoveryCounts> per_category;
    RecoveryCounts overall;

    RecoveryReport& operator+=(const RecoveryReport& o) {
        if (per_category.empty()) per_category.resize(o.per_category.size());
        for (std::size_t k = 0; k < o.per_category.size(); ++k) per_category[k] += o.per_category[k];
        overall += o.overall;
        return *this;
    }
};

/// Keypoint recovery rate: share of ground-truth keypoints present in the paired prediction.
inline RecoveryReport recovery_rate(std::span<const Pose> gt, std::span<const Pose> pred, const Pairing& pairing,
                                    std::size_t categories) {
    RecoveryReport rep;
    rep.per_category.resize(categories);
    std::vector<std::optional<std::size_t>> partner(gt.size());
    for (const auto& p : pairing.pairs) partner[p.gt] = p.pred;
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t k = 0; k < categories; ++k) {
            if (!gt[i].has(k)) continue;
            ++rep.per_category[k].total;
            if (partner[i] && pred[*partner[i]].has(k)) ++rep.per_category[k].recovered;
        }
    for (const auto& c : rep.per_category) rep.overall += c;
    return rep;
}

/// Per shared keypoint of each pair: distance divided by the ground-truth skeleton scale.
/// Pairs whose ground truth has no defined scale are skipped and reported in `warnings`.
inline std::vector<std::vector<double>> relative_error(std::span<const Pose> gt, std::span<const Pose> pred,
                                                       const Pairing& pairing, const Skeleton& skel,
                                                       std::vector<std::string>* warnings = nullptr) {
    std::vector<std::vector<double>> samples(skel.size());
    for (const auto& p : pairing.pairs) {
        const auto scale = skeleton_scale(skel, gt[p.gt]);
        if (!scale || !(*scale > 0.0)) {
            if (warnings)
                warnings->push_back("skeleton without scale excluded (frame " +
                                    std::to_string(gt[p.gt].frame_index) + ")");
            continue;
        }
        for (std::size_t k = 0; k < skel.size(); ++k)
            if (gt[p.gt].has(k) && pred[p.pred].has(k))
                samples[k].push_back(distance(gt[p.gt].at(k), pred[p.pred].at(k)) / *scale);
    }
    return samples;
}

// ---------------------------------------------------------------------------------------
// Frame differences and summary statistics

struct FrameDifferences {
    std::vector<std::vector<double>> observed;   // per category
    std::vector<std::vector<double>> posterior;  // per category

    explicit FrameDifferences(std::size_t categories = 0) : observed(categories), posterior(categories) {}
};

/// Displacement between two consecutive frames per tracklet id and category, for observed
/// and posterior coordinates independently.
inline void frame_difference(const TrackFrame& prev, const TrackFrame& cur, FrameDifferences& out) {
    std::map<std::size_t, const TrackedPose*> before;
    for (const auto& t : prev.tracks) before[t.id] = &t;
    for (const auto& t : cur.tracks) {
        const auto it = before.find(t.id);
        if (it == before.end()) continue;
        const TrackedPose& p = *it->second;
        for (std::size_t k = 0; k < t.observed.size(); ++k) {
            if (k < out.observed.size() && t.observed.has(k) && p.observed.has(k))
                out.observed[k].push_back(distance(t.observed.at(k), p.observed.at(k)));
            if (k < out.posterior.size() && t.posterior.has(k) && p.posterior.has(k))
                out.posterior[k].push_back(distance(t.posterior.at(k), p.posterior.at(k)));
        }
    }
}

/// Frame differences over a whole run; only frames with adjacent indices are compared.
inline FrameDifferences frame_differences(std::span<const TrackFrame> frames, std::size_t categories) {
    FrameDifferences out(categories);
    for (std::size_t i = 1; i < frames.size(); ++i)
        if (frames[i].frame_index == frames[i - 1].frame_index + 1) frame_difference(frames[i - 1], frames[i], out);
    return out;
}

/// Linear interpolation between order statistics at h = (n - 1) q.
inline std::optional<double> quantile(std::vector<double> samples, double q) {
    if (samples.empty()) return std::nullopt;
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must lie in [0, 1]");
    std::sort(samples.begin(), samples.end());
    const double h = static_cast<double>(samples.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, samples.size() - 1);
    return samples[lo] + (h - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

inline std::optional<double> mean(std::span<const double> v) {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator).
inline std::optional<double> stddev(std::span<const double> v) {
    if (v.size() < 2) return std::nullopt;
    const double m = *mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct QuantileSummary {
    std::size_t count = 0;
    std::optional<double> q05, q50, q95;
};

inline QuantileSummary summarize_quantiles(const std::vector<double>& v) {
    return {v.size(), quantile(v, 0.05), quantile(v, 0.50), quantile(v, 0.95)};
}

struct CategoryReport {
    std::string category;
    RecoveryCounts recovery;
    std::optional<double> rel_error_mean;
    std::optional<double> rel_error_std;
    std::size_t rel_error_count = 0;
    QuantileSummary frame_diff_observed;
    QuantileSummary frame_diff_posterior;
};

struct EvalReport {
    std::vector<CategoryReport> categories;
    RecoveryCounts recovery;
    std::size_t frames = 0;
    std::size_t unpaired_gt = 0;
    std::size_t unpaired_pred = 0;
    std::vector<std::string> warnings;
    std::vector<std::vector<double>> rel_error_samples;  // per category
    FrameDifferences frame_diffs;
};

struct EvalParams {
    double pair_gate = 50.0;
    double coord_scale = 1.0;
};

/// Evaluates predicted poses against ground truth frame by frame; frames are matched by
/// position in the two sequences. `tracks`, when given, adds frame-difference statistics.
inline EvalReport evaluate(std::span<const std::vector<Pose>> gt_frames, std::span<const std::vector<Pose>> pred_frames,
                           const Skeleton& skel, const EvalParams& params = {},
                           std::span<const TrackFrame> tracks = {}) {
    if (gt_frames.size() != pred_frames.size()) throw std::invalid_argument("evaluate: frame count mismatch");
    const std::size_t c = skel.size();
    EvalReport rep;
    rep.frames = gt_frames.size();
    rep.rel_error_samples.resize(c);
    RecoveryReport rec;
    rec.per_category.resize(c);
    for (std::size_t f = 0; f < gt_frames.size(); ++f) {
        const auto& gt = gt_frames[f];
        const auto& pred = pred_frames[f];
        const Pairing pairing = pair_skeletons(gt, pred, params.pair_gate, params.coord_scale);
        rep.unpaired_gt += pairing.unpaired_gt.size();
        rep.unpaired_pred += pairing.unpaired_pred.size();
        rec += recovery_rate(gt, pred, pairing, c);
        auto rel = relative_error(gt, pred, pairing, skel, &rep.warnings);
        for (std::size_t k = 0; k < c; ++k)
            rep.rel_error_samples[k].insert(rep.rel_error_samples[k].end(), rel[k].begin(), rel[k].end());
    }
    rep.frame_diffs = frame_differences(tracks, c);
    rep.recovery = rec.overall;
    for (std::size_t k = 0; k < c; ++k) {
        CategoryReport cr;
        cr.category = skel.category(k);
        cr.recovery = rec.per_category[k];
        cr.rel_error_mean = mean(rep.rel_error_samples[k]);
        cr.rel_error_std = stddev(rep.rel_error_samples[k]);
        cr.rel_error_count = rep.rel_error_samples[k].size();
        cr.frame_diff_observed = summarize_quantiles(rep.frame_diffs.observed[k]);
        cr.frame_diff_posterior = summarize_quantiles(rep.frame_diffs.posterior[k]);
        rep.categories.push_back(std::move(cr));
    }
    return rep;
}

}  // namespace keysort
