// Acceptance suite: one pass/fail line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "keysort/assembly.hpp"
#include "keysort/assignment.hpp"
#include "keysort/kf_demo.hpp"
#include "keysort/map_codec.hpp"
#include "keysort/metrics.hpp"
#include "keysort/synth.hpp"
#include "keysort/tracker.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

using namespace keysort;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

// Random frame for the codec round trip: 1-8 animals whose keypoints are separated by more
// than max(14 px, 6 sigma) across animals.
std::vector<Pose> round_trip_frame(std::mt19937_64& rng, std::size_t width, std::size_t height) {
    const Skeleton& skel = cattle_skeleton();
    std::uniform_int_distribution<std::size_t> count(1, 8);
    const std::size_t n = count(rng);
    while (true) {
        auto poses = scenes::random_herd(rng, n, width, height, 80.0, 0.5, 0.7);
        if (poses.size() != n) continue;
        const auto sig = pose_sigmas(poses, skel, skel.encoder());
        const double need = std::max(14.0, 6.0 * *std::max_element(sig.begin(), sig.end()));
        bool ok = true;
        for (std::size_t a = 0; a < n && ok; ++a)
            for (std::size_t b = a + 1; b < n && ok; ++b)
                for (std::size_t i = 0; i < 6 && ok; ++i)
                    for (std::size_t j = 0; j < 6 && ok; ++j)
                        if (poses[a].has(i) && poses[b].has(j) && distance(poses[a].at(i), poses[b].at(j)) <= need)
                            ok = false;
        if (ok) return poses;
    }
}

Outcome codec_round_trip() {
    const auto t0 = Clock::now();
    const Skeleton& skel = cattle_skeleton();
    std::mt19937_64 rng(1001);
    const std::size_t width = 800, height = 600;
    std::size_t present = 0, recovered = 0, extra = 0;
    for (int f = 0; f < 200; ++f) {
        const auto truth = round_trip_frame(rng, width, height);
        const MapStack maps = encode_maps(truth, skel, skel.encoder(), width, height);
        const auto cands = decode_candidates(maps.prob);
        const auto assembled = assemble(cands, maps, skel);
        std::vector<Pose> pred;
        for (const auto& s : assembled) pred.push_back(s.pose);
        const Pairing pairing = pair_skeletons(truth, pred);
        extra += pairing.unpaired_pred.size();
        std::vector<std::optional<std::size_t>> partner(truth.size());
        for (const auto& p : pairing.pairs) partner[p.gt] = p.pred;
        for (std::size_t i = 0; i < truth.size(); ++i)
            for (std::size_t k = 0; k < skel.size(); ++k) {
                if (!truth[i].has(k)) continue;
                ++present;
                if (partner[i] && pred[*partner[i]].has(k) &&
                    distance(pred[*partner[i]].at(k), truth[i].at(k)) <= 0.75)
                    ++recovered;
            }
    }
    const double secs = seconds_since(t0);
    const double rate = static_cast<double>(recovered) / static_cast<double>(present);
    return {rate >= 0.99 && extra == 0 && secs < 60.0,
            "recovered " + fmt(100.0 * rate) + "% of " + std::to_string(present) + " keypoints within 0.75 px, " +
                std::to_string(extra) + " extra skeletons, " + fmt(secs, 3) + " s"};
}

Outcome assignment_oracle() {
    std::mt19937_64 rng(2002);
    std::uniform_int_distribution<int> dim(1, 6);
    std::uniform_real_distribution<double> cost(0.0, 100.0);
    int mismatches = 0, greedy_below = 0;
    for (int t = 0; t < 1000; ++t) {
        CostMatrix c(dim(rng), dim(rng));
        for (Eigen::Index i = 0; i < c.rows(); ++i)
            for (Eigen::Index j = 0; j < c.cols(); ++j) c(i, j) = cost(rng);
        const double h = total_cost(hungarian(c));
        const double b = oracle::brute_force_total(c);
        const double g = total_cost(greedy_assign(c));
        if (std::abs(h - b) > 1e-9 * std::max(1.0, b)) ++mismatches;
        if (g < h - 1e-9) ++greedy_below;
    }
    return {mismatches == 0 && greedy_below == 0, std::to_string(mismatches) + " optimum mismatches, " +
                                                      std::to_string(greedy_below) +
                                                      " greedy totals below the optimum, 1000 matrices"};
}

Outcome parallel_rows() {
    const ParallelRowsScene scene = parallel_rows_scene();
    const CostMatrix pen = penalty_matrix(scene.candidates[0], scene.candidates[1], scene.maps.assoc[0]);
    const Matching greedy = greedy_assign(pen, scene.gate);
    const Matching hung = hungarian(forbid_above(pen, scene.gate), scene.gate);
    const std::size_t g_ok = correct_outcomes(greedy, scene.truth);
    const std::size_t h_ok = correct_outcomes(hung, scene.truth);
    const std::size_t dropped = greedy_assign(pen).size() - greedy.size();
    bool shifted = hung.size() == 5;
    for (const auto& a : hung) shifted = shifted && a.col == a.row;  // each 'a' takes the 'b' one row up
    return {g_ok == 5 && h_ok == 0 && shifted && dropped == 1,
            "greedy " + std::to_string(g_ok) + "/5 correct (" + std::to_string(greedy.size()) + " pairs, " +
                std::to_string(dropped) + " dropped by the gate), hungarian " + std::to_string(h_ok) + "/5 correct (" +
                std::to_string(hung.size()) + " pairs" + (shifted ? ", all shifted" : "") + ")"};
}

Outcome regime_switch() {
    const auto t0 = Clock::now();
    const KfDemoConfig cfg;
    const auto std_run = run_kf_demo(cfg, KfMode::standard);
    const auto ad = run_kf_demo(cfg, KfMode::adaptive);
    const std::size_t w = cfg.switch_at, n = cfg.steps;
    const double post_ratio = rmse(ad.estimate, ad.truth, w, n) / rmse(std_run.estimate, std_run.truth, w, n);
    const double pre_ratio = rmse(ad.estimate, ad.truth, 0, w) / rmse(std_run.estimate, std_run.truth, 0, w);
    const double secs = seconds_since(t0);
    return {post_ratio <= 0.5 && pre_ratio <= 1.05 && secs < 5.0,
            "post-switch RMSE ratio " + fmt(post_ratio) + " (<= 0.5), pre-switch ratio " + fmt(pre_ratio) +
                " (<= 1.05), " + fmt(secs, 3) + " s"};
}

double displacement_variance(const std::vector<double>& e, std::size_t from, std::size_t to) {
    std::vector<double> d;
    for (std::size_t i = from + 1; i < to; ++i) d.push_back(e[i] - e[i - 1]);
    const double m = *mean(d);
    double s = 0.0;
    for (double x : d) s += (x - m) * (x - m);
    return s / static_cast<double>(d.size());
}

Outcome unmitigated_overfit() {
    const KfDemoConfig cfg;
    const auto ad = run_kf_demo(cfg, KfMode::adaptive);
    const auto un = run_kf_demo(cfg, KfMode::adaptive_unmitigated);
    const std::size_t w = cfg.switch_at;
    const double ratio = displacement_variance(un.estimate, 0, w) / displacement_variance(ad.estimate, 0, w);
    const auto low = [&](const std::vector<double>& a) {
        return std::count_if(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(w), [](double x) { return x < 0.1; });
    };
    const auto low_un = low(un.alpha), low_ad = low(ad.alpha);
    return {ratio >= 2.0 && low_un > low_ad, "displacement variance ratio " + fmt(ratio) + " (>= 2), alpha < 0.1: " +
                                                 std::to_string(low_un) + " unmitigated vs " + std::to_string(low_ad) +
                                                 " mitigated"};
}

struct TrackRun {
    GroundTruthSequence truth;
    std::vector<DetectionFrame> detections;
    std::vector<TrackFrame> tracks;
};

TrackRun run_tracker(const ScenarioConfig& cfg, const TrackerConfig& tcfg) {
    const Skeleton& skel = cattle_skeleton();
    TrackRun r;
    r.truth = generate(cfg, skel);
    r.detections = corrupt(r.truth, cfg, skel);
    std::vector<double> r_star(skel.size());
    for (std::size_t k = 0; k < skel.size(); ++k) r_star[k] = std::max(cfg.detection_noise[k] * cfg.detection_noise[k], 1.0);
    Tracker tracker(skel, r_star, tcfg);
    for (const auto& f : r.detections) r.tracks.push_back(tracker.step(f.poses, f.frame_index));
    return r;
}

std::vector<std::vector<Pose>> truth_frames(const TrackRun& r) {
    std::vector<std::vector<Pose>> out;
    for (const auto& f : r.truth) out.push_back(f.poses);
    return out;
}

std::vector<std::vector<Pose>> track_frames(const TrackRun& r, bool posterior) {
    std::vector<std::vector<Pose>> out;
    for (const auto& f : r.tracks) {
        std::vector<Pose> poses;
        for (const auto& t : f.tracks) poses.push_back(posterior ? t.posterior : t.observed);
        out.push_back(std::move(poses));
    }
    return out;
}

Outcome smoothing() {
    const Skeleton& skel = cattle_skeleton();
    const TrackRun run = run_tracker(scenes::mostly_stationary(120, 606, 2.0, 0.0), TrackerConfig{});
    const auto gt = truth_frames(run);
    const EvalReport post = evaluate(gt, track_frames(run, true), skel, {}, run.tracks);
    const EvalReport obs = evaluate(gt, track_frames(run, false), skel, {}, run.tracks);
    bool ok = true;
    double worst_fd = 0.0, worst_err = 0.0;
    for (std::size_t k = 0; k < skel.size(); ++k) {
        const auto& c = post.categories[k];
        const double fd = *c.frame_diff_posterior.q50 / *c.frame_diff_observed.q50;
        const double err = *c.rel_error_mean / *obs.categories[k].rel_error_mean;
        worst_fd = std::max(worst_fd, fd);
        worst_err = std::max(worst_err, err);
        ok = ok && fd <= 0.5 && err <= 1.1;
    }
    return {ok, "worst per-category median frame-difference ratio " + fmt(worst_fd) +
                    " (<= 0.5), worst relative-error ratio " + fmt(worst_err) + " (<= 1.1)"};
}

// Recomputes the imputation conditions from the tracks' own observation history.
std::size_t imputation_violations(const std::vector<TrackFrame>& tracks, std::size_t categories,
                                  const TrackerConfig& cfg) {
    struct History {
        std::vector<double> f;
        std::vector<std::optional<std::size_t>> last;
    };
    std::map<std::size_t, History> hist;
    std::size_t bad = 0;
    for (const auto& fr : tracks)
        for (const auto& t : fr.tracks) {
            auto [it, fresh] = hist.try_emplace(t.id);
            History& h = it->second;
            if (fresh) {
                h.f.assign(categories, 0.0);
                h.last.assign(categories, std::nullopt);
            }
            for (std::size_t k = 0; k < categories; ++k) {
                const bool seen = t.observed.has(k);
                h.f[k] = fresh ? (seen ? 1.0 : 0.0) : cfg.freq_memory * h.f[k] + (1.0 - cfg.freq_memory) * (seen ? 1.0 : 0.0);
                if (seen) h.last[k] = fr.frame_index;
                if (!t.imputed[k]) continue;
                const bool recent = h.last[k] && fr.frame_index - *h.last[k] <= cfg.impute_max_consecutive;
                if (seen || !recent || !(h.f[k] > cfg.impute_freq_threshold) || !t.posterior.has(k)) ++bad;
            }
        }
    return bad;
}

Outcome imputation() {
    const Skeleton& skel = cattle_skeleton();
    const ScenarioConfig scn = scenes::mostly_stationary(120, 707, 2.0, 0.15);
    TrackerConfig on, off;
    off.impute = false;
    const TrackRun with = run_tracker(scn, on);
    const TrackRun without = run_tracker(scn, off);
    const auto gt = truth_frames(with);
    const double eta_on = *evaluate(gt, track_frames(with, true), skel).recovery.rate();
    const double eta_off = *evaluate(gt, track_frames(without, true), skel).recovery.rate();
    std::size_t imputed = 0;
    for (const auto& f : with.tracks)
        for (const auto& t : f.tracks) imputed += static_cast<std::size_t>(std::count(t.imputed.begin(), t.imputed.end(), true));
    const std::size_t bad = imputation_violations(with.tracks, skel.size(), on);
    return {eta_on - eta_off >= 0.01 && bad == 0,
            "eta " + fmt(100.0 * eta_on) + "% with imputation vs " + fmt(100.0 * eta_off) + "% without (+" +
                fmt(100.0 * (eta_on - eta_off), 3) + " pp, >= 1), " + std::to_string(imputed) + " imputed keypoints, " +
                std::to_string(bad) + " rule violations"};
}

Outcome spine() {
    const Skeleton& skel = cattle_skeleton();
    const std::size_t walk_from = 20, frames = 30;
    const ScenarioConfig scn = scenes::starts_walking(frames, walk_from, 6.0);
    const auto truth = generate(scn, skel);
    const std::size_t w = skel.index("w"), t = skel.index("t");
    const std::vector<double> r_star(skel.size(), 4.0);
    Tracker tracker(skel, r_star);
    oracle::AbsoluteTracker control(skel.size(), r_star, TrackerConfig{});
    double worst_rel = 0.0, worst_abs = 0.0;
    bool single_track = true;
    for (const auto& fr : truth) {
        Pose obs = fr.poses[0];
        const bool dropped = fr.frame_index >= walk_from && fr.frame_index < walk_from + 5;
        if (dropped) obs.coords[t].reset();
        const TrackFrame out = tracker.step(std::vector<Pose>{obs}, fr.frame_index);
        const Pose abs_prior = control.step(obs);
        single_track = single_track && out.tracks.size() == 1 && out.tracks[0].id == 1;
        if (!dropped) continue;
        const double true_len = distance(fr.poses[0].at(t), fr.poses[0].at(w));
        const Pose& prior = out.tracks[0].prior;
        worst_rel = std::max(worst_rel, std::abs(distance(prior.at(t), prior.at(w)) - true_len) / true_len);
        worst_abs = std::max(worst_abs, std::abs(distance(abs_prior.at(t), abs_prior.at(w)) - true_len) / true_len);
    }
    return {single_track && worst_rel < 0.10 && worst_abs > 0.50,
            "max prior spine-length error " + fmt(100.0 * worst_rel) + "% relative tracking (< 10%) vs " +
                fmt(100.0 * worst_abs) + "% absolute control (> 50%)" + (single_track ? "" : ", track lost")};
}

// Animals sit on a circle: the strict triangle inequality makes each animal's own tracklet the
// unique optimum, whereas equally spaced collinear animals produce exact assignment ties.
Point lifecycle_position(std::size_t animal) {
    const double a = 1.5707963267948966 * static_cast<double>(animal) + 0.4;
    return {320.0 + 160.0 * std::cos(a), 240.0 + 160.0 * std::sin(a)};
}

Outcome lifecycle() {
    const Skeleton& skel = cattle_skeleton();
    std::mt19937_64 rng(909);
    std::size_t mismatched = 0, terminations = 0, immature = 0;
    const auto tpl = cattle_template();
    const std::vector<double> stay_prob{0.6, 0.8, 0.95};
    for (int s = 0; s < 50; ++s) {
        const std::size_t animals = 1 + rng() % 4;
        const std::size_t frames = 40;
        std::bernoulli_distribution stay(stay_prob[rng() % stay_prob.size()]);
        Tracker tracker(skel, std::vector<double>(skel.size(), 4.0));
        oracle::LifecycleOracle oracle(animals, 3, 3);
        for (std::size_t f = 0; f < frames; ++f) {
            std::vector<bool> present(animals);
            std::vector<Pose> obs;
            for (std::size_t a = 0; a < animals; ++a) {
                present[a] = stay(rng);
                if (!present[a]) continue;
                Pose p(skel.size(), f);
                for (std::size_t k = 0; k < skel.size(); ++k) p.coords[k] = lifecycle_position(a) + *tpl[k];
                obs.push_back(p);
            }
            const auto expected = oracle.step(present);
            const TrackFrame got = tracker.step(obs, f);
            std::set<std::tuple<std::size_t, std::size_t, bool>> want, have;
            for (const auto& e : expected) want.insert({e.animal, e.id, e.initiated});
            for (const auto& t : got.tracks) {
                std::size_t animal = 0;
                for (std::size_t a = 1; a < animals; ++a)
                    if (distance(t.observed.at(0), lifecycle_position(a)) <
                        distance(t.observed.at(0), lifecycle_position(animal)))
                        animal = a;
                have.insert({animal, t.id, t.initiated});
            }
            if (want != have || tracker.tracklets().size() != oracle.live()) ++mismatched;
        }
        terminations += oracle.mature_terminations;
        immature += oracle.immature_terminations;
    }
    return {mismatched == 0 && terminations > 0 && immature > 0,
            std::to_string(mismatched) + " frames disagreeing with the oracle over 50 schedules (" +
                std::to_string(terminations) + " mature and " + std::to_string(immature) + " immature terminations)"};
}

Outcome metrics_self_consistency() {
    const Skeleton& skel = cattle_skeleton();
    std::mt19937_64 rng(1010);
    bool self_ok = true, root_ok = true;
    std::size_t evaluations = 0;
    for (int f = 0; f < 40; ++f) {
        const auto truth = round_trip_frame(rng, 800, 600);
        const MapStack maps = encode_maps(truth, skel, skel.encoder(), 800, 600);
        CandidateSet exact(skel.size());
        for (const auto& p : truth)
            for (std::size_t k = 0; k < skel.size(); ++k)
                if (p.has(k)) exact[k].push_back({k, p.at(k), 1.0});
        const PRReport pr = precision_recall(truth, exact, maps, maps);
        const std::vector<std::vector<Pose>> gt{truth};
        const EvalReport self = evaluate(gt, gt, skel);
        self_ok = self_ok && pr.overall.precision() == 1.0 && pr.overall.recall() == 1.0 &&
                  self.recovery.rate() == 1.0;
        for (const auto& c : self.categories) self_ok = self_ok && (!c.rel_error_mean || *c.rel_error_mean == 0.0);

        // Assembled output from progressively degraded maps.
        for (double fade : {1.0, 0.6, 0.45}) {
            MapStack faded = maps;
            std::uniform_real_distribution<double> u(fade, 1.0);
            for (auto& g : faded.prob) {
                const float factor = static_cast<float>(u(rng));
                for (float& v : g.values()) v *= factor;
            }
            const auto assembled = assemble(decode_candidates(faded.prob), faded, skel);
            std::vector<Pose> pred;
            for (const auto& s : assembled) pred.push_back(s.pose);
            const EvalReport rep = evaluate(gt, std::vector<std::vector<Pose>>{pred}, skel);
            const auto root_eta = rep.categories[skel.root()].recovery.rate();
            for (const auto& c : rep.categories)
                if (c.recovery.rate() && root_eta && *c.recovery.rate() > *root_eta) root_ok = false;
            ++evaluations;
        }
    }
    return {self_ok && root_ok, std::string("self-evaluation ") + (self_ok ? "exact" : "NOT exact") +
                                    ", root recovery highest in " + (root_ok ? "all " : "not all ") +
                                    std::to_string(evaluations) + " assembled-output evaluations"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"codec round trip", codec_round_trip},
        {"assignment oracle", assignment_oracle},
        {"parallel-row greedy vs hungarian", parallel_rows},
        {"adaptive filter after a process-noise jump", regime_switch},
        {"unmitigated adaptation overfits", unmitigated_overfit},
        {"tracker smoothing", smoothing},
        {"tracker imputation", imputation},
        {"relative tracking keeps the spine length", spine},
        {"tracklet lifecycle", lifecycle},
        {"metrics self-consistency", metrics_self_consistency},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
