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

#include "keysort/kalman.hpp"

// One-dimensional constant-velocity simulation whose process noise jumps at a switch step,
// used to compare the standard filter with the adaptive variants.

namespace keysort {

enum class KfMode {
    standard,              // Q fixed at the pre-switch level (underestimated afterwards)
    standard_oracle,       // Q follows the true process noise
    adaptive,              // pre-switch Q, sign-mitigated inflation
    adaptive_unmitigated,  // pre-switch Q, gamma forced to 1
};

inline const char* to_string(KfMode m) {
    switch (m) {
        case KfMode::standard: return "standard";
        case KfMode::standard_oracle: return "standard-oracle";
        case KfMode::adaptive: return "adaptive";
        case KfMode::adaptive_unmitigated: return "adaptive-unmitigated";
    }
    return "?";
}

inline KfMode parse_kf_mode(const std::string& s) {
    for (auto m : {KfMode::standard, KfMode::standard_oracle, KfMode::adaptive, KfMode::adaptive_unmitigated})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown filter mode: " + s);
}

struct KfDemoConfig {
    std::size_t steps = 500;
    std::size_t switch_at = 250;
    double q = 1e-3;             // per-step process noise variance of position and velocity
    double q_factor = 1e5;       // multiplier applied from `switch_at` on
    double r = 1.0;              // observation noise variance
    std::size_t sign_window = 32;  // a long window keeps a well-specified filter from chasing noise
    std::uint64_t seed = 20240501;
};

struct KfDemoSeries {
    std::vector<double> truth;
    std::vector<double> observation;
    std::vector<double> estimate;
    std::vector<double> alpha;
    std::vector<double> gamma;
};

/// Truth and observations; identical across modes for one configuration.
inline std::pair<std::vector<double>, std::vector<double>> kf_demo_signal(const KfDemoConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> truth, obs;
    double pos = 0.0, vel = 0.0;
    for (std::size_t t = 0; t < cfg.steps; ++t) {
        if (t > 0) {
            const double q = cfg.q * (t >= cfg.switch_at ? cfg.q_factor : 1.0);
            pos += vel + std::sqrt(q) * normal(rng);
            vel += std::sqrt(q) * normal(rng);
        }
        truth.push_back(pos);
        obs.push_back(pos + std::sqrt(cfg.r) * normal(rng));
    }
    return {truth, obs};
}

inline KfDemoSeries run_kf_demo(const KfDemoConfig& cfg, KfMode mode) {
    if (cfg.steps == 0 || !(cfg.q > 0.0) || !(cfg.r > 0.0) || !(cfg.q_factor > 0.0))
        throw std::invalid_argument("kf demo: steps, q, r and q_factor must be positive");
    auto [truth, obs] = kf_demo_signal(cfg);
    FilterModel model;
    model.Phi = (MatrixXd(2, 2) << 1.0, 1.0, 0.0, 1.0).finished();
    model.H = (MatrixXd(1, 2) << 1.0, 0.0).finished();
    model.Q = cfg.q * MatrixXd::Identity(2, 2);
    model.R = cfg.r * MatrixXd::Identity(1, 1);

    KfDemoSeries out;
    out.truth = truth;
    out.observation = obs;
    FilterState state = FilterState::initial((VectorXd(2) << obs[0], 0.0).finished(),
                                             (MatrixXd(2, 2) << cfg.r, 0.0, 0.0, 1.0).finished(), 1,
                                             cfg.sign_window);
    AdaptiveOptions opts;
    if (mode == KfMode::adaptive_unmitigated) opts.forced_gamma = 1.0;
    for (std::size_t t = 0; t < cfg.steps; ++t) {
        if (t > 0) {
            FilterModel step_model = model;
            if (mode == KfMode::standard_oracle && t >= cfg.switch_at) step_model.Q *= cfg.q_factor;
            state = advance(step_model, std::move(state));
            const VectorXd z = (VectorXd(1) << obs[t]).finished();
            const auto mask = all_observed(1);
            if (mode == KfMode::adaptive || mode == KfMode::adaptive_unmitigated) {
                state = update_adaptive(step_model, std::move(state), z, mask, opts);
            } else {
                state = update_standard(step_model, std::move(state), z, mask);
            }
        }
        out.estimate.push_back(state.x(0));
        out.alpha.push_back(state.last_alpha);
        out.gamma.push_back(state.last_gamma);
    }
    return out;
}

/// Root-mean-square of estimate - truth over steps [from, to).
inline double rmse(const std::vector<double>& estimate, const std::vector<double>& truth, std::size_t from,
                   std::size_t to) {
    if (from >= to || to > estimate.size() || to > truth.size()) throw std::invalid_argument("rmse: bad range");
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
    return std::sqrt(s / static_cast<double>(to - from));
}

}  // namespace keysort
