#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

// Linear Kalman filter with missing-observation masking and an adaptive covariance
// inflation: the predicted covariance is divided by a trace-matched factor alpha, and
// alpha is pulled back towards 1 unless recent innovations are persistently one-signed.

namespace keysort {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FilterModel {
    MatrixXd Phi;  // state transition (n x n)
    MatrixXd H;    // observation (k x n)
    MatrixXd Q;    // system noise (n x n)
    MatrixXd R;    // observation noise (k x k)

    Eigen::Index state_dim() const { return Phi.rows(); }
    Eigen::Index obs_dim() const { return H.rows(); }

    void check() const {
        const auto n = Phi.rows();
        const auto k = H.rows();
        if (Phi.cols() != n || H.cols() != n || Q.rows() != n || Q.cols() != n || R.rows() != k || R.cols() != k)
            throw std::invalid_argument("FilterModel: inconsistent dimensions");
    }
};

/// Which observation dimensions carry data this step.
using ObservationMask = std::vector<bool>;

inline ObservationMask all_observed(Eigen::Index k) { return ObservationMask(static_cast<std::size_t>(k), true); }

/// Per-dimension ring buffer of innovation signs (+1, -1 or 0).
class SignHistory {
public:
    SignHistory() = default;
    SignHistory(std::size_t dims, std::size_t window) : window_(window), signs_(dims) {}

    std::size_t window() const { return window_; }
    std::size_t dims() const { return signs_.size(); }
    const std::deque<int>& dim(std::size_t i) const { return signs_.at(i); }

    void push(std::size_t i, double innovation) {
        auto& d = signs_.at(i);
        d.push_back(innovation > 0.0 ? 1 : (innovation < 0.0 ? -1 : 0));
        while (d.size() > window_) d.pop_front();
    }

    friend bool operator==(const SignHistory&, const SignHistory&) = default;

private:
    std::size_t window_ = 8;
    std::vector<std::deque<int>> signs_;
};

struct FilterState {
    VectorXd x;
    MatrixXd P;
    std::size_t step = 0;
    SignHistory signs;
    double last_alpha = 1.0;      // alpha actually applied (after mitigation)
    double last_raw_alpha = 1.0;  // alpha before mitigation
    double last_gamma = 0.0;

    static FilterState initial(VectorXd x0, MatrixXd P0, Eigen::Index obs_dim, std::size_t window = 8) {
        FilterState s;
        s.x = std::move(x0);
        s.P = std::move(P0);
        s.signs = SignHistory(static_cast<std::size_t>(obs_dim), window);
        return s;
    }
};

struct Prediction {
    VectorXd x;
    MatrixXd P;
};

/// x_prior = Phi x, P_prior = Phi P Phi^T + Q
inline Prediction predict(const FilterModel& model, const FilterState& state) {
    return {model.Phi * state.x, model.Phi * state.P * model.Phi.transpose() + model.Q};
}

/// Replaces the estimate with its one-step prediction.
inline FilterState advance(const FilterModel& model, FilterState state) {
    auto [x, P] = predict(model, state);
    state.x = std::move(x);
    state.P = std::move(P);
    ++state.step;
    return state;
}

/// Innovation restricted to the observed dimensions.
struct Innovation {
    std::vector<Eigen::Index> rows;  // observed dimension indices
    VectorXd y;                      // z' - H' x_prior
    MatrixXd S;                      // R' + H' P_prior H'^T
    MatrixXd H;                      // H'
    MatrixXd R;                      // R'

    bool empty() const { return rows.empty(); }
};

inline Innovation innovation(const FilterModel& model, const VectorXd& x_prior, const MatrixXd& P_prior,
                             const VectorXd& z, const ObservationMask& mask) {
    if (z.size() != model.obs_dim() || static_cast<Eigen::Index>(mask.size()) != model.obs_dim())
        throw std::invalid_argument("innovation: observation size mismatch");
    Innovation out;
    for (Eigen::Index i = 0; i < model.obs_dim(); ++i)
        if (mask[static_cast<std::size_t>(i)]) out.rows.push_back(i);
    if (out.rows.empty()) return out;
    out.H = model.H(out.rows, Eigen::all);
    out.R = model.R(out.rows, out.rows);
    out.y = z(out.rows) - out.H * x_prior;
    out.S = out.R + out.H * P_prior * out.H.transpose();
    return out;
}

/// Trace-matched adaptive factor in (0, 1]. Falls back to tr(S)/tr(S_hat) when the exact
/// form's denominator is not positive.
inline double adaptive_alpha(const MatrixXd& S, const MatrixXd& S_hat, const MatrixXd& R) {
    constexpr double kMinAlpha = 1e-12;
    const double tr_s = S.trace();
    const double tr_hat = S_hat.trace();
    if (!(tr_hat > 0.0) || tr_hat < tr_s) return 1.0;
    const double denom = tr_hat - R.trace();
    double alpha = denom > 0.0 ? (tr_s - R.trace()) / denom : tr_s / tr_hat;
    if (!std::isfinite(alpha)) return 1.0;
    return std::clamp(alpha, kMinAlpha, 1.0);
}

/// Mean over observed dimensions of |mean recorded sign|. Dimensions without history are
/// skipped; with no evidence at all the result is 1.
inline double mitigation_gamma(const SignHistory& history, const ObservationMask& mask) {
    double sum = 0.0;
    std::size_t dims = 0;
    for (std::size_t i = 0; i < history.dims(); ++i) {
        if (i < mask.size() && !mask[i]) continue;
        const auto& d = history.dim(i);
        if (d.empty()) continue;
        int s = 0;
        for (int v : d) s += v;
        sum += std::abs(static_cast<double>(s)) / static_cast<double>(d.size());
        ++dims;
    }
    return dims == 0 ? 1.0 : sum / static_cast<double>(dims);
}

/// P = (I - K H) P (I - K H)^T + K R K^T
inline MatrixXd joseph_update(const MatrixXd& P, const MatrixXd& K, const MatrixXd& H, const MatrixXd& R) {
    const MatrixXd I_KH = MatrixXd::Identity(P.rows(), P.cols()) - K * H;
    return I_KH * P * I_KH.transpose() + K * R * K.transpose();
}

/// P = (I - K H) P; cross-check only.
inline MatrixXd simplified_update(const MatrixXd& P, const MatrixXd& K, const MatrixXd& H) {
    return (MatrixXd::Identity(P.rows(), P.cols()) - K * H) * P;
}

/// K = P H^T S^-1
inline MatrixXd kalman_gain(const MatrixXd& P, const MatrixXd& H, const MatrixXd& S) {
    Eigen::LLT<MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw std::runtime_error("singular innovation covariance");
    return llt.solve(H * P).transpose();
}

struct AdaptiveOptions {
    // Overrides the sign-based mitigation factor (1 = unmitigated, 0 = no adaptation).
    std::optional<double> forced_gamma;
};

namespace detail {

inline FilterState correct(const FilterModel& model, FilterState state, const VectorXd& z, const ObservationMask& mask,
                           bool adaptive, const AdaptiveOptions& opts) {
    const Innovation inn = innovation(model, state.x, state.P, z, mask);
    state.last_alpha = 1.0;
    state.last_raw_alpha = 1.0;
    state.last_gamma = 0.0;
    if (inn.empty()) return state;

    for (std::size_t j = 0; j < inn.rows.size(); ++j)
        state.signs.push(static_cast<std::size_t>(inn.rows[j]), inn.y(static_cast<Eigen::Index>(j)));

    MatrixXd P = state.P;
    MatrixXd S = inn.S;
    if (adaptive) {
        const MatrixXd S_hat = inn.y * inn.y.transpose();
        const double raw = adaptive_alpha(inn.S, S_hat, inn.R);
        const double gamma = opts.forced_gamma ? std::clamp(*opts.forced_gamma, 0.0, 1.0)
                                               : mitigation_gamma(state.signs, mask);
        const double alpha = 1.0 - gamma * (1.0 - raw);
        P = P / alpha;
        S = inn.R + inn.H * P * inn.H.transpose();
        state.last_alpha = alpha;
        state.last_raw_alpha = raw;
        state.last_gamma = gamma;
    }
    const MatrixXd K = kalman_gain(P, inn.H, S);
    state.x = state.x + K * inn.y;
    MatrixXd updated = joseph_update(P, K, inn.H, inn.R);
    state.P = 0.5 * (updated + updated.transpose());
    return state;
}

}  // namespace detail

/// Classical masked update of a predicted state.
inline FilterState update_standard(const FilterModel& model, FilterState state, const VectorXd& z,
                                   const ObservationMask& mask) {
    return detail::correct(model, std::move(state), z, mask, false, {});
}

/// Masked update with mitigated adaptive inflation of the predicted covariance.
inline FilterState update_adaptive(const FilterModel& model, FilterState state, const VectorXd& z,
                                   const ObservationMask& mask, const AdaptiveOptions& opts = {}) {
    return detail::correct(model, std::move(state), z, mask, true, opts);
}

}  // namespace keysort
