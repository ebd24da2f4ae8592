#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include <Eigen/Core>

namespace keysort {

/// rows x cols pairing costs; +infinity marks a forbidden pair.
using CostMatrix = Eigen::MatrixXd;

inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

struct Assignment {
    std::size_t row = 0;
    std::size_t col = 0;
    double cost = 0.0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

using Matching = std::vector<Assignment>;

inline double total_cost(const Matching& m) {
    return std::accumulate(m.begin(), m.end(), 0.0,
                           [](double s, const Assignment& a) { return s + a.cost; });
}

namespace detail {

inline Matching apply_gate(Matching m, std::optional<double> gate) {
    if (gate) {
        std::erase_if(m, [&](const Assignment& a) { return a.cost > *gate; });
    }
    std::sort(m.begin(), m.end(),
              [](const Assignment& a, const Assignment& b) { return a.row < b.row; });
    return m;
}

// Kuhn-Munkres with row/column potentials; requires rows <= cols. Returns the column
// assigned to each row.
inline std::vector<std::size_t> solve_rectangular(const Eigen::MatrixXd& a) {
    const auto n = static_cast<std::size_t>(a.rows());
    const auto m = static_cast<std::size_t>(a.cols());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(static_cast<Eigen::Index>(i0 - 1),
                                     static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace detail

/// Minimum-cost matching of size min(rows, cols) over permitted pairs. Pairs costing more
/// than `gate` are dropped after solving. Result is sorted by row.
inline Matching hungarian(const CostMatrix& costs, std::optional<double> gate = std::nullopt) {
    const Eigen::Index rows = costs.rows();
    const Eigen::Index cols = costs.cols();
    if (rows == 0 || cols == 0) return {};

    // Forbidden pairs become a penalty larger than any sum of permitted costs, so the
    // solver first maximises the number of permitted pairs.
    double span = 1.0;
    bool any_finite = false;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if (std::isfinite(costs(i, j))) {
                span += std::abs(costs(i, j));
                any_finite = true;
            }
    if (!any_finite) return {};
    const double big = 2.0 * span * static_cast<double>(std::max(rows, cols) + 1);

    const bool transpose = rows > cols;
    Eigen::MatrixXd work = transpose ? Eigen::MatrixXd(costs.transpose()) : costs;
    for (Eigen::Index i = 0; i < work.rows(); ++i)
        for (Eigen::Index j = 0; j < work.cols(); ++j)
            if (!std::isfinite(work(i, j))) work(i, j) = big;

    const auto assigned = detail::solve_rectangular(work);
    Matching out;
    for (std::size_t i = 0; i < assigned.size(); ++i) {
        const std::size_t r = transpose ? assigned[i] : i;
        const std::size_t c = transpose ? i : assigned[i];
        const double cost = costs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        if (std::isfinite(cost)) out.push_back({r, c, cost});
    }
    return detail::apply_gate(std::move(out), gate);
}

/// Repeatedly pairs the globally cheapest remaining (row, col) until one side runs out;
/// ties go to the lowest row, then the lowest column. Pairs above `gate` are then dropped.
inline Matching greedy_assign(const CostMatrix& costs, std::optional<double> gate = std::nullopt) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> entries;
    for (Eigen::Index i = 0; i < costs.rows(); ++i)
        for (Eigen::Index j = 0; j < costs.cols(); ++j)
            if (std::isfinite(costs(i, j)))
                entries.emplace_back(costs(i, j), static_cast<std::size_t>(i),
                                     static_cast<std::size_t>(j));
    std::sort(entries.begin(), entries.end());

    std::vector<char> row_used(static_cast<std::size_t>(costs.rows()), 0);
    std::vector<char> col_used(static_cast<std::size_t>(costs.cols()), 0);
    const auto limit = static_cast<std::size_t>(std::min(costs.rows(), costs.cols()));
    Matching out;
    for (const auto& [c, r, k] : entries) {
        if (out.size() == limit) break;
        if (row_used[r] || col_used[k]) continue;
        row_used[r] = 1;
        col_used[k] = 1;
        out.push_back({r, k, c});
    }
    return detail::apply_gate(std::move(out), gate);
}

/// Copy of `costs` with every entry above `gate` forbidden, for solvers that must not
/// consider over-threshold pairs at all.
inline CostMatrix forbid_above(const CostMatrix& costs, double gate) {
    CostMatrix out = costs;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            if (out(i, j) > gate) out(i, j) = kForbidden;
    return out;
}

}  // namespace keysort
