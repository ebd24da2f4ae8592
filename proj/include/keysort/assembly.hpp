#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "keysort/assignment.hpp"
#include "keysort/map_codec.hpp"
#include "keysort/skeleton.hpp"

namespace keysort {

/// Direction of a complement prediction along a connection.
enum class Direction { parent_to_child, child_to_parent };

/// Candidate position plus the interpolated offset read from the connection's channels.
inline Point predict_complement(const CandidateKeypoint& cand, const AssocChannels& maps, Direction dir) {
    if (dir == Direction::parent_to_child)
        return cand.position + Point{read_assoc(maps.dx_ab, cand.position), read_assoc(maps.dy_ab, cand.position)};
    return cand.position + Point{read_assoc(maps.dx_ba, cand.position), read_assoc(maps.dy_ba, cand.position)};
}

/// Mean of the two complement-prediction errors for a (parent, child) candidate pair.
inline double association_penalty(const CandidateKeypoint& a, const CandidateKeypoint& b, const AssocChannels& maps) {
    const Point a_to_b = predict_complement(a, maps, Direction::parent_to_child);
    const Point b_to_a = predict_complement(b, maps, Direction::child_to_parent);
    return 0.5 * (distance(a_to_b, b.position) + distance(b_to_a, a.position));
}

/// Penalty matrix over parents (rows) and children (columns).
inline CostMatrix penalty_matrix(const std::vector<CandidateKeypoint>& parents,
                                 const std::vector<CandidateKeypoint>& children, const AssocChannels& maps) {
    CostMatrix c(static_cast<Eigen::Index>(parents.size()), static_cast<Eigen::Index>(children.size()));
    for (std::size_t i = 0; i < parents.size(); ++i)
        for (std::size_t j = 0; j < children.size(); ++j)
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                association_penalty(parents[i], children[j], maps);
    return c;
}

/// An assembled skeleton; `scores` holds the candidate score per present keypoint.
struct PartialSkeleton {
    Pose pose;
    std::vector<std::optional<double>> scores;
};

struct AssemblyParams {
    double gate_fraction = 0.05;  // of the image diagonal
};

/// Groups candidates into skeletons following the hierarchy: dominant connections first
/// (each an independent greedy problem against the shared root pool), unmatched roots and
/// dominant children are discarded, then the remaining connections by increasing order,
/// pruning unmatched children after every order.
inline std::vector<PartialSkeleton> assemble(const CandidateSet& candidates, const MapStack& maps,
                                             const Skeleton& skel, const AssemblyParams& params = {}) {
    const double diagonal = std::hypot(static_cast<double>(maps.width), static_cast<double>(maps.height));
    const double gate = params.gate_fraction * diagonal;
    const std::size_t n_cat = skel.size();
    if (candidates.size() != n_cat) throw std::invalid_argument("assemble: candidate categories mismatch");

    // attached[k][i]: owning root candidate index of candidate i of category k.
    std::vector<std::vector<std::optional<std::size_t>>> attached(n_cat);
    for (std::size_t k = 0; k < n_cat; ++k) attached[k].assign(candidates[k].size(), std::nullopt);
    const std::size_t root = skel.root();
    const auto& roots = candidates[root];
    for (std::size_t i = 0; i < roots.size(); ++i) attached[root][i] = i;

    std::vector<char> root_alive(roots.size(), 0);
    const auto& edges = skel.edges();
    for (std::size_t ei = 0; ei < edges.size(); ++ei) {
        const Edge& e = edges[ei];
        if (!e.dominant) continue;
        const auto m = greedy_assign(penalty_matrix(roots, candidates[e.child], maps.assoc[ei]), gate);
        for (const auto& a : m) {
            attached[e.child][a.col] = a.row;
            root_alive[a.row] = 1;
        }
    }
    for (std::size_t i = 0; i < roots.size(); ++i)
        if (!root_alive[i]) attached[root][i] = std::nullopt;

    for (std::size_t order = 1; order <= skel.max_rank(); ++order) {
        for (std::size_t ei = 0; ei < edges.size(); ++ei) {
            const Edge& e = edges[ei];
            if (e.training_only || e.dominant || e.order != order) continue;
            std::vector<CandidateKeypoint> parents;
            std::vector<std::size_t> parent_idx;
            for (std::size_t i = 0; i < candidates[e.parent].size(); ++i) {
                if (attached[e.parent][i]) {
                    parents.push_back(candidates[e.parent][i]);
                    parent_idx.push_back(i);
                }
            }
            const auto m = greedy_assign(penalty_matrix(parents, candidates[e.child], maps.assoc[ei]), gate);
            for (const auto& a : m) attached[e.child][a.col] = attached[e.parent][parent_idx[a.row]];
        }
    }

    std::vector<PartialSkeleton> out;
    std::vector<std::optional<std::size_t>> slot(roots.size());
    for (std::size_t i = 0; i < roots.size(); ++i) {
        if (!attached[root][i]) continue;
        slot[i] = out.size();
        PartialSkeleton s{Pose(n_cat), std::vector<std::optional<double>>(n_cat)};
        out.push_back(std::move(s));
    }
    for (std::size_t k = 0; k < n_cat; ++k)
        for (std::size_t i = 0; i < candidates[k].size(); ++i) {
            const auto owner = attached[k][i];
            if (!owner || !slot[*owner]) continue;
            auto& s = out[*slot[*owner]];
            s.pose.coords[k] = candidates[k][i].position;
            s.scores[k] = candidates[k][i].score;
        }
    return out;
}

}  // namespace keysort
