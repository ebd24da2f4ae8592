#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "keysort/pose.hpp"

namespace keysort {

struct ConnectionRef {
    std::string parent;
    std::string child;

    friend bool operator==(const ConnectionRef&, const ConnectionRef&) = default;
    friend auto operator<=>(const ConnectionRef&, const ConnectionRef&) = default;
};

inline std::string to_string(const ConnectionRef& c) { return c.parent + "->" + c.child; }

struct ConnectionSpec {
    std::string parent;
    std::string child;
    // Encoded into association maps but never used when assembling skeletons.
    bool training_only = false;
};

struct DominantSpec {
    std::string parent;
    std::string child;
    double beta = 1.0;

    ConnectionRef ref() const { return {parent, child}; }
};

struct EncoderParams {
    double theta = 0.2;          // kernel sigma as a fraction of skeleton scale
    double gamma = 0.2;          // association-neighbourhood cutoff on the unit-peak kernel
    double kernel_extent = 3.0;  // kernel support in multiples of sigma
};

/// Declarative skeleton description, as loaded from a config file.
struct SkeletonSpec {
    std::string name;
    std::vector<std::string> categories;
    std::string root;
    std::vector<ConnectionSpec> connections;
    std::vector<DominantSpec> dominant;
    ConnectionRef reference;
    // Left/right category pairs whose dominant-connection weights are tied.
    std::vector<std::pair<std::string, std::string>> symmetric;
    EncoderParams encoder;
};

namespace detail {

inline std::optional<std::size_t> find_index(const std::vector<std::string>& names,
                                             std::string_view name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
}

}  // namespace detail

/// Returns every invariant violation of `spec`; an empty list means it is valid.
inline std::vector<std::string> validate_spec(const SkeletonSpec& spec) {
    std::vector<std::string> out;
    const auto& cats = spec.categories;

    if (cats.empty()) out.emplace_back("no categories");
    std::set<std::string> seen;
    for (const auto& c : cats) {
        if (c.empty()) out.emplace_back("empty category name");
        if (!seen.insert(c).second) out.push_back("duplicate category: " + c);
    }
    const auto root = detail::find_index(cats, spec.root);
    if (!root) out.push_back("root not a category: " + spec.root);

    // Tree structure over non-training connections.
    std::vector<std::vector<std::size_t>> parents(cats.size());
    for (const auto& c : spec.connections) {
        const auto p = detail::find_index(cats, c.parent);
        const auto ch = detail::find_index(cats, c.child);
        if (!p || !ch) {
            out.push_back("connection references unknown category: " + c.parent + "->" + c.child);
            continue;
        }
        if (*p == *ch) {
            out.push_back("self connection: " + c.parent);
            continue;
        }
        if (!c.training_only) parents[*ch].push_back(*p);
    }
    bool tree = true;
    for (std::size_t k = 0; k < cats.size(); ++k) {
        const bool is_root = root && *root == k;
        if (is_root && !parents[k].empty()) {
            out.push_back("not a tree: root has a parent");
            tree = false;
        } else if (!is_root && parents[k].size() != 1) {
            out.push_back("not a tree: " + cats[k] + " has " + std::to_string(parents[k].size()) +
                          " parents");
            tree = false;
        }
    }
    if (tree && root) {
        for (std::size_t k = 0; k < cats.size(); ++k) {
            std::size_t cur = k;
            std::size_t steps = 0;
            while (cur != *root && steps <= cats.size()) {
                cur = parents[cur].front();
                ++steps;
            }
            if (cur != *root) {
                out.push_back("not a tree: cycle through " + cats[k]);
                tree = false;
                break;
            }
        }
    }

    if (spec.dominant.empty()) out.emplace_back("no dominant connections");
    std::set<ConnectionRef> dom_seen;
    bool reference_found = false;
    for (const auto& d : spec.dominant) {
        const auto p = detail::find_index(cats, d.parent);
        const auto ch = detail::find_index(cats, d.child);
        const std::string label = d.parent + "->" + d.child;
        if (!dom_seen.insert(d.ref()).second) out.push_back("duplicate dominant connection: " + label);
        const bool is_conn = std::any_of(spec.connections.begin(), spec.connections.end(),
                                         [&](const ConnectionSpec& c) {
                                             return !c.training_only && c.parent == d.parent &&
                                                    c.child == d.child;
                                         });
        if (!is_conn) out.push_back("dominant is not a skeleton connection: " + label);
        if (!p || !ch || !root || *p != *root) out.push_back("dominant must be first-order: " + label);
        if (!(d.beta > 0.0) || !std::isfinite(d.beta)) out.push_back("beta must be positive: " + label);
        if (d.ref() == spec.reference) {
            reference_found = true;
            if (d.beta != 1.0) out.push_back("reference beta must be 1: " + label);
        }
    }
    if (!spec.dominant.empty() && !reference_found)
        out.push_back("reference is not a dominant connection: " + to_string(spec.reference));

    for (const auto& [l, r] : spec.symmetric) {
        if (!detail::find_index(cats, l) || !detail::find_index(cats, r))
            out.push_back("symmetric pair references unknown category: " + l + "/" + r);
    }

    const auto& e = spec.encoder;
    if (!(e.theta > 0.0 && e.theta < 1.0)) out.emplace_back("encoder theta must be in (0,1)");
    if (!(e.gamma > 0.0 && e.gamma < 1.0)) out.emplace_back("encoder gamma must be in (0,1)");
    if (!(e.kernel_extent > 0.0)) out.emplace_back("encoder kernel_extent must be positive");
    return out;
}

/// Path length from `category` to the root.
inline std::size_t rank_of(const SkeletonSpec& spec, std::string_view category) {
    if (!detail::find_index(spec.categories, category))
        throw std::invalid_argument("unknown category: " + std::string(category));
    std::size_t rank = 0;
    std::string cur(category);
    while (cur != spec.root) {
        auto it = std::find_if(spec.connections.begin(), spec.connections.end(),
                               [&](const ConnectionSpec& c) { return !c.training_only && c.child == cur; });
        if (it == spec.connections.end() || rank > spec.categories.size())
            throw std::invalid_argument("category not connected to root: " + std::string(category));
        cur = it->parent;
        ++rank;
    }
    return rank;
}

/// A connection resolved to category indices.
struct Edge {
    std::size_t parent = 0;
    std::size_t child = 0;
    std::size_t order = 0;  // rank of the child
    bool training_only = false;
    bool dominant = false;
    double beta = 0.0;      // only meaningful for dominant edges
};

/// Validated, index-resolved view of a SkeletonSpec. Immutable after construction.
class Skeleton {
public:
    explicit Skeleton(SkeletonSpec spec) : spec_(std::move(spec)) {
        const auto violations = validate_spec(spec_);
        if (!violations.empty()) {
            std::string msg = "invalid skeleton spec";
            for (const auto& v : violations) msg += "; " + v;
            throw std::invalid_argument(msg);
        }
        const std::size_t n = spec_.categories.size();
        for (std::size_t k = 0; k < n; ++k) index_.emplace(spec_.categories[k], k);
        root_ = index_.at(spec_.root);
        parent_.assign(n, std::nullopt);
        for (const auto& c : spec_.connections)
            if (!c.training_only) parent_[index_.at(c.child)] = index_.at(c.parent);
        rank_.assign(n, 0);
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t cur = k;
            while (parent_[cur]) {
                cur = *parent_[cur];
                ++rank_[k];
            }
            max_rank_ = std::max(max_rank_, rank_[k]);
        }
        for (const auto& c : spec_.connections) {
            Edge e;
            e.parent = index_.at(c.parent);
            e.child = index_.at(c.child);
            e.order = rank_[e.child];
            e.training_only = c.training_only;
            for (const auto& d : spec_.dominant) {
                if (!c.training_only && d.parent == c.parent && d.child == c.child) {
                    e.dominant = true;
                    e.beta = d.beta;
                }
            }
            edges_.push_back(e);
        }
    }

    const SkeletonSpec& spec() const { return spec_; }
    const std::string& name() const { return spec_.name; }
    std::size_t size() const { return spec_.categories.size(); }
    const std::string& category(std::size_t k) const { return spec_.categories.at(k); }
    const std::vector<std::string>& categories() const { return spec_.categories; }
    std::size_t root() const { return root_; }
    std::optional<std::size_t> parent(std::size_t k) const { return parent_.at(k); }
    std::size_t rank(std::size_t k) const { return rank_.at(k); }
    std::size_t max_rank() const { return max_rank_; }
    const EncoderParams& encoder() const { return spec_.encoder; }

    std::size_t index(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) throw std::invalid_argument("unknown category: " + std::string(name));
        return it->second;
    }
    std::optional<std::size_t> find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// All connections in declaration order, including training-only ones.
    const std::vector<Edge>& edges() const { return edges_; }

    std::vector<Edge> tree_edges() const {
        std::vector<Edge> out;
        for (const auto& e : edges_)
            if (!e.training_only) out.push_back(e);
        return out;
    }

    std::vector<Edge> dominant_edges() const {
        std::vector<Edge> out;
        for (const auto& e : edges_)
            if (e.dominant) out.push_back(e);
        return out;
    }

    /// Ancestors of `k` from its parent up to the root, in that order.
    std::vector<std::size_t> ancestors(std::size_t k) const {
        std::vector<std::size_t> out;
        auto p = parent_.at(k);
        while (p) {
            out.push_back(*p);
            p = parent_[*p];
        }
        return out;
    }

    /// Category indices sorted by rank (root first); ties keep declaration order.
    std::vector<std::size_t> rank_order() const {
        std::vector<std::size_t> out(size());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = k;
        std::stable_sort(out.begin(), out.end(),
                         [&](std::size_t a, std::size_t b) { return rank_[a] < rank_[b]; });
        return out;
    }

private:
    SkeletonSpec spec_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t root_ = 0;
    std::vector<std::optional<std::size_t>> parent_;
    std::vector<std::size_t> rank_;
    std::size_t max_rank_ = 0;
    std::vector<Edge> edges_;
};

struct ConnectionVector {
    Point value;
    bool present = false;
};

/// u_{a->b} = b - a if both endpoints exist, else the zero vector (flagged absent).
inline ConnectionVector connection_vector(const Pose& pose, std::size_t from, std::size_t to) {
    if (!pose.has(from) || !pose.has(to)) return {};
    return {pose.at(to) - pose.at(from), true};
}

/// Root present and at least one dominant connection with both endpoints present.
inline bool is_valid_pose(const Skeleton& skel, const Pose& pose) {
    if (pose.size() != skel.size() || !pose.has(skel.root())) return false;
    for (const auto& e : skel.dominant_edges())
        if (pose.has(e.parent) && pose.has(e.child)) return true;
    return false;
}

/// Beta-weighted mean length of the present dominant connections; empty when none is present.
inline std::optional<double> skeleton_scale(const Skeleton& skel, const Pose& pose) {
    double num = 0.0;
    int count = 0;
    for (const auto& e : skel.dominant_edges()) {
        const auto u = connection_vector(pose, e.parent, e.child);
        if (!u.present) continue;
        num += e.beta * norm(u.value);
        ++count;
    }
    if (count == 0) return std::nullopt;
    return num / count;
}

/// Fits each non-reference dominant weight as the no-intercept least-squares slope of
/// |u_reference| = beta * |u_d|, over poses where both connections exist. Weights of
/// symmetric left/right pairs are replaced by their mean.
inline std::vector<DominantSpec> estimate_betas(std::span<const Pose> annotations,
                                                const SkeletonSpec& spec,
                                                const ConnectionRef& reference) {
    const auto& cats = spec.categories;
    auto idx = [&](const std::string& n) {
        auto i = detail::find_index(cats, n);
        if (!i) throw std::invalid_argument("unknown category: " + n);
        return *i;
    };
    const std::size_t rp = idx(reference.parent);
    const std::size_t rc = idx(reference.child);
    if (std::none_of(spec.dominant.begin(), spec.dominant.end(),
                     [&](const DominantSpec& d) { return d.ref() == reference; }))
        throw std::invalid_argument("reference is not a dominant connection: " + to_string(reference));

    std::vector<DominantSpec> out;
    for (const auto& d : spec.dominant) {
        DominantSpec fitted = d;
        if (d.ref() == reference) {
            fitted.beta = 1.0;
            out.push_back(fitted);
            continue;
        }
        const std::size_t dp = idx(d.parent);
        const std::size_t dc = idx(d.child);
        double sxy = 0.0;
        double sxx = 0.0;
        std::size_t n = 0;
        for (const auto& pose : annotations) {
            const auto uk = connection_vector(pose, rp, rc);
            const auto ud = connection_vector(pose, dp, dc);
            if (!uk.present || !ud.present) continue;
            const double x = norm(ud.value);
            sxy += x * norm(uk.value);
            sxx += x * x;
            ++n;
        }
        if (n < 2 || !(sxx > 0.0))
            throw std::invalid_argument("insufficient co-occurring samples for " +
                                        to_string(d.ref()));
        fitted.beta = sxy / sxx;
        out.push_back(fitted);
    }

    for (const auto& [left, right] : spec.symmetric) {
        auto find_child = [&](const std::string& c) {
            return std::find_if(out.begin(), out.end(),
                                [&](const DominantSpec& d) { return d.child == c && d.ref() != reference; });
        };
        auto l = find_child(left);
        auto r = find_child(right);
        if (l == out.end() || r == out.end()) continue;
        const double mean = 0.5 * (l->beta + r->beta);
        l->beta = mean;
        r->beta = mean;
    }
    return out;
}

/// The six-keypoint cattle skeleton: withers root, tail implant, head, nose, left and right hook.
inline SkeletonSpec cattle_skeleton_spec() {
    SkeletonSpec s;
    s.name = "cattle6";
    s.categories = {"w", "t", "h", "n", "lh", "rh"};
    s.root = "w";
    s.connections = {
        {"w", "t", false}, {"w", "h", false}, {"h", "n", false},
        {"w", "lh", false}, {"w", "rh", false}, {"rh", "lh", true},
    };
    s.dominant = {{"w", "t", 1.0}, {"w", "lh", 1.45}, {"w", "rh", 1.45}};
    s.reference = {"w", "t"};
    s.symmetric = {{"lh", "rh"}};
    s.encoder = EncoderParams{};
    return s;
}

inline const Skeleton& cattle_skeleton() {
    static const Skeleton skel(cattle_skeleton_spec());
    return skel;
}

}  // namespace keysort
