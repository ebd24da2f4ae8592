#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace keysort {

/// Image-space point: x is the column, y is the row.
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
    friend bool operator==(const Point&, const Point&) = default;
};

inline double norm(Point p) { return std::hypot(p.x, p.y); }
inline double distance(Point a, Point b) { return norm(a - b); }

/// One animal's keypoints, indexed by category index of the owning skeleton.
struct Pose {
    std::vector<std::optional<Point>> coords;
    std::size_t frame_index = 0;

    Pose() = default;
    explicit Pose(std::size_t n_categories, std::size_t frame = 0)
        : coords(n_categories), frame_index(frame) {}

    std::size_t size() const { return coords.size(); }
    bool has(std::size_t k) const { return k < coords.size() && coords[k].has_value(); }
    Point at(std::size_t k) const { return coords.at(k).value(); }

    std::size_t present_count() const {
        std::size_t n = 0;
        for (const auto& c : coords) n += c.has_value() ? 1 : 0;
        return n;
    }

    friend bool operator==(const Pose&, const Pose&) = default;
};

}  // namespace keysort
