#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "keysort/pose.hpp"

namespace keysort {

/// Dense row-major float grid addressed as (row = y, col = x).
class Grid {
public:
    Grid() = default;
    Grid(std::size_t height, std::size_t width, float fill = 0.0f)
        : height_(height), width_(width), data_(height * width, fill) {}

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    bool empty() const { return data_.empty(); }

    float& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
    float operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }

    /// Value with edge replication for out-of-range indices.
    float clamped(std::ptrdiff_t row, std::ptrdiff_t col) const {
        const auto r = std::clamp<std::ptrdiff_t>(row, 0, static_cast<std::ptrdiff_t>(height_) - 1);
        const auto c = std::clamp<std::ptrdiff_t>(col, 0, static_cast<std::ptrdiff_t>(width_) - 1);
        return (*this)(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    }

    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    bool same_shape(const Grid& o) const { return height_ == o.height_ && width_ == o.width_; }
    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<float> data_;
};

namespace detail {

// Lagrange weights of the 3-node stencil {-1, 0, +1} evaluated at offset t.
inline std::array<double, 3> quadratic_weights(double t) {
    return {0.5 * t * (t - 1.0), (1.0 - t) * (1.0 + t), 0.5 * t * (t + 1.0)};
}

// Stencil centre nearest to `v`, kept one node away from the borders when possible.
inline std::ptrdiff_t stencil_centre(double v, std::size_t n) {
    auto c = static_cast<std::ptrdiff_t>(std::lround(v));
    if (n >= 3) c = std::clamp<std::ptrdiff_t>(c, 1, static_cast<std::ptrdiff_t>(n) - 2);
    return c;
}

}  // namespace detail

/// Biquadratic interpolation at an image-space position. Grid lookups swap (x, y) into
/// (col, row). Exact for quadratic fields, including at the nodes.
inline double interpolate(const Grid& g, Point p) {
    if (g.empty()) throw std::out_of_range("interpolate: empty grid");
    const double max_x = static_cast<double>(g.width()) - 1.0;
    const double max_y = static_cast<double>(g.height()) - 1.0;
    if (!(p.x >= 0.0 && p.x <= max_x && p.y >= 0.0 && p.y <= max_y))
        throw std::out_of_range("interpolate: position (" + std::to_string(p.x) + ", " +
                                std::to_string(p.y) + ") outside grid");
    const auto cc = detail::stencil_centre(p.x, g.width());
    const auto rc = detail::stencil_centre(p.y, g.height());
    const auto wx = detail::quadratic_weights(p.x - static_cast<double>(cc));
    const auto wy = detail::quadratic_weights(p.y - static_cast<double>(rc));
    double acc = 0.0;
    for (int dr = -1; dr <= 1; ++dr) {
        double row = 0.0;
        for (int dc = -1; dc <= 1; ++dc) {
            // Degenerate (<3 node) axes fall back to replicated values; weights still sum to 1.
            row += wx[static_cast<std::size_t>(dc + 1)] * g.clamped(rc + dr, cc + dc);
        }
        acc += wy[static_cast<std::size_t>(dr + 1)] * row;
    }
    return acc;
}

}  // namespace keysort
