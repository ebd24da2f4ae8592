#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "keysort/grid.hpp"
#include "keysort/pose.hpp"
#include "keysort/skeleton.hpp"

namespace keysort {

/// The four offset channels of one connection a->b.
struct AssocChannels {
    Grid dx_ab;
    Grid dy_ab;
    Grid dx_ba;
    Grid dy_ba;

    friend bool operator==(const AssocChannels&, const AssocChannels&) = default;
};

/// Probability maps per category and association maps per connection for one frame.
/// `assoc` is parallel to Skeleton::edges(), training-only connections included.
struct MapStack {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::string> prob_names;
    std::vector<Grid> prob;
    std::vector<std::string> assoc_names;
    std::vector<AssocChannels> assoc;

    static MapStack zeros(const Skeleton& skel, std::size_t width, std::size_t height) {
        MapStack m;
        m.width = width;
        m.height = height;
        m.prob_names = skel.categories();
        m.prob.assign(skel.size(), Grid(height, width));
        for (const auto& e : skel.edges()) {
            m.assoc_names.push_back(skel.category(e.parent) + "->" + skel.category(e.child));
            m.assoc.push_back({Grid(height, width), Grid(height, width), Grid(height, width),
                               Grid(height, width)});
        }
        return m;
    }

    /// Flat channel list: "prob/<cat>" then "assoc/<a->b>/{dx_ab,dy_ab,dx_ba,dy_ba}".
    std::vector<std::string> channel_names() const {
        std::vector<std::string> out;
        for (const auto& n : prob_names) out.push_back("prob/" + n);
        for (const auto& n : assoc_names)
            for (const char* c : {"dx_ab", "dy_ab", "dx_ba", "dy_ba"})
                out.push_back("assoc/" + n + "/" + c);
        return out;
    }

    std::vector<const Grid*> channels() const {
        std::vector<const Grid*> out;
        for (const auto& g : prob) out.push_back(&g);
        for (const auto& a : assoc)
            for (const Grid* g : {&a.dx_ab, &a.dy_ab, &a.dx_ba, &a.dy_ba}) out.push_back(g);
        return out;
    }

    std::vector<Grid*> channels() {
        std::vector<Grid*> out;
        for (auto& g : prob) out.push_back(&g);
        for (auto& a : assoc)
            for (Grid* g : {&a.dx_ab, &a.dy_ab, &a.dx_ba, &a.dy_ba}) out.push_back(g);
        return out;
    }

    /// True when channel names match what `skel` encodes.
    bool matches(const Skeleton& skel) const {
        return channel_names() == zeros(skel, 0, 0).channel_names();
    }

    friend bool operator==(const MapStack&, const MapStack&) = default;
};

/// sigma_n = theta * (s_n + s_mean) / 2
inline double kernel_sigma(double pose_scale, double mean_scale, double theta) {
    if (!(pose_scale > 0.0) || !(mean_scale > 0.0))
        throw std::invalid_argument("kernel_sigma: scales must be positive");
    return theta * (pose_scale + mean_scale) / 2.0;
}

/// Kernel sigma per pose, using the mean scale of all poses in the frame.
inline std::vector<double> pose_sigmas(std::span<const Pose> poses, const Skeleton& skel,
                                       const EncoderParams& params) {
    std::vector<double> scales;
    scales.reserve(poses.size());
    for (const auto& p : poses) {
        const auto s = skeleton_scale(skel, p);
        if (!s || !(*s > 0.0))
            throw std::invalid_argument("pose in frame " + std::to_string(p.frame_index) +
                                        " has no dominant connection");
        scales.push_back(*s);
    }
    double mean = 0.0;
    for (double s : scales) mean += s;
    if (!scales.empty()) mean /= static_cast<double>(scales.size());
    std::vector<double> out;
    for (double s : scales) out.push_back(kernel_sigma(s, mean, params.theta));
    return out;
}

namespace detail {

inline bool in_image(Point p, std::size_t width, std::size_t height) {
    return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0 && p.y >= 0.0 &&
           p.x <= static_cast<double>(width) - 1.0 && p.y <= static_cast<double>(height) - 1.0;
}

// Inclusive integer range of a kernel's support along one axis, clipped to [0, n).
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> support(double centre, double radius, std::size_t n) {
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(centre - radius)));
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1,
                                             static_cast<std::ptrdiff_t>(std::floor(centre + radius)));
    return {lo, hi};
}

// Visits every pixel of the kernel support with its unit-peak Gaussian value.
template <typename Fn>
void for_each_kernel_pixel(Point c, double sigma, double extent, std::size_t width,
                           std::size_t height, Fn&& fn) {
    const double radius = extent * sigma;
    const auto [c0, c1] = support(c.x, radius, width);
    const auto [r0, r1] = support(c.y, radius, height);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (auto r = r0; r <= r1; ++r) {
        const double dy = static_cast<double>(r) - c.y;
        for (auto col = c0; col <= c1; ++col) {
            const double dx = static_cast<double>(col) - c.x;
            fn(static_cast<std::size_t>(r), static_cast<std::size_t>(col),
               std::exp(-(dx * dx + dy * dy) * inv));
        }
    }
}

}  // namespace detail

/// Unit-peak Gaussian kernel per present keypoint, merged by element-wise maximum.
/// Keypoints outside the image are skipped and reported through `warnings`.
inline std::vector<Grid> encode_prob_maps(std::span<const Pose> poses, const Skeleton& skel,
                                          const EncoderParams& params, std::size_t width,
                                          std::size_t height,
                                          std::vector<std::string>* warnings = nullptr) {
    std::vector<Grid> maps(skel.size(), Grid(height, width));
    const auto sigmas = pose_sigmas(poses, skel, params);
    for (std::size_t n = 0; n < poses.size(); ++n) {
        for (std::size_t k = 0; k < skel.size(); ++k) {
            if (!poses[n].has(k)) continue;
            const Point c = poses[n].at(k);
            if (!detail::in_image(c, width, height)) {
                if (warnings)
                    warnings->push_back("frame " + std::to_string(poses[n].frame_index) + " pose " +
                                        std::to_string(n) + ": keypoint " + skel.category(k) +
                                        " outside image, skipped");
                continue;
            }
            auto& g = maps[k];
            detail::for_each_kernel_pixel(c, sigmas[n], params.kernel_extent, width, height,
                                          [&](std::size_t r, std::size_t col, double v) {
                                              g(r, col) = std::max(g(r, col), static_cast<float>(v));
                                          });
        }
    }
    return maps;
}

/// Offset fields per connection: the Gaussian-weighted mean offset to the partner keypoint,
/// with weights truncated to zero at or below gamma. Zero where no weight falls.
inline std::vector<AssocChannels> encode_assoc_maps(std::span<const Pose> poses, const Skeleton& skel,
                                                    const EncoderParams& params, std::size_t width,
                                                    std::size_t height) {
    const auto sigmas = pose_sigmas(poses, skel, params);
    std::vector<AssocChannels> out;
    const std::size_t cells = width * height;
    for (const auto& e : skel.edges()) {
        std::vector<double> w_a(cells, 0.0), sx_a(cells, 0.0), sy_a(cells, 0.0);
        std::vector<double> w_b(cells, 0.0), sx_b(cells, 0.0), sy_b(cells, 0.0);
        for (std::size_t n = 0; n < poses.size(); ++n) {
            const Pose& p = poses[n];
            if (!p.has(e.parent) || !p.has(e.child)) continue;
            const Point a = p.at(e.parent);
            const Point b = p.at(e.child);
            if (!detail::in_image(a, width, height) || !detail::in_image(b, width, height)) continue;
            const Point ab = b - a;
            auto splat = [&](Point centre, Point offset, std::vector<double>& w,
                             std::vector<double>& sx, std::vector<double>& sy) {
                detail::for_each_kernel_pixel(centre, sigmas[n], params.kernel_extent, width, height,
                                              [&](std::size_t r, std::size_t c, double v) {
                                                  if (!(v > params.gamma)) return;
                                                  const std::size_t i = r * width + c;
                                                  w[i] += v;
                                                  sx[i] += v * offset.x;
                                                  sy[i] += v * offset.y;
                                              });
            };
            splat(a, ab, w_a, sx_a, sy_a);
            splat(b, -1.0 * ab, w_b, sx_b, sy_b);
        }
        AssocChannels ch{Grid(height, width), Grid(height, width), Grid(height, width),
                         Grid(height, width)};
        for (std::size_t i = 0; i < cells; ++i) {
            const std::size_t r = i / std::max<std::size_t>(width, 1);
            const std::size_t c = i % std::max<std::size_t>(width, 1);
            if (w_a[i] > 0.0) {
                ch.dx_ab(r, c) = static_cast<float>(sx_a[i] / w_a[i]);
                ch.dy_ab(r, c) = static_cast<float>(sy_a[i] / w_a[i]);
            }
            if (w_b[i] > 0.0) {
                ch.dx_ba(r, c) = static_cast<float>(sx_b[i] / w_b[i]);
                ch.dy_ba(r, c) = static_cast<float>(sy_b[i] / w_b[i]);
            }
        }
        out.push_back(std::move(ch));
    }
    return out;
}

/// Ground-truth map stack for one frame.
inline MapStack encode_maps(std::span<const Pose> poses, const Skeleton& skel, const EncoderParams& params,
                            std::size_t width, std::size_t height,
                            std::vector<std::string>* warnings = nullptr) {
    MapStack m = MapStack::zeros(skel, width, height);
    m.prob = encode_prob_maps(poses, skel, params, width, height, warnings);
    m.assoc = encode_assoc_maps(poses, skel, params, width, height);
    return m;
}

struct CandidateKeypoint {
    std::size_t category = 0;
    Point position;
    double score = 0.0;

    friend bool operator==(const CandidateKeypoint&, const CandidateKeypoint&) = default;
};

/// Candidates grouped by category index.
using CandidateSet = std::vector<std::vector<CandidateKeypoint>>;

struct DecodeParams {
    double threshold = 0.4;
    double nms_radius = 7.0;
    std::size_t smooth_size = 5;
};

/// Box mean with edge-replicated padding.
inline Grid box_smooth(const Grid& g, std::size_t size) {
    if (g.empty() || size <= 1) return g;
    const auto half = static_cast<std::ptrdiff_t>(size / 2);
    const auto h = static_cast<std::ptrdiff_t>(g.height());
    const auto w = static_cast<std::ptrdiff_t>(g.width());
    std::vector<double> tmp(g.height() * g.width(), 0.0);
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double s = 0.0;
            for (std::ptrdiff_t d = -half; d <= half; ++d) s += g.clamped(r, c + d);
            tmp[static_cast<std::size_t>(r * w + c)] = s;
        }
    Grid out(g.height(), g.width());
    const double norm = 1.0 / static_cast<double>((2 * half + 1) * (2 * half + 1));
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double s = 0.0;
            for (std::ptrdiff_t d = -half; d <= half; ++d) {
                const auto rr = std::clamp<std::ptrdiff_t>(r + d, 0, h - 1);
                s += tmp[static_cast<std::size_t>(rr * w + c)];
            }
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = static_cast<float>(s * norm);
        }
    return out;
}

/// Vertex offset of the parabola through (-1, left), (0, centre), (1, right), clamped to +-0.5.
inline double parabola_offset(double left, double centre, double right) {
    const double denom = 2.0 * (2.0 * centre - left - right);
    if (!(denom > 0.0)) return 0.0;
    return std::clamp((right - left) / denom, -0.5, 0.5);
}

/// Smooths each probability map, keeps local maxima above the threshold, suppresses the
/// weaker of any two maxima closer than the NMS radius (ties: lower row, then lower column)
/// and refines the survivors to sub-pixel precision. Candidates are returned in raster order.
inline CandidateSet decode_candidates(std::span<const Grid> prob_maps, const DecodeParams& params = {}) {
    CandidateSet out(prob_maps.size());
    for (std::size_t k = 0; k < prob_maps.size(); ++k) {
        const Grid s = box_smooth(prob_maps[k], params.smooth_size);
        const auto h = static_cast<std::ptrdiff_t>(s.height());
        const auto w = static_cast<std::ptrdiff_t>(s.width());
        struct Peak {
            double score;
            std::ptrdiff_t row;
            std::ptrdiff_t col;
        };
        std::vector<Peak> peaks;
        for (std::ptrdiff_t r = 0; r < h; ++r) {
            for (std::ptrdiff_t c = 0; c < w; ++c) {
                const float v = s(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                if (!(v > params.threshold)) continue;
                bool is_max = true;
                for (std::ptrdiff_t dr = -1; dr <= 1 && is_max; ++dr)
                    for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const auto rr = r + dr;
                        const auto cc = c + dc;
                        if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
                        if (s(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) > v) {
                            is_max = false;
                            break;
                        }
                    }
                if (is_max) peaks.push_back({v, r, c});
            }
        }
        std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
            return std::tie(b.score, a.row, a.col) < std::tie(a.score, b.row, b.col);
        });
        std::vector<Peak> kept;
        for (const auto& p : peaks) {
            const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Peak& q) {
                return std::hypot(static_cast<double>(p.row - q.row), static_cast<double>(p.col - q.col)) <
                       params.nms_radius;
            });
            if (!suppressed) kept.push_back(p);
        }
        std::sort(kept.begin(), kept.end(),
                  [](const Peak& a, const Peak& b) { return std::tie(a.row, a.col) < std::tie(b.row, b.col); });
        for (const auto& p : kept) {
            const double centre = p.score;
            const double ox = parabola_offset(s.clamped(p.row, p.col - 1), centre, s.clamped(p.row, p.col + 1));
            const double oy = parabola_offset(s.clamped(p.row - 1, p.col), centre, s.clamped(p.row + 1, p.col));
            Point pos{static_cast<double>(p.col) + ox, static_cast<double>(p.row) + oy};
            pos.x = std::clamp(pos.x, 0.0, static_cast<double>(w - 1));
            pos.y = std::clamp(pos.y, 0.0, static_cast<double>(h - 1));
            out[k].push_back({k, pos, std::clamp(centre, 0.0, 1.0)});
        }
    }
    return out;
}

/// Association-map value at a sub-pixel image position.
inline double read_assoc(const Grid& assoc_map, Point position) { return interpolate(assoc_map, position); }

struct LossTerms {
    double total = 0.0;
    double location = 0.0;
    double association = 0.0;
};

/// theta1 + theta2 * mean squared probability error + theta3 * mean squared scaled offset
/// error over cells where the ground-truth offset is nonzero.
inline LossTerms loss_eval(const MapStack& pred, const MapStack& truth, double theta1, double theta2,
                           double theta3, double gamma_loss = 512.0) {
    if (pred.width != truth.width || pred.height != truth.height || pred.prob.size() != truth.prob.size() ||
        pred.assoc.size() != truth.assoc.size())
        throw std::invalid_argument("loss_eval: map stacks differ in shape");
    LossTerms out;
    double sq = 0.0;
    std::size_t cells = 0;
    for (std::size_t k = 0; k < pred.prob.size(); ++k) {
        const auto a = pred.prob[k].values();
        const auto b = truth.prob[k].values();
        if (a.size() != b.size()) throw std::invalid_argument("loss_eval: grid shape mismatch");
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            sq += d * d;
        }
        cells += a.size();
    }
    out.location = cells > 0 ? sq / static_cast<double>(cells) : 0.0;

    double asq = 0.0;
    std::size_t nonzero = 0;
    const auto pc = pred.channels();
    const auto tc = truth.channels();
    for (std::size_t ch = pred.prob.size(); ch < tc.size(); ++ch) {
        const auto a = pc[ch]->values();
        const auto b = tc[ch]->values();
        if (a.size() != b.size()) throw std::invalid_argument("loss_eval: grid shape mismatch");
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (b[i] == 0.0f) continue;
            const double d = (static_cast<double>(a[i]) - static_cast<double>(b[i])) / gamma_loss;
            asq += d * d;
            ++nonzero;
        }
    }
    out.association = nonzero > 0 ? asq / static_cast<double>(nonzero) : 0.0;
    out.total = theta1 + theta2 * out.location + theta3 * out.association;
    return out;
}

}  // namespace keysort
