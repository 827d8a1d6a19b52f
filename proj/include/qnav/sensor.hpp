#pragma once

// Observation model: 2.5-D column raycasting of vertically extruded
// obstacles into z-depth and intensity images, an optional degradation
// model for imperfect depth, and PGM image I/O.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qnav/rng.hpp"
#include "qnav/tensor.hpp"
#include "qnav/world.hpp"

namespace qnav {

inline constexpr double kCameraHeight = 1.5;   // m above floor
inline constexpr double kCeilingHeight = 3.0;  // obstacles span floor to ceiling
inline constexpr double kMinDepth = 1e-3;

struct CameraModel {
    double fx = 208.0, fy = 208.0;
    double cx = 208.0, cy = 64.0;
    std::size_t width = 416, height = 128;
    double max_range = kDefaultMaxRange;

    /// 416x128, 90 degree horizontal field of view.
    static CameraModel full() { return {}; }
    /// Same field of view downsampled to 104x32.
    static CameraModel desk() { return {52.0, 52.0, 52.0, 16.0, 104, 32, kDefaultMaxRange}; }

    double horizontal_fov() const { return 2.0 * std::atan(static_cast<double>(width) / (2.0 * fx)); }

    void validate() const {
        if (!(fx > 0 && fy > 0) || !(cx > 0 && cx < static_cast<double>(width)) ||
            !(cy > 0 && cy < static_cast<double>(height)) || !(max_range > 0))
            throw std::invalid_argument("invalid camera model");
    }
    friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

/// Row-major (row, col) grid of doubles.
template <class Tag>
struct Grid {
    std::size_t height = 0, width = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

    double& operator()(std::size_t row, std::size_t col) { return values[row * width + col]; }
    double operator()(std::size_t row, std::size_t col) const { return values[row * width + col]; }
    std::size_t size() const { return values.size(); }
    friend bool operator==(const Grid&, const Grid&) = default;
};

struct DepthTag {};
struct IntensityTag {};

/// z-depth in meters, every value in (0, max_range].
struct DepthMap : Grid<DepthTag> {
    double max_range = kDefaultMaxRange;

    DepthMap() = default;
    DepthMap(std::size_t h, std::size_t w, double max_r, double fill)
        : Grid<DepthTag>(h, w, fill), max_range(max_r) {}
    friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

/// Scalar intensity in [0, 1].
using IntensityImage = Grid<IntensityTag>;

// ---------------------------------------------------------------------------
// Ray casting

struct RayHit {
    double t = std::numeric_limits<double>::infinity();  // along an unnormalized direction
    int appearance = 0;
};

namespace detail {

inline double ray_circle(Vec2 p, Vec2 d, const Circle& c) {
    const Vec2 m = p - c.center;
    const double a = dot(d, d);
    const double b = dot(d, m);
    const double cc = dot(m, m) - c.radius * c.radius;
    if (cc <= 0.0) return 0.0;
    const double disc = b * b - a * cc;
    if (disc < 0.0) return std::numeric_limits<double>::infinity();
    const double t = (-b - std::sqrt(disc)) / a;
    return t >= 0.0 ? t : std::numeric_limits<double>::infinity();
}

inline double ray_box(Vec2 p, Vec2 d, const Box& b) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const double ps[2] = {p.x, p.y}, ds[2] = {d.x, d.y};
    const double lo[2] = {b.min.x, b.min.y}, hi[2] = {b.max.x, b.max.y};
    for (int k = 0; k < 2; ++k) {
        if (ds[k] == 0.0) {
            if (ps[k] < lo[k] || ps[k] > hi[k]) return std::numeric_limits<double>::infinity();
            continue;
        }
        double a = (lo[k] - ps[k]) / ds[k];
        double c = (hi[k] - ps[k]) / ds[k];
        if (a > c) std::swap(a, c);
        t0 = std::max(t0, a);
        t1 = std::min(t1, c);
    }
    if (t0 > t1 || t1 < 0.0) return std::numeric_limits<double>::infinity();
    return std::max(t0, 0.0);
}

/// Exit distance from inside the arena rectangle.
inline double ray_walls(Vec2 p, Vec2 d, const Rect& r) {
    double t = std::numeric_limits<double>::infinity();
    if (d.x > 0) t = std::min(t, (r.max.x - p.x) / d.x);
    if (d.x < 0) t = std::min(t, (r.min.x - p.x) / d.x);
    if (d.y > 0) t = std::min(t, (r.max.y - p.y) / d.y);
    if (d.y < 0) t = std::min(t, (r.min.y - p.y) / d.y);
    return std::max(t, 0.0);
}

inline RayHit cast_ray(const WorldSpec& world, Vec2 p, Vec2 d) {
    RayHit hit{ray_walls(p, d, world.bounds), 0};
    for (const auto& o : world.obstacles) {
        const double t = std::visit(
            [&](const auto& s) {
                if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Circle>)
                    return ray_circle(p, d, s);
                else
                    return ray_box(p, d, s);
            },
            o.shape);
        if (t < hit.t) hit = {t, o.appearance};
    }
    return hit;
}

/// Per-column ray in world coordinates. The forward component is 1, so the
/// ray parameter equals z-depth.
inline Vec2 column_direction(const Pose2D& pose, const CameraModel& cam, std::size_t col) {
    const Vec2 fwd = pose.forward();
    const Vec2 right{std::sin(pose.yaw), -std::cos(pose.yaw)};
    const double s = (static_cast<double>(col) - cam.cx) / cam.fx;
    return fwd + s * right;
}

/// Depth of the floor (below the horizon) or ceiling (above) for a row.
inline double plane_depth(const CameraModel& cam, std::size_t row) {
    const double slope = (static_cast<double>(row) - cam.cy) / cam.fy;
    if (slope > 0.0) return kCameraHeight / slope;
    if (slope < 0.0) return (kCeilingHeight - kCameraHeight) / -slope;
    return std::numeric_limits<double>::infinity();
}

inline double appearance_shade(int appearance) {
    if (appearance == 0) return 0.55;
    const auto h = mix64(static_cast<std::uint64_t>(appearance));
    return 0.3 + 0.6 * static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double attenuation(double distance, double max_range) {
    return 1.0 - 0.2 * std::min(distance / max_range, 1.0);
}

}  // namespace detail

/// z-depth image. Each column casts one horizontal ray; rows whose line of
/// sight meets the floor or ceiling before the obstacle band hold that plane's
/// depth. Columns with no hit inside max_range read max_range throughout.
inline DepthMap render_depth(const WorldSpec& world, const Pose2D& pose, const CameraModel& cam) {
    DepthMap out(cam.height, cam.width, cam.max_range, cam.max_range);
    const Vec2 p = pose.position();
    for (std::size_t col = 0; col < cam.width; ++col) {
        const double t = detail::cast_ray(world, p, detail::column_direction(pose, cam, col)).t;
        if (!(t < cam.max_range)) continue;
        for (std::size_t row = 0; row < cam.height; ++row) {
            const double z = std::min({t, detail::plane_depth(cam, row), cam.max_range});
            out(row, col) = std::max(z, kMinDepth);
        }
    }
    return out;
}

/// Intensity image consistent with render_depth. Surfaces carry a smooth
/// world-anchored texture so a 3-D point keeps its shade across nearby
/// views; brightness falls off mildly with distance.
inline IntensityImage render_intensity(const WorldSpec& world, const Pose2D& pose, const CameraModel& cam) {
    constexpr double kBackground = 0.1;
    IntensityImage out(cam.height, cam.width, kBackground);
    const Vec2 p = pose.position();
    for (std::size_t col = 0; col < cam.width; ++col) {
        const Vec2 d = detail::column_direction(pose, cam, col);
        const auto hit = detail::cast_ray(world, p, d);
        if (!(hit.t < cam.max_range)) continue;
        const double dn = norm(d);
        const double base = detail::appearance_shade(hit.appearance);
        for (std::size_t row = 0; row < cam.height; ++row) {
            const double plane = detail::plane_depth(cam, row);
            const double slope = (static_cast<double>(row) - cam.cy) / cam.fy;
            double z, shade;
            if (plane < hit.t) {
                z = std::min(plane, cam.max_range);
                const Vec2 q = p + z * d;
                shade = slope > 0.0 ? 0.35 + 0.12 * std::sin(q.x * 1.9) * std::sin(q.y * 1.7)
                                    : 0.8 + 0.08 * std::sin(q.x * 1.3 + 0.5) * std::cos(q.y * 1.1);
            } else {
                z = hit.t;
                const Vec2 q = p + z * d;
                const double height = kCameraHeight - z * slope;
                shade = base * (0.8 + 0.2 * std::sin((q.x + q.y) * 2.1) * std::cos(height * 2.3));
            }
            const double dist = z * std::sqrt(dn * dn + slope * slope);
            out(row, col) = std::clamp(shade * detail::attenuation(dist, cam.max_range), 0.0, 1.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Degradation

enum class DropoutFill { max_range, local_mean };

struct DegradeParams {
    int blur_radius = 0;
    double speckle_sd = 0.0;
    int dropout_rect_count = 0;
    DropoutFill dropout_fill = DropoutFill::max_range;

    bool is_identity() const { return blur_radius == 0 && speckle_sd == 0.0 && dropout_rect_count == 0; }
    void validate() const {
        if (blur_radius < 0 || speckle_sd < 0 || dropout_rect_count < 0)
            throw std::invalid_argument("degrade parameters must be non-negative");
    }
    friend bool operator==(const DegradeParams&, const DegradeParams&) = default;

    /// Mild profile used for robustness evaluation.
    static DegradeParams mild() { return {1, 0.05, 1, DropoutFill::max_range}; }
};

struct DropoutRect {
    std::size_t row0, col0, rows, cols;
};

/// Box blur, multiplicative speckle, then rectangular dropouts, re-clipped to
/// (0, max_range]. Zero parameters return the input unchanged.
inline DepthMap degrade(const DepthMap& depth, const DegradeParams& params, Rng& rng,
                        std::vector<DropoutRect>* rects_out = nullptr) {
    params.validate();
    DepthMap out = depth;
    if (params.is_identity()) return out;
    const std::size_t H = depth.height, W = depth.width;

    if (params.blur_radius > 0) {
        const auto r = static_cast<std::ptrdiff_t>(params.blur_radius);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double s = 0.0;
                int n = 0;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
                        const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
                        if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(H) ||
                            xx >= static_cast<std::ptrdiff_t>(W))
                            continue;
                        s += depth(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                        ++n;
                    }
                out(y, x) = s / n;
            }
    }
    if (params.speckle_sd > 0.0) {
        std::normal_distribution<double> noise(0.0, params.speckle_sd);
        for (auto& v : out.values) v *= 1.0 + noise(rng);
    }
    for (int k = 0; k < params.dropout_rect_count; ++k) {
        const std::size_t rows = std::max<std::size_t>(1, H / 8 + uniform_index(rng, H / 8 + 1));
        const std::size_t cols = std::max<std::size_t>(1, W / 8 + uniform_index(rng, W / 8 + 1));
        const std::size_t r0 = uniform_index(rng, H - rows + 1);
        const std::size_t c0 = uniform_index(rng, W - cols + 1);
        double fill = depth.max_range;
        if (params.dropout_fill == DropoutFill::local_mean) {
            double s = 0.0;
            for (std::size_t y = r0; y < r0 + rows; ++y)
                for (std::size_t x = c0; x < c0 + cols; ++x) s += out(y, x);
            fill = s / static_cast<double>(rows * cols);
        }
        for (std::size_t y = r0; y < r0 + rows; ++y)
            for (std::size_t x = c0; x < c0 + cols; ++x) out(y, x) = fill;
        if (rects_out) rects_out->push_back({r0, c0, rows, cols});
    }
    for (auto& v : out.values) v = std::clamp(v, kMinDepth, depth.max_range);
    return out;
}

/// Network input: depth / max_range shaped (height, width, 1).
inline Tensor make_observation(const DepthMap& depth) {
    Tensor t({depth.height, depth.width, 1});
    const double inv = 1.0 / depth.max_range;
    for (std::size_t i = 0; i < depth.size(); ++i) t[i] = depth.values[i] * inv;
    return t;
}

inline Tensor make_observation(const DepthMap& depth, const CameraModel& cam) {
    if (depth.height != cam.height || depth.width != cam.width)
        throw std::invalid_argument("depth map does not match camera resolution");
    return make_observation(depth);
}

// ---------------------------------------------------------------------------
// Binary PGM (P5). Depth is 16-bit big-endian with value = round(65535 d / max_range).

inline void write_depth_pgm(const std::string& path, const DepthMap& depth) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "P5\n" << depth.width << ' ' << depth.height << "\n65535\n";
    for (double d : depth.values) {
        const auto q = static_cast<std::uint16_t>(std::lround(65535.0 * std::clamp(d / depth.max_range, 0.0, 1.0)));
        const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
        os.write(bytes, 2);
    }
}

inline void write_intensity_pgm(const std::string& path, const IntensityImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    for (double v : img.values) os.put(static_cast<char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
}

namespace detail {

struct PgmHeader {
    std::size_t width = 0, height = 0;
    unsigned maxval = 0;
};

inline PgmHeader read_pgm_header(std::istream& is, const std::string& path) {
    auto token = [&]() {
        std::string t;
        while (is >> std::ws && is.peek() == '#') {
            std::string comment;
            std::getline(is, comment);
        }
        is >> t;
        return t;
    };
    if (token() != "P5") throw std::runtime_error(path + ": not a binary PGM");
    PgmHeader h;
    try {
        h.width = std::stoul(token());
        h.height = std::stoul(token());
        h.maxval = static_cast<unsigned>(std::stoul(token()));
    } catch (const std::exception&) {
        throw std::runtime_error(path + ": malformed PGM header");
    }
    is.get();  // single whitespace before the raster
    if (h.maxval == 0 || h.maxval > 65535) throw std::runtime_error(path + ": bad PGM maxval");
    return h;
}

}  // namespace detail

inline DepthMap read_depth_pgm(const std::string& path, double max_range) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    const auto h = detail::read_pgm_header(is, path);
    if (h.maxval != 65535) throw std::runtime_error(path + ": depth PGM must be 16-bit");
    DepthMap out(h.height, h.width, max_range, max_range);
    for (auto& v : out.values) {
        unsigned char b[2];
        if (!is.read(reinterpret_cast<char*>(b), 2)) throw std::runtime_error(path + ": truncated raster");
        const unsigned q = (static_cast<unsigned>(b[0]) << 8) | b[1];
        v = std::max(kMinDepth, max_range * q / 65535.0);
    }
    return out;
}

inline IntensityImage read_intensity_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    const auto h = detail::read_pgm_header(is, path);
    if (h.maxval != 255) throw std::runtime_error(path + ": intensity PGM must be 8-bit");
    IntensityImage out(h.height, h.width);
    for (auto& v : out.values) {
        const int c = is.get();
        if (c == EOF) throw std::runtime_error(path + ": truncated raster");
        v = c / 255.0;
    }
    return out;
}

}  // namespace qnav
