#pragma once

// Pinhole reprojection, bilinear sampling and photometric reconstruction
// loss: the geometry behind self-supervised depth from view synthesis.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qnav/sensor.hpp"
#include "qnav/world.hpp"

namespace qnav {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 operator*(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    return r;
}

inline Mat3 transpose(const Mat3& m) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = m[j][i];
    return r;
}

/// Maps points from one camera frame into another: x' = R x + t.
/// Camera frames are x right, y down, z along the optical axis.
struct RigidTransform {
    Mat3 rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    Vec3 translation{0, 0, 0};

    static RigidTransform identity() { return {}; }

    static RigidTransform from_translation(Vec3 t) {
        RigidTransform r;
        r.translation = t;
        return r;
    }

    /// Rotation about the camera's vertical (y) axis followed by a translation.
    static RigidTransform planar(double yaw, Vec3 t) {
        const double c = std::cos(yaw), s = std::sin(yaw);
        RigidTransform r;
        r.rotation = {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
        r.translation = t;
        return r;
    }

    Vec3 apply(const Vec3& x) const {
        Vec3 y = rotation * x;
        for (int i = 0; i < 3; ++i) y[static_cast<std::size_t>(i)] += translation[static_cast<std::size_t>(i)];
        return y;
    }

    RigidTransform inverse() const {
        RigidTransform r;
        r.rotation = transpose(rotation);
        const Vec3 t = r.rotation * translation;
        r.translation = {-t[0], -t[1], -t[2]};
        return r;
    }

    /// Orthonormal with determinant +1, within `tol`.
    bool is_valid(double tol = 1e-9) const {
        const Mat3 rtr = transpose(rotation) * rotation;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (std::abs(rtr[i][j] - (i == j ? 1.0 : 0.0)) > tol) return false;
        const auto& m = rotation;
        const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        return std::abs(det - 1.0) <= tol;
    }
};

/// Camera-to-world rotation and camera center for a vehicle pose.
inline std::pair<Mat3, Vec3> camera_frame(const Pose2D& pose) {
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    // columns: right, down, forward
    const Mat3 r{{{s, 0, c}, {-c, 0, s}, {0, -1, 0}}};
    return {r, {pose.x, pose.y, kCameraHeight}};
}

/// Transform taking points in the camera at `target` into the camera at `source`.
inline RigidTransform relative_transform(const Pose2D& target, const Pose2D& source) {
    const auto [rt, ct] = camera_frame(target);
    const auto [rs, cs] = camera_frame(source);
    RigidTransform out;
    const Mat3 rs_t = transpose(rs);
    out.rotation = rs_t * rt;
    out.translation = rs_t * Vec3{ct[0] - cs[0], ct[1] - cs[1], ct[2] - cs[2]};
    return out;
}

struct WarpField {
    std::size_t height = 0, width = 0;
    std::vector<double> u, v;       // source pixel coordinates
    std::vector<std::uint8_t> valid;

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (auto m : valid) n += m;
        return n;
    }
};

/// Back-project each target pixel with its depth, move it into the source
/// camera and project. Pixels behind the source camera or landing outside the
/// source image are masked out.
inline WarpField warp_coordinates(const DepthMap& depth, const CameraModel& cam, const RigidTransform& t) {
    if (depth.height != cam.height || depth.width != cam.width)
        throw std::invalid_argument("depth map does not match camera resolution");
    WarpField f;
    f.height = depth.height;
    f.width = depth.width;
    f.u.resize(depth.size());
    f.v.resize(depth.size());
    f.valid.resize(depth.size());
    const double max_u = static_cast<double>(cam.width - 1), max_v = static_cast<double>(cam.height - 1);
    for (std::size_t row = 0; row < depth.height; ++row)
        for (std::size_t col = 0; col < depth.width; ++col) {
            const std::size_t i = row * depth.width + col;
            const double d = depth(row, col);
            const double u = static_cast<double>(col), v = static_cast<double>(row);
            // Work in units of depth: the point is d * ray, so p = R ray + t / d
            // is the source point scaled by 1/d.
            const Vec3 ray{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
            Vec3 p = t.rotation * ray;
            for (std::size_t k = 0; k < 3; ++k) p[k] += t.translation[k] / d;
            if (!(p[2] > 0.0)) continue;
            // Offsets from the pixel's own coordinates, so the identity maps
            // every pixel exactly onto itself.
            const double us = u + cam.fx * (p[0] / p[2] - ray[0]);
            const double vs = v + cam.fy * (p[1] / p[2] - ray[1]);
            f.u[i] = us;
            f.v[i] = vs;
            f.valid[i] = us >= 0.0 && us <= max_u && vs >= 0.0 && vs <= max_v;
        }
    return f;
}

struct SampledImage {
    IntensityImage image;
    std::vector<std::uint8_t> valid;
};

/// Bilinear interpolation of `image` at the warp's coordinates; invalid
/// pixels read 0 and are masked.
inline SampledImage bilinear_sample(const IntensityImage& image, const WarpField& warp) {
    SampledImage out{IntensityImage(warp.height, warp.width), warp.valid};
    for (std::size_t i = 0; i < warp.u.size(); ++i) {
        if (!warp.valid[i]) continue;
        const double u = warp.u[i], v = warp.v[i];
        const auto x0 = static_cast<std::size_t>(std::floor(u));
        const auto y0 = static_cast<std::size_t>(std::floor(v));
        const std::size_t x1 = std::min(x0 + 1, image.width - 1);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double ax = u - static_cast<double>(x0), ay = v - static_cast<double>(y0);
        const double top = (1 - ax) * image(y0, x0) + ax * image(y0, x1);
        const double bottom = (1 - ax) * image(y1, x0) + ax * image(y1, x1);
        out.image.values[i] = (1 - ay) * top + ay * bottom;
    }
    return out;
}

struct PhotometricLoss {
    double sum = 0.0;        // L1 over valid pixels
    std::size_t count = 0;   // valid pixels
    double mean() const { return sum / static_cast<double>(count); }
};

/// L1 between the target image and the source image warped into the target
/// view. Throws when no pixel of the target reprojects into the source.
inline PhotometricLoss photometric_loss(const IntensityImage& target, const IntensityImage& source,
                                        const DepthMap& depth, const CameraModel& cam, const RigidTransform& t) {
    if (target.height != source.height || target.width != source.width || target.height != depth.height ||
        target.width != depth.width)
        throw std::invalid_argument("photometric loss inputs differ in shape");
    const auto sampled = bilinear_sample(source, warp_coordinates(depth, cam, t));
    PhotometricLoss loss;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (!sampled.valid[i]) continue;
        loss.sum += std::abs(target.values[i] - sampled.image.values[i]);
        ++loss.count;
    }
    if (loss.count == 0) throw std::runtime_error("photometric loss: no overlap between views");
    return loss;
}

}  // namespace qnav
