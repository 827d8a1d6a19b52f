#pragma once

// Ground-truth check of the reprojection pipeline: render two nearby views,
// warp the source into the target with true depth and true relative pose,
// and measure the photometric residual.

#include <cmath>
#include <numbers>
#include <vector>

#include "qnav/rng.hpp"
#include "qnav/sensor.hpp"
#include "qnav/view_synthesis.hpp"
#include "qnav/world.hpp"

namespace qnav {

struct WarpPair {
    Pose2D target;
    Pose2D source;
    double mean_l1 = 0.0;
    std::size_t valid = 0;
};

struct WarpCheckResult {
    std::vector<WarpPair> pairs;
    double identity_loss = 0.0;
    double worst_mean_l1 = 0.0;
    double threshold = 0.02;

    bool ok() const { return identity_loss == 0.0 && worst_mean_l1 < threshold; }
};

/// Empty 9x7 m room: every line of sight ends on a wall within range.
inline WorldSpec warp_room() {
    WorldSpec w;
    w.bounds = {{0.0, 0.0}, {9.0, 7.0}};
    w.start_pose = {4.5, 3.5, 0.0};
    w.scenario_kind = ScenarioKind::basic;
    return w;
}

/// Target pose anywhere in the room's interior; source within `baseline` m
/// and `max_yaw` rad of it.
inline std::pair<Pose2D, Pose2D> random_pose_pair(Rng& rng, double baseline = 0.3,
                                                  double max_yaw = 10.0 * std::numbers::pi / 180.0) {
    const Pose2D t{uniform(rng, 2.5, 6.5), uniform(rng, 2.0, 5.0), uniform(rng, -std::numbers::pi, std::numbers::pi)};
    const double r = baseline * std::sqrt(uniform01(rng)), a = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const Pose2D s{t.x + r * std::cos(a), t.y + r * std::sin(a), normalize_angle(t.yaw + uniform(rng, -max_yaw, max_yaw))};
    return {t, s};
}

/// The source view resampled into the target view.
inline SampledImage synthesize_view(const WorldSpec& world, const Pose2D& target, const Pose2D& source,
                                    const CameraModel& cam) {
    const auto depth = render_depth(world, target, cam);
    return bilinear_sample(render_intensity(world, source, cam),
                           warp_coordinates(depth, cam, relative_transform(target, source)));
}

inline WarpCheckResult warp_check(std::uint64_t seed, int n_pairs = 20, const CameraModel& cam = CameraModel::full()) {
    const WorldSpec room = warp_room();
    Rng rng(seed);
    WarpCheckResult r;
    for (int i = 0; i < n_pairs; ++i) {
        const auto [t, s] = random_pose_pair(rng);
        const auto loss = photometric_loss(render_intensity(room, t, cam), render_intensity(room, s, cam),
                                           render_depth(room, t, cam), cam, relative_transform(t, s));
        r.pairs.push_back({t, s, loss.mean(), loss.count});
        r.worst_mean_l1 = std::max(r.worst_mean_l1, loss.mean());
    }
    const Pose2D p = room.start_pose;
    const auto img = render_intensity(room, p, cam);
    r.identity_loss = photometric_loss(img, img, render_depth(room, p, cam), cam, RigidTransform::identity()).mean();
    return r;
}

}  // namespace qnav
