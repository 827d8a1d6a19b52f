#pragma once

// Top-down world model: obstacle fields, planar kinematics at fixed speed and
// altitude, nearest-obstacle distance, reward and episode stepping.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "qnav/rng.hpp"

namespace qnav {

inline constexpr double kForwardSpeed = 2.0;     // m/s, identical for all actions
inline constexpr double kActionInterval = 0.4;   // s
inline constexpr double kSafeDistance = 0.5;     // m
inline constexpr double kCollisionReward = -1.0;
inline constexpr double kDefaultMaxRange = 10.0;  // m, sensor range used to clip the reward
inline constexpr int kNumActions = 5;
inline constexpr int kSuccessSteps = 50;

/// Yaw rate per action index. Index 0 flies straight.
inline constexpr std::array<double, kNumActions> kYawRates{0.0, 0.25, -0.25, 0.5, -0.5};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Wrap an angle into (-pi, pi].
inline double normalize_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::remainder(a, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    return a;
}

struct Pose2D {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;

    Vec2 position() const { return {x, y}; }
    Vec2 forward() const { return {std::cos(yaw), std::sin(yaw)}; }
    friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

struct ActionCommand {
    int index = 0;
    double yaw_rate = 0.0;
    double forward_speed = kForwardSpeed;

    static ActionCommand from_index(int index) {
        if (index < 0 || index >= kNumActions)
            throw std::out_of_range("action index " + std::to_string(index) + " outside 0..4");
        return {index, kYawRates[static_cast<std::size_t>(index)], kForwardSpeed};
    }
};

struct Circle {
    Vec2 center;
    double radius = 0.0;
    friend bool operator==(const Circle&, const Circle&) = default;
};

struct Box {
    Vec2 min;
    Vec2 max;
    friend bool operator==(const Box&, const Box&) = default;
};

struct Obstacle {
    std::variant<Circle, Box> shape;
    int appearance = 0;
    friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

struct Rect {
    Vec2 min;
    Vec2 max;

    bool contains(Vec2 p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

enum class ScenarioKind { basic, narrow_channel, intersections, corners, corner_trap };

inline constexpr std::array<ScenarioKind, 5> kAllScenarios{
    ScenarioKind::basic, ScenarioKind::narrow_channel, ScenarioKind::intersections,
    ScenarioKind::corners, ScenarioKind::corner_trap};

inline std::string_view to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::basic: return "basic";
        case ScenarioKind::narrow_channel: return "narrow_channel";
        case ScenarioKind::intersections: return "intersections";
        case ScenarioKind::corners: return "corners";
        case ScenarioKind::corner_trap: return "corner_trap";
    }
    return "?";
}

inline ScenarioKind parse_scenario(std::string_view s) {
    for (auto k : kAllScenarios)
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown scenario '" + std::string(s) + "'");
}

struct WorldSpec {
    Rect bounds;
    std::vector<Obstacle> obstacles;
    Pose2D start_pose;
    ScenarioKind scenario_kind = ScenarioKind::basic;
    std::uint64_t seed = 0;

    friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

struct StepOutcome {
    Pose2D next_pose;
    double reward = 0.0;
    double d_nearest = 0.0;
    bool terminal = false;
};

// ---------------------------------------------------------------------------
// Kinematics

/// Constant-yaw-rate arc over `dt`. Exact for any yaw rate, including zero.
inline Pose2D integrate_motion(const Pose2D& pose, const ActionCommand& action, double dt) {
    const double v = action.forward_speed;
    const double w = action.yaw_rate;
    const double yaw1 = pose.yaw + w * dt;
    Pose2D out;
    if (w == 0.0) {
        out.x = pose.x + v * dt * std::cos(pose.yaw);
        out.y = pose.y + v * dt * std::sin(pose.yaw);
    } else {
        out.x = pose.x + (v / w) * (std::sin(yaw1) - std::sin(pose.yaw));
        out.y = pose.y + (v / w) * (std::cos(pose.yaw) - std::cos(yaw1));
    }
    out.yaw = normalize_angle(yaw1);
    return out;
}

// ---------------------------------------------------------------------------
// Distances

inline double distance_to(const Circle& c, Vec2 p) {
    return std::max(0.0, norm(p - c.center) - c.radius);
}

inline double distance_to(const Box& b, Vec2 p) {
    const double dx = std::max({b.min.x - p.x, 0.0, p.x - b.max.x});
    const double dy = std::max({b.min.y - p.y, 0.0, p.y - b.max.y});
    return std::hypot(dx, dy);
}

inline double distance_to(const Obstacle& o, Vec2 p) {
    return std::visit([&](const auto& s) { return distance_to(s, p); }, o.shape);
}

/// Distance from an interior point to the nearest arena wall.
inline double wall_distance(const Rect& r, Vec2 p) {
    return std::min({p.x - r.min.x, r.max.x - p.x, p.y - r.min.y, r.max.y - p.y});
}

/// Exact distance to the nearest obstacle surface or arena wall; 0 inside an
/// obstacle. Throws std::domain_error for points outside the bounds.
inline double nearest_obstacle_distance(const WorldSpec& world, Vec2 p) {
    if (!world.bounds.contains(p))
        throw std::domain_error("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                ") outside world bounds");
    double d = wall_distance(world.bounds, p);
    for (const auto& o : world.obstacles) d = std::min(d, distance_to(o, p));
    return d;
}

/// Reward for a (clipped) nearest distance: the distance itself when safe, -1 otherwise.
inline double reward_for_distance(double d_nearest) {
    return d_nearest >= kSafeDistance ? d_nearest : kCollisionReward;
}

/// Advance one action interval. Collision is checked at the endpoint only.
inline StepOutcome step(const WorldSpec& world, const Pose2D& pose, const ActionCommand& action,
                        double dt = kActionInterval, double max_range = kDefaultMaxRange) {
    StepOutcome out;
    out.next_pose = integrate_motion(pose, action, dt);
    const Vec2 p = out.next_pose.position();
    const double d = world.bounds.contains(p) ? nearest_obstacle_distance(world, p) : 0.0;
    out.d_nearest = std::min(d, max_range);
    out.reward = reward_for_distance(out.d_nearest);
    out.terminal = out.d_nearest < kSafeDistance;
    return out;
}

// ---------------------------------------------------------------------------
// Feasibility search

/// Depth-first search for an action sequence that survives `steps` steps from
/// `start`. Failed states are memoized on a coarse (x, y, yaw) grid, so a
/// miss is approximate; any returned path is exact.
inline std::optional<std::vector<int>> find_safe_path(const WorldSpec& world, const Pose2D& start,
                                                      int steps, std::size_t max_expansions = 200000) {
    struct Frame {
        Pose2D pose;
        std::array<int, kNumActions> order{};
        int next = 0;
    };
    auto key = [](const Pose2D& p) {
        const auto ix = static_cast<std::int64_t>(std::floor(p.x / 0.2));
        const auto iy = static_cast<std::int64_t>(std::floor(p.y / 0.2));
        const auto ia = static_cast<std::int64_t>(std::floor((p.yaw + std::numbers::pi) / 0.05));
        return static_cast<std::uint64_t>((ix * 73856093) ^ (iy * 19349663) ^ (ia * 83492791));
    };
    auto ordered = [&](const Pose2D& p) {
        std::array<std::pair<double, int>, kNumActions> scored{};
        for (int a = 0; a < kNumActions; ++a) {
            const auto o = step(world, p, ActionCommand::from_index(a));
            scored[static_cast<std::size_t>(a)] = {o.terminal ? -1.0 : o.d_nearest, a};
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& l, const auto& r) { return l.first > r.first; });
        std::array<int, kNumActions> order{};
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = scored[i].second;
        return order;
    };

    // failed[key] = largest remaining-step budget known to fail from that cell
    std::unordered_map<std::uint64_t, int> failed;
    std::vector<Frame> stack;
    std::vector<int> path;
    stack.push_back({start, ordered(start), 0});
    std::size_t expansions = 0;
    while (!stack.empty()) {
        if (static_cast<int>(path.size()) == steps) return path;
        auto& top = stack.back();
        const int remaining = steps - static_cast<int>(path.size());
        if (top.next >= kNumActions || ++expansions > max_expansions) {
            if (expansions > max_expansions) return std::nullopt;
            auto& f = failed[key(top.pose)];
            f = std::max(f, remaining);
            stack.pop_back();
            if (!path.empty()) path.pop_back();
            continue;
        }
        const int a = top.order[static_cast<std::size_t>(top.next++)];
        const auto o = step(world, top.pose, ActionCommand::from_index(a));
        if (o.terminal) continue;
        const auto it = failed.find(key(o.next_pose));
        if (it != failed.end() && it->second >= remaining - 1) continue;
        path.push_back(a);
        const Pose2D next = o.next_pose;
        stack.push_back({next, ordered(next), 0});
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scenario generators

namespace detail {

inline constexpr std::uint64_t kWorldStream = 0x51a7'0001ULL;

inline int random_appearance(Rng& rng) { return 1 + static_cast<int>(uniform_index(rng, 254)); }

inline Obstacle make_box(double x0, double y0, double x1, double y1, int appearance) {
    return {Box{{std::min(x0, x1), std::min(y0, y1)}, {std::max(x0, x1), std::max(y0, y1)}},
            appearance};
}

/// Bounding radius and center of an obstacle; used for spacing checks.
inline std::pair<Vec2, double> bounding_circle(const Obstacle& o) {
    if (const auto* c = std::get_if<Circle>(&o.shape)) return {c->center, c->radius};
    const auto& b = std::get<Box>(o.shape);
    const Vec2 c = 0.5 * (b.min + b.max);
    return {c, 0.5 * norm(b.max - b.min)};
}

inline bool within_bounds(const Rect& r, const Obstacle& o) {
    if (const auto* c = std::get_if<Circle>(&o.shape))
        return c->center.x - c->radius >= r.min.x && c->center.x + c->radius <= r.max.x &&
               c->center.y - c->radius >= r.min.y && c->center.y + c->radius <= r.max.y;
    const auto& b = std::get<Box>(o.shape);
    return r.contains(b.min) && r.contains(b.max);
}

inline bool start_ok(const WorldSpec& w, const Pose2D& start, double min_clearance) {
    if (!w.bounds.contains(start.position())) return false;
    if (nearest_obstacle_distance(w, start.position()) < min_clearance) return false;
    return find_safe_path(w, start, kSuccessSteps).has_value();
}

// Open 40 m arena. Starts keep 3.5 m of clearance so nothing outside the
// field of view is within one turn of the vehicle.
inline WorldSpec basic(std::uint64_t seed) {
    Rng rng(derive_seed(seed, kWorldStream, 1));
    for (int attempt = 0; attempt < 50; ++attempt) {
        WorldSpec w;
        w.scenario_kind = ScenarioKind::basic;
        w.seed = seed;
        w.bounds = {{0.0, 0.0}, {40.0, 40.0}};
        const int target = 26 + static_cast<int>(uniform_index(rng, 13));
        for (int tries = 0; tries < 2000 && static_cast<int>(w.obstacles.size()) < target; ++tries) {
            const Vec2 c{uniform(rng, 2.0, 38.0), uniform(rng, 2.0, 38.0)};
            Obstacle o;
            const double kind = uniform01(rng);
            if (kind < 0.55) {
                o.shape = Circle{c, uniform(rng, 0.4, 1.2)};
            } else if (kind < 0.8) {
                const double hw = uniform(rng, 0.4, 1.5), hh = uniform(rng, 0.4, 1.5);
                o = make_box(c.x - hw, c.y - hh, c.x + hw, c.y + hh, 0);
            } else {
                const double len = uniform(rng, 1.5, 3.0), thick = uniform(rng, 0.2, 0.4);
                o = uniform01(rng) < 0.5 ? make_box(c.x - len, c.y - thick, c.x + len, c.y + thick, 0)
                                         : make_box(c.x - thick, c.y - len, c.x + thick, c.y + len, 0);
            }
            o.appearance = random_appearance(rng);
            if (!within_bounds(w.bounds, o)) continue;
            const auto [oc, orad] = bounding_circle(o);
            if (wall_distance(w.bounds, oc) - orad < 2.0) continue;
            bool spaced = true;
            for (const auto& e : w.obstacles) {
                const auto [ec, erad] = bounding_circle(e);
                if (norm(ec - oc) - orad - erad < 2.2) { spaced = false; break; }
            }
            if (spaced) w.obstacles.push_back(o);
        }
        for (int s = 0; s < 40; ++s) {
            const Pose2D start{uniform(rng, 4.0, 36.0), uniform(rng, 4.0, 36.0),
                               normalize_angle(uniform(rng, -std::numbers::pi, std::numbers::pi))};
            if (start_ok(w, start, 3.5)) {
                w.start_pose = start;
                return w;
            }
        }
    }
    throw std::runtime_error("basic world generation failed feasibility for seed " + std::to_string(seed));
}

inline WorldSpec narrow_channel(std::uint64_t seed) {
    Rng rng(derive_seed(seed, kWorldStream, 2));
    for (int attempt = 0; attempt < 50; ++attempt) {
        WorldSpec w;
        w.scenario_kind = ScenarioKind::narrow_channel;
        w.seed = seed;
        const double length = 52.0, height = 8.0, mid = height / 2;
        w.bounds = {{0.0, 0.0}, {length, height}};
        const double clearance = uniform(rng, 2.6, 3.0);
        const int a = random_appearance(rng), b = random_appearance(rng);
        // Walls are split into panels of differing appearance.
        for (double x = 0.0; x < length; x += 6.5) {
            const double x1 = std::min(length, x + 6.5);
            w.obstacles.push_back(make_box(x, 0.0, x1, mid - clearance / 2, (a + static_cast<int>(x)) % 255 + 1));
            w.obstacles.push_back(make_box(x, mid + clearance / 2, x1, height, (b + static_cast<int>(x)) % 255 + 1));
        }
        const double yaw_off = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.06, 0.2);
        const Pose2D start{uniform(rng, 1.5, 3.0), mid + uniform(rng, -0.3, 0.3), yaw_off};
        if (start_ok(w, start, 1.0)) {
            w.start_pose = start;
            return w;
        }
    }
    throw std::runtime_error("narrow_channel generation failed feasibility");
}

inline WorldSpec intersections(std::uint64_t seed) {
    Rng rng(derive_seed(seed, kWorldStream, 3));
    for (int attempt = 0; attempt < 50; ++attempt) {
        WorldSpec w;
        w.scenario_kind = ScenarioKind::intersections;
        w.seed = seed;
        const double street = uniform(rng, 3.6, 4.4);
        std::array<double, 3> bx{}, by{};
        for (auto& v : bx) v = uniform(rng, 5.0, 7.0);
        for (auto& v : by) v = uniform(rng, 5.0, 7.0);
        const double lx = 4 * street + bx[0] + bx[1] + bx[2];
        const double ly = 4 * street + by[0] + by[1] + by[2];
        w.bounds = {{0.0, 0.0}, {lx, ly}};
        std::array<double, 4> sx{}, sy{};  // street start coordinates
        double x = 0.0, y = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            sx[i] = x; x += street;
            sy[i] = y; y += street;
            x += bx[i];
            y += by[i];
        }
        sx[3] = x;
        sy[3] = y;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                w.obstacles.push_back(make_box(sx[i] + street, sy[j] + street, sx[i + 1], sy[j + 1],
                                               random_appearance(rng)));
        for (int s = 0; s < 40; ++s) {
            const bool horizontal = uniform01(rng) < 0.5;
            const std::size_t k = uniform_index(rng, 4);
            const double jitter = uniform(rng, -0.1, 0.1);
            const bool reverse = uniform01(rng) < 0.5;
            Pose2D start;
            if (horizontal) {
                start.x = uniform(rng, 0.3, 0.7) * lx;
                start.y = sy[k] + street / 2 + uniform(rng, -0.3, 0.3);
                start.yaw = normalize_angle((reverse ? std::numbers::pi : 0.0) + jitter);
            } else {
                start.x = sx[k] + street / 2 + uniform(rng, -0.3, 0.3);
                start.y = uniform(rng, 0.3, 0.7) * ly;
                start.yaw = normalize_angle((reverse ? -0.5 : 0.5) * std::numbers::pi + jitter);
            }
            if (start_ok(w, start, 1.0)) {
                w.start_pose = start;
                return w;
            }
        }
    }
    throw std::runtime_error("intersections generation failed feasibility");
}

inline WorldSpec corners(std::uint64_t seed) {
    Rng rng(derive_seed(seed, kWorldStream, 4));
    for (int attempt = 0; attempt < 50; ++attempt) {
        WorldSpec w;
        w.scenario_kind = ScenarioKind::corners;
        w.seed = seed;
        const double lx = uniform(rng, 17.0, 22.0), ly = uniform(rng, 15.0, 20.0);
        const double width = uniform(rng, 4.0, 4.6);  // about one minimum turning radius
        w.bounds = {{0.0, 0.0}, {lx, ly}};
        // Ring corridor: thin outer walls plus a central block.
        const double t = 0.3;
        w.obstacles.push_back(make_box(0, 0, lx, t, random_appearance(rng)));
        w.obstacles.push_back(make_box(0, ly - t, lx, ly, random_appearance(rng)));
        w.obstacles.push_back(make_box(0, t, t, ly - t, random_appearance(rng)));
        w.obstacles.push_back(make_box(lx - t, t, lx, ly - t, random_appearance(rng)));
        w.obstacles.push_back(make_box(t + width, t + width, lx - t - width, ly - t - width,
                                       random_appearance(rng)));
        const double lane = t + width / 2;
        const bool ccw = uniform01(rng) < 0.5;
        for (int s = 0; s < 40; ++s) {
            const auto side = uniform_index(rng, 4);
            const double jitter = uniform(rng, -0.1, 0.1);
            const double off = uniform(rng, -0.3, 0.3);
            Pose2D start;
            switch (side) {
                case 0:  // bottom, heading +x when ccw
                    start = {uniform(rng, 0.3, 0.6) * lx, lane + off, ccw ? 0.0 : std::numbers::pi};
                    break;
                case 1:  // right
                    start = {lx - lane + off, uniform(rng, 0.3, 0.6) * ly, (ccw ? 0.5 : -0.5) * std::numbers::pi};
                    break;
                case 2:  // top
                    start = {uniform(rng, 0.4, 0.7) * lx, ly - lane + off, ccw ? std::numbers::pi : 0.0};
                    break;
                default:  // left
                    start = {lane + off, uniform(rng, 0.4, 0.7) * ly, (ccw ? -0.5 : 0.5) * std::numbers::pi};
                    break;
            }
            start.yaw = normalize_angle(start.yaw + jitter);
            if (start_ok(w, start, 1.0)) {
                w.start_pose = start;
                return w;
            }
        }
    }
    throw std::runtime_error("corners generation failed feasibility");
}

/// Fixed hairpin: a northbound leg ending in a left corner, a short westbound
/// connector with a wall dead ahead, then a southbound leg. Only the start
/// pose depends on the seed.
inline WorldSpec corner_trap(std::uint64_t seed) {
    WorldSpec w;
    w.scenario_kind = ScenarioKind::corner_trap;
    w.seed = seed;
    w.bounds = {{0.0, 0.0}, {21.0, 26.0}};
    w.obstacles = {
        make_box(0.0, 0.0, 3.0, 26.0, 40),     // west wall
        make_box(6.5, 0.0, 14.0, 21.5, 90),    // central block
        make_box(17.5, 0.0, 21.0, 26.0, 140),  // east wall
        make_box(3.0, 25.0, 17.5, 26.0, 190),  // north wall, dead ahead after the first corner
        make_box(3.0, 0.0, 6.5, 1.0, 230),
        make_box(14.0, 0.0, 17.5, 1.0, 230),
    };
    Rng rng(derive_seed(seed, kWorldStream, 5));
    for (int s = 0; s < 100; ++s) {
        const Pose2D start{15.75 + uniform(rng, -0.3, 0.3), uniform(rng, 2.5, 6.0),
                           std::numbers::pi / 2 + uniform(rng, -0.1, 0.1)};
        if (start_ok(w, start, 1.0)) {
            w.start_pose = start;
            return w;
        }
    }
    throw std::runtime_error("corner_trap start search failed");
}

}  // namespace detail

/// Deterministic world for (kind, seed). Every result has a feasible start
/// admitting a 50-step collision-free path.
inline WorldSpec generate_world(ScenarioKind kind, std::uint64_t seed) {
    switch (kind) {
        case ScenarioKind::basic: return detail::basic(seed);
        case ScenarioKind::narrow_channel: return detail::narrow_channel(seed);
        case ScenarioKind::intersections: return detail::intersections(seed);
        case ScenarioKind::corners: return detail::corners(seed);
        case ScenarioKind::corner_trap: return detail::corner_trap(seed);
    }
    throw std::invalid_argument("bad scenario kind");
}

// ---------------------------------------------------------------------------
// Text format: one record per line, `#` comments.
//
//   scenario <kind>
//   seed <u64>
//   bounds <xmin> <ymin> <xmax> <ymax>
//   start <x> <y> <yaw>
//   circle <cx> <cy> <r> <appearance>
//   box <xmin> <ymin> <xmax> <ymax> <appearance>

inline void write_world(std::ostream& os, const WorldSpec& w) {
    const auto old_precision = os.precision(17);
    os << "# qnav world\n";
    os << "scenario " << to_string(w.scenario_kind) << '\n';
    os << "seed " << w.seed << '\n';
    os << "bounds " << w.bounds.min.x << ' ' << w.bounds.min.y << ' ' << w.bounds.max.x << ' '
       << w.bounds.max.y << '\n';
    os << "start " << w.start_pose.x << ' ' << w.start_pose.y << ' ' << w.start_pose.yaw << '\n';
    for (const auto& o : w.obstacles) {
        if (const auto* c = std::get_if<Circle>(&o.shape))
            os << "circle " << c->center.x << ' ' << c->center.y << ' ' << c->radius << ' '
               << o.appearance << '\n';
        else {
            const auto& b = std::get<Box>(o.shape);
            os << "box " << b.min.x << ' ' << b.min.y << ' ' << b.max.x << ' ' << b.max.y << ' '
               << o.appearance << '\n';
        }
    }
    os.precision(old_precision);
}

inline WorldSpec read_world(std::istream& is) {
    WorldSpec w;
    std::string line;
    int line_no = 0;
    bool have_bounds = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        auto fail = [&](const std::string& why) {
            throw std::runtime_error("world line " + std::to_string(line_no) + ": " + why);
        };
        if (tag == "scenario") {
            std::string k;
            if (!(ls >> k)) fail("missing scenario kind");
            w.scenario_kind = parse_scenario(k);
        } else if (tag == "seed") {
            if (!(ls >> w.seed)) fail("bad seed");
        } else if (tag == "bounds") {
            if (!(ls >> w.bounds.min.x >> w.bounds.min.y >> w.bounds.max.x >> w.bounds.max.y))
                fail("bad bounds");
            have_bounds = true;
        } else if (tag == "start") {
            if (!(ls >> w.start_pose.x >> w.start_pose.y >> w.start_pose.yaw)) fail("bad start");
        } else if (tag == "circle") {
            Circle c;
            Obstacle o;
            if (!(ls >> c.center.x >> c.center.y >> c.radius >> o.appearance)) fail("bad circle");
            if (c.radius <= 0) fail("non-positive radius");
            o.shape = c;
            w.obstacles.push_back(o);
        } else if (tag == "box") {
            Box b;
            Obstacle o;
            if (!(ls >> b.min.x >> b.min.y >> b.max.x >> b.max.y >> o.appearance)) fail("bad box");
            if (b.min.x > b.max.x || b.min.y > b.max.y) fail("inverted box");
            o.shape = b;
            w.obstacles.push_back(o);
        } else {
            fail("unknown record '" + tag + "'");
        }
        std::string extra;
        if (ls >> extra) fail("trailing token '" + extra + "'");
    }
    if (!have_bounds) throw std::runtime_error("world file has no bounds record");
    for (const auto& o : w.obstacles)
        if (!detail::within_bounds(w.bounds, o)) throw std::runtime_error("obstacle outside bounds");
    return w;
}

}  // namespace qnav
