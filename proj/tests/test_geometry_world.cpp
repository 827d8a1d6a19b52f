#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "qnav/world.hpp"

using namespace qnav;

namespace {

ActionCommand turn(double w) { return {0, w, kForwardSpeed}; }

// Explicit Euler over many substeps, independent of the closed form.
Pose2D euler(Pose2D p, double v, double w, double dt, int n) {
    const double h = dt / n;
    for (int i = 0; i < n; ++i) {
        p.x += v * std::cos(p.yaw) * h;
        p.y += v * std::sin(p.yaw) * h;
        p.yaw += w * h;
    }
    return p;
}

WorldSpec open_arena() {
    WorldSpec w;
    w.bounds = {{-50, -50}, {50, 50}};
    return w;
}

}  // namespace

TEST(IntegrateMotion, StraightLine) {
    const auto p = integrate_motion({0, 0, 0}, turn(0.0), 0.4);
    EXPECT_DOUBLE_EQ(p.x, 0.8);
    EXPECT_DOUBLE_EQ(p.y, 0.0);
    EXPECT_DOUBLE_EQ(p.yaw, 0.0);
}

TEST(IntegrateMotion, ArcMatchesEulerOracle) {
    const auto p = integrate_motion({0, 0, 0}, turn(0.5), 0.4);
    const auto o = euler({0, 0, 0}, 2.0, 0.5, 0.4, 10000);
    EXPECT_NEAR(p.x, 0.79468, 1e-5);
    EXPECT_NEAR(p.y, 0.07973, 1e-5);
    EXPECT_DOUBLE_EQ(p.yaw, 0.2);
    EXPECT_LT(std::hypot(p.x - o.x, p.y - o.y), 1e-4);
    // Euler error is O(h); a finer run tightens it toward the closed form.
    const auto fine = euler({0, 0, 0}, 2.0, 0.5, 0.4, 400000);
    EXPECT_LT(std::hypot(p.x - fine.x, p.y - fine.y), 1e-6);
}

TEST(IntegrateMotion, ReversedHeading) {
    const auto p = integrate_motion({1, 1, std::numbers::pi}, turn(0.0), 0.4);
    EXPECT_NEAR(p.x, 0.2, 1e-12);
    EXPECT_NEAR(p.y, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(p.yaw, std::numbers::pi);
}

TEST(IntegrateMotion, SmallRateConvergesToStraight) {
    for (double yaw : {0.0, 0.7, -2.1, 3.0}) {
        const auto a = integrate_motion({1, 2, yaw}, turn(1e-9), 0.4);
        const auto b = integrate_motion({1, 2, yaw}, turn(0.0), 0.4);
        EXPECT_LT(std::hypot(a.x - b.x, a.y - b.y), 1e-6);
    }
}

TEST(IntegrateMotion, HalfStepsCompose) {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const Pose2D p{uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -3.1, 3.1)};
        const auto a = ActionCommand::from_index(static_cast<int>(uniform_index(rng, kNumActions)));
        const auto one = integrate_motion(p, a, 0.4);
        const auto two = integrate_motion(integrate_motion(p, a, 0.2), a, 0.2);
        EXPECT_LT(std::hypot(one.x - two.x, one.y - two.y), 1e-9);
        EXPECT_LT(std::abs(normalize_angle(one.yaw - two.yaw)), 1e-9);
    }
}

TEST(IntegrateMotion, YawStaysNormalized) {
    Pose2D p{0, 0, 3.1};
    for (int i = 0; i < 200; ++i) {
        p = integrate_motion(p, ActionCommand::from_index(3), 0.4);
        EXPECT_GT(p.yaw, -std::numbers::pi);
        EXPECT_LE(p.yaw, std::numbers::pi);
    }
}

TEST(Actions, FixedBijection) {
    const double expected[] = {0.0, 0.25, -0.25, 0.5, -0.5};
    for (int i = 0; i < kNumActions; ++i) {
        const auto a = ActionCommand::from_index(i);
        EXPECT_EQ(a.index, i);
        EXPECT_DOUBLE_EQ(a.yaw_rate, expected[i]);
        EXPECT_DOUBLE_EQ(a.forward_speed, 2.0);
    }
    EXPECT_THROW(ActionCommand::from_index(5), std::out_of_range);
    EXPECT_THROW(ActionCommand::from_index(-1), std::out_of_range);
}

TEST(Distance, CircleAndSurface) {
    auto w = open_arena();
    w.obstacles.push_back({Circle{{5, 0}, 1}, 7});
    EXPECT_DOUBLE_EQ(nearest_obstacle_distance(w, {0, 0}), 4.0);
    EXPECT_DOUBLE_EQ(nearest_obstacle_distance(w, {4, 0}), 0.0);
    EXPECT_DOUBLE_EQ(nearest_obstacle_distance(w, {5, 0.5}), 0.0);
}

TEST(Distance, BoxMatchesBoundarySampling) {
    auto w = open_arena();
    const Box b{{2, -1}, {4, 1}};
    w.obstacles.push_back({b, 9});
    EXPECT_DOUBLE_EQ(nearest_obstacle_distance(w, {0, 0}), 2.0);

    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const Vec2 p{uniform(rng, -3, 9), uniform(rng, -5, 5)};
        const bool inside = p.x >= 2 && p.x <= 4 && p.y >= -1 && p.y <= 1;
        double oracle = inside ? 0.0 : 1e9;
        if (!inside) {
            constexpr int n = 4000;
            for (int k = 0; k <= n; ++k) {
                const double t = static_cast<double>(k) / n;
                for (Vec2 q : {Vec2{2 + 2 * t, -1}, Vec2{2 + 2 * t, 1}, Vec2{2, -1 + 2 * t}, Vec2{4, -1 + 2 * t}})
                    oracle = std::min(oracle, norm(p - q));
            }
        }
        EXPECT_NEAR(distance_to(Obstacle{b, 0}, p), oracle, 1e-3);
    }
}

TEST(Distance, WallsCount) {
    WorldSpec w;
    w.bounds = {{0, 0}, {10, 6}};
    EXPECT_DOUBLE_EQ(nearest_obstacle_distance(w, {5, 3}), 3.0);
    EXPECT_DOUBLE_EQ(nearest_obstacle_distance(w, {9.5, 3}), 0.5);
}

TEST(Distance, OutsideBoundsIsDomainError) {
    WorldSpec w;
    w.bounds = {{0, 0}, {10, 10}};
    EXPECT_THROW(nearest_obstacle_distance(w, {-0.1, 5}), std::domain_error);
    EXPECT_THROW(nearest_obstacle_distance(w, {5, 10.5}), std::domain_error);
}

TEST(Distance, OneLipschitz) {
    for (auto kind : kAllScenarios) {
        const auto w = generate_world(kind, 21);
        Rng rng(8);
        const auto& b = w.bounds;
        for (int i = 0; i < 2000; ++i) {
            const Vec2 p{uniform(rng, b.min.x, b.max.x), uniform(rng, b.min.y, b.max.y)};
            const Vec2 q{std::clamp(p.x + uniform(rng, -1, 1), b.min.x, b.max.x),
                         std::clamp(p.y + uniform(rng, -1, 1), b.min.y, b.max.y)};
            EXPECT_LE(std::abs(nearest_obstacle_distance(w, p) - nearest_obstacle_distance(w, q)),
                      norm(p - q) + 1e-12);
        }
    }
}

TEST(Step, RewardBranches) {
    EXPECT_DOUBLE_EQ(reward_for_distance(3.2), 3.2);
    EXPECT_DOUBLE_EQ(reward_for_distance(0.5), 0.5);
    EXPECT_DOUBLE_EQ(reward_for_distance(0.49), -1.0);
}

TEST(Step, WallAheadEndpoints) {
    // Straight flight along +x ends 0.8 m further; the east wall sits at x = 10.
    WorldSpec w;
    w.bounds = {{0, 0}, {10, 20}};
    auto at = [&](double x) { return step(w, {x, 10, 0}, ActionCommand::from_index(0)); };
    const auto far = at(6.0);
    EXPECT_NEAR(far.d_nearest, 3.2, 1e-12);
    EXPECT_NEAR(far.reward, 3.2, 1e-12);
    EXPECT_FALSE(far.terminal);
    const auto edge = at(8.7);
    EXPECT_NEAR(edge.d_nearest, 0.5, 1e-12);
    EXPECT_FALSE(edge.terminal);
    const auto hit = at(8.71);
    EXPECT_DOUBLE_EQ(hit.reward, -1.0);
    EXPECT_TRUE(hit.terminal);
    const auto out = at(9.9);
    EXPECT_TRUE(out.terminal);
    EXPECT_DOUBLE_EQ(out.d_nearest, 0.0);
}

TEST(Step, RewardClippedAtMaxRange) {
    const auto w = open_arena();
    const auto s = step(w, {0, 0, 0}, ActionCommand::from_index(0));
    EXPECT_DOUBLE_EQ(s.d_nearest, 10.0);
    EXPECT_DOUBLE_EQ(s.reward, 10.0);
}

TEST(Step, OutcomeInvariantFuzz) {
    Rng rng(11);
    for (auto kind : kAllScenarios) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto w = generate_world(kind, seed);
            for (int i = 0; i < 100; ++i) {
                const Pose2D p{uniform(rng, w.bounds.min.x, w.bounds.max.x),
                               uniform(rng, w.bounds.min.y, w.bounds.max.y), uniform(rng, -3.14, 3.14)};
                const auto s = step(w, p, ActionCommand::from_index(static_cast<int>(uniform_index(rng, 5))));
                EXPECT_EQ(s.terminal, s.d_nearest < 0.5);
                EXPECT_EQ(s.terminal, s.reward == -1.0);
                if (!s.terminal) { EXPECT_DOUBLE_EQ(s.reward, s.d_nearest); }
                EXPECT_GE(s.d_nearest, 0.0);
                EXPECT_LE(s.d_nearest, 10.0);
            }
        }
    }
}

TEST(Generate, DeterministicAndSeedSensitive) {
    for (auto kind : kAllScenarios) {
        EXPECT_EQ(generate_world(kind, 99), generate_world(kind, 99));
    }
    EXPECT_NE(generate_world(ScenarioKind::basic, 1).obstacles, generate_world(ScenarioKind::basic, 2).obstacles);
}

TEST(Generate, CornerTrapLayoutFixed) {
    const auto ref = generate_world(ScenarioKind::corner_trap, 0);
    for (std::uint64_t s : {1ULL, 17ULL, 123456789ULL, ~0ULL}) {
        const auto w = generate_world(ScenarioKind::corner_trap, s);
        EXPECT_EQ(w.obstacles, ref.obstacles);
        EXPECT_EQ(w.bounds, ref.bounds);
    }
}

TEST(Generate, SpecInvariants) {
    for (auto kind : kAllScenarios) {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const auto w = generate_world(kind, seed);
            EXPECT_EQ(w.scenario_kind, kind);
            EXPECT_GE(nearest_obstacle_distance(w, w.start_pose.position()), 1.0) << to_string(kind) << " " << seed;
            for (const auto& o : w.obstacles) EXPECT_TRUE(detail::within_bounds(w.bounds, o));
        }
    }
}

TEST(Generate, FeasiblePathExists) {
    for (auto kind : kAllScenarios) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto w = generate_world(kind, seed);
            const auto path = find_safe_path(w, w.start_pose, kSuccessSteps);
            ASSERT_TRUE(path.has_value()) << to_string(kind) << " " << seed;
            // Replay the path through the real step function.
            Pose2D p = w.start_pose;
            for (int a : *path) {
                const auto s = step(w, p, ActionCommand::from_index(a));
                ASSERT_FALSE(s.terminal);
                p = s.next_pose;
            }
        }
    }
}

TEST(Generate, StraightFlightUsuallyCollidesInBasic) {
    int collided = 0;
    constexpr int n = 300;
    for (int seed = 0; seed < n; ++seed) {
        const auto w = generate_world(ScenarioKind::basic, static_cast<std::uint64_t>(seed));
        Pose2D p = w.start_pose;
        for (int t = 0; t < kSuccessSteps; ++t) {
            const auto s = step(w, p, ActionCommand::from_index(0));
            if (s.terminal) {
                ++collided;
                break;
            }
            p = s.next_pose;
        }
    }
    EXPECT_GE(collided, 0.9 * n);
}

TEST(WorldText, RoundTrip) {
    for (auto kind : kAllScenarios) {
        const auto w = generate_world(kind, 5);
        std::stringstream ss;
        write_world(ss, w);
        EXPECT_EQ(read_world(ss), w);
    }
}

TEST(WorldText, RejectsMalformed) {
    std::istringstream missing("scenario basic\n");
    EXPECT_THROW(read_world(missing), std::runtime_error);
    std::istringstream bad("bounds 0 0 10 10\nwedge 1 2 3\n");
    EXPECT_THROW(read_world(bad), std::runtime_error);
    std::istringstream outside("bounds 0 0 10 10\ncircle 9.5 5 1 3\n");
    EXPECT_THROW(read_world(outside), std::runtime_error);
}
