#pragma once

// Frozen-policy evaluation: success-rate protocol, baselines, scenario
// transfer suite and trajectory traces.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "qnav/agent.hpp"
#include "qnav/sensor.hpp"
#include "qnav/trainer.hpp"
#include "qnav/world.hpp"

namespace qnav {

inline constexpr std::uint64_t kEvalWorldStream = 0xe7a1'0001ULL;
inline constexpr std::uint64_t kEvalPolicyStream = 0xe7a1'0002ULL;
inline constexpr std::uint64_t kEvalDegradeStream = 0xe7a1'0003ULL;

/// A network-backed policy or one of the two baselines. Network policies
/// borrow their parameters; evaluation never writes to them.
class Policy {
public:
    static Policy straight() { return Policy(AgentVariant::Straight); }
    static Policy random() { return Policy(AgentVariant::Random); }
    static Policy network(AgentVariant v, const QNetwork& net, const ParamSet& params) {
        if (!is_learned(v)) throw std::invalid_argument("network policy needs a learned variant");
        net.check_params(params);
        Policy p(v);
        p.net_ = &net;
        p.params_ = &params;
        return p;
    }

    AgentVariant variant() const { return variant_; }

    /// Start a new episode; `seed` drives the random baseline.
    void reset(std::uint64_t seed) {
        rng_.seed(seed);
        if (net_) state_ = net_->initial_state();
    }

    /// Greedy action for the current observation.
    int act(const Tensor& obs) {
        switch (variant_) {
            case AgentVariant::Straight: return 0;
            case AgentVariant::Random: return static_cast<int>(uniform_index(rng_, kNumActions));
            default: return argmax(net_->act(*params_, obs.data(), state_).q);
        }
    }

private:
    explicit Policy(AgentVariant v) : variant_(v) {}

    AgentVariant variant_;
    const QNetwork* net_ = nullptr;
    const ParamSet* params_ = nullptr;
    LstmState state_;
    Rng rng_{0};
};

struct EvalOptions {
    CameraModel camera = CameraModel::desk();
    DegradeParams degrade{};
    int max_steps = kSuccessSteps;
};

enum class EpisodeOutcome { success, collision };

struct EpisodeResult {
    std::uint64_t world_seed = 0;
    int steps = 0;
    EpisodeOutcome outcome = EpisodeOutcome::collision;
    friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

struct EvalReport {
    AgentVariant variant = AgentVariant::Straight;
    ScenarioKind scenario = ScenarioKind::basic;
    int n_episodes = 0;
    int success_count = 0;
    std::optional<double> success_rate;   // empty when n_episodes == 0
    double mean_steps = 0.0;
    std::vector<EpisodeResult> episodes;

    /// Wilson 95% interval for the success rate.
    std::pair<double, double> wilson_interval(double z = 1.96) const {
        if (n_episodes == 0) return {0.0, 1.0};
        const double n = n_episodes, p = static_cast<double>(success_count) / n;
        const double den = 1 + z * z / n;
        const double c = (p + z * z / (2 * n)) / den;
        const double h = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den;
        return {std::max(0.0, c - h), std::min(1.0, c + h)};
    }
};

struct TraceEntry {
    Pose2D pose;
    int action = -1;       // -1 on the final pose
    double d_nearest = 0.0;
};

/// Full rollout record: one entry per visited pose, at most 51.
inline std::vector<TraceEntry> trajectory_trace(Policy& policy, const WorldSpec& world, std::uint64_t seed,
                                                const EvalOptions& opt = {}) {
    policy.reset(derive_seed(seed, kEvalPolicyStream));
    Rng degrade_rng(derive_seed(seed, kEvalDegradeStream));
    std::vector<TraceEntry> trace;
    Pose2D pose = world.start_pose;
    double d = std::min(nearest_obstacle_distance(world, pose.position()), opt.camera.max_range);
    for (int t = 0; t < opt.max_steps; ++t) {
        const Tensor o = observe(world, pose, opt.camera, opt.degrade, degrade_rng);
        const int a = policy.act(o);
        trace.push_back({pose, a, d});
        const auto out = step(world, pose, ActionCommand::from_index(a), kActionInterval, opt.camera.max_range);
        pose = out.next_pose;
        d = out.d_nearest;
        if (out.terminal) break;
    }
    trace.push_back({pose, -1, d});
    return trace;
}

/// Epsilon-zero rollouts on seed-derived layouts; an episode succeeds when it
/// survives max_steps (50) steps.
inline EvalReport evaluate(Policy& policy, ScenarioKind scenario, int n_episodes, std::uint64_t seed,
                           const EvalOptions& opt = {}) {
    EvalReport r;
    r.variant = policy.variant();
    r.scenario = scenario;
    r.n_episodes = std::max(0, n_episodes);
    long total_steps = 0;
    for (int i = 0; i < r.n_episodes; ++i) {
        const std::uint64_t ws = derive_seed(seed, kEvalWorldStream, static_cast<std::uint64_t>(i));
        const WorldSpec world = generate_world(scenario, ws);
        const auto trace = trajectory_trace(policy, world, ws, opt);
        const int steps = static_cast<int>(trace.size()) - 1;
        const bool ok = steps >= opt.max_steps && trace.back().d_nearest >= kSafeDistance;
        r.episodes.push_back({ws, steps, ok ? EpisodeOutcome::success : EpisodeOutcome::collision});
        r.success_count += ok;
        total_steps += steps;
    }
    if (r.n_episodes > 0) {
        r.success_rate = static_cast<double>(r.success_count) / r.n_episodes;
        r.mean_steps = static_cast<double>(total_steps) / r.n_episodes;
    }
    return r;
}

inline constexpr std::array<ScenarioKind, 3> kTransferScenarios{ScenarioKind::narrow_channel,
                                                                 ScenarioKind::intersections, ScenarioKind::corners};

/// The unchanged policy on the three transfer scenarios.
inline std::vector<EvalReport> transfer_suite(Policy& policy, std::uint64_t seed, int n_episodes = 500,
                                              const EvalOptions& opt = {}) {
    std::vector<EvalReport> out;
    for (auto k : kTransferScenarios) out.push_back(evaluate(policy, k, n_episodes, seed, opt));
    return out;
}

}  // namespace qnav
