#pragma once

// End-to-end training loop: world, sensor, agent, replay and optimizer.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qnav/agent.hpp"
#include "qnav/replay.hpp"
#include "qnav/rng.hpp"
#include "qnav/sensor.hpp"
#include "qnav/world.hpp"

namespace qnav {

inline constexpr std::uint64_t kTrainWorldStream = 0x7a11'0001ULL;
inline constexpr std::uint64_t kInitStream = 0x7a11'0002ULL;
inline constexpr std::uint64_t kActStream = 0x7a11'0003ULL;
inline constexpr std::uint64_t kSampleStream = 0x7a11'0004ULL;
inline constexpr std::uint64_t kDegradeStream = 0x7a11'0005ULL;

struct TrainConfig {
    AgentVariant variant = AgentVariant::D3RQN;
    ScenarioKind scenario = ScenarioKind::basic;
    int episodes = 3000;
    int max_steps_per_episode = 100;
    int batch = 32;
    double gamma = 0.99;
    double lr = 3e-4;
    int window = 5;
    int target_sync_every = 300;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_decay_fraction = 0.3;
    int warmup_steps = 1000;
    int update_every = 1;          // environment steps per gradient update
    int replay_capacity = 50000;
    double huber_delta = 1.0;
    std::uint64_t seed = 7;
    CameraModel camera = CameraModel::desk();
    DegradeParams degrade{};

    void validate() const {
        auto positive = [](auto v, const char* name) {
            if (!(v > 0)) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
        };
        if (episodes < 0) throw std::invalid_argument("config: episodes must be non-negative");
        positive(max_steps_per_episode, "max_steps_per_episode");
        positive(batch, "batch");
        positive(gamma, "gamma");
        positive(lr, "lr");
        positive(window, "window");
        positive(target_sync_every, "target_sync_every");
        positive(update_every, "update_every");
        positive(replay_capacity, "replay_capacity");
        positive(huber_delta, "huber_delta");
        if (warmup_steps < 0) throw std::invalid_argument("config: warmup_steps must be non-negative");
        if (gamma > 1.0) throw std::invalid_argument("config: gamma must not exceed 1");
        if (!(epsilon_end >= 0 && epsilon_end <= epsilon_start && epsilon_start <= 1.0))
            throw std::invalid_argument("config: need 0 <= epsilon_end <= epsilon_start <= 1");
        if (!(epsilon_decay_fraction > 0 && epsilon_decay_fraction <= 1))
            throw std::invalid_argument("config: epsilon_decay_fraction must be in (0, 1]");
        if (!is_learned(variant)) throw std::invalid_argument("config: variant has no trainable network");
        camera.validate();
        degrade.validate();
    }

    /// Linear decay over the first epsilon_decay_fraction of the episodes.
    double epsilon_at(int episode) const {
        const double span = epsilon_decay_fraction * episodes;
        const double frac = span > 0 ? std::min(1.0, episode / span) : 1.0;
        if (frac >= 1.0) return epsilon_end;
        return epsilon_start + (epsilon_end - epsilon_start) * frac;
    }

    NetworkArch arch() const { return NetworkArch::for_variant(variant, camera.height, camera.width); }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct CurveRow {
    int episode = 0;
    double total_reward = 0.0;
    int steps = 0;
    double epsilon = 0.0;
    double mean_loss = 0.0;   // NaN before the first update
    friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

using LearningCurve = std::vector<CurveRow>;

/// Centered moving average with windows shrinking at the ends. Smooths
/// total_reward, steps and mean_loss; other fields are kept.
inline LearningCurve smooth_curve(const LearningCurve& curve, int half_window) {
    if (half_window < 0) throw std::invalid_argument("half_window must be non-negative");
    LearningCurve out = curve;
    const auto n = static_cast<long>(curve.size());
    for (long i = 0; i < n; ++i) {
        const long lo = std::max(0L, i - half_window), hi = std::min(n - 1, i + half_window);
        double r = 0, s = 0, l = 0;
        long nl = 0;
        for (long j = lo; j <= hi; ++j) {
            r += curve[static_cast<std::size_t>(j)].total_reward;
            s += curve[static_cast<std::size_t>(j)].steps;
            if (std::isfinite(curve[static_cast<std::size_t>(j)].mean_loss)) {
                l += curve[static_cast<std::size_t>(j)].mean_loss;
                ++nl;
            }
        }
        const double cnt = static_cast<double>(hi - lo + 1);
        auto& row = out[static_cast<std::size_t>(i)];
        row.total_reward = r / cnt;
        row.steps = static_cast<int>(std::lround(s / cnt));
        row.mean_loss = nl ? l / static_cast<double>(nl) : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

/// Depth observation for a pose, optionally degraded.
inline Tensor observe(const WorldSpec& world, const Pose2D& pose, const CameraModel& cam, const DegradeParams& deg,
                      Rng& rng) {
    auto depth = render_depth(world, pose, cam);
    if (!deg.is_identity()) depth = degrade(depth, deg, rng);
    return make_observation(depth);
}

inline StoredObservation store(const Tensor& obs) { return {obs.values().begin(), obs.values().end()}; }

/// Optional hooks for instrumentation and tests; all may be left empty.
struct TrainObserver {
    std::function<void(int episode, const StepOutcome&)> on_step;
    std::function<void(long update, const ParamSet& online, const ParamSet& target, bool synced)> on_update;
    std::function<void(const ReplayBuffer&)> on_push;
    std::function<void(const CurveRow&)> on_episode;
};

struct TrainResult {
    NetworkArch arch;
    ParamSet params;
    LearningCurve curve;
    long updates = 0;
};

/// Raised when the TD loss stops being finite; carries the state reached.
class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(const std::string& what, TrainResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const TrainResult& partial() const { return partial_; }

private:
    TrainResult partial_;
};

inline TrainResult train(const TrainConfig& cfg, const TrainObserver& obs = {}) {
    cfg.validate();
    const QNetwork net(cfg.arch());
    Rng init_rng(derive_seed(cfg.seed, kInitStream));
    Rng act_rng(derive_seed(cfg.seed, kActStream));
    Rng sample_rng(derive_seed(cfg.seed, kSampleStream));
    Rng degrade_rng(derive_seed(cfg.seed, kDegradeStream));

    TrainResult result{net.arch(), net.init_params(init_rng), {}, 0};
    ParamSet target = result.params;
    ReplayBuffer replay(static_cast<std::size_t>(cfg.replay_capacity), static_cast<std::size_t>(cfg.window));
    const TrainHyper hp{cfg.gamma, cfg.huber_delta, {cfg.lr, 0.9, 0.999, 1e-8}};
    long env_steps = 0;

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const double eps = cfg.epsilon_at(ep);
        const WorldSpec world = generate_world(cfg.scenario, derive_seed(cfg.seed, kTrainWorldStream,
                                                                         static_cast<std::uint64_t>(ep)));
        Pose2D pose = world.start_pose;
        LstmState state = net.initial_state();
        EpisodeRecord rec;
        CurveRow row{ep, 0.0, 0, eps, std::numeric_limits<double>::quiet_NaN()};
        Tensor o = observe(world, pose, cfg.camera, cfg.degrade, degrade_rng);
        bool terminal = false;
        for (int t = 0; t < cfg.max_steps_per_episode; ++t) {
            const auto q = net.act(result.params, o.data(), state);
            const int a = select_action(q.q, eps, act_rng);
            const StepOutcome out = step(world, pose, ActionCommand::from_index(a), kActionInterval,
                                         cfg.camera.max_range);
            if (obs.on_step) obs.on_step(ep, out);
            rec.steps.push_back({store(o), a, out.reward, out.terminal});
            row.total_reward += out.reward;
            ++row.steps;
            pose = out.next_pose;
            if (out.terminal) {
                terminal = true;
                break;
            }
            o = observe(world, pose, cfg.camera, cfg.degrade, degrade_rng);
        }
        if (!terminal) rec.final_observation = store(o);
        const long steps_this_episode = row.steps;
        replay.push_episode(std::move(rec));
        if (obs.on_push) obs.on_push(replay);

        double loss_sum = 0.0;
        long loss_n = 0;
        for (long k = 0; k < steps_this_episode; ++k) {
            ++env_steps;
            if (replay.size_steps() < static_cast<std::size_t>(cfg.warmup_steps)) continue;
            if (env_steps % cfg.update_every != 0) continue;
            const auto batch = replay.sample_windows(static_cast<std::size_t>(cfg.batch), sample_rng);
            TrainStats st;
            try {
                st = train_step(net, result.params, target, batch, hp);
            } catch (const std::runtime_error& e) {
                result.curve.push_back(row);
                throw TrainingAborted(std::string("training aborted at episode ") + std::to_string(ep) + ": " +
                                          e.what(),
                                      std::move(result));
            }
            ++result.updates;
            loss_sum += st.loss;
            ++loss_n;
            const bool sync = result.updates % cfg.target_sync_every == 0;
            if (sync) sync_target(result.params, target);
            if (obs.on_update) obs.on_update(result.updates, result.params, target, sync);
        }
        if (loss_n) row.mean_loss = loss_sum / static_cast<double>(loss_n);
        result.curve.push_back(row);
        if (obs.on_episode) obs.on_episode(row);
    }
    return result;
}

}  // namespace qnav
