#pragma once

// Central-difference gradient checks for every layer and for the full TD
// loss of a downsized network.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qnav/agent.hpp"
#include "qnav/layers.hpp"
#include "qnav/replay.hpp"
#include "qnav/rng.hpp"

namespace qnav {

inline constexpr double kGradCheckEpsilon = 1e-5;

/// |a - n| / max(|a| + |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double threshold = 0.0;
    std::size_t checked = 0;

    bool ok() const { return max_rel_error < threshold; }
};

/// Perturb each entry of every parameter by +-eps and compare the central
/// difference of `loss` with the analytic gradient already stored in `ps`.
inline GradCheckResult grad_check(const std::string& name, ParamSet& ps, const std::function<double()>& loss,
                                  double threshold, double eps = kGradCheckEpsilon) {
    if (!(eps > 0)) throw std::invalid_argument("grad_check epsilon must be positive");
    GradCheckResult r{name, 0.0, "", 0, threshold, 0};
    for (auto& p : ps.params()) {
        const Tensor analytic = p.grad;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + eps;
            const double up = loss();
            p.value[i] = keep - eps;
            const double down = loss();
            p.value[i] = keep;
            const double e = relative_error(analytic[i], (up - down) / (2 * eps));
            ++r.checked;
            if (e > r.max_rel_error) {
                r.max_rel_error = e;
                r.worst_param = p.name;
                r.worst_index = i;
            }
        }
    }
    return r;
}

namespace detail {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.values()) v = uniform(rng, lo, hi);
    return t;
}

/// Fixed random readout so scalar losses depend on every output.
inline double weighted_sum(std::span<const double> x, std::span<const double> w) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i];
    return s;
}

}  // namespace detail

inline GradCheckResult check_dense_layer(std::uint64_t seed) {
    Rng rng(seed);
    ParamSet ps;
    ps.add("x", detail::random_tensor({7}, rng));
    ps.add("weight", detail::random_tensor({5, 7}, rng));
    ps.add("bias", detail::random_tensor({5}, rng));
    const Tensor readout = detail::random_tensor({5}, rng);
    auto loss = [&] {
        const Tensor y = dense(ps.value("x"), ps.value("weight"), ps.value("bias"));
        return detail::weighted_sum(y.values(), readout.values());
    };
    const auto g = dense_backward(ps.value("x"), ps.value("weight"), ps.value("bias"), readout);
    ps.grad("x") = g.input;
    ps.grad("weight") = g.weight;
    ps.grad("bias") = g.bias;
    return grad_check("dense", ps, loss, 1e-6);
}

/// Conv followed by ReLU and a squared readout, so curvature is exercised.
inline GradCheckResult check_conv_layer(std::uint64_t seed, std::size_t c_out) {
    Rng rng(seed);
    ParamSet ps;
    ps.add("x", detail::random_tensor({9, 11, 3}, rng));
    ps.add("kernel", detail::random_tensor({3, 4, 3, c_out}, rng, -0.5, 0.5));
    ps.add("bias", detail::random_tensor({c_out}, rng, -0.1, 0.1));
    const auto geom = conv_geometry(ps.value("x"), ps.value("kernel"), 2);
    const Tensor readout = detail::random_tensor(geom.out_shape(), rng);
    auto forward = [&] {
        Tensor y(geom.out_shape());
        conv2d_forward(geom, ps.value("x").data(), ps.value("kernel").data(), ps.value("bias").data(), y.data());
        relu_inplace(y.values());
        return y;
    };
    auto loss = [&] {
        const Tensor y = forward();
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * readout[i] * y[i] * y[i];
        return s;
    };
    const Tensor y = forward();
    Tensor dy(geom.out_shape());
    for (std::size_t i = 0; i < y.size(); ++i) dy[i] = readout[i] * y[i];   // zero where ReLU is off
    ps.zero_grad();
    conv2d_backward(geom, ps.value("x").data(), ps.value("kernel").data(), dy.data(), ps.grad("kernel").data(),
                    ps.grad("bias").data(), ps.grad("x").data());
    return grad_check("conv(c_out=" + std::to_string(c_out) + ")", ps, loss, 1e-5);
}

/// Three unrolled LSTM steps with a readout on every hidden state.
inline GradCheckResult check_lstm_layer(std::uint64_t seed) {
    constexpr std::size_t H = 6, in = 4, T = 3;
    Rng rng(seed);
    ParamSet ps;
    for (std::size_t t = 0; t < T; ++t) ps.add("x" + std::to_string(t), detail::random_tensor({in}, rng));
    ps.add("wx", detail::random_tensor({4 * H, in}, rng, -0.5, 0.5));
    ps.add("wh", detail::random_tensor({4 * H, H}, rng, -0.5, 0.5));
    ps.add("bias", detail::random_tensor({4 * H}, rng, -0.5, 0.5));
    ps.add("h0", detail::random_tensor({H}, rng));
    ps.add("c0", detail::random_tensor({H}, rng));
    std::vector<Tensor> readout;
    for (std::size_t t = 0; t < T; ++t) readout.push_back(detail::random_tensor({H}, rng));

    auto run = [&](std::vector<LstmStepCache>* caches) {
        const LstmWeights w{ps.value("wx"), ps.value("wh"), ps.value("bias")};
        LstmState s{{ps.value("h0").values().begin(), ps.value("h0").values().end()},
                    {ps.value("c0").values().begin(), ps.value("c0").values().end()}};
        std::vector<double> scratch;
        double l = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            lstm_forward(w, ps.value("x" + std::to_string(t)).data(), s, caches ? &(*caches)[t] : nullptr, scratch);
            l += detail::weighted_sum(s.hidden, readout[t].values());
        }
        return l;
    };
    ps.zero_grad();
    std::vector<LstmStepCache> caches(T);
    run(&caches);
    const LstmWeights w{ps.value("wx"), ps.value("wh"), ps.value("bias")};
    const LstmGradRefs g{ps.grad("wx").data(), ps.grad("wh").data(), ps.grad("bias").data()};
    std::vector<double> dh(H, 0.0), dc(H, 0.0), dz;
    for (std::size_t t = T; t-- > 0;) {
        for (std::size_t k = 0; k < H; ++k) dh[k] += readout[t][k];
        lstm_backward(w, caches[t], dh, dc, g, ps.grad("x" + std::to_string(t)).data(), dz);
    }
    std::copy(dh.begin(), dh.end(), ps.grad("h0").data());
    std::copy(dc.begin(), dc.end(), ps.grad("c0").data());
    return grad_check("lstm", ps, [&] { return run(nullptr); }, 1e-5);
}

/// Small network that keeps every code path of the full one: three convs
/// with 4- and 8-channel outputs, recurrent or dense core, optional dueling.
inline NetworkArch downsized_arch(AgentVariant v) {
    NetworkArch a;
    a.in_h = 12;
    a.in_w = 16;
    a.convs = {{4, 4, 4, 2}, {3, 3, 8, 1}, {2, 2, 4, 1}};
    a.recurrent = is_recurrent(v);
    a.dueling = is_dueling(v);
    return a;
}

/// Synthetic replay holding a short terminal episode (padded window), a
/// truncated one and a long one with a mid-episode window.
inline ReplayBuffer gradcheck_replay(std::size_t obs_size, Rng& rng) {
    ReplayBuffer rb(1000, 5);
    auto obs = [&] {
        StoredObservation o(obs_size);
        for (auto& v : o) v = static_cast<float>(uniform(rng, 0.05, 1.0));
        return o;
    };
    auto episode = [&](std::size_t n, bool terminal) {
        EpisodeRecord e;
        for (std::size_t i = 0; i < n; ++i)
            e.steps.push_back({obs(), static_cast<int>(uniform_index(rng, kNumActions)), uniform(rng, 0.5, 3.0), false});
        if (terminal) {
            e.steps.back().terminal = true;
            e.steps.back().reward = kCollisionReward;
        } else {
            e.final_observation = obs();
        }
        return e;
    };
    rb.push_episode(episode(3, true));
    rb.push_episode(episode(6, false));
    rb.push_episode(episode(9, false));
    return rb;
}

/// Full TD loss of a downsized network over length-5 windows, with the
/// target network held fixed.
inline GradCheckResult check_network(AgentVariant v, std::uint64_t seed) {
    const QNetwork net(downsized_arch(v));
    Rng rng(seed);
    ParamSet online = net.init_params(rng);
    ParamSet target = net.init_params(rng);
    const ReplayBuffer rb = gradcheck_replay(net.arch().input_size(), rng);
    const std::vector<SequenceSample> batch{rb.make_window(0, 0), rb.make_window(1, 1), rb.make_window(2, 3),
                                            rb.make_window(2, 4)};
    const TrainHyper hp{0.99, 1.0, {}};
    online.zero_grad();
    accumulate_td_gradient(net, online, target, batch, hp);
    ParamSet probe = online;
    auto loss = [&] {
        copy_values(online, probe);
        return accumulate_td_gradient(net, probe, target, batch, hp).loss;
    };
    // Parameter values are perturbed in `online`, the loss is evaluated on a
    // copy so the analytic gradients stay intact.
    return grad_check("network(" + std::string(to_string(v)) + ")", online, loss, 1e-4);
}

inline std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed = 7) {
    std::vector<GradCheckResult> out;
    out.push_back(check_dense_layer(derive_seed(seed, 1)));
    out.push_back(check_conv_layer(derive_seed(seed, 2), 4));
    out.push_back(check_conv_layer(derive_seed(seed, 3), 8));
    out.push_back(check_conv_layer(derive_seed(seed, 4), 3));
    out.push_back(check_lstm_layer(derive_seed(seed, 5)));
    for (auto v : {AgentVariant::D3RQN, AgentVariant::DDRQN, AgentVariant::D3QN, AgentVariant::DDQN})
        out.push_back(check_network(v, derive_seed(seed, 6, static_cast<std::uint64_t>(v))));
    return out;
}

}  // namespace qnav
