#pragma once

// Dueling double deep recurrent Q-network and its ablations: conv trunk,
// LSTM (or dense) core, dueling or plain heads, epsilon-greedy selection,
// double-Q targets and the batched TD update.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qnav/layers.hpp"
#include "qnav/replay.hpp"
#include "qnav/rng.hpp"
#include "qnav/tensor.hpp"
#include "qnav/world.hpp"

namespace qnav {

enum class AgentVariant { D3RQN, DDRQN, D3QN, DDQN, Straight, Random };

inline constexpr std::array<AgentVariant, 6> kAllVariants{AgentVariant::D3RQN, AgentVariant::DDRQN,
                                                          AgentVariant::D3QN,  AgentVariant::DDQN,
                                                          AgentVariant::Straight, AgentVariant::Random};

inline std::string_view to_string(AgentVariant v) {
    switch (v) {
        case AgentVariant::D3RQN: return "d3rqn";
        case AgentVariant::DDRQN: return "ddrqn";
        case AgentVariant::D3QN: return "d3qn";
        case AgentVariant::DDQN: return "ddqn";
        case AgentVariant::Straight: return "straight";
        case AgentVariant::Random: return "random";
    }
    return "?";
}

inline AgentVariant parse_variant(std::string_view s) {
    for (auto v : kAllVariants)
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown agent variant '" + std::string(s) + "'");
}

inline bool is_learned(AgentVariant v) { return v != AgentVariant::Straight && v != AgentVariant::Random; }
inline bool is_recurrent(AgentVariant v) { return v == AgentVariant::D3RQN || v == AgentVariant::DDRQN; }
inline bool is_dueling(AgentVariant v) { return v == AgentVariant::D3RQN || v == AgentVariant::D3QN; }

using QValues = std::array<double, kNumActions>;

// ---------------------------------------------------------------------------
// Architecture

struct ConvSpec {
    std::size_t kh, kw, c_out, stride;
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Conv 1..3 of the reference network: (8,8,4)/4, (4,4,8)/2, (3,3,8)/2.
inline const std::array<ConvSpec, 3> kReferenceConvs{{{8, 8, 4, 4}, {4, 4, 8, 2}, {3, 3, 8, 2}}};

struct NetworkArch {
    std::size_t in_h = 128, in_w = 416;
    std::vector<ConvSpec> convs{kReferenceConvs.begin(), kReferenceConvs.end()};
    bool recurrent = true;
    bool dueling = true;
    std::size_t n_actions = kNumActions;

    /// Reference conv stack for an (h, w, 1) input. A kernel taller or wider
    /// than its incoming activation is clipped to fit; at 128x416 nothing is
    /// clipped.
    static NetworkArch for_variant(AgentVariant v, std::size_t h, std::size_t w) {
        if (!is_learned(v)) throw std::invalid_argument("variant has no network");
        NetworkArch a;
        a.in_h = h;
        a.in_w = w;
        a.recurrent = is_recurrent(v);
        a.dueling = is_dueling(v);
        a.convs.clear();
        std::size_t ch = h, cw = w;
        for (auto spec : kReferenceConvs) {
            spec.kh = std::min(spec.kh, ch);
            spec.kw = std::min(spec.kw, cw);
            a.convs.push_back(spec);
            ch = (ch - spec.kh) / spec.stride + 1;
            cw = (cw - spec.kw) / spec.stride + 1;
        }
        return a;
    }

    std::vector<ConvGeometry> conv_geometry() const {
        std::vector<ConvGeometry> g;
        std::size_t h = in_h, w = in_w, c = 1;
        for (const auto& s : convs) {
            g.push_back(qnav::conv_geometry(h, w, c, s.kh, s.kw, s.c_out, s.stride));
            h = g.back().oh;
            w = g.back().ow;
            c = s.c_out;
        }
        return g;
    }

    /// Flattened conv output; also the LSTM / dense core width.
    std::size_t trunk_width() const { return conv_geometry().back().out_size(); }
    std::size_t input_size() const { return in_h * in_w; }

    friend bool operator==(const NetworkArch&, const NetworkArch&) = default;
};

struct QOutput {
    QValues q{};
    double value = 0.0;     // dueling only
    QValues advantages{};   // dueling only
    LstmState state;        // recurrent only
};

/// q_a = V + A_a - mean(A).
inline QValues dueling_aggregate(double value, const QValues& advantages) {
    const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / kNumActions;
    QValues q{};
    for (std::size_t a = 0; a < q.size(); ++a) q[a] = value + advantages[a] - mean;
    return q;
}

/// Greedy index with lowest-index tie-break.
inline int argmax(const QValues& q) {
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

inline int select_action(const QValues& q, double epsilon, Rng& rng) {
    if (epsilon > 0.0 && uniform01(rng) < epsilon) return static_cast<int>(uniform_index(rng, kNumActions));
    return argmax(q);
}

// ---------------------------------------------------------------------------
// Network

class QNetwork {
public:
    struct FrameTrace {
        std::vector<std::vector<double>> acts;  // post-ReLU output of each conv
    };

    struct CoreTrace {
        std::vector<LstmStepCache> steps;   // recurrent
        std::vector<double> dense_in;       // non-recurrent: last frame features
        std::vector<double> output;         // input to the heads
    };

    explicit QNetwork(NetworkArch arch) : arch_(std::move(arch)), geom_(arch_.conv_geometry()) {
        width_ = geom_.back().out_size();
        std::size_t k = 0;
        for (std::size_t i = 0; i < geom_.size(); ++i) {
            conv_k_.push_back(k++);
            conv_b_.push_back(k++);
        }
        core_a_ = k++;
        core_b_ = k++;
        if (arch_.recurrent) core_c_ = k++;
        head_w_ = k++;
        head_b_ = k++;
        if (arch_.dueling) {
            value_w_ = k++;
            value_b_ = k++;
        }
        param_count_ = k;
    }

    const NetworkArch& arch() const { return arch_; }
    std::size_t width() const { return width_; }

    /// He-uniform conv/dense, uniform(+-1/sqrt(H)) LSTM with forget bias +1.
    ParamSet init_params(Rng& rng) const {
        ParamSet ps;
        auto he = [&](Shape s, std::size_t fan_in) {
            Tensor t(std::move(s));
            const double lim = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& v : t.values()) v = uniform(rng, -lim, lim);
            return t;
        };
        for (std::size_t i = 0; i < geom_.size(); ++i) {
            const auto& g = geom_[i];
            const std::string n = "conv" + std::to_string(i + 1);
            ps.add(n + ".kernel", he({g.kh, g.kw, g.c_in, g.c_out}, g.kh * g.kw * g.c_in));
            ps.add(n + ".bias", Tensor({g.c_out}));
        }
        const std::size_t H = width_;
        if (arch_.recurrent) {
            const double lim = 1.0 / std::sqrt(static_cast<double>(H));
            auto u = [&](Shape s) {
                Tensor t(std::move(s));
                for (auto& v : t.values()) v = uniform(rng, -lim, lim);
                return t;
            };
            ps.add("lstm.wx", u({4 * H, H}));
            ps.add("lstm.wh", u({4 * H, H}));
            Tensor b({4 * H});
            for (std::size_t k = H; k < 2 * H; ++k) b[k] = 1.0;
            ps.add("lstm.bias", std::move(b));
        } else {
            ps.add("fc.weight", he({H, H}, H));
            ps.add("fc.bias", Tensor({H}));
        }
        const std::string head = arch_.dueling ? "advantage" : "q";
        ps.add(head + ".weight", he({arch_.n_actions, H}, H));
        ps.add(head + ".bias", Tensor({arch_.n_actions}));
        if (arch_.dueling) {
            ps.add("value.weight", he({1, H}, H));
            ps.add("value.bias", Tensor({1}));
        }
        return ps;
    }

    void check_params(const ParamSet& ps) const {
        Rng probe(0);
        if (!ps.same_layout(init_params(probe)))
            throw std::invalid_argument("parameter set does not match the network architecture");
    }

    // -- trunk ---------------------------------------------------------------

    void trunk(const ParamSet& ps, const double* obs, FrameTrace& tr) const {
        tr.acts.resize(geom_.size());
        const double* in = obs;
        for (std::size_t i = 0; i < geom_.size(); ++i) {
            const auto& g = geom_[i];
            tr.acts[i].resize(g.out_size());
            conv2d_forward(g, in, P(ps, conv_k_[i]).value.data(), P(ps, conv_b_[i]).value.data(), tr.acts[i].data());
            relu_inplace(tr.acts[i]);
            in = tr.acts[i].data();
        }
    }

    /// dfeat is consumed (used as scratch).
    void trunk_backward(ParamSet& ps, const double* obs, const FrameTrace& tr, std::vector<double>& dfeat,
                        std::vector<double>& scratch) const {
        std::vector<double>* d = &dfeat;
        for (std::size_t i = geom_.size(); i-- > 0;) {
            const auto& g = geom_[i];
            relu_backward_inplace(tr.acts[i], *d);
            const double* in = i == 0 ? obs : tr.acts[i - 1].data();
            double* din = nullptr;
            std::vector<double>* next = d == &dfeat ? &scratch : &dfeat;
            if (i > 0) {
                next->assign(g.in_size(), 0.0);
                din = next->data();
            }
            auto& k = P(ps, conv_k_[i]);
            conv2d_backward(g, in, k.value.data(), d->data(), k.grad.data(), P(ps, conv_b_[i]).grad.data(), din);
            d = next;
        }
    }

    // -- core + heads --------------------------------------------------------

    /// Run the core over per-frame features (recurrent) or the last one
    /// (dense), then the heads.
    QOutput evaluate(const ParamSet& ps, std::span<const double* const> features, LstmState state,
                     CoreTrace* tr) const {
        const std::size_t H = width_;
        std::vector<double> h;
        if (arch_.recurrent) {
            if (features.empty()) throw std::invalid_argument("recurrent forward needs at least one frame");
            if (state.width() != H || state.cell.size() != H) throw std::invalid_argument("lstm state width mismatch");
            const LstmWeights w = lstm_weights(ps);
            std::vector<double> scratch;
            if (tr) tr->steps.resize(features.size());
            for (std::size_t t = 0; t < features.size(); ++t)
                lstm_forward(w, features[t], state, tr ? &tr->steps[t] : nullptr, scratch);
            h = state.hidden;
        } else {
            if (features.empty()) throw std::invalid_argument("forward needs an observation");
            h.resize(H);
            const double* x = features.back();
            dense_forward(H, H, x, P(ps, core_a_).value.data(), P(ps, core_b_).value.data(), h.data());
            relu_inplace(h);
            if (tr) tr->dense_in.assign(x, x + H);
        }
        QOutput out;
        if (arch_.recurrent) out.state = std::move(state);
        QValues head{};
        dense_forward(kNumActions, H, h.data(), P(ps, head_w_).value.data(), P(ps, head_b_).value.data(), head.data());
        if (arch_.dueling) {
            dense_forward(1, H, h.data(), P(ps, value_w_).value.data(), P(ps, value_b_).value.data(), &out.value);
            out.advantages = head;
            out.q = dueling_aggregate(out.value, head);
        } else {
            out.q = head;
        }
        if (tr) tr->output = std::move(h);
        return out;
    }

    /// Backpropagate dL/dq through heads and core. Returns dL/dfeature per
    /// frame (only the last frame is non-empty for the dense core).
    std::vector<std::vector<double>> core_backward(ParamSet& ps, const CoreTrace& tr, const QValues& dq) const {
        const std::size_t H = width_;
        std::vector<double> dh(H, 0.0);
        QValues dhead = dq;
        if (arch_.dueling) {
            const double mean = std::accumulate(dq.begin(), dq.end(), 0.0) / kNumActions;
            double dv = 0.0;
            for (std::size_t a = 0; a < dhead.size(); ++a) {
                dv += dq[a];
                dhead[a] = dq[a] - mean;
            }
            dense_backward(1, H, tr.output.data(), P(ps, value_w_).value.data(), &dv, P(ps, value_w_).grad.data(),
                           P(ps, value_b_).grad.data(), dh.data());
        }
        dense_backward(kNumActions, H, tr.output.data(), P(ps, head_w_).value.data(), dhead.data(),
                       P(ps, head_w_).grad.data(), P(ps, head_b_).grad.data(), dh.data());

        std::vector<std::vector<double>> dfeat;
        if (arch_.recurrent) {
            const LstmWeights w = lstm_weights(ps);
            const LstmGradRefs g{P(ps, core_a_).grad.data(), P(ps, core_b_).grad.data(), P(ps, core_c_).grad.data()};
            std::vector<double> dc(H, 0.0), dz;
            dfeat.resize(tr.steps.size());
            for (std::size_t t = tr.steps.size(); t-- > 0;) {
                dfeat[t].resize(H);
                lstm_backward(w, tr.steps[t], dh, dc, g, dfeat[t].data(), dz);
            }
        } else {
            relu_backward_inplace(tr.output, dh);
            dfeat.resize(1);
            dfeat[0].assign(H, 0.0);
            dense_backward(H, H, tr.dense_in.data(), P(ps, core_a_).value.data(), dh.data(), P(ps, core_a_).grad.data(),
                           P(ps, core_b_).grad.data(), dfeat[0].data());
        }
        return dfeat;
    }

    // -- convenience ---------------------------------------------------------

    /// Full forward over an observation window. Non-recurrent variants use
    /// only the last observation; recurrent ones start from `state`.
    QOutput forward(const ParamSet& ps, std::span<const Tensor> window, const LstmState& state) const {
        if (window.empty()) throw std::invalid_argument("empty observation window");
        const std::size_t first = arch_.recurrent ? 0 : window.size() - 1;
        std::vector<FrameTrace> traces(window.size() - first);
        std::vector<const double*> feats;
        for (std::size_t i = first; i < window.size(); ++i) {
            check_observation(window[i]);
            trunk(ps, window[i].data(), traces[i - first]);
            feats.push_back(traces[i - first].acts.back().data());
        }
        return evaluate(ps, feats, arch_.recurrent ? state : LstmState{}, nullptr);
    }

    /// One control step with a persistent recurrent state.
    QOutput act(const ParamSet& ps, const double* obs, LstmState& state) const {
        FrameTrace tr;
        trunk(ps, obs, tr);
        const double* f = tr.acts.back().data();
        auto out = evaluate(ps, std::span<const double* const>(&f, 1), arch_.recurrent ? state : LstmState{}, nullptr);
        if (arch_.recurrent) state = out.state;
        return out;
    }

    LstmState initial_state() const { return arch_.recurrent ? LstmState::zeros(width_) : LstmState{}; }

    void check_observation(const Tensor& obs) const {
        if (obs.shape() != Shape{arch_.in_h, arch_.in_w, 1})
            throw std::invalid_argument("observation shape " + shape_string(obs.shape()) + " does not match network input (" +
                                        std::to_string(arch_.in_h) + "," + std::to_string(arch_.in_w) + ",1)");
    }

private:
    static Param& P(ParamSet& ps, std::size_t i) { return ps.params()[i]; }
    static const Param& P(const ParamSet& ps, std::size_t i) { return ps.params()[i]; }

    LstmWeights lstm_weights(const ParamSet& ps) const {
        return {P(ps, core_a_).value, P(ps, core_b_).value, P(ps, core_c_).value};
    }

    NetworkArch arch_;
    std::vector<ConvGeometry> geom_;
    std::size_t width_ = 0;
    std::vector<std::size_t> conv_k_, conv_b_;
    std::size_t core_a_ = 0, core_b_ = 0, core_c_ = 0;
    std::size_t head_w_ = 0, head_b_ = 0, value_w_ = 0, value_b_ = 0;
    std::size_t param_count_ = 0;
};

// ---------------------------------------------------------------------------
// Targets and training

/// Hard copy of online values into the target network.
inline void sync_target(const ParamSet& online, ParamSet& target) {
    if (!online.same_layout(target)) throw std::invalid_argument("sync_target: architecture mismatch");
    copy_values(online, target);
}

namespace detail {

inline void to_double(const StoredObservation& src, std::vector<double>& dst) {
    dst.assign(src.begin(), src.end());
}

/// Per-sample frame buffers: positions 0..L-1 of the window plus the successor at L.
struct SampleFrames {
    std::vector<std::vector<double>> frames;
    std::size_t first = 0;   // first non-padded position
    bool has_next = false;

    SampleFrames(const SequenceSample& s, bool recurrent) {
        const std::size_t L = s.length();
        frames.resize(L + 1);
        first = s.first_valid();
        if (!recurrent) first = L - 1;
        has_next = s.next_observation != nullptr;
        for (std::size_t j = first; j < L; ++j) to_double(*s.observations[j], frames[j]);
        if (has_next) to_double(*s.next_observation, frames[L]);
    }
};

}  // namespace detail

/// Double-Q target evaluated from scratch for each sample:
/// y = r + gamma * Q_target(s', argmax_a Q_online(s', a)), or y = r at a
/// terminal. s' is the window shifted by one step, so both networks see the
/// same recurrent context.
inline std::vector<double> double_q_target(const QNetwork& net, std::span<const SequenceSample> batch,
                                           const ParamSet& online, const ParamSet& target, double gamma) {
    std::vector<double> y;
    y.reserve(batch.size());
    for (const auto& s : batch) {
        if (s.ends_terminal() || !s.next_observation) {
            y.push_back(s.last_reward());
            continue;
        }
        const detail::SampleFrames f(s, net.arch().recurrent);
        const std::size_t L = s.length();
        const std::size_t from = std::max<std::size_t>(f.first, 1);
        auto eval = [&](const ParamSet& ps) {
            std::vector<QNetwork::FrameTrace> tr(L + 1 - from);
            std::vector<const double*> feats;
            for (std::size_t j = from; j <= L; ++j) {
                net.trunk(ps, f.frames[j].data(), tr[j - from]);
                feats.push_back(tr[j - from].acts.back().data());
            }
            return net.evaluate(ps, feats, net.initial_state(), nullptr).q;
        };
        const int a_star = argmax(eval(online));
        y.push_back(s.last_reward() + gamma * eval(target)[static_cast<std::size_t>(a_star)]);
    }
    return y;
}

struct TrainHyper {
    double gamma = 0.99;
    double huber_delta = 1.0;
    AdamConfig adam{};
};

struct TrainStats {
    double loss = 0.0;                 // mean Huber loss over the batch
    std::vector<double> targets;       // y per sample
    std::vector<double> predictions;   // Q_online(s, a) per sample
};

/// Accumulate the mean TD gradient of the batch into online.grad without
/// stepping the optimizer. TD loss is applied at the final window step only.
inline TrainStats accumulate_td_gradient(const QNetwork& net, ParamSet& online, const ParamSet& target,
                                         std::span<const SequenceSample> batch, const TrainHyper& hp) {
    TrainStats st;
    const bool rec = net.arch().recurrent;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<double> scratch;
    for (const auto& s : batch) {
        const std::size_t L = s.length();
        const detail::SampleFrames f(s, rec);

        // Online trunk over every needed frame, shared by both online passes.
        std::vector<QNetwork::FrameTrace> tr(L + 1);
        for (std::size_t j = f.first; j <= L; ++j) {
            if (j == L && !f.has_next) break;
            net.trunk(online, f.frames[j].data(), tr[j]);
        }
        std::vector<const double*> cur;
        for (std::size_t j = f.first; j < L; ++j) cur.push_back(tr[j].acts.back().data());
        QNetwork::CoreTrace core;
        const QOutput q = net.evaluate(online, cur, net.initial_state(), &core);

        double y = s.last_reward();
        if (!s.ends_terminal() && f.has_next) {
            const std::size_t from = rec ? std::max<std::size_t>(f.first, 1) : L;
            std::vector<const double*> nxt;
            for (std::size_t j = from; j <= L; ++j) nxt.push_back(tr[j].acts.back().data());
            const int a_star = argmax(net.evaluate(online, nxt, net.initial_state(), nullptr).q);
            std::vector<QNetwork::FrameTrace> ttr(L + 1 - from);
            std::vector<const double*> tfe;
            for (std::size_t j = from; j <= L; ++j) {
                net.trunk(target, f.frames[j].data(), ttr[j - from]);
                tfe.push_back(ttr[j - from].acts.back().data());
            }
            y += hp.gamma * net.evaluate(target, tfe, net.initial_state(), nullptr).q[static_cast<std::size_t>(a_star)];
        }

        const auto a = static_cast<std::size_t>(s.last_action());
        const auto l = huber_loss(q.q[a], y, hp.huber_delta);
        st.loss += l.loss * inv_b;
        st.targets.push_back(y);
        st.predictions.push_back(q.q[a]);

        QValues dq{};
        dq[a] = l.grad * inv_b;
        auto dfeat = net.core_backward(online, core, dq);
        for (std::size_t t = 0; t < dfeat.size(); ++t) {
            const std::size_t j = f.first + t;
            net.trunk_backward(online, f.frames[j].data(), tr[j], dfeat[t], scratch);
        }
    }
    return st;
}

/// One optimizer update on a sampled batch.
inline TrainStats train_step(const QNetwork& net, ParamSet& online, const ParamSet& target,
                             std::span<const SequenceSample> batch, const TrainHyper& hp) {
    online.zero_grad();
    auto st = accumulate_td_gradient(net, online, target, batch, hp);
    if (!std::isfinite(st.loss)) throw std::runtime_error("non-finite TD loss");
    adam_step(online, hp.adam);
    return st;
}

}  // namespace qnav
