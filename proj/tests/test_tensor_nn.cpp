#include <gtest/gtest.h>

#include <cmath>

#include "qnav/agent.hpp"
#include "qnav/gradcheck.hpp"
#include "qnav/layers.hpp"
#include "qnav/tensor.hpp"

using namespace qnav;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
    Tensor t(std::move(s));
    for (auto& v : t.values()) v = uniform(rng, -1, 1);
    return t;
}

// Straight loops over the definition of valid cross-correlation.
Tensor conv_oracle(const Tensor& x, const Tensor& k, std::size_t stride) {
    const std::size_t h = x.dim(0), w = x.dim(1), ci = x.dim(2), kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
    const std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    Tensor y({oh, ow, co});
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t o = 0; o < co; ++o) {
                double s = 0;
                for (std::size_t i = 0; i < kh; ++i)
                    for (std::size_t j = 0; j < kw; ++j)
                        for (std::size_t c = 0; c < ci; ++c) s += x.at(oy * stride + i, ox * stride + j, c) * k.at(i, j, c, o);
                y.at(oy, ox, o) = s;
            }
    return y;
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
    Tensor t({2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    t.at(1, 2, 3) = 5.0;
    EXPECT_EQ(t[23], 5.0);
    EXPECT_THROW(t.at(2, 0, 0), std::out_of_range);
    EXPECT_THROW(t.at(0, 0), std::invalid_argument);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), std::invalid_argument);
    EXPECT_THROW(t.reshape({5, 5}), std::invalid_argument);
}

TEST(Conv, ReferenceShapeChain) {
    Tensor x({128, 416, 1}, 0.5);
    const std::size_t expected[3][3] = {{31, 103, 4}, {14, 50, 8}, {6, 24, 8}};
    std::size_t c_in = 1;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& s = kReferenceConvs[i];
        const Tensor k({s.kh, s.kw, c_in, s.c_out}, 0.01);
        x = conv2d(x, k, s.stride);
        EXPECT_EQ(x.shape(), (Shape{expected[i][0], expected[i][1], expected[i][2]}));
        c_in = s.c_out;
    }
    EXPECT_EQ(x.size(), 1152u);
    EXPECT_EQ(NetworkArch::for_variant(AgentVariant::D3RQN, 128, 416).trunk_width(), 1152u);
}

TEST(Conv, OneByOneIdentity) {
    Rng rng(1);
    const Tensor x = random_tensor({5, 7, 1}, rng);
    const Tensor k({1, 1, 1, 1}, 1.0);
    EXPECT_EQ(conv2d(x, k, 1), x);
}

TEST(Conv, ZeroKernel) {
    Rng rng(2);
    const Tensor x = random_tensor({9, 9, 3}, rng);
    const Tensor k({3, 3, 3, 4}, 0.0);
    const Tensor y = conv2d(x, k, 2);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
    const auto g = conv2d_backward(x, k, 2, random_tensor(y.shape(), rng));
    for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv, ShapeMismatchThrows) {
    EXPECT_THROW(conv2d(Tensor({4, 4, 2}), Tensor({2, 2, 3, 1}), 1), std::invalid_argument);
    EXPECT_THROW(conv2d(Tensor({4, 4, 1}), Tensor({5, 2, 1, 1}), 1), std::invalid_argument);
    EXPECT_THROW(conv2d(Tensor({4, 4}), Tensor({2, 2, 1, 1}), 1), std::invalid_argument);
}

TEST(Conv, FuzzAgainstLoopOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t h = 1 + uniform_index(rng, 20), w = 1 + uniform_index(rng, 20);
        const std::size_t kh = 1 + uniform_index(rng, h), kw = 1 + uniform_index(rng, w);
        const std::size_t s = 1 + uniform_index(rng, 4), ci = 1 + uniform_index(rng, 3);
        const std::size_t co = std::array<std::size_t, 4>{1, 3, 4, 8}[uniform_index(rng, 4)];
        const Tensor x = random_tensor({h, w, ci}, rng), k = random_tensor({kh, kw, ci, co}, rng);
        const Tensor y = conv2d(x, k, s);
        EXPECT_EQ(y.shape(), (Shape{(h - kh) / s + 1, (w - kw) / s + 1, co}));
        const Tensor o = conv_oracle(x, k, s);
        for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], o[i], 1e-12);
    }
}

TEST(Dense, IdentityAndBias) {
    Tensor x({3}, std::vector<double>{1.5, -2.0, 0.25});
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    EXPECT_EQ(dense(x, eye, Tensor({3})), x);
    const Tensor b({3}, std::vector<double>{0.1, 0.2, 0.3});
    EXPECT_EQ(dense(x, Tensor({3, 3}), b), b);
}

TEST(Dense, ThreeByTwoOracle) {
    const Tensor x({2}, std::vector<double>{0.7, -1.3});
    const Tensor w({3, 2}, std::vector<double>{0.2, -0.5, 1.1, 0.4, -0.9, 0.3});
    const Tensor b({3}, std::vector<double>{0.05, -0.1, 0.2});
    const Tensor y = dense(x, w, b);
    for (std::size_t o = 0; o < 3; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < 2; ++i) s += w.at(o, i) * x[i];
        EXPECT_NEAR(y[o], s, 1e-15);
    }
    EXPECT_NEAR(y[0], 0.05 + 0.14 + 0.65, 1e-15);
    EXPECT_THROW(dense(Tensor({3}), w, b), std::invalid_argument);
}

TEST(Lstm, ZeroEverything) {
    const Tensor wx({8, 3}), wh({8, 2}), b({8});
    const auto [h, s] = lstm_step(Tensor({3}), LstmState::zeros(2), {wx, wh, b});
    for (double v : h.values()) EXPECT_EQ(v, 0.0);
    for (double v : s.cell) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SaturatedForgetGateKeepsCell) {
    constexpr std::size_t H = 4;
    const Tensor wx({4 * H, 3}), wh({4 * H, H});
    Tensor b({4 * H});
    for (std::size_t k = H; k < 2 * H; ++k) b[k] = 10.0;   // forget gate
    LstmState s = LstmState::zeros(H);
    s.cell = {0.5, -1.2, 2.0, 0.01};
    s.hidden = {0.3, 0.1, -0.2, 0.7};
    Rng rng(4);
    const auto [h, next] = lstm_step(random_tensor({3}, rng), s, {wx, wh, b});
    for (std::size_t k = 0; k < H; ++k) EXPECT_NEAR(next.cell[k], s.cell[k], 1e-4);
}

TEST(Lstm, ShapeMismatchThrows) {
    const Tensor wx({8, 3}), wh({8, 2}), b({8});
    EXPECT_THROW(lstm_step(Tensor({4}), LstmState::zeros(2), {wx, wh, b}), std::invalid_argument);
    EXPECT_THROW(lstm_step(Tensor({3}), LstmState::zeros(3), {wx, wh, b}), std::invalid_argument);
}

TEST(Huber, Branches) {
    auto l = huber_loss(2.0, 2.0, 1.0);
    EXPECT_EQ(l.loss, 0.0);
    EXPECT_EQ(l.grad, 0.0);
    l = huber_loss(1.5, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(l.loss, 0.125);
    EXPECT_DOUBLE_EQ(l.grad, 0.5);
    l = huber_loss(4.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(l.loss, 2.5);
    EXPECT_DOUBLE_EQ(l.grad, 1.0);
    l = huber_loss(-2.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(l.grad, -1.0);
    // continuous at the seam
    EXPECT_NEAR(huber_loss(1.0 + 1e-9, 0, 1).loss, huber_loss(1.0 - 1e-9, 0, 1).loss, 1e-8);
    EXPECT_THROW(huber_loss(0, 0, 0), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesValues) {
    Rng rng(5);
    ParamSet ps;
    ps.add("w", random_tensor({4, 3}, rng));
    const Tensor before = ps.value("w");
    adam_step(ps, {});
    EXPECT_EQ(ps.value("w"), before);
    EXPECT_EQ(ps.step, 1);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
    for (double g : {0.003, -7.0, 120.0}) {
        ParamSet ps;
        ps.add("x", Tensor({1}, 1.0));
        ps.grad("x")[0] = g;
        adam_step(ps, {3e-4, 0.9, 0.999, 1e-8});
        EXPECT_NEAR(ps.value("x")[0] - 1.0, -3e-4 * (g > 0 ? 1 : -1), 1e-6);
        EXPECT_EQ(ps.grad("x")[0], 0.0);
    }
}

TEST(Adam, DeterministicAndZeroRate) {
    Rng rng(6);
    ParamSet a;
    a.add("w", random_tensor({10}, rng));
    ParamSet b = a, c = a;
    for (int k = 0; k < 5; ++k) {
        const Tensor g = random_tensor({10}, rng);
        a.grad("w") = g;
        b.grad("w") = g;
        c.grad("w") = g;
        adam_step(a, {});
        adam_step(b, {});
        adam_step(c, {0.0});
    }
    EXPECT_EQ(a.value("w"), b.value("w"));
    EXPECT_EQ(value_checksum(a), value_checksum(b));
    ParamSet fresh;
    Rng rng2(6);
    fresh.add("w", random_tensor({10}, rng2));
    EXPECT_EQ(c.value("w"), fresh.value("w"));
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    ParamSet ps;
    ps.add("first", Tensor({2}, 1.0));
    ps.add("second.weight", Tensor({2}, 1.0));
    ps.grad("second.weight")[1] = std::nan("");
    try {
        adam_step(ps, {});
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("second.weight"), std::string::npos);
    }
    EXPECT_EQ(ps.value("first")[0], 1.0);
    EXPECT_EQ(ps.step, 0);
}

TEST(GradCheck, Dense) {
    const auto r = check_dense_layer(11);
    EXPECT_LT(r.max_rel_error, 1e-6) << r.worst_param;
}

TEST(GradCheck, Conv) {
    for (std::size_t co : {1u, 3u, 4u, 8u}) {
        const auto r = check_conv_layer(12 + co, co);
        EXPECT_LT(r.max_rel_error, 1e-5) << r.name << " " << r.worst_param;
    }
}

TEST(GradCheck, LstmThroughTime) {
    const auto r = check_lstm_layer(13);
    EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_param;
    // 3 inputs of 4, wx 24x4, wh 24x6, bias 24, h0 6, c0 6: every entry is probed.
    EXPECT_EQ(r.checked, 3u * 4 + 96 + 144 + 24 + 6 + 6);
}

TEST(GradCheck, DownsizedRecurrentDueling) {
    const auto r = check_network(AgentVariant::D3RQN, 14);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(GradCheck, DetectsWrongGradient) {
    Rng rng(15);
    ParamSet ps;
    ps.add("x", random_tensor({3}, rng));
    auto loss = [&] {
        double s = 0;
        for (double v : ps.value("x").values()) s += v * v;
        return s;
    };
    for (std::size_t i = 0; i < 3; ++i) ps.grad("x")[i] = 2 * ps.value("x")[i];
    EXPECT_LT(grad_check("square", ps, loss, 1e-6).max_rel_error, 1e-8);
    ps.grad("x")[1] *= 1.1;
    const auto bad = grad_check("square", ps, loss, 1e-6);
    EXPECT_FALSE(bad.ok());
    EXPECT_EQ(bad.worst_index, 1u);
}

TEST(Forward, PureAndBitIdentical) {
    const QNetwork net(NetworkArch::for_variant(AgentVariant::D3RQN, 32, 104));
    Rng rng(16);
    const auto ps = net.init_params(rng);
    std::vector<Tensor> window;
    for (int i = 0; i < 5; ++i) {
        Tensor t({32, 104, 1});
        for (auto& v : t.values()) v = uniform(rng, 0, 1);
        window.push_back(t);
    }
    const auto before = value_checksum(ps);
    const auto a = net.forward(ps, window, net.initial_state());
    const auto b = net.forward(ps, window, net.initial_state());
    EXPECT_EQ(a.q, b.q);
    EXPECT_EQ(a.state, b.state);
    EXPECT_EQ(value_checksum(ps), before);
}
