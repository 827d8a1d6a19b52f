// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Trained networks are cached under --cache, keyed by
// the library source hash and the full training config, so only the first
// run pays for training.

#include <CLI11.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qnav/checkpoint.hpp"
#include "qnav/config.hpp"
#include "qnav/evaluator.hpp"
#include "qnav/gradcheck.hpp"
#include "qnav/io.hpp"
#include "qnav/trainer.hpp"
#include "qnav/warpcheck.hpp"

#ifndef QNAV_SOURCE_HASH
#define QNAV_SOURCE_HASH "unhashed"
#endif

namespace fs = std::filesystem;
using namespace qnav;

namespace {

constexpr std::uint64_t kSeeds[] = {7, 11, 13};
constexpr AgentVariant kVariants[] = {AgentVariant::D3RQN, AgentVariant::DDRQN, AgentVariant::D3QN,
                                      AgentVariant::DDQN};
constexpr int kEvalEpisodes = 500;

int failures = 0;

void verdict(int id, const std::string& title, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << " (" << title << "): " << detail << std::endl;
    failures += !ok;
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

struct Run {
    TrainConfig cfg;
    Checkpoint ck;
    LearningCurve curve;
};

Run trained(const fs::path& cache, AgentVariant v, std::uint64_t seed) {
    Run r;
    r.cfg.variant = v;
    r.cfg.seed = seed;
    const auto text = serialize_config(r.cfg);
    std::ostringstream key;
    key << to_string(v) << "_s" << seed << "_" << QNAV_SOURCE_HASH << "_" << std::hex << fnv1a(text);
    const auto stem = cache / key.str();
    const auto ck_path = stem.string() + ".qnav", curve_path = stem.string() + ".curve.csv";
    if (fs::exists(ck_path) && fs::exists(curve_path)) {
        r.ck = load_checkpoint(ck_path);
        std::ifstream is(curve_path);
        r.curve = read_curve_csv(is);
        return r;
    }
    std::cerr << "training " << to_string(v) << " seed " << seed << " (" << r.cfg.episodes << " episodes)" << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    TrainObserver obs;
    obs.on_episode = [&](const CurveRow& row) {
        if ((row.episode + 1) % 500 == 0) std::cerr << "  episode " << row.episode + 1 << std::endl;
    };
    auto res = train(r.cfg, obs);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  done in " << fmt(secs / 60, 1) << " min" << std::endl;
    // Evaluate what the checkpoint holds (float32), so cold and cached runs agree.
    r.ck = decode_checkpoint(encode_checkpoint({v, res.arch, r.cfg.camera, std::move(res.params)}));
    r.curve = std::move(res.curve);
    fs::create_directories(cache);
    // Write to temporaries first so an interrupted run never leaves a half file.
    save_checkpoint(ck_path + ".tmp", r.ck);
    write_curve_csv(curve_path + ".tmp", r.curve);
    {
        std::ofstream os(stem.string() + ".cfg");
        os << text;
    }
    fs::rename(ck_path + ".tmp", ck_path);
    fs::rename(curve_path + ".tmp", curve_path);
    return r;
}

double rate(const Run& r, ScenarioKind k, std::uint64_t seed, const DegradeParams& deg = {}) {
    const QNetwork net(r.ck.arch);
    auto p = Policy::network(r.ck.variant, net, r.ck.params);
    EvalOptions opt;
    opt.camera = r.ck.camera;
    opt.degrade = deg;
    return *evaluate(p, k, kEvalEpisodes, seed, opt).success_rate;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

int sh(const std::string& cmd) {
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

void criterion_shapes() {
    const auto full = NetworkArch::for_variant(AgentVariant::D3RQN, 128, 416);
    const auto g = full.conv_geometry();
    const bool chain = g.size() == 3 && g[0].oh == 31 && g[0].ow == 103 && g[0].c_out == 4 && g[1].oh == 14 &&
                       g[1].ow == 50 && g[1].c_out == 8 && g[2].oh == 6 && g[2].ow == 24 && g[2].c_out == 8;
    const QNetwork net(full);
    Rng rng(1);
    const auto ps = net.init_params(rng);
    const auto& wx = ps.value("lstm.wx");  // (4H, input)
    std::vector<Tensor> window(5, Tensor({128, 416, 1}));
    const auto out = net.forward(ps, window, net.initial_state());
    const bool ok = chain && full.trunk_width() == 1152 && net.width() == 1152 && wx.dim(1) == 1152 && wx.dim(0) == 4 * 1152 &&
                    out.q.size() == kNumActions;
    verdict(1, "shape fidelity", ok,
            "(128,416,1) -> (31,103,4) -> (14,50,8) -> (6,24,8), flatten " + std::to_string(full.trunk_width()) +
                ", LSTM " + std::to_string(wx.dim(1)) + " -> " + std::to_string(wx.dim(0) / 4));
}

void criterion_gradients() {
    double layer = 0, network = 0;
    bool all_ok = true;
    for (const auto& r : run_gradchecks(7)) {
        all_ok = all_ok && r.checked > 0;
        if (r.name.rfind("network", 0) == 0) network = std::max(network, r.max_rel_error);
        else layer = std::max(layer, r.max_rel_error);
    }
    verdict(2, "gradient correctness", all_ok && layer < 1e-5 && network < 1e-4,
            "worst per-layer rel err " + fmt(layer * 1e6, 3) + "e-6 (< 1e-5), worst network " + fmt(network * 1e6, 3) +
                "e-6 (< 1e-4)");
}

void criterion_reward() {
    Rng rng(derive_seed(7, 0x4e3a));
    long bad = 0;
    const WorldSpec world = [] {
        WorldSpec w;
        w.bounds = {{0, 0}, {40, 40}};
        return w;
    }();
    for (int i = 0; i < 100000; ++i) {
        // Half of the draws land within 1e-3 of the threshold.
        const double d = i % 2 ? uniform(rng, 0.0, 12.0) : kSafeDistance + uniform(rng, -1e-3, 1e-3);
        const double r = reward_for_distance(d);
        const bool expect_terminal = d < 0.5;
        if (expect_terminal ? r != -1.0 : r != d) ++bad;
        // The same distance realised geometrically: an obstacle edge d ahead
        // of the endpoint of a straight step.
        if (i % 10 == 0 && d < 10.0) {
            WorldSpec w = world;
            const double x_end = 10.0 + 0.8;
            w.obstacles.push_back({Circle{{x_end + d + 1.0, 20.0}, 1.0}, 0});
            const auto s = step(w, {10.0, 20.0, 0.0}, ActionCommand::from_index(0));
            const double dn = s.d_nearest;
            if (s.terminal != (dn < 0.5) || s.reward != (dn < 0.5 ? -1.0 : dn) || std::abs(dn - d) > 1e-9) ++bad;
        }
    }
    bad += reward_for_distance(0.5) != 0.5;
    bad += reward_for_distance(std::nextafter(0.5, 0.0)) != -1.0;
    verdict(3, "reward and termination", bad == 0,
            std::to_string(bad) + " violations over 1e5 fuzzed distances (0.5 inclusive safe, -1 and terminal below)");
}

void criterion_warp() {
    const auto r = warp_check(7, 20);
    verdict(4, "view synthesis", r.ok() && r.pairs.size() == 20,
            "20 pose pairs, worst mean L1 " + fmt(r.worst_mean_l1, 5) + " (< 0.02), identity loss " +
                fmt(r.identity_loss, 1));
}

void criterion_determinism(const fs::path& cache, const std::string& cli) {
    const auto dir = cache / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "small.cfg");
        cfg << "episodes = 40\nwarmup_steps = 200\ntarget_sync_every = 50\nseed = 13\n";
    }
    const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
    bool ok = true;
    for (const char* tag : {"a", "b"}) {
        ok = ok && sh(q(cli) + " train --config " + q(dir / "small.cfg") + " --out " + q(dir / tag) + " > " +
                      q(dir / (std::string(tag) + ".log")) + " 2>&1") == 0;
        ok = ok && sh(q(cli) + " --seed 5 eval --checkpoint " + q(dir / "a.qnav") + " --episodes 100 --report " +
                      q(dir / (std::string(tag) + ".report.csv")) + " > /dev/null 2>&1") == 0;
    }
    int identical = 0;
    for (const char* ext : {".curve.csv", ".qnav", ".cfg", ".report.csv"}) {
        const auto a = slurp(dir / (std::string("a") + ext)), b = slurp(dir / (std::string("b") + ext));
        identical += !a.empty() && a == b;
    }
    verdict(8, "determinism", ok && identical == 4,
            std::to_string(identical) + "/4 artefact pairs byte-identical (curve, checkpoint, config, eval report)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app("qnav acceptance");
    std::string cache_dir = "acceptance_cache", cli;
    app.add_option("--cache", cache_dir, "directory for trained checkpoints");
    app.add_option("--cli", cli, "qnav executable")->required();
    CLI11_PARSE(app, argc, argv);
    const fs::path cache(cache_dir);

    try {
        criterion_shapes();
        criterion_gradients();
        criterion_reward();
        criterion_warp();

        std::map<AgentVariant, std::vector<Run>> runs;
        for (auto v : kVariants)
            for (auto s : kSeeds) runs[v].push_back(trained(cache, v, s));

        std::map<AgentVariant, std::vector<double>> basic;
        for (auto v : kVariants)
            for (std::size_t i = 0; i < 3; ++i) basic[v].push_back(rate(runs[v][i], ScenarioKind::basic, kSeeds[i]));

        {
            std::ostringstream d;
            bool ok = true;
            d << "D3RQN basic";
            for (std::size_t i = 0; i < 3; ++i) {
                d << " s" << kSeeds[i] << "=" << fmt(basic[AgentVariant::D3RQN][i]);
                ok = ok && basic[AgentVariant::D3RQN][i] >= 0.80;
            }
            auto straight = Policy::straight();
            for (auto k : {ScenarioKind::corners, ScenarioKind::corner_trap}) {
                const double r = *evaluate(straight, k, kEvalEpisodes, 7).success_rate;
                d << "; Straight " << to_string(k) << "=" << fmt(r);
                ok = ok && r == 0.0;
            }
            auto random = Policy::random();
            const double rr = *evaluate(random, ScenarioKind::basic, kEvalEpisodes, 7).success_rate;
            d << "; Random basic=" << fmt(rr);
            ok = ok && rr <= 0.05;
            // Mean steps survived, last 100 training episodes versus the first 100.
            d << "; steps last/first100";
            for (const auto& r : runs[AgentVariant::D3RQN]) {
                double first = 0, last = 0;
                const auto n = r.curve.size();
                for (std::size_t e = 0; e < 100; ++e) {
                    first += r.curve[e].steps;
                    last += r.curve[n - 100 + e].steps;
                }
                d << " " << fmt(last / first, 2) << "x";
                ok = ok && last >= 4 * first;
            }
            verdict(5, "desk-scale training", ok, d.str());
        }

        {
            std::map<AgentVariant, double> med;
            std::ostringstream d;
            d << "median success";
            for (auto v : kVariants) {
                med[v] = median3(basic[v]);
                d << " " << to_string(v) << "=" << fmt(med[v]);
            }
            const double d3rqn = med[AgentVariant::D3RQN], ddrqn = med[AgentVariant::DDRQN];
            const bool ok = d3rqn > ddrqn && ddrqn > med[AgentVariant::D3QN] && ddrqn > med[AgentVariant::DDQN] &&
                            d3rqn - med[AgentVariant::DDQN] >= 0.3;
            d << "; gap D3RQN-DDQN " << fmt(d3rqn - med[AgentVariant::DDQN]);
            verdict(6, "ablation ordering", ok, d.str());
        }

        {
            bool ok = true;
            std::ostringstream d;
            for (std::size_t i = 0; i < 3; ++i) {
                const auto& r = runs[AgentVariant::D3RQN][i];
                d << (i ? "; " : "") << "s" << kSeeds[i];
                for (auto k : kTransferScenarios) {
                    const double x = rate(r, k, kSeeds[i]);
                    d << " " << to_string(k) << "=" << fmt(x);
                    ok = ok && x >= 0.70;
                }
                const double trap = rate(r, ScenarioKind::corner_trap, kSeeds[i]);
                const double trap_ff = rate(runs[AgentVariant::D3QN][i], ScenarioKind::corner_trap, kSeeds[i]);
                d << " corner_trap=" << fmt(trap) << " (D3QN " << fmt(trap_ff) << ")";
                ok = ok && trap >= 0.5 && trap_ff < trap;
            }
            verdict(7, "transfer", ok, d.str());
        }

        criterion_determinism(cache, cli);

        {
            bool ok = true;
            std::ostringstream d;
            d << "success drop under mild degradation";
            for (std::size_t i = 0; i < 3; ++i) {
                const double clean = basic[AgentVariant::D3RQN][i];
                const double noisy = rate(runs[AgentVariant::D3RQN][i], ScenarioKind::basic, kSeeds[i],
                                          DegradeParams::mild());
                d << " s" << kSeeds[i] << " " << fmt(clean) << "->" << fmt(noisy);
                ok = ok && clean - noisy <= 0.15;
            }
            verdict(9, "robustness", ok, d.str());
        }
    } catch (const std::exception& e) {
        std::cout << "FAIL  acceptance aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : "acceptance: all passed")
              << std::endl;
    return failures ? 1 : 0;
}
