// qnav: train, evaluate and inspect depth-based navigation agents.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "qnav/checkpoint.hpp"
#include "qnav/config.hpp"
#include "qnav/evaluator.hpp"
#include "qnav/gradcheck.hpp"
#include "qnav/io.hpp"
#include "qnav/trainer.hpp"
#include "qnav/warpcheck.hpp"

namespace fs = std::filesystem;
using namespace qnav;

namespace {

struct Global {
    std::uint64_t seed = 7;
    bool seed_given = false;
};

struct TrainArgs {
    std::string config;
    std::string variant;
    std::string scenario;
    std::optional<int> episodes;
    std::string out = "run";
};

struct EvalArgs {
    std::string checkpoint;
    std::string policy;
    std::string scenario = "basic";
    int episodes = 500;
    std::string report;
    std::string degrade = "none";
    std::string trace_dir;
};

struct WarpArgs {
    int pairs = 20;
    std::string camera = "full";
    std::string out_dir;
};

struct RenderArgs {
    std::string world;
    std::string scenario = "basic";
    std::string checkpoint;
    std::string out = "render";
    double scale = 20.0;
};

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

DegradeParams degrade_profile(const std::string& name) {
    if (name == "none") return {};
    if (name == "mild") return DegradeParams::mild();
    throw CLI::ValidationError("--degrade", "expected none or mild");
}

int run_train(const Global& g, const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        std::ifstream is(a.config);
        if (!is) throw std::runtime_error("cannot open config " + a.config);
        cfg = parse_config(is);
    }
    if (!a.variant.empty()) cfg.variant = parse_variant(a.variant);
    if (!a.scenario.empty()) cfg.scenario = parse_scenario(a.scenario);
    if (a.episodes) cfg.episodes = *a.episodes;
    if (g.seed_given || a.config.empty()) cfg.seed = g.seed;
    cfg.validate();

    ensure_parent(a.out);
    {
        std::ofstream os(a.out + ".cfg", std::ios::binary);
        os << serialize_config(cfg);
    }
    TrainObserver obs;
    obs.on_episode = [&](const CurveRow& r) {
        if ((r.episode + 1) % 100 == 0 || r.episode + 1 == cfg.episodes)
            std::cerr << "episode " << r.episode + 1 << "/" << cfg.episodes << " steps " << r.steps << " reward "
                      << r.total_reward << " epsilon " << r.epsilon << "\n";
    };
    TrainResult res;
    try {
        res = train(cfg, obs);
    } catch (const TrainingAborted& e) {
        write_curve_csv(a.out + ".curve.csv", e.partial().curve);
        throw;
    }
    write_curve_csv(a.out + ".curve.csv", res.curve);
    save_checkpoint(a.out + ".qnav", {cfg.variant, res.arch, cfg.camera, res.params});
    std::cout << "wrote " << a.out << ".curve.csv and " << a.out << ".qnav (" << res.updates << " updates)\n";
    return 0;
}

int run_eval(const Global& g, const EvalArgs& a) {
    if (a.checkpoint.empty() == a.policy.empty())
        throw CLI::ValidationError("eval", "give exactly one of --checkpoint or --policy");
    EvalOptions opt;
    opt.degrade = degrade_profile(a.degrade);
    std::optional<Checkpoint> ck;
    std::optional<QNetwork> net;
    std::optional<Policy> policy;
    if (!a.checkpoint.empty()) {
        ck = load_checkpoint(a.checkpoint);
        net.emplace(ck->arch);
        opt.camera = ck->camera;
        policy = Policy::network(ck->variant, *net, ck->params);
    } else {
        const auto v = parse_variant(a.policy);
        if (v == AgentVariant::Straight) policy = Policy::straight();
        else if (v == AgentVariant::Random) policy = Policy::random();
        else throw CLI::ValidationError("--policy", "expected straight or random");
    }
    const auto scenario = parse_scenario(a.scenario);
    const auto report = evaluate(*policy, scenario, a.episodes, g.seed, opt);
    if (!a.report.empty()) {
        ensure_parent(a.report);
        write_report_csv(a.report, report);
    }
    if (!a.trace_dir.empty()) {
        fs::create_directories(a.trace_dir);
        for (std::size_t i = 0; i < report.episodes.size() && i < 10; ++i) {
            const auto ws = report.episodes[i].world_seed;
            const auto world = generate_world(scenario, ws);
            const auto trace = trajectory_trace(*policy, world, ws, opt);
            const auto stem = (fs::path(a.trace_dir) / ("episode" + std::to_string(i))).string();
            write_trace_csv(stem + ".csv", trace);
            write_ppm(stem + ".ppm", render_topdown(world, trace));
        }
    }
    write_summary_csv(std::cout, {report});
    return 0;
}

int run_gradcheck(const Global& g) {
    bool ok = true;
    for (const auto& r : run_gradchecks(g.seed)) {
        std::cout << (r.ok() ? "ok   " : "FAIL ") << r.name << "  max rel error " << r.max_rel_error << " (limit "
                  << r.threshold << ", worst " << r.worst_param << "[" << r.worst_index << "], " << r.checked
                  << " entries)\n";
        ok = ok && r.ok();
    }
    return ok ? 0 : 1;
}

int run_warpcheck(const Global& g, const WarpArgs& a) {
    CameraModel cam;
    if (a.camera == "full") cam = CameraModel::full();
    else if (a.camera == "desk") cam = CameraModel::desk();
    else throw CLI::ValidationError("--camera", "expected full or desk");
    const auto r = warp_check(g.seed, a.pairs, cam);
    for (std::size_t i = 0; i < r.pairs.size(); ++i)
        std::cout << "pair " << i << "  mean L1 " << r.pairs[i].mean_l1 << " over " << r.pairs[i].valid << " px\n";
    std::cout << "identity loss " << r.identity_loss << ", worst mean L1 " << r.worst_mean_l1 << " (limit "
              << r.threshold << ")\n";
    if (!a.out_dir.empty() && !r.pairs.empty()) {
        fs::create_directories(a.out_dir);
        const auto room = warp_room();
        const auto& p = r.pairs.front();
        const auto dir = fs::path(a.out_dir);
        write_intensity_pgm((dir / "target.pgm").string(), render_intensity(room, p.target, cam));
        write_intensity_pgm((dir / "source.pgm").string(), render_intensity(room, p.source, cam));
        write_intensity_pgm((dir / "warped.pgm").string(), synthesize_view(room, p.target, p.source, cam).image);
        write_depth_pgm((dir / "target_depth.pgm").string(), render_depth(room, p.target, cam));
    }
    std::cout << (r.ok() ? "warpcheck passed\n" : "warpcheck FAILED\n");
    return r.ok() ? 0 : 1;
}

int run_render(const Global& g, const RenderArgs& a) {
    WorldSpec world;
    if (!a.world.empty()) {
        std::ifstream is(a.world);
        if (!is) throw std::runtime_error("cannot open world " + a.world);
        world = read_world(is);
    } else {
        world = generate_world(parse_scenario(a.scenario), g.seed);
    }
    ensure_parent(a.out);
    CameraModel cam = CameraModel::desk();
    std::vector<TraceEntry> trace;
    if (!a.checkpoint.empty()) {
        const auto ck = load_checkpoint(a.checkpoint);
        const QNetwork net(ck.arch);
        cam = ck.camera;
        auto policy = Policy::network(ck.variant, net, ck.params);
        EvalOptions opt;
        opt.camera = cam;
        trace = trajectory_trace(policy, world, g.seed, opt);
        write_trace_csv(a.out + ".trace.csv", trace);
    }
    write_ppm(a.out + ".ppm", render_topdown(world, trace, a.scale));
    write_depth_pgm(a.out + ".depth.pgm", render_depth(world, world.start_pose, cam));
    write_intensity_pgm(a.out + ".intensity.pgm", render_intensity(world, world.start_pose, cam));
    {
        std::ofstream os(a.out + ".world", std::ios::binary);
        write_world(os, world);
    }
    std::cout << "wrote " << a.out << ".ppm\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Depth-based obstacle avoidance with recurrent Q-networks"};
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option_function<std::uint64_t>(
           "--seed",
           [&](std::uint64_t s) {
               g.seed = s;
               g.seed_given = true;
           },
           "Master seed (default 7)")
        ->check(CLI::NonNegativeNumber);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train an agent; writes <out>.curve.csv, <out>.qnav, <out>.cfg");
    train_cmd->add_option("--config", ta.config, "key = value config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--variant", ta.variant, "d3rqn | ddrqn | d3qn | ddqn");
    train_cmd->add_option("--scenario", ta.scenario, "training scenario");
    train_cmd->add_option("--episodes", ta.episodes, "episode budget")->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--out", ta.out, "output path prefix");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or baseline; prints a summary row");
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
    eval_cmd->add_option("--policy", ea.policy, "straight | random baseline");
    eval_cmd->add_option("--scenario", ea.scenario, "evaluation scenario");
    eval_cmd->add_option("--episodes", ea.episodes, "episodes (default 500)")->check(CLI::NonNegativeNumber);
    eval_cmd->add_option("--report", ea.report, "per-episode report CSV");
    eval_cmd->add_option("--degrade", ea.degrade, "none | mild");
    eval_cmd->add_option("--traces", ea.trace_dir, "directory for the first traces (CSV + PPM)");

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");

    WarpArgs wa;
    auto* warp_cmd = app.add_subcommand("warpcheck", "View-synthesis ground-truth check");
    warp_cmd->add_option("--pairs", wa.pairs, "pose pairs (default 20)")->check(CLI::PositiveNumber);
    warp_cmd->add_option("--camera", wa.camera, "full | desk");
    warp_cmd->add_option("--out-dir", wa.out_dir, "write target/source/warped PGMs here");

    RenderArgs ra;
    auto* render_cmd = app.add_subcommand("render", "Top-down PPM and depth PGM of a world, optionally with a rollout");
    render_cmd->add_option("--world", ra.world, "world file")->check(CLI::ExistingFile);
    render_cmd->add_option("--scenario", ra.scenario, "scenario generated from --seed when no world file is given");
    render_cmd->add_option("--checkpoint", ra.checkpoint, "draw this policy's trajectory")->check(CLI::ExistingFile);
    render_cmd->add_option("--out", ra.out, "output path prefix");
    render_cmd->add_option("--scale", ra.scale, "pixels per metre")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train_cmd) return run_train(g, ta);
        if (*eval_cmd) return run_eval(g, ea);
        if (*grad_cmd) return run_gradcheck(g);
        if (*warp_cmd) return run_warpcheck(g, wa);
        if (*render_cmd) return run_render(g, ra);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
