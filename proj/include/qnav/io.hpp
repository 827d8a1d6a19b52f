#pragma once

// CSV artifacts (learning curves, evaluation reports, traces) and top-down
// PPM renders of worlds and trajectories.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qnav/config.hpp"
#include "qnav/evaluator.hpp"
#include "qnav/trainer.hpp"

namespace qnav {

inline constexpr const char* kCurveHeader = "episode,total_reward,steps,epsilon,mean_loss";
inline constexpr const char* kReportHeader = "episode,world_seed,steps,outcome";
inline constexpr const char* kSummaryHeader =
    "variant,scenario,n_episodes,success_count,success_rate,mean_steps,ci_low,ci_high";
inline constexpr const char* kTraceHeader = "step,x,y,yaw,action,d_nearest";

namespace detail {

inline std::string csv_double(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    return os;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

inline void write_curve_csv(std::ostream& os, const LearningCurve& curve) {
    os << kCurveHeader << '\n';
    for (const auto& r : curve)
        os << r.episode << ',' << detail::csv_double(r.total_reward) << ',' << r.steps << ','
           << detail::csv_double(r.epsilon) << ',' << detail::csv_double(r.mean_loss) << '\n';
}

inline void write_curve_csv(const std::string& path, const LearningCurve& curve) {
    auto os = detail::open_out(path);
    write_curve_csv(os, curve);
}

inline LearningCurve read_curve_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kCurveHeader) throw std::runtime_error("curve csv: bad header");
    LearningCurve out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto c = detail::split_csv(line);
        if (c.size() != 5) throw std::runtime_error("curve csv: expected 5 columns in '" + line + "'");
        auto num = [](const std::string& s) {
            return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
        };
        out.push_back({std::stoi(c[0]), num(c[1]), std::stoi(c[2]), num(c[3]), num(c[4])});
    }
    return out;
}

/// One summary row per report.
inline void write_summary_csv(std::ostream& os, const std::vector<EvalReport>& reports) {
    os << kSummaryHeader << '\n';
    for (const auto& r : reports) {
        const auto [lo, hi] = r.wilson_interval();
        os << to_string(r.variant) << ',' << to_string(r.scenario) << ',' << r.n_episodes << ',' << r.success_count
           << ',' << (r.success_rate ? detail::csv_double(*r.success_rate) : "nan") << ','
           << detail::csv_double(r.mean_steps) << ',' << detail::csv_double(lo) << ',' << detail::csv_double(hi)
           << '\n';
    }
}

/// Summary as `#` comment lines, then one row per episode.
inline void write_report_csv(std::ostream& os, const EvalReport& r) {
    std::ostringstream summary;
    write_summary_csv(summary, {r});
    std::istringstream lines(summary.str());
    for (std::string l; std::getline(lines, l);) os << "# " << l << '\n';
    os << kReportHeader << '\n';
    for (std::size_t i = 0; i < r.episodes.size(); ++i) {
        const auto& e = r.episodes[i];
        os << i << ',' << e.world_seed << ',' << e.steps << ','
           << (e.outcome == EpisodeOutcome::success ? "success" : "collision") << '\n';
    }
}

inline void write_report_csv(const std::string& path, const EvalReport& r) {
    auto os = detail::open_out(path);
    write_report_csv(os, r);
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceEntry>& trace) {
    os << kTraceHeader << '\n';
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& t = trace[i];
        os << i << ',' << detail::csv_double(t.pose.x) << ',' << detail::csv_double(t.pose.y) << ','
           << detail::csv_double(t.pose.yaw) << ',' << t.action << ',' << detail::csv_double(t.d_nearest) << '\n';
    }
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceEntry>& trace) {
    auto os = detail::open_out(path);
    write_trace_csv(os, trace);
}

// ---------------------------------------------------------------------------
// Top-down renders

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct RgbImage {
    std::size_t width = 0, height = 0;
    std::vector<Rgb> pixels;

    RgbImage(std::size_t w, std::size_t h, Rgb fill = {}) : width(w), height(h), pixels(w * h, fill) {}
    Rgb& operator()(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
    const Rgb& operator()(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

inline void write_ppm(std::ostream& os, const RgbImage& img) {
    os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    for (const auto& p : img.pixels) os.put(static_cast<char>(p.r)).put(static_cast<char>(p.g)).put(static_cast<char>(p.b));
}

inline void write_ppm(const std::string& path, const RgbImage& img) {
    auto os = detail::open_out(path);
    write_ppm(os, img);
    if (!os) throw std::runtime_error("write failed: " + path);
}

/// World seen from above, +y up. Obstacles are shaded by appearance, the
/// safety margin is tinted, and the trajectory runs green (start) to red.
inline RgbImage render_topdown(const WorldSpec& world, const std::vector<TraceEntry>& trace = {},
                               double px_per_m = 20.0) {
    if (!(px_per_m > 0)) throw std::invalid_argument("render scale must be positive");
    const auto& b = world.bounds;
    const auto w = static_cast<std::size_t>(std::ceil((b.max.x - b.min.x) * px_per_m));
    const auto h = static_cast<std::size_t>(std::ceil((b.max.y - b.min.y) * px_per_m));
    RgbImage img(w, h, {255, 255, 255});
    auto to_world = [&](std::size_t row, std::size_t col) {
        return Vec2{b.min.x + (static_cast<double>(col) + 0.5) / px_per_m,
                    b.max.y - (static_cast<double>(row) + 0.5) / px_per_m};
    };
    for (std::size_t row = 0; row < h; ++row)
        for (std::size_t col = 0; col < w; ++col) {
            const Vec2 p = to_world(row, col);
            double nearest = wall_distance(b, p);
            const Obstacle* inside = nullptr;
            for (const auto& o : world.obstacles) {
                const double d = distance_to(o, p);
                if (d <= 0.0) inside = &o;
                nearest = std::min(nearest, d);
            }
            if (inside) {
                const auto s = static_cast<std::uint8_t>(40 + inside->appearance * 150 / 255);
                img(row, col) = {s, s, s};
            } else if (nearest < kSafeDistance) {
                img(row, col) = {255, 220, 200};
            }
        }
    auto plot = [&](Vec2 p, Rgb c, int radius) {
        const double fc = (p.x - b.min.x) * px_per_m, fr = (b.max.y - p.y) * px_per_m;
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                const long r = std::lround(fr - 0.5) + dy, cc = std::lround(fc - 0.5) + dx;
                if (r >= 0 && cc >= 0 && r < static_cast<long>(h) && cc < static_cast<long>(w))
                    img(static_cast<std::size_t>(r), static_cast<std::size_t>(cc)) = c;
            }
    };
    for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
        // Dense samples along each segment; arcs are short enough to draw straight.
        const Vec2 a = trace[i].pose.position(), e = trace[i + 1].pose.position();
        const double t = trace.size() > 2 ? static_cast<double>(i) / static_cast<double>(trace.size() - 2) : 0.0;
        const Rgb c{static_cast<std::uint8_t>(255 * t), static_cast<std::uint8_t>(160 * (1 - t)), 40};
        const int n = std::max(2, static_cast<int>(norm({e.x - a.x, e.y - a.y}) * px_per_m * 2));
        for (int k = 0; k <= n; ++k) {
            const double u = static_cast<double>(k) / n;
            plot({a.x + u * (e.x - a.x), a.y + u * (e.y - a.y)}, c, 0);
        }
    }
    plot(world.start_pose.position(), {0, 160, 40}, 2);
    if (!trace.empty() && trace.back().d_nearest < kSafeDistance) plot(trace.back().pose.position(), {220, 0, 0}, 3);
    return img;
}

}  // namespace qnav
