#pragma once

// Flat `key = value` configuration text for TrainConfig, one pair per line,
// `#` starts a comment. Unknown keys and malformed values are errors.

#include <charconv>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qnav/trainer.hpp"

namespace qnav {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest text that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace detail {

template <class T>
T parse_number(std::string_view s, std::string_view key) {
    T v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw ConfigError("config: bad value '" + std::string(s) + "' for " + std::string(key));
    return v;
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct ConfigKey {
    std::string name;
    std::string doc;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, std::string_view)> set;
};

template <class T, class M>
ConfigKey number_key(std::string name, std::string doc, M TrainConfig::*member) {
    return {name, std::move(doc),
            [member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
                else return std::to_string(c.*member);
            },
            [member, name](TrainConfig& c, std::string_view s) { c.*member = parse_number<T>(s, name); }};
}

template <class T, class S, class M>
ConfigKey nested_key(std::string name, std::string doc, S TrainConfig::*outer, M S::*member) {
    return {name, std::move(doc),
            [outer, member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return format_double(c.*outer.*member);
                else return std::to_string(c.*outer.*member);
            },
            [outer, member, name](TrainConfig& c, std::string_view s) {
                c.*outer.*member = static_cast<M>(parse_number<T>(s, name));
            }};
}

inline std::string_view to_string(DropoutFill f) { return f == DropoutFill::max_range ? "max_range" : "local_mean"; }

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        k.push_back({"variant", "d3rqn | ddrqn | d3qn | ddqn (default d3rqn)",
                     [](const TrainConfig& c) { return std::string(qnav::to_string(c.variant)); },
                     [](TrainConfig& c, std::string_view s) {
                         try {
                             c.variant = parse_variant(s);
                         } catch (const std::invalid_argument& e) {
                             throw ConfigError(std::string("config: ") + e.what());
                         }
                     }});
        k.push_back({"scenario", "basic | narrow_channel | intersections | corners | corner_trap (default basic)",
                     [](const TrainConfig& c) { return std::string(qnav::to_string(c.scenario)); },
                     [](TrainConfig& c, std::string_view s) {
                         try {
                             c.scenario = parse_scenario(s);
                         } catch (const std::invalid_argument& e) {
                             throw ConfigError(std::string("config: ") + e.what());
                         }
                     }});
        k.push_back(number_key<int>("episodes", "training episodes (default 3000)", &TrainConfig::episodes));
        k.push_back(number_key<int>("max_steps_per_episode", "episode step cap (default 100)",
                                    &TrainConfig::max_steps_per_episode));
        k.push_back(number_key<int>("batch", "windows per update (default 32)", &TrainConfig::batch));
        k.push_back(number_key<double>("gamma", "discount (default 0.99)", &TrainConfig::gamma));
        k.push_back(number_key<double>("lr", "Adam learning rate (default 0.0003)", &TrainConfig::lr));
        k.push_back(number_key<int>("window", "sampled sequence length (default 5)", &TrainConfig::window));
        k.push_back(number_key<int>("target_sync_every", "updates between hard target copies (default 300)",
                                    &TrainConfig::target_sync_every));
        k.push_back(number_key<double>("epsilon_start", "initial exploration rate (default 1)",
                                       &TrainConfig::epsilon_start));
        k.push_back(number_key<double>("epsilon_end", "final exploration rate (default 0.05)",
                                       &TrainConfig::epsilon_end));
        k.push_back(number_key<double>("epsilon_decay_fraction", "share of episodes spent decaying (default 0.3)",
                                       &TrainConfig::epsilon_decay_fraction));
        k.push_back(number_key<int>("warmup_steps", "stored steps before the first update (default 1000)",
                                    &TrainConfig::warmup_steps));
        k.push_back(number_key<int>("update_every", "environment steps per update (default 1)",
                                    &TrainConfig::update_every));
        k.push_back(number_key<int>("replay_capacity", "replay size in steps (default 50000)",
                                    &TrainConfig::replay_capacity));
        k.push_back(number_key<double>("huber_delta", "Huber loss threshold (default 1)", &TrainConfig::huber_delta));
        k.push_back(number_key<std::uint64_t>("seed", "master seed (default 7)", &TrainConfig::seed));
        k.push_back(nested_key<double>("camera.fx", "focal length x in pixels (default 52)", &TrainConfig::camera,
                                       &CameraModel::fx));
        k.push_back(nested_key<double>("camera.fy", "focal length y in pixels (default 52)", &TrainConfig::camera,
                                       &CameraModel::fy));
        k.push_back(nested_key<double>("camera.cx", "principal point x (default 52)", &TrainConfig::camera,
                                       &CameraModel::cx));
        k.push_back(nested_key<double>("camera.cy", "principal point y (default 16)", &TrainConfig::camera,
                                       &CameraModel::cy));
        k.push_back(nested_key<std::size_t>("camera.width", "image width (default 104)", &TrainConfig::camera,
                                            &CameraModel::width));
        k.push_back(nested_key<std::size_t>("camera.height", "image height (default 32)", &TrainConfig::camera,
                                            &CameraModel::height));
        k.push_back(nested_key<double>("camera.max_range", "depth clip in metres (default 10)", &TrainConfig::camera,
                                       &CameraModel::max_range));
        k.push_back(nested_key<int>("degrade.blur_radius", "box blur radius in pixels (default 0)",
                                    &TrainConfig::degrade, &DegradeParams::blur_radius));
        k.push_back(nested_key<double>("degrade.speckle_sd", "relative multiplicative noise sd (default 0)",
                                       &TrainConfig::degrade, &DegradeParams::speckle_sd));
        k.push_back(nested_key<int>("degrade.dropout_rect_count", "dropout rectangles per frame (default 0)",
                                    &TrainConfig::degrade, &DegradeParams::dropout_rect_count));
        k.push_back({"degrade.dropout_fill", "max_range | local_mean (default max_range)",
                     [](const TrainConfig& c) { return std::string(to_string(c.degrade.dropout_fill)); },
                     [](TrainConfig& c, std::string_view s) {
                         if (s == "max_range") c.degrade.dropout_fill = DropoutFill::max_range;
                         else if (s == "local_mean") c.degrade.dropout_fill = DropoutFill::local_mean;
                         else throw ConfigError("config: bad value '" + std::string(s) + "' for degrade.dropout_fill");
                     }});
        return k;
    }();
    return keys;
}

}  // namespace detail

/// Every key with its current value, preceded by a comment line.
inline std::string serialize_config(const TrainConfig& c) {
    std::string out;
    for (const auto& k : detail::config_keys()) {
        out += "# " + k.doc + "\n";
        out += k.name + " = " + k.get(c) + "\n";
    }
    return out;
}

/// Keys not present keep their defaults. The result is validated.
inline TrainConfig parse_config(std::istream& is, TrainConfig base = {}) {
    std::map<std::string, const detail::ConfigKey*, std::less<>> by_name;
    for (const auto& k : detail::config_keys()) by_name.emplace(k.name, &k);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string_view s = line;
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = detail::trim(s.substr(0, eq));
        const auto value = detail::trim(s.substr(eq + 1));
        const auto it = by_name.find(key);
        if (it == by_name.end())
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
        try {
            it->second->set(base, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    try {
        base.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return base;
}

inline TrainConfig parse_config(std::string_view text, TrainConfig base = {}) {
    std::istringstream is{std::string(text)};
    return parse_config(is, std::move(base));
}

}  // namespace qnav
