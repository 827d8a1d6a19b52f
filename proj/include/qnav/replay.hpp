#pragma once

// Episodic replay storage with uniform sampling of fixed-length windows.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "qnav/rng.hpp"

namespace qnav {

/// Observations are stored as float to halve replay memory.
using StoredObservation = std::vector<float>;

struct StepRecord {
    StoredObservation observation;  // seen before acting
    int action = 0;
    double reward = 0.0;
    bool terminal = false;
};

struct EpisodeRecord {
    std::vector<StepRecord> steps;
    /// Observation after the last step; required iff the episode was
    /// truncated rather than ended by a collision.
    StoredObservation final_observation;

    std::size_t length() const { return steps.size(); }
    bool ends_terminal() const { return !steps.empty() && steps.back().terminal; }
};

/// L consecutive steps of one episode, front-padded when the episode is
/// shorter than L. Observation pointers stay valid until the next push.
struct SequenceSample {
    std::vector<const StoredObservation*> observations;  // null where padded
    std::vector<std::uint8_t> padded;
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<std::uint8_t> terminals;
    const StoredObservation* next_observation = nullptr;  // null iff the window ends terminal

    std::size_t episode = 0;   // index among currently stored episodes
    std::size_t start = 0;     // first real step inside the episode

    std::size_t length() const { return observations.size(); }
    std::size_t first_valid() const {
        return static_cast<std::size_t>(std::find(padded.begin(), padded.end(), 0) - padded.begin());
    }
    bool ends_terminal() const { return terminals.back() != 0; }
    int last_action() const { return actions.back(); }
    double last_reward() const { return rewards.back(); }
};

inline void validate_episode(const EpisodeRecord& ep) {
    if (ep.steps.empty()) throw std::invalid_argument("episode has no steps");
    const std::size_t obs_size = ep.steps.front().observation.size();
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
        const auto& s = ep.steps[i];
        if (s.terminal && i + 1 != ep.steps.size())
            throw std::invalid_argument("terminal flag before the final step (step " + std::to_string(i) + ")");
        if (s.observation.size() != obs_size || obs_size == 0)
            throw std::invalid_argument("inconsistent observation size at step " + std::to_string(i));
    }
    if (!ep.ends_terminal() && ep.final_observation.size() != obs_size)
        throw std::invalid_argument("truncated episode lacks a final observation");
}

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity_steps = 50000, std::size_t window = 5)
        : capacity_(capacity_steps), window_(window) {
        if (capacity_ == 0 || window_ == 0) throw std::invalid_argument("replay capacity and window must be positive");
    }

    /// Append an episode; evicts whole oldest episodes while over capacity.
    /// The newest episode is never evicted.
    void push_episode(EpisodeRecord episode) {
        validate_episode(episode);
        steps_ += episode.length();
        episodes_.push_back(std::move(episode));
        while (steps_ > capacity_ && episodes_.size() > 1) {
            steps_ -= episodes_.front().length();
            episodes_.pop_front();
        }
        dirty_ = true;
    }

    std::size_t size_steps() const { return steps_; }
    std::size_t episode_count() const { return episodes_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t window() const { return window_; }
    const EpisodeRecord& episode(std::size_t i) const { return episodes_.at(i); }

    std::size_t windows_in(const EpisodeRecord& ep) const {
        return ep.length() >= window_ ? ep.length() - window_ + 1 : 1;
    }

    std::size_t window_count() const {
        rebuild();
        return cumulative_.empty() ? 0 : cumulative_.back();
    }

    /// Uniform over every valid window start across all stored episodes.
    std::vector<SequenceSample> sample_windows(std::size_t batch, Rng& rng) const {
        const std::size_t total = window_count();
        if (total == 0) throw std::runtime_error("replay buffer holds no sampleable window");
        std::vector<SequenceSample> out;
        out.reserve(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t k = uniform_index(rng, total);
            const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), k);
            const auto ep = static_cast<std::size_t>(it - cumulative_.begin());
            const std::size_t before = ep == 0 ? 0 : cumulative_[ep - 1];
            out.push_back(make_window(ep, k - before));
        }
        return out;
    }

    /// The window of episode `ep` starting at `offset` (0 for short episodes).
    SequenceSample make_window(std::size_t ep, std::size_t offset) const {
        const auto& e = episodes_.at(ep);
        const std::size_t n = e.length();
        const std::size_t pad = n >= window_ ? 0 : window_ - n;
        if (n >= window_ && offset + window_ > n) throw std::out_of_range("window offset past episode end");
        SequenceSample s;
        s.episode = ep;
        s.start = offset;
        s.observations.assign(window_, nullptr);
        s.padded.assign(window_, 1);
        s.actions.assign(window_, 0);
        s.rewards.assign(window_, 0.0);
        s.terminals.assign(window_, 0);
        for (std::size_t j = pad; j < window_; ++j) {
            const auto& st = e.steps[offset + j - pad];
            s.observations[j] = &st.observation;
            s.padded[j] = 0;
            s.actions[j] = st.action;
            s.rewards[j] = st.reward;
            s.terminals[j] = st.terminal;
        }
        const std::size_t last = offset + window_ - pad - 1;
        if (!s.ends_terminal())
            s.next_observation = last + 1 < n ? &e.steps[last + 1].observation : &e.final_observation;
        return s;
    }

private:
    void rebuild() const {
        if (!dirty_) return;
        cumulative_.clear();
        std::size_t acc = 0;
        for (const auto& e : episodes_) cumulative_.push_back(acc += windows_in(e));
        dirty_ = false;
    }

    std::size_t capacity_;
    std::size_t window_;
    std::size_t steps_ = 0;
    std::deque<EpisodeRecord> episodes_;
    mutable std::vector<std::size_t> cumulative_;
    mutable bool dirty_ = true;
};

}  // namespace qnav
