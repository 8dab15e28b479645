#pragma once

#include "qtrade/features.hpp"
#include "qtrade/market_data.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace qtrade {

/// Unit position: short, flat or long.
enum class Action : std::int8_t { short_ = -1, flat = 0, long_ = 1 };

inline constexpr std::array<Action, 3> kActions{Action::short_, Action::flat, Action::long_};

constexpr int to_int(Action a) noexcept { return static_cast<int>(a); }
/// Q-value slot: short -> 0, flat -> 1, long -> 2.
constexpr std::size_t action_index(Action a) noexcept { return static_cast<std::size_t>(to_int(a) + 1); }
constexpr Action action_from_index(std::size_t i) noexcept { return static_cast<Action>(static_cast<int>(i) - 1); }
/// Throws ArgumentError outside {-1, 0, 1}.
Action action_from_int(int value);
std::string to_string(Action a);

enum class RewardMode { training, testing };

struct EnvConfig {
    double cost_rate = 0.0000023;  // 0.023 per mille of traded notional
    RewardMode reward_mode = RewardMode::testing;
    bool force_flat_at_session_end = true;

    void validate() const;
};

/// Per-step reward of a unit position: a_prev * (p - p_prev) - c * p * |a - a_prev|.
double reward(Action a_prev, Action a, double p_prev, double p, double cost_rate);

/// Transaction cost of moving from `from` to `to` at price p.
double turnover_cost(Action from, Action to, double price, double cost_rate);

struct StepResult {
    double reward = 0.0;
    std::optional<StateWindow> next_state;  // nullopt when no valid window exists
    bool done = false;
    Action prev_action = Action::flat;  // position carried into the step
    std::size_t bar = 0;                // bar reached by the step
    bool forced_close = false;
};

/// Simulated market over a bar range. The agent decides at the close of bar t;
/// the step realises the position over t -> t+1 and charges the turnover at p_t.
/// When bar t+1 ends its session (or the range) the episode is done and, with
/// forced close-out, the position is closed at p_{t+1} with costs charged.
///
/// Testing-mode rewards summed over a session equal the sum of the per-bar
/// rewards a_{t-1}(p_t - p_{t-1}) - c p_t |a_t - a_{t-1}| of the same action path.
///
/// A single instance is a mutable cursor; it references (does not own) the series
/// and feature matrix, which must outlive it.
class TradingEnv {
public:
    TradingEnv(const BarSeries& series, const FeatureMatrix& features, std::size_t window,
               EnvConfig config, std::optional<IndexRange> range = std::nullopt);

    /// True when a decision can be taken at bar t: a full state window exists,
    /// and t+1 lies in the same session and inside the range.
    bool is_decision_bar(std::size_t t) const;

    StateWindow reset(std::size_t start);
    StepResult step(Action action);

    /// Reward of the expert for the current step: constant 1 in training mode,
    /// otherwise the testing reward the expert's action would earn from the
    /// current carried position. Does not move the cursor.
    double expert_reward(Action expert_action) const;

    bool terminal() const noexcept { return terminal_; }
    std::size_t cursor() const noexcept { return cursor_; }
    Action position() const noexcept { return position_; }
    const EnvConfig& config() const noexcept { return config_; }
    const IndexRange& range() const noexcept { return range_; }
    std::size_t window() const noexcept { return window_; }
    const BarSeries& series() const noexcept { return *series_; }
    const FeatureMatrix& features() const noexcept { return *features_; }

private:
    double testing_reward(Action action) const;
    bool ends_episode(std::size_t bar) const;

    const BarSeries* series_;
    const FeatureMatrix* features_;
    std::size_t window_;
    EnvConfig config_;
    IndexRange range_;
    std::size_t cursor_ = 0;
    Action position_ = Action::flat;
    bool terminal_ = true;
};

}  // namespace qtrade
