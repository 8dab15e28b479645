#include "qtrade/trading_env.hpp"

#include "qtrade/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstdlib>

namespace qtrade {

Action action_from_int(int value) {
    if (value < -1 || value > 1) {
        throw ArgumentError(fmt::format("action {} outside {{-1, 0, 1}}", value));
    }
    return static_cast<Action>(value);
}

std::string to_string(Action a) {
    switch (a) {
        case Action::short_: return "short";
        case Action::flat: return "flat";
        case Action::long_: return "long";
    }
    return "?";
}

void EnvConfig::validate() const {
    if (!(cost_rate >= 0.0) || !std::isfinite(cost_rate)) {
        throw ArgumentError("cost rate must be finite and non-negative");
    }
}

double turnover_cost(Action from, Action to, double price, double cost_rate) {
    return cost_rate * price * std::abs(to_int(to) - to_int(from));
}

double reward(Action a_prev, Action a, double p_prev, double p, double cost_rate) {
    return to_int(a_prev) * (p - p_prev) - turnover_cost(a_prev, a, p, cost_rate);
}

TradingEnv::TradingEnv(const BarSeries& series, const FeatureMatrix& features, std::size_t window,
                       EnvConfig config, std::optional<IndexRange> range)
    : series_(&series), features_(&features), window_(window), config_(config),
      range_(range.value_or(IndexRange{0, series.size()})) {
    config_.validate();
    if (features.rows() != series.size()) {
        throw ArgumentError("feature matrix rows do not match the series length");
    }
    if (window == 0) {
        throw ArgumentError("state window must be positive");
    }
    if (range_.end > series.size() || range_.begin > range_.end) {
        throw ArgumentError("environment range exceeds the series");
    }
}

bool TradingEnv::ends_episode(std::size_t bar) const {
    return bar + 1 >= range_.end || series_->is_session_final(bar);
}

bool TradingEnv::is_decision_bar(std::size_t t) const {
    return range_.contains(t) && !ends_episode(t) && state_available(*features_, t, window_);
}

StateWindow TradingEnv::reset(std::size_t start) {
    if (!is_decision_bar(start)) {
        throw ArgumentError(fmt::format(
            "cannot start at bar {}: needs feature warm-up (window {}) and a following bar in the "
            "same session within [{}, {})",
            start, window_, range_.begin, range_.end));
    }
    cursor_ = start;
    position_ = Action::flat;
    terminal_ = false;
    return build_state(*features_, start, window_);
}

double TradingEnv::testing_reward(Action action) const {
    const double p0 = (*series_)[cursor_].close;
    const double p1 = (*series_)[cursor_ + 1].close;
    double r = to_int(action) * (p1 - p0) - turnover_cost(position_, action, p0, config_.cost_rate);
    if (config_.force_flat_at_session_end && ends_episode(cursor_ + 1)) {
        r -= turnover_cost(action, Action::flat, p1, config_.cost_rate);
    }
    return r;
}

double TradingEnv::expert_reward(Action expert_action) const {
    if (terminal_) {
        throw StateError("expert reward requested on a terminal environment");
    }
    return config_.reward_mode == RewardMode::training ? 1.0 : testing_reward(expert_action);
}

StepResult TradingEnv::step(Action action) {
    if (terminal_) {
        throw StateError("step called on a terminal environment; reset first");
    }
    StepResult out;
    out.prev_action = position_;
    out.reward = config_.reward_mode == RewardMode::training ? 0.0 : testing_reward(action);

    ++cursor_;
    out.bar = cursor_;
    out.done = ends_episode(cursor_);
    position_ = action;
    if (out.done) {
        terminal_ = true;
        if (config_.force_flat_at_session_end) {
            out.forced_close = position_ != Action::flat;
            position_ = Action::flat;
        }
    }
    if (state_available(*features_, cursor_, window_)) {
        out.next_state = build_state(*features_, cursor_, window_);
    }
    return out;
}

}  // namespace qtrade
