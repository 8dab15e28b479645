#pragma once

#include "qtrade/market_data.hpp"
#include "qtrade/trading_env.hpp"

#include <iosfwd>
#include <vector>

namespace qtrade {

/// Greedy expert: long before a rising close, short before a falling one, flat
/// on an unchanged close. Throws ArgumentError when t+1 is not in t's session.
Action expert_action(const BarSeries& series, std::size_t t);

/// One expert action per bar. Session-final bars carry flat (the day closes out).
struct ExpertTrajectory {
    std::vector<Action> actions;

    Action operator[](std::size_t t) const { return actions[t]; }
    std::size_t size() const noexcept { return actions.size(); }
};

ExpertTrajectory expert_trajectory(const BarSeries& series);

/// `timestamp,action` rows.
void write_actions_csv(std::ostream& out, const BarSeries& series, const std::vector<Action>& actions);

}  // namespace qtrade
