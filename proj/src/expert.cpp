#include "qtrade/expert.hpp"

#include "qtrade/errors.hpp"

#include <fmt/format.h>

#include <ostream>

namespace qtrade {

Action expert_action(const BarSeries& series, std::size_t t) {
    if (t + 1 >= series.size() || series.is_session_final(t)) {
        throw ArgumentError(fmt::format("no in-session close after bar {}", t));
    }
    const double now = series[t].close;
    const double next = series[t + 1].close;
    if (next > now) return Action::long_;
    if (next < now) return Action::short_;
    return Action::flat;
}

ExpertTrajectory expert_trajectory(const BarSeries& series) {
    if (series.empty()) {
        throw ArgumentError("expert trajectory of an empty series");
    }
    ExpertTrajectory traj;
    traj.actions.resize(series.size(), Action::flat);
    for (std::size_t t = 0; t + 1 < series.size(); ++t) {
        if (!series.is_session_final(t)) {
            traj.actions[t] = expert_action(series, t);
        }
    }
    return traj;
}

void write_actions_csv(std::ostream& out, const BarSeries& series, const std::vector<Action>& actions) {
    out << "timestamp,action\n";
    for (std::size_t t = 0; t < actions.size() && t < series.size(); ++t) {
        out << series[t].timestamp << ',' << to_int(actions[t]) << '\n';
    }
}

}  // namespace qtrade
