#include "qtrade/backtest.hpp"

#include "qtrade/agent_training.hpp"
#include "qtrade/errors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

namespace qtrade {

namespace {

struct Moments {
    double mean = 0.0;
    double std = 0.0;
};

// Spreads below 1e-12 of the largest magnitude are rounding noise of a
// constant sample and count as zero.
Moments moments(std::span<const double> x) {
    Moments m;
    if (x.empty()) return m;
    double sum = 0.0;
    double scale = 0.0;
    for (double v : x) {
        sum += v;
        scale = std::max(scale, std::abs(v));
    }
    m.mean = sum / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(x.size()));
    if (m.std <= 1e-12 * scale) m.std = 0.0;
    return m;
}

}  // namespace

void StopLossParams::validate() const {
    if (k < 2) {
        throw ArgumentError(fmt::format("stop-loss window k must be at least 2, got {}", k));
    }
}

bool stop_loss_check(std::span<const double> trailing, Action position, double price) {
    if (position == Action::flat || trailing.size() < 2) return false;
    const Moments m = moments(trailing);
    if (position == Action::short_) return price > m.mean + m.std;
    return price < m.mean - m.std;
}

double accumulated_profit(std::span<const double> rewards) {
    double total = 0.0;
    for (double r : rewards) total += r;
    return total;
}

double sharpe(std::span<const double> rewards) {
    const Moments m = moments(rewards);
    return m.std > 0.0 ? m.mean / m.std : 0.0;
}

double sortino(std::span<const double> rewards) {
    std::vector<double> downside;
    for (double r : rewards) {
        if (r < 0.0) downside.push_back(r);
    }
    if (downside.empty()) return 0.0;
    const double down_std = moments(downside).std;
    return down_std > 0.0 ? moments(rewards).mean / down_std : 0.0;
}

Policy greedy_policy(const QNetParams& params, const FeatureMatrix& features, std::size_t window) {
    return [&params, &features, window](std::size_t bar) {
        return greedy_action(forward(params, build_state(features, bar, window)));
    };
}

Policy signal_policy(const SignalSeries& signals) {
    return [&signals](std::size_t bar) { return signals.actions.at(bar); };
}

Policy trajectory_policy(const ExpertTrajectory& trajectory) {
    return [&trajectory](std::size_t bar) { return trajectory.actions.at(bar); };
}

std::vector<double> BacktestReport::rewards() const {
    std::vector<double> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.reward);
    return out;
}

std::string BacktestReport::to_json() const {
    nlohmann::ordered_json j;
    j["strategy"] = strategy;
    j["steps"] = steps.size();
    j["metrics"] = {
        {"basis", "per-step rewards, not annualised"},
        {"accumulated_profit", profit},
        {"sharpe", sharpe},
        {"sortino", sortino},
        {"trades", trades},
        {"stop_loss_triggers", stops},
    };
    j["final_equity"] = steps.empty() ? 0.0 : steps.back().equity;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [key, value] : config) cfg[key] = value;
    j["config"] = cfg;
    return j.dump(2) + "\n";
}

void BacktestReport::write_equity_csv(std::ostream& out) const {
    out << "timestamp,reward,equity,action,stop_triggered\n";
    for (const auto& s : steps) {
        out << fmt::format("{},{},{},{},{}\n", s.timestamp, s.reward, s.equity, to_int(s.action),
                           s.stop_triggered ? 1 : 0);
    }
}

BacktestReport run_backtest(const std::string& strategy, const Policy& policy, const BacktestSetup& setup) {
    if (setup.stop.enabled) setup.stop.validate();
    if (setup.range.empty()) {
        throw ArgumentError("backtest range is empty");
    }
    if (!state_available(setup.features, setup.range.begin, setup.window)) {
        throw StateError(fmt::format(
            "test range starts at bar {} before the feature warm-up is complete (window {})",
            setup.range.begin, setup.window));
    }
    EnvConfig env_config = setup.env;
    env_config.reward_mode = RewardMode::testing;
    TradingEnv env(setup.series, setup.features, setup.window, env_config, setup.range);
    const auto closes = setup.series.closes();
    const std::size_t k = setup.stop.k;

    BacktestReport report;
    report.strategy = strategy;
    double equity = 0.0;
    for (const auto& session : setup.series.sessions()) {
        const std::size_t lo = std::max(session.begin, setup.range.begin);
        const std::size_t hi = std::min(session.end, setup.range.end);
        if (hi <= lo || !env.is_decision_bar(lo)) continue;
        env.reset(lo);
        while (!env.terminal()) {
            const std::size_t bar = env.cursor();
            Action action = policy(bar);
            bool stopped = false;
            if (setup.stop.enabled && bar >= k &&
                stop_loss_check(std::span<const double>(closes.data() + (bar - k), k), env.position(),
                                closes[bar])) {
                action = Action::flat;
                stopped = true;
            }
            const StepResult r = env.step(action);
            equity += r.reward;
            if (action != r.prev_action) ++report.trades;
            if (r.forced_close) ++report.trades;
            if (stopped) ++report.stops;
            report.steps.push_back({setup.series[bar].timestamp, bar, action, r.reward, equity, stopped});
        }
    }
    const auto rewards = report.rewards();
    report.profit = accumulated_profit(rewards);
    report.sharpe = sharpe(rewards);
    report.sortino = sortino(rewards);
    return report;
}

void write_report(const std::filesystem::path& dir, const BacktestReport& report) {
    std::filesystem::create_directories(dir);
    const auto json_path = dir / fmt::format("backtest_{}.json", report.strategy);
    std::ofstream json(json_path, std::ios::binary);
    if (!json) throw ArgumentError(fmt::format("cannot write {}", json_path.string()));
    json << report.to_json();
    const auto csv_path = dir / fmt::format("equity_{}.csv", report.strategy);
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw ArgumentError(fmt::format("cannot write {}", csv_path.string()));
    report.write_equity_csv(csv);
}

}  // namespace qtrade
