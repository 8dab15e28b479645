#pragma once

#include "qtrade/baselines.hpp"
#include "qtrade/expert.hpp"
#include "qtrade/features.hpp"
#include "qtrade/market_data.hpp"
#include "qtrade/qnet.hpp"
#include "qtrade/trading_env.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qtrade {

struct StopLossParams {
    std::size_t k = 25;
    bool enabled = true;

    void validate() const;
};

/// True when a held position has broken through the trailing band against it:
/// short above mean + std, long below mean - std (population std of `trailing`).
/// Fewer than two trailing closes disable the check.
bool stop_loss_check(std::span<const double> trailing, Action position, double price);

double accumulated_profit(std::span<const double> rewards);
/// mean / population std; 0 when the spread is zero.
double sharpe(std::span<const double> rewards);
/// mean of all rewards / population std of the strictly negative ones; 0 when
/// there are none or their spread is zero.
double sortino(std::span<const double> rewards);

/// Maps a decision bar to an action.
using Policy = std::function<Action(std::size_t bar)>;

Policy greedy_policy(const QNetParams& params, const FeatureMatrix& features, std::size_t window);
Policy signal_policy(const SignalSeries& signals);
Policy trajectory_policy(const ExpertTrajectory& trajectory);

struct BacktestStep {
    std::int64_t timestamp = 0;  // decision bar
    std::size_t bar = 0;
    Action action = Action::flat;  // position actually taken
    double reward = 0.0;
    double equity = 0.0;
    bool stop_triggered = false;
};

struct BacktestReport {
    std::string strategy;
    std::vector<BacktestStep> steps;
    double profit = 0.0;
    double sharpe = 0.0;
    double sortino = 0.0;
    std::size_t trades = 0;
    std::size_t stops = 0;
    std::vector<std::pair<std::string, std::string>> config;  // echoed verbatim

    std::vector<double> rewards() const;
    std::string to_json() const;
    /// `timestamp,reward,equity,action,stop_triggered`
    void write_equity_csv(std::ostream& out) const;
};

struct BacktestSetup {
    const BarSeries& series;
    const FeatureMatrix& features;
    std::size_t window = 20;
    IndexRange range;
    EnvConfig env;  // run in testing mode regardless of the reward mode given
    StopLossParams stop;
};

/// Steps the testing-mode environment through every session of the range.
/// Throws StateError when the first bar of the range has no full state window.
BacktestReport run_backtest(const std::string& strategy, const Policy& policy, const BacktestSetup& setup);

void write_report(const std::filesystem::path& dir, const BacktestReport& report);

}  // namespace qtrade
