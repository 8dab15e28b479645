#pragma once

#include "qtrade/agent_training.hpp"
#include "qtrade/market_data.hpp"
#include "qtrade/trading_env.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qtrade {

/// One action per bar of the series; session-final bars are always flat.
struct SignalSeries {
    std::string strategy;
    std::string parameters;
    std::vector<Action> actions;
};

/// Long through every session, flat on its final bar.
SignalSeries buy_and_hold(const BarSeries& series);

struct MacdParams {
    std::size_t short_period = 12;
    std::size_t long_period = 26;
    std::size_t signal_period = 9;

    void validate() const;
};

/// DIF = EMA_short(close) - EMA_long(close), DEA = EMA_signal(DIF); every EMA
/// uses smoothing 2/(period+1) and is seeded with its first input.
struct MacdLines {
    std::vector<double> dif;
    std::vector<double> dea;
};

MacdLines macd_lines(const BarSeries& series, const MacdParams& params);

/// Long when DIF crosses above DEA with DIF > 0, short when it crosses below
/// with DIF < 0, otherwise the previous in-session position is held.
SignalSeries macd_signals(const BarSeries& series, const MacdParams& params);

struct DualThrustParams {
    std::size_t window = 0;  // bars before the session; 0 uses the whole previous session
    double k1 = 0.5;
    double k2 = 0.5;

    void validate() const;
};

/// R = max(HH - LC, HC - LL).
double dual_thrust_range(double highest_high, double highest_close, double lowest_close,
                         double lowest_low);

struct DualThrustLevels {
    bool active = false;  // false when the lookback is not yet available
    double range = 0.0;
    double buy_line = 0.0;
    double sell_line = 0.0;
};

/// Breakout lines per session (indexed like series.sessions()).
std::vector<DualThrustLevels> dual_thrust_levels(const BarSeries& series, const DualThrustParams& params);

/// Long when the close breaks strictly above the BuyLine, short when strictly
/// below the SellLine, hold otherwise; sessions without a lookback stay flat.
SignalSeries dual_thrust_signals(const BarSeries& series, const DualThrustParams& params);

/// Plain deep Q-learning: profit rewards, agent TD loss only, same loop.
TrainResult train_dqn(const TrainConfig& config, const TrainingData& data,
                      const CheckpointCallback& on_checkpoint = {});

/// Behaviour cloning: softmax cross-entropy of the Q-network outputs against
/// expert actions, same buffer cycle and optimiser, no environment rewards.
TrainResult train_bc(const TrainConfig& config, const TrainingData& data, const ExpertTrajectory& trajectory,
                     const CheckpointCallback& on_checkpoint = {});

}  // namespace qtrade
