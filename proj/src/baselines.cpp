#include "qtrade/baselines.hpp"

#include "qtrade/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace qtrade {

namespace {

std::vector<double> ema(const std::vector<double>& x, std::size_t period) {
    std::vector<double> out(x.size());
    const double alpha = 2.0 / (static_cast<double>(period) + 1.0);
    for (std::size_t t = 0; t < x.size(); ++t) {
        out[t] = t == 0 ? x[0] : out[t - 1] + alpha * (x[t] - out[t - 1]);
    }
    return out;
}

void flatten_session_ends(const BarSeries& series, std::vector<Action>& actions) {
    for (const auto& s : series.sessions()) {
        actions[s.end - 1] = Action::flat;
    }
}

}  // namespace

SignalSeries buy_and_hold(const BarSeries& series) {
    SignalSeries out{"buy_and_hold", "", std::vector<Action>(series.size(), Action::long_)};
    flatten_session_ends(series, out.actions);
    return out;
}

void MacdParams::validate() const {
    if (short_period == 0 || long_period == 0 || signal_period == 0) {
        throw ArgumentError("MACD periods must be at least 1");
    }
    if (short_period >= long_period) {
        throw ArgumentError("MACD short period must be below the long period");
    }
}

MacdLines macd_lines(const BarSeries& series, const MacdParams& params) {
    params.validate();
    if (series.size() <= params.long_period) {
        throw ArgumentError(fmt::format("MACD needs more than {} bars, series has {}", params.long_period,
                                        series.size()));
    }
    const auto closes = series.closes();
    const auto fast = ema(closes, params.short_period);
    const auto slow = ema(closes, params.long_period);
    MacdLines lines;
    lines.dif.resize(closes.size());
    for (std::size_t t = 0; t < closes.size(); ++t) {
        lines.dif[t] = fast[t] - slow[t];
    }
    lines.dea = ema(lines.dif, params.signal_period);
    return lines;
}

SignalSeries macd_signals(const BarSeries& series, const MacdParams& params) {
    const auto lines = macd_lines(series, params);
    SignalSeries out{"macd",
                     fmt::format("short={} long={} signal={}", params.short_period, params.long_period,
                                 params.signal_period),
                     std::vector<Action>(series.size(), Action::flat)};
    for (const auto& session : series.sessions()) {
        Action held = Action::flat;
        for (std::size_t t = session.begin; t < session.end; ++t) {
            if (t > 0) {
                const double dif = lines.dif[t];
                const double dea = lines.dea[t];
                const bool crossed_up = lines.dif[t - 1] <= lines.dea[t - 1] && dif > dea;
                const bool crossed_down = lines.dif[t - 1] >= lines.dea[t - 1] && dif < dea;
                if (crossed_up && dif > 0.0) {
                    held = Action::long_;
                } else if (crossed_down && dif < 0.0) {
                    held = Action::short_;
                }
            }
            out.actions[t] = held;
        }
    }
    flatten_session_ends(series, out.actions);
    return out;
}

void DualThrustParams::validate() const {
    if (!(k1 > 0.0) || !(k2 > 0.0)) {
        throw ArgumentError("Dual Thrust coefficients must be positive");
    }
}

double dual_thrust_range(double highest_high, double highest_close, double lowest_close,
                         double lowest_low) {
    return std::max(highest_high - lowest_close, highest_close - lowest_low);
}

std::vector<DualThrustLevels> dual_thrust_levels(const BarSeries& series, const DualThrustParams& params) {
    params.validate();
    const auto& sessions = series.sessions();
    std::vector<DualThrustLevels> out(sessions.size());
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        IndexRange look;
        if (params.window == 0) {
            if (s == 0) continue;
            look = sessions[s - 1];
        } else {
            if (sessions[s].begin < params.window) continue;
            look = {sessions[s].begin - params.window, sessions[s].begin};
        }
        double hh = series[look.begin].high;
        double ll = series[look.begin].low;
        double hc = series[look.begin].close;
        double lc = series[look.begin].close;
        for (std::size_t i = look.begin + 1; i < look.end; ++i) {
            hh = std::max(hh, series[i].high);
            ll = std::min(ll, series[i].low);
            hc = std::max(hc, series[i].close);
            lc = std::min(lc, series[i].close);
        }
        const double open = series[sessions[s].begin].open;
        DualThrustLevels& lv = out[s];
        lv.active = true;
        lv.range = dual_thrust_range(hh, hc, lc, ll);
        lv.buy_line = open + params.k1 * lv.range;
        lv.sell_line = open - params.k2 * lv.range;
    }
    return out;
}

SignalSeries dual_thrust_signals(const BarSeries& series, const DualThrustParams& params) {
    const auto levels = dual_thrust_levels(series, params);
    SignalSeries out{"dual_thrust",
                     fmt::format("window={} k1={} k2={}", params.window, params.k1, params.k2),
                     std::vector<Action>(series.size(), Action::flat)};
    const auto& sessions = series.sessions();
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        if (!levels[s].active) continue;
        Action held = Action::flat;
        for (std::size_t t = sessions[s].begin; t < sessions[s].end; ++t) {
            const double close = series[t].close;
            if (close > levels[s].buy_line) {
                held = Action::long_;
            } else if (close < levels[s].sell_line) {
                held = Action::short_;
            }
            out.actions[t] = held;
        }
    }
    flatten_session_ends(series, out.actions);
    return out;
}

TrainResult train_dqn(const TrainConfig& config, const TrainingData& data,
                      const CheckpointCallback& on_checkpoint) {
    const auto trajectory = expert_trajectory(data.series);
    return train_td(config, data, trajectory,
                    {TdLoss::agent_only, RewardMode::testing, ExpertSource::trajectory}, on_checkpoint);
}

TrainResult train_bc(const TrainConfig& config, const TrainingData& data, const ExpertTrajectory& trajectory,
                     const CheckpointCallback& on_checkpoint) {
    config.validate();
    if (trajectory.size() != data.series.size()) {
        throw ArgumentError("expert trajectory does not cover the series");
    }
    const auto decisions = decision_bars(data);
    if (decisions.empty()) {
        throw StateError("training range has no decision bars after feature warm-up");
    }
    const std::size_t available = decisions.size();
    const std::size_t per_episode = config.steps_per_episode == 0
                                        ? available
                                        : std::min(config.steps_per_episode, available);

    TrainResult result{init_qnet(data.features.cols(), config.hidden_size, config.seed), {}, {}};
    AdamConfig adam;
    adam.learning_rate = config.learning_rate;
    result.optimizer = make_optimizer(result.params, adam);
    Rng rng(config.seed * 0x9E3779B97F4A7C15ull + 1);
    ReplayBuffer buffer(config.buffer_capacity);
    std::size_t global_step = 0;

    for (std::size_t episode = 0; episode < config.episodes; ++episode) {
        std::size_t first = 0;
        if (per_episode < available) {
            std::uniform_int_distribution<std::size_t> pick(0, available - per_episode);
            first = pick(rng);
        }
        EpisodeRecord record{episode, decisions[first], 0, 0};
        std::size_t j = 0;
        while (j < per_episode) {
            std::size_t filled = 0;
            while (filled < config.buffer_capacity && j < per_episode) {
                const std::size_t bar = decisions[first + j];
                const Action label = trajectory[bar];
                Transition tr{build_state(data.features, bar, data.window), label, label, 0.0, 0.0,
                              std::nullopt};
                if (config.persistent_buffer) {
                    buffer.push_evict(std::move(tr));
                } else {
                    buffer.push(std::move(tr));
                }
                ++filled;
                ++j;
                ++global_step;
            }
            const std::size_t batch_size = std::min(config.batch_size, buffer.size());
            const auto batch = buffer.sample(batch_size, rng);
            TdEvaluation eval = bc_loss_and_gradient(batch, result.params);
            const std::size_t update_index = result.log.updates.size();
            if (!std::isfinite(eval.loss.total)) {
                throw TrainingDiverged(fmt::format("non-finite cross-entropy at update {}", update_index),
                                       result.params, update_index);
            }
            clip_global_norm(eval.gradient, config.clip_norm);
            try {
                adam_step(result.params, eval.gradient, result.optimizer);
            } catch (const NumericError& e) {
                throw TrainingDiverged(e.what(), result.params, update_index);
            }
            result.log.updates.push_back({update_index, episode, 0.0, 0.0, 0.0, eval.loss.total, batch_size});
            ++record.updates;
            if (on_checkpoint && config.checkpoint_every > 0 &&
                (update_index + 1) % config.checkpoint_every == 0) {
                on_checkpoint(update_index, result.params, result.optimizer);
            }
            if (!config.persistent_buffer) {
                buffer.clear();
            }
        }
        record.steps = j;
        result.log.episodes.push_back(record);
    }
    result.log.total_steps = global_step;
    result.log.final_buffer_size = buffer.size();
    return result;
}

}  // namespace qtrade
