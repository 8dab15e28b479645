#include "qtrade/agent_training.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace qtrade {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

double max_next_value(const QNetParams& params, const Transition& t) {
    return forward(params, *t.next_state).maxCoeff();
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) {
        throw ArgumentError("replay buffer capacity must be positive");
    }
}

bool ReplayBuffer::push(Transition t) {
    if (full()) {
        throw UsageError(fmt::format("replay buffer is full ({} samples); clear it before pushing", capacity_));
    }
    items_.push_back(std::move(t));
    return full();
}

void ReplayBuffer::push_evict(Transition t) {
    if (full()) {
        items_.pop_front();
    }
    items_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
    if (count > items_.size()) {
        throw ArgumentError(fmt::format("cannot sample {} from a buffer of {}", count, items_.size()));
    }
    std::vector<std::size_t> order(items_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Transition> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
        out.push_back(items_[order[i]]);
    }
    return out;
}

Action greedy_action(const QValues& q) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
        if (q[idx(i)] > q[idx(best)]) best = i;
    }
    return action_from_index(best);
}

Action select_action(const QValues& q, double epsilon, Rng& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
        throw ArgumentError(fmt::format("epsilon {} outside [0, 1]", epsilon));
    }
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, 2);
        return action_from_index(pick(rng));
    }
    return greedy_action(q);
}

double agent_loss(std::span<const Transition> batch, const QNetParams& params, double gamma) {
    return td_loss_and_gradient(batch, params, gamma, TdLoss::agent_only).loss.agent;
}

double expert_loss(std::span<const Transition> batch, const QNetParams& params, double gamma) {
    return td_loss_and_gradient(batch, params, gamma, TdLoss::dual).loss.expert;
}

double total_loss(std::span<const Transition> batch, const QNetParams& params, double gamma) {
    return td_loss_and_gradient(batch, params, gamma, TdLoss::dual).loss.total;
}

TdEvaluation td_loss_and_gradient(std::span<const Transition> batch, const QNetParams& params,
                                  double gamma, TdLoss kind) {
    if (batch.empty()) {
        throw ArgumentError("TD loss of an empty batch");
    }
    TdEvaluation eval{{}, QNetParams(params.input_size(), params.hidden_size())};
    const double n = static_cast<double>(batch.size());
    double sum_agent = 0.0;
    double sum_expert = 0.0;
    ForwardTrace trace;
    for (const auto& t : batch) {
        const double bootstrap = t.terminal() ? 0.0 : gamma * max_next_value(params, t);
        const QValues q = forward(params, t.state, trace);
        const std::size_t a = action_index(t.action);
        const double err_agent = q[idx(a)] - (t.terminal() ? t.reward : t.reward + bootstrap);
        sum_agent += err_agent * err_agent;

        QValues dq = QValues::Zero();
        if (kind == TdLoss::agent_only) {
            dq[idx(a)] = 2.0 * (err_agent / n);
        } else {
            const std::size_t e = action_index(t.expert_action);
            const double err_expert =
                q[idx(e)] - (t.terminal() ? t.expert_reward : t.expert_reward + bootstrap);
            sum_expert += err_expert * err_expert;
            // d/dQ of (La + Le) / 2 with La, Le means over n samples
            dq[idx(a)] += err_agent / n;
            dq[idx(e)] += err_expert / n;
        }
        backward(params, t.state, trace, dq, eval.gradient);
    }
    eval.loss.agent = sum_agent / n;
    if (kind == TdLoss::agent_only) {
        eval.loss.total = eval.loss.agent;
    } else {
        eval.loss.expert = sum_expert / n;
        eval.loss.total = 0.5 * (eval.loss.agent + eval.loss.expert);
    }
    return eval;
}

double cross_entropy(const QValues& logits, Action label) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits[idx(action_index(label))];
}

double bc_loss(std::span<const Transition> batch, const QNetParams& params) {
    return bc_loss_and_gradient(batch, params).loss.total;
}

TdEvaluation bc_loss_and_gradient(std::span<const Transition> batch, const QNetParams& params) {
    if (batch.empty()) {
        throw ArgumentError("cross-entropy of an empty batch");
    }
    TdEvaluation eval{{}, QNetParams(params.input_size(), params.hidden_size())};
    const double n = static_cast<double>(batch.size());
    double sum = 0.0;
    ForwardTrace trace;
    for (const auto& t : batch) {
        const QValues q = forward(params, t.state, trace);
        sum += cross_entropy(q, t.expert_action);
        const double m = q.maxCoeff();
        QValues p = (q.array() - m).exp().matrix();
        p /= p.sum();
        p[idx(action_index(t.expert_action))] -= 1.0;
        backward(params, t.state, trace, p / n, eval.gradient);
    }
    eval.loss.total = sum / n;
    return eval;
}

void TrainConfig::validate() const {
    if (episodes == 0) throw ArgumentError("episodes must be positive");
    if (buffer_capacity == 0) throw ArgumentError("buffer capacity must be positive");
    if (batch_size == 0 || batch_size > buffer_capacity) {
        throw ArgumentError("batch size must lie in [1, buffer capacity]");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ArgumentError("gamma must lie in [0, 1]");
    for (double e : {epsilon_start, epsilon_end}) {
        if (!(e >= 0.0 && e <= 1.0)) throw ArgumentError("epsilon must lie in [0, 1]");
    }
    if (epsilon_end > epsilon_start) {
        throw ArgumentError("epsilon schedule must be non-increasing");
    }
    if (!(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0)) {
        throw ArgumentError("epsilon decay fraction must lie in [0, 1]");
    }
    if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
    if (hidden_size == 0) throw ArgumentError("hidden size must be positive");
}

double TrainConfig::epsilon_at(std::size_t global_step, std::size_t total_steps) const {
    const double decay_steps = epsilon_decay_fraction * static_cast<double>(total_steps);
    if (decay_steps <= 0.0) {
        return epsilon_end;
    }
    const double progress = std::min(1.0, static_cast<double>(global_step) / decay_steps);
    return epsilon_start + (epsilon_end - epsilon_start) * progress;
}

void TrainingLog::write_csv(std::ostream& out) const {
    out << "update_index,episode,epsilon,loss_agent,loss_expert,loss_total\n";
    for (const auto& u : updates) {
        out << fmt::format("{},{},{},{},{},{}\n", u.update_index, u.episode, u.epsilon, u.loss_agent,
                           u.loss_expert, u.loss_total);
    }
}

bool TrainingLog::operator==(const TrainingLog& other) const {
    auto same_update = [](const UpdateRecord& a, const UpdateRecord& b) {
        return a.update_index == b.update_index && a.episode == b.episode && a.epsilon == b.epsilon &&
               a.loss_agent == b.loss_agent && a.loss_expert == b.loss_expert &&
               a.loss_total == b.loss_total && a.batch_size == b.batch_size;
    };
    auto same_episode = [](const EpisodeRecord& a, const EpisodeRecord& b) {
        return a.episode == b.episode && a.start_bar == b.start_bar && a.steps == b.steps &&
               a.updates == b.updates;
    };
    return total_steps == other.total_steps && final_buffer_size == other.final_buffer_size &&
           std::equal(updates.begin(), updates.end(), other.updates.begin(), other.updates.end(),
                      same_update) &&
           std::equal(episodes.begin(), episodes.end(), other.episodes.begin(), other.episodes.end(),
                      same_episode);
}

std::vector<std::size_t> decision_bars(const TrainingData& data) {
    EnvConfig env = data.env;
    const TradingEnv probe(data.series, data.features, data.window, env, data.range);
    std::vector<std::size_t> out;
    for (std::size_t t = data.range.begin; t < data.range.end; ++t) {
        if (probe.is_decision_bar(t)) out.push_back(t);
    }
    return out;
}

TrainResult train_td(const TrainConfig& config, const TrainingData& data,
                     const ExpertTrajectory& trajectory, TdVariant variant,
                     const CheckpointCallback& on_checkpoint) {
    config.validate();
    if (trajectory.size() != data.series.size()) {
        throw ArgumentError("expert trajectory does not cover the series");
    }
    const auto decisions = decision_bars(data);
    if (decisions.empty()) {
        throw StateError("training range has no decision bars after feature warm-up");
    }

    EnvConfig env_config = data.env;
    env_config.reward_mode = variant.reward_mode;
    TradingEnv env(data.series, data.features, data.window, env_config, data.range);

    const std::size_t available = decisions.size();
    const std::size_t per_episode = config.steps_per_episode == 0
                                        ? available
                                        : std::min(config.steps_per_episode, available);
    const std::size_t planned_steps = per_episode * config.episodes;

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
        StateWindow state;
        bool positioned = false;

        std::size_t j = 0;
        while (j < per_episode) {
            std::size_t filled = 0;
            double epsilon = 0.0;
            while (filled < config.buffer_capacity && j < per_episode) {
                const std::size_t bar = decisions[first + j];
                if (!positioned || env.terminal() || env.cursor() != bar) {
                    state = env.reset(bar);
                    positioned = true;
                }
                epsilon = config.epsilon_at(global_step, planned_steps);
                const QValues q = forward(result.params, state);
                const Action action = select_action(q, epsilon, rng);

                Action expert = trajectory[bar];
                double expert_r = 0.0;
                if (variant.expert_source == ExpertSource::mirror_agent) {
                    expert = action;
                } else {
                    expert_r = env.expert_reward(expert);
                }
                StepResult step = env.step(action);
                if (variant.expert_source == ExpertSource::mirror_agent) {
                    expert_r = step.reward;
                }

                const bool episode_end = j + 1 == per_episode;
                Transition tr{state, action, expert, step.reward, expert_r,
                              episode_end ? std::nullopt : step.next_state};
                if (!step.done && step.next_state) {
                    state = *step.next_state;
                }
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
            TdEvaluation eval = td_loss_and_gradient(batch, result.params, config.gamma, variant.loss);
            const std::size_t update_index = result.log.updates.size();
            if (!std::isfinite(eval.loss.total)) {
                throw TrainingDiverged(
                    fmt::format("non-finite loss at update {} (episode {})", update_index, episode),
                    result.params, update_index);
            }
            clip_global_norm(eval.gradient, config.clip_norm);
            try {
                adam_step(result.params, eval.gradient, result.optimizer);
            } catch (const NumericError& e) {
                throw TrainingDiverged(e.what(), result.params, update_index);
            }
            result.log.updates.push_back({update_index, episode, epsilon, eval.loss.agent,
                                          eval.loss.expert, eval.loss.total, batch_size});
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

TrainResult train(const TrainConfig& config, const TrainingData& data, const ExpertTrajectory& trajectory,
                  const CheckpointCallback& on_checkpoint) {
    return train_td(config, data, trajectory, {TdLoss::dual, RewardMode::training, ExpertSource::trajectory},
                    on_checkpoint);
}

double expert_agreement(const QNetParams& params, const FeatureMatrix& features, std::size_t window,
                        const BarSeries& series, const ExpertTrajectory& trajectory, IndexRange range) {
    const TradingEnv probe(series, features, window, EnvConfig{}, range);
    std::size_t total = 0;
    std::size_t agree = 0;
    for (std::size_t t = range.begin; t < range.end; ++t) {
        if (!probe.is_decision_bar(t)) continue;
        ++total;
        if (greedy_action(forward(params, build_state(features, t, window))) == trajectory[t]) ++agree;
    }
    return total == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(total);
}

}  // namespace qtrade
