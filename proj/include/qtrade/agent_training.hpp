#pragma once

#include "qtrade/errors.hpp"
#include "qtrade/expert.hpp"
#include "qtrade/features.hpp"
#include "qtrade/market_data.hpp"
#include "qtrade/qnet.hpp"
#include "qtrade/trading_env.hpp"

#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace qtrade {

using Rng = std::mt19937_64;

/// One replay sample (s, a, a^e, r, r^e, s'). A missing next state marks the
/// end of the episode (no bootstrap).
struct Transition {
    StateWindow state;
    Action action = Action::flat;
    Action expert_action = Action::flat;
    double reward = 0.0;
    double expert_reward = 0.0;
    std::optional<StateWindow> next_state;

    bool terminal() const noexcept { return !next_state.has_value(); }
};

/// FIFO buffer with a hard capacity.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    /// Appends and reports whether the buffer is now full. Throws UsageError
    /// when already full: the caller drains it before refilling.
    bool push(Transition t);
    /// Appends, dropping the oldest sample when full.
    void push_evict(Transition t);
    /// `count` distinct samples drawn uniformly, in random order.
    std::vector<Transition> sample(std::size_t count, Rng& rng) const;
    void clear() noexcept { items_.clear(); }

    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool full() const noexcept { return items_.size() == capacity_; }
    const Transition& operator[](std::size_t i) const { return items_[i]; }

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

/// Arg-max with ties resolved towards the lower index (short < flat < long).
Action greedy_action(const QValues& q);

/// Uniform random action with probability epsilon, otherwise greedy_action(q).
Action select_action(const QValues& q, double epsilon, Rng& rng);

/// Mean over the batch of (r + gamma max_a Q(s', a) - Q(s, a))^2; terminal
/// samples use the target r.
double agent_loss(std::span<const Transition> batch, const QNetParams& params, double gamma);
/// As agent_loss with (a, r) replaced by (a^e, r^e).
double expert_loss(std::span<const Transition> batch, const QNetParams& params, double gamma);
/// (agent_loss + expert_loss) / 2.
double total_loss(std::span<const Transition> batch, const QNetParams& params, double gamma);

enum class TdLoss { agent_only, dual };

struct LossBreakdown {
    double agent = 0.0;
    double expert = 0.0;
    double total = 0.0;
};

struct TdEvaluation {
    LossBreakdown loss;
    QNetParams gradient;
};

/// Loss values and semi-gradient (bootstrapped targets held fixed) in one pass.
/// For TdLoss::agent_only, loss.total == loss.agent and loss.expert == 0.
TdEvaluation td_loss_and_gradient(std::span<const Transition> batch, const QNetParams& params,
                                  double gamma, TdLoss kind);

/// Softmax cross-entropy of one output vector against a label.
double cross_entropy(const QValues& logits, Action label);
/// Mean cross-entropy of Q(s) against the expert action of each sample.
double bc_loss(std::span<const Transition> batch, const QNetParams& params);
TdEvaluation bc_loss_and_gradient(std::span<const Transition> batch, const QNetParams& params);

struct TrainConfig {
    std::size_t episodes = 200;           // N
    std::size_t steps_per_episode = 0;    // T; 0 runs each episode over the whole range
    std::size_t buffer_capacity = 512;    // N_c
    std::size_t batch_size = 64;          // N_s
    double gamma = 0.992;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_decay_fraction = 0.5;  // share of all steps over which epsilon decays linearly
    double learning_rate = 1e-3;
    double clip_norm = 5.0;               // <= 0 disables clipping
    std::size_t hidden_size = 64;
    std::uint64_t seed = 7;
    bool persistent_buffer = false;       // keep samples across updates (FIFO) instead of clearing
    std::size_t checkpoint_every = 0;     // updates between checkpoint callbacks; 0 disables

    void validate() const;
    double epsilon_at(std::size_t global_step, std::size_t total_steps) const;
};

/// Market data seen by a learner. References must outlive the call.
struct TrainingData {
    const BarSeries& series;
    const FeatureMatrix& features;  // normalised
    std::size_t window = 20;        // L
    IndexRange range;               // bars available to the learner
    EnvConfig env;                  // reward mode is overridden per learner
};

struct UpdateRecord {
    std::size_t update_index = 0;
    std::size_t episode = 0;
    double epsilon = 0.0;
    double loss_agent = 0.0;
    double loss_expert = 0.0;
    double loss_total = 0.0;
    std::size_t batch_size = 0;
};

struct EpisodeRecord {
    std::size_t episode = 0;
    std::size_t start_bar = 0;
    std::size_t steps = 0;
    std::size_t updates = 0;
};

struct TrainingLog {
    std::vector<UpdateRecord> updates;
    std::vector<EpisodeRecord> episodes;
    std::size_t total_steps = 0;
    std::size_t final_buffer_size = 0;

    /// `update_index,episode,epsilon,loss_agent,loss_expert,loss_total`
    void write_csv(std::ostream& out) const;
    bool operator==(const TrainingLog& other) const;
};

struct TrainResult {
    QNetParams params;
    OptimizerState optimizer;
    TrainingLog log;
};

using CheckpointCallback =
    std::function<void(std::size_t update_index, const QNetParams&, const OptimizerState&)>;

/// Thrown when a loss turns non-finite; carries the last finite parameters.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, QNetParams last_good, std::size_t update_index)
        : NumericError(what), last_good_(std::move(last_good)), update_index_(update_index) {}

    const QNetParams& last_good() const noexcept { return last_good_; }
    std::size_t update_index() const noexcept { return update_index_; }

private:
    QNetParams last_good_;
    std::size_t update_index_;
};

/// Where the expert half of each sample comes from.
enum class ExpertSource {
    trajectory,    // a^e from the expert trajectory
    mirror_agent,  // a^e = a and r^e = r (reduces the dual loss to the agent loss)
};

struct TdVariant {
    TdLoss loss = TdLoss::dual;
    RewardMode reward_mode = RewardMode::training;
    ExpertSource expert_source = ExpertSource::trajectory;
};

/// Bars of `data.range` at which a decision can be taken, in order.
std::vector<std::size_t> decision_bars(const TrainingData& data);

/// The fill -> sample -> update -> clear training loop shared by the TD learners.
TrainResult train_td(const TrainConfig& config, const TrainingData& data,
                     const ExpertTrajectory& trajectory, TdVariant variant,
                     const CheckpointCallback& on_checkpoint = {});

/// Expert-trajectory learner: constant rewards (expert 1, agent 0), dual TD loss.
TrainResult train(const TrainConfig& config, const TrainingData& data, const ExpertTrajectory& trajectory,
                  const CheckpointCallback& on_checkpoint = {});

/// Greedy-policy agreement with the expert over the decision bars of `range`.
double expert_agreement(const QNetParams& params, const FeatureMatrix& features, std::size_t window,
                        const BarSeries& series, const ExpertTrajectory& trajectory, IndexRange range);

}  // namespace qtrade
