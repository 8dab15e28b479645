#include <catch_amalgamated.hpp>

#include "qtrade/agent_training.hpp"
#include "qtrade/baselines.hpp"
#include "qtrade/errors.hpp"
#include "oracles/scalar_qnet.hpp"
#include "support.hpp"

#include <cmath>
#include <map>
#include <random>

using namespace qtrade;

namespace {

StateWindow random_state(std::mt19937_64& rng, std::size_t L, std::size_t C) {
    std::normal_distribution<double> n(0.0, 1.0);
    StateWindow s;
    s.rows.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(C));
    for (Eigen::Index i = 0; i < s.rows.size(); ++i) s.rows.data()[i] = n(rng);
    return s;
}

std::vector<Transition> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t L, std::size_t C) {
    std::uniform_int_distribution<int> act(-1, 1);
    std::normal_distribution<double> r(0.0, 1.0);
    std::bernoulli_distribution terminal(0.25);
    std::vector<Transition> out;
    for (std::size_t i = 0; i < n; ++i) {
        Transition t;
        t.state = random_state(rng, L, C);
        t.action = action_from_int(act(rng));
        t.expert_action = action_from_int(act(rng));
        t.reward = r(rng);
        t.expert_reward = r(rng);
        if (!terminal(rng)) t.next_state = random_state(rng, L, C);
        out.push_back(std::move(t));
    }
    return out;
}

Transition numbered(int i) {
    Transition t;
    t.reward = i;
    return t;
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.episodes = 3;
    c.steps_per_episode = 10;
    c.buffer_capacity = 4;
    c.batch_size = 4;
    c.hidden_size = 3;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("greedy selection and tie-break") {
    std::mt19937_64 rng(1);
    REQUIRE(select_action(QValues(0.1, 0.5, 0.2), 0.0, rng) == Action::flat);
    REQUIRE(select_action(QValues(0.5, 0.5, 0.1), 0.0, rng) == Action::short_);
    REQUIRE(greedy_action(QValues(0.0, 0.0, 0.0)) == Action::short_);
    REQUIRE_THROWS_AS(select_action(QValues::Zero(), 1.5, rng), ArgumentError);
}

TEST_CASE("full exploration is uniform") {
    std::mt19937_64 rng(2);
    std::map<Action, int> counts;
    for (int i = 0; i < 30000; ++i) ++counts[select_action(QValues(9, 0, 0), 1.0, rng)];
    for (Action a : kActions) REQUIRE(std::abs(counts[a] / 30000.0 - 1.0 / 3.0) <= 0.01);
}

TEST_CASE("buffer capacity contract") {
    ReplayBuffer b(3);
    REQUIRE_FALSE(b.push(numbered(0)));
    REQUIRE_FALSE(b.push(numbered(1)));
    REQUIRE(b.push(numbered(2)));
    REQUIRE_THROWS_AS(b.push(numbered(3)), UsageError);
    b.push_evict(numbered(3));
    REQUIRE(b.size() == 3);
    REQUIRE(b[0].reward == 1.0);
    b.clear();
    REQUIRE(b.size() == 0);
}

TEST_CASE("sampling without replacement") {
    std::mt19937_64 rng(3);
    ReplayBuffer b(5);
    for (int i = 0; i < 5; ++i) b.push(numbered(i));
    auto all = b.sample(5, rng);
    std::vector<double> seen;
    for (const auto& t : all) seen.push_back(t.reward);
    std::sort(seen.begin(), seen.end());
    REQUIRE(seen == std::vector<double>{0, 1, 2, 3, 4});
    REQUIRE(b.sample(0, rng).empty());
    REQUIRE_THROWS_AS(b.sample(6, rng), ArgumentError);

    std::map<double, int> counts;
    const int draws = 50000;
    for (int i = 0; i < draws; ++i) ++counts[b.sample(1, rng)[0].reward];
    for (const auto& [k, v] : counts) REQUIRE(std::abs(v / double(draws) - 0.2) < 0.01);
}

TEST_CASE("loss hand cases") {
    std::mt19937_64 rng(4);
    const QNetParams zero(2, 2);
    Transition t;
    t.state = random_state(rng, 2, 2);
    t.next_state = random_state(rng, 2, 2);
    t.action = Action::long_;
    t.expert_action = Action::flat;
    std::vector<Transition> batch{t};
    REQUIRE(agent_loss(batch, zero, 0.0) == 0.0);
    batch[0].reward = 1.0;
    REQUIRE(agent_loss(batch, zero, 0.0) == 1.0);

    QNetParams one(2, 2);
    one.head_bias() << 1.0, 1.0, 1.0;
    batch[0].expert_reward = 1.0;
    REQUIRE(expert_loss(batch, one, 0.0) == 0.0);

    batch[0].reward = 0.0;
    batch[0].expert_reward = std::sqrt(2.0);
    REQUIRE(total_loss(batch, zero, 0.0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("mirrored expert fields make the losses coincide") {
    std::mt19937_64 rng(5);
    auto batch = random_batch(rng, 6, 3, 2);
    for (auto& t : batch) {
        t.expert_action = t.action;
        t.expert_reward = t.reward;
    }
    const auto p = init_qnet(2, 3, 8);
    REQUIRE(expert_loss(batch, p, 0.9) == agent_loss(batch, p, 0.9));
    REQUIRE(total_loss(batch, p, 0.9) == agent_loss(batch, p, 0.9));
}

TEST_CASE("losses equal the scalar reference") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const auto batch = random_batch(rng, 1 + trial % 7, 1 + trial % 4, 1 + trial % 3);
        const auto p = init_qnet(1 + trial % 3, 1 + trial % 4, trial);
        const double g = 0.992;
        REQUIRE(std::abs(agent_loss(batch, p, g) - oracle::agent_loss(batch, p, g)) <= 1e-10);
        REQUIRE(std::abs(expert_loss(batch, p, g) - oracle::expert_loss(batch, p, g)) <= 1e-10);
        REQUIRE(std::abs(total_loss(batch, p, g) - oracle::total_loss(batch, p, g)) <= 1e-10);
    }
}

TEST_CASE("TD semi-gradient matches central differences with frozen targets") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t C = 1 + trial % 4, H = 1 + (trial + 1) % 4, L = 1 + trial % 5;
        const auto batch = random_batch(rng, 4, L, C);
        const auto p = init_qnet(C, H, 50 + trial);
        for (TdLoss kind : {TdLoss::agent_only, TdLoss::dual}) {
            const auto eval = td_loss_and_gradient(batch, p, 0.9, kind);
            const bool dual = kind == TdLoss::dual;
            REQUIRE(eval.loss.total == Catch::Approx(oracle::frozen_target_loss(batch, p, p, 0.9, dual)).margin(1e-12));
            for (Eigen::Index i = 0; i < p.data().size(); ++i) {
                auto plus = p, minus = p;
                plus.data()(i) += 1e-5;
                minus.data()(i) -= 1e-5;
                const double numeric = (oracle::frozen_target_loss(batch, plus, p, 0.9, dual) -
                                        oracle::frozen_target_loss(batch, minus, p, 0.9, dual)) /
                                       2e-5;
                const double a = eval.gradient.data()(i);
                const double diff = std::abs(a - numeric);
                REQUIRE((diff <= 1e-7 || diff <= 1e-4 * std::max(std::abs(a), std::abs(numeric))));
            }
        }
    }
}

TEST_CASE("cross-entropy limits") {
    REQUIRE(cross_entropy(QValues(0.3, 0.3, 0.3), Action::flat) == Catch::Approx(std::log(3.0)));
    REQUIRE(cross_entropy(QValues(-50, 50, -50), Action::flat) < 1e-30);
    REQUIRE(std::isfinite(cross_entropy(QValues(1000, -1000, 0), Action::short_)));
}

TEST_CASE("epsilon schedule") {
    TrainConfig c;
    double last = 2.0;
    for (std::size_t g = 0; g <= 1000; ++g) {
        const double e = c.epsilon_at(g, 1000);
        REQUIRE(e <= last);
        REQUIRE(e >= 0.0);
        REQUIRE(e <= 1.0);
        last = e;
    }
    REQUIRE(c.epsilon_at(0, 1000) == 1.0);
    REQUIRE(c.epsilon_at(500, 1000) == Catch::Approx(0.05));
    REQUIRE(c.epsilon_at(1000, 1000) == Catch::Approx(0.05));
}

TEST_CASE("config validation") {
    TrainConfig c;
    c.gamma = 1.5;
    REQUIRE_THROWS(c.validate());
    c = {};
    c.batch_size = c.buffer_capacity + 1;
    REQUIRE_THROWS(c.validate());
    c = {};
    c.buffer_capacity = 0;
    REQUIRE_THROWS(c.validate());
}

TEST_CASE("one update for a single four-step episode") {
    const auto s = testing::series_from_closes({100, 101, 100, 102, 103, 101, 104, 105, 103, 106});
    const auto f = testing::raw_features(s);
    TrainConfig c;
    c.episodes = 1;
    c.steps_per_episode = 4;
    c.buffer_capacity = 4;
    c.batch_size = 4;
    c.hidden_size = 2;
    const auto result = train(c, TrainingData{s, f, 1, {0, s.size()}, {}}, expert_trajectory(s));
    REQUIRE(result.log.updates.size() == 1);
    REQUIRE(result.log.final_buffer_size == 0);
    REQUIRE(result.log.total_steps == 4);
}

TEST_CASE("updates per episode equal ceil(steps / capacity)") {
    std::mt19937_64 rng(8);
    const auto closes = testing::random_closes(rng, 120);
    const auto s = testing::series_from_closes(closes, 40);
    const auto f = testing::raw_features(s);
    const auto traj = expert_trajectory(s);
    std::uniform_int_distribution<std::size_t> pick_t(1, 60), pick_c(1, 16);
    for (int trial = 0; trial < 10; ++trial) {
        TrainConfig c;
        c.episodes = 2;
        c.steps_per_episode = pick_t(rng);
        c.buffer_capacity = pick_c(rng);
        c.batch_size = std::min<std::size_t>(c.buffer_capacity, 4);
        c.hidden_size = 2;
        const auto result = train(c, TrainingData{s, f, 1, {0, s.size()}, {}}, traj);
        const std::size_t per = (c.steps_per_episode + c.buffer_capacity - 1) / c.buffer_capacity;
        for (const auto& e : result.log.episodes) REQUIRE(e.updates == per);
        REQUIRE(result.log.updates.size() == per * c.episodes);
        REQUIRE(result.log.final_buffer_size == 0);
    }
}

TEST_CASE("training is deterministic per seed") {
    std::mt19937_64 rng(9);
    const auto s = testing::series_from_closes(testing::random_closes(rng, 96), 48);
    const auto f = normalize(compute_features(s, parse_factor_list("ret:3, volatility:5")), 30);
    const TrainingData data{s, f, 4, {0, s.size()}, {}};
    const auto traj = expert_trajectory(s);
    const auto a = train(tiny_config(), data, traj);
    const auto b = train(tiny_config(), data, traj);
    REQUIRE(a.log == b.log);
    REQUIRE(a.params == b.params);
    auto other = tiny_config();
    other.seed = 6;
    REQUIRE_FALSE(train(other, data, traj).params == a.params);
}

TEST_CASE("mirrored expert training reproduces agent-only training bit for bit") {
    std::mt19937_64 rng(10);
    const auto s = testing::series_from_closes(testing::random_closes(rng, 96), 48);
    const auto f = normalize(compute_features(s, parse_factor_list("ret:3")), 20);
    const TrainingData data{s, f, 3, {0, s.size()}, EnvConfig{0.0001, RewardMode::testing, true}};
    const auto traj = expert_trajectory(s);
    const auto mirrored = train_td(tiny_config(), data, traj,
                                   {TdLoss::dual, RewardMode::testing, ExpertSource::mirror_agent});
    const auto agent_only = train_td(tiny_config(), data, traj,
                                     {TdLoss::agent_only, RewardMode::testing, ExpertSource::trajectory});
    REQUIRE(mirrored.params == agent_only.params);
    for (std::size_t i = 0; i < mirrored.log.updates.size(); ++i) {
        REQUIRE(mirrored.log.updates[i].loss_total == agent_only.log.updates[i].loss_total);
    }
}

TEST_CASE("checkpoint callback cadence and log CSV") {
    std::mt19937_64 rng(11);
    const auto s = testing::series_from_closes(testing::random_closes(rng, 48), 48);
    const auto f = testing::raw_features(s);
    auto c = tiny_config();
    c.checkpoint_every = 2;
    std::vector<std::size_t> seen;
    const auto r = train(c, TrainingData{s, f, 1, {0, s.size()}, {}}, expert_trajectory(s),
                         [&](std::size_t u, const QNetParams&, const OptimizerState&) { seen.push_back(u); });
    REQUIRE(r.log.updates.size() == 9);
    REQUIRE(seen == std::vector<std::size_t>{1, 3, 5, 7});
    std::ostringstream out;
    r.log.write_csv(out);
    REQUIRE(out.str().rfind("update_index,episode,epsilon,loss_agent,loss_expert,loss_total\n", 0) == 0);
}

TEST_CASE("training without decision bars is a state error") {
    const auto s = testing::series_from_closes({100, 101, 102, 103});
    const auto f = compute_features(s, std::vector<FactorSpec>{{"r", FactorKind::ret, 3}});
    REQUIRE_THROWS_AS(train(tiny_config(), TrainingData{s, f, 2, {0, s.size()}, {}}, expert_trajectory(s)),
                      StateError);
}
