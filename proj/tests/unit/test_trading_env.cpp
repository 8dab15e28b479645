#include <catch_amalgamated.hpp>

#include "qtrade/errors.hpp"
#include "qtrade/trading_env.hpp"
#include "oracles/trading.hpp"
#include "support.hpp"

#include <random>

using namespace qtrade;
using testing::series_from_closes;

namespace {

EnvConfig testing_config(double c) {
    EnvConfig cfg;
    cfg.cost_rate = c;
    cfg.reward_mode = RewardMode::testing;
    return cfg;
}

/// Runs `path` (one action per decision bar) through every session and sums rewards.
double replay(const BarSeries& s, const FeatureMatrix& f, const std::vector<int>& path, double c) {
    TradingEnv env(s, f, 1, testing_config(c));
    double total = 0.0;
    for (const auto& session : s.sessions()) {
        if (!env.is_decision_bar(session.begin)) continue;
        env.reset(session.begin);
        while (!env.terminal()) total += env.step(action_from_int(path[env.cursor()])).reward;
    }
    return total;
}

}  // namespace

TEST_CASE("reward formula cases") {
    REQUIRE(reward(Action::long_, Action::long_, 100, 102, 0.0) == 2.0);
    REQUIRE(reward(Action::flat, Action::flat, 100, 57, 0.3) == 0.0);
    REQUIRE(reward(Action::long_, Action::short_, 100, 100, 0.0000023) == Catch::Approx(-0.00046).margin(1e-15));
}

TEST_CASE("action encoding") {
    REQUIRE(action_index(Action::short_) == 0);
    REQUIRE(action_from_index(2) == Action::long_);
    REQUIRE(action_from_int(-1) == Action::short_);
    REQUIRE_THROWS_AS(action_from_int(2), ArgumentError);
    EnvConfig bad;
    bad.cost_rate = -1.0;
    REQUIRE_THROWS(bad.validate());
}

TEST_CASE("training mode pays the agent nothing and the expert one") {
    const auto s = series_from_closes({100, 101, 103, 102, 104});
    const auto f = testing::raw_features(s);
    EnvConfig cfg;
    cfg.reward_mode = RewardMode::training;
    TradingEnv env(s, f, 1, cfg);
    env.reset(0);
    REQUIRE(env.expert_reward(Action::long_) == 1.0);
    for (Action a : {Action::long_, Action::short_, Action::flat}) {
        REQUIRE(env.step(a).reward == 0.0);
    }
}

TEST_CASE("held long over a one-point move earns one") {
    const auto s = series_from_closes({100, 100, 101, 101});
    const auto f = testing::raw_features(s);
    TradingEnv env(s, f, 1, testing_config(0.0));
    env.reset(0);
    REQUIRE(env.step(Action::long_).reward == 0.0);
    REQUIRE(env.step(Action::long_).reward == 1.0);
}

TEST_CASE("session end closes the position with costs") {
    const double c = 0.001;
    const auto s = series_from_closes({100, 102, 105}, 3);
    const auto f = testing::raw_features(s);
    TradingEnv env(s, f, 1, testing_config(c));
    env.reset(0);
    auto r0 = env.step(Action::long_);
    REQUIRE_FALSE(r0.done);
    REQUIRE(r0.reward == Catch::Approx(2.0 - c * 100).margin(1e-12));
    auto r1 = env.step(Action::long_);
    REQUIRE(r1.done);
    REQUIRE(r1.forced_close);
    REQUIRE(r1.reward == Catch::Approx(3.0 - c * 105).margin(1e-12));
    REQUIRE(env.position() == Action::flat);
    REQUIRE(env.terminal());
    REQUIRE_THROWS_AS(env.step(Action::flat), StateError);
}

TEST_CASE("done marks every session end") {
    const auto s = series_from_closes(std::vector<double>(12, 50.0), 4);
    const auto f = testing::raw_features(s);
    TradingEnv env(s, f, 1, testing_config(0.0));
    for (const auto& session : s.sessions()) {
        env.reset(session.begin);
        std::size_t steps = 0;
        StepResult r;
        do {
            r = env.step(Action::flat);
            ++steps;
            REQUIRE(r.reward == 0.0);
        } while (!r.done);
        REQUIRE(steps == 3);
        REQUIRE(r.bar == session.end - 1);
    }
}

TEST_CASE("reset contract") {
    const auto s = series_from_closes({100, 101, 102, 103, 104, 105});
    const auto f = compute_features(s, std::vector<FactorSpec>{{"r", FactorKind::ret, 2}});
    TradingEnv env(s, f, 2, testing_config(0.0));
    REQUIRE_THROWS_AS(env.reset(1), ArgumentError);
    REQUIRE_THROWS_AS(env.reset(5), ArgumentError);
    REQUIRE(env.reset(3) == env.reset(3));
    REQUIRE(env.position() == Action::flat);
}

TEST_CASE("testing rewards match a trade ledger for random paths") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> pick(-1, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t per_day = 3 + trial % 9;
        const auto closes = testing::random_closes(rng, per_day * 3);
        const auto s = series_from_closes(closes, per_day);
        const auto f = testing::raw_features(s);
        std::vector<int> path(closes.size());
        for (auto& a : path) a = pick(rng);
        const double c = trial % 2 ? 0.0 : 0.0005;
        double ledger = 0.0;
        double per_bar = 0.0;
        for (const auto& session : s.sessions()) {
            const std::vector<double> p(closes.begin() + session.begin, closes.begin() + session.end);
            const std::vector<int> a(path.begin() + session.begin, path.begin() + session.end);
            ledger += oracle::ledger_total(p, a, c);
            per_bar += oracle::per_bar_total(p, a, c);
        }
        const double env_total = replay(s, f, path, c);
        REQUIRE(env_total == Catch::Approx(ledger).margin(1e-9));
        REQUIRE(env_total == Catch::Approx(per_bar).margin(1e-9));
    }
}

TEST_CASE("the flat policy earns exactly zero") {
    std::mt19937_64 rng(2);
    const auto closes = testing::random_closes(rng, 96);
    const auto s = series_from_closes(closes);
    REQUIRE(replay(s, testing::raw_features(s), std::vector<int>(96, 0), 0.001) == 0.0);
}
