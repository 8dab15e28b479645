#include <catch_amalgamated.hpp>

#include "qtrade/errors.hpp"
#include "qtrade/qnet.hpp"
#include "oracles/scalar_qnet.hpp"

#include <cmath>
#include <filesystem>
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

double regression_loss_oracle(const QNetParams& p, const std::vector<StateWindow>& states,
                              const std::vector<std::size_t>& actions, const std::vector<double>& targets) {
    double total = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double e = oracle::lstm_q(p, states[i])[actions[i]] - targets[i];
        total += e * e;
    }
    return total / static_cast<double>(states.size());
}

bool close_enough(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    return diff <= 1e-7 || diff <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace

TEST_CASE("parameter count and initialisation") {
    REQUIRE(QNetParams::parameter_count(1, 1) == 18);
    REQUIRE(QNetParams(3, 5).size() == 4 * (15 + 25 + 5) + 15 + 3);
    const auto a = init_qnet(4, 3, 42);
    REQUIRE(a == init_qnet(4, 3, 42));
    REQUIRE_FALSE(a == init_qnet(4, 3, 43));
    for (Eigen::Index j = 0; j < 3; ++j) {
        REQUIRE(a.lstm_bias()(3 + j) == 1.0);
        REQUIRE(a.lstm_bias()(j) == 0.0);
    }
    REQUIRE(a.head_bias().isZero(0.0));
    REQUIRE(a.lstm_wx().cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
    REQUIRE_THROWS_AS(QNetParams(0, 3), ArgumentError);
}

TEST_CASE("zero network and bias passthrough") {
    std::mt19937_64 rng(1);
    QNetParams p(2, 3);
    const auto s = random_state(rng, 4, 2);
    REQUIRE(forward(p, s).isZero(0.0));
    p.head_bias() << 0.1, 0.2, 0.3;
    REQUIRE(forward(p, s) == QValues(0.1, 0.2, 0.3));
}

TEST_CASE("hand-evaluated single LSTM step") {
    QNetParams p(2, 2);
    auto wx = p.lstm_wx();
    wx(0, 0) = 0.5;   // input gate, unit 0
    wx(1, 1) = 0.25;  // input gate, unit 1
    wx(4, 0) = 1.0;   // cell candidate, unit 0
    wx(5, 1) = -0.5;  // cell candidate, unit 1
    p.head_w() << 1, 0, 0, 1, 1, 1;
    p.head_bias() << 0.1, 0.2, 0.3;
    StateWindow s;
    s.rows.resize(1, 2);
    s.rows << 1.0, 2.0;
    const QValues q = forward(p, s);
    REQUIRE(q(0) == Catch::Approx(0.32073749684182).margin(1e-13));
    REQUIRE(q(1) == Catch::Approx(-0.02073749684182).margin(1e-13));
    REQUIRE(q(2) == Catch::Approx(0.3).margin(1e-13));
}

TEST_CASE("forward matches the scalar reference and rejects bad widths") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = init_qnet(1 + trial % 4, 1 + trial % 5, trial);
        const auto s = random_state(rng, 1 + trial % 6, p.input_size());
        const QValues q = forward(p, s);
        const auto r = oracle::lstm_q(p, s);
        for (int a = 0; a < 3; ++a) REQUIRE(q(a) == Catch::Approx(r[a]).margin(1e-12));
    }
    const auto p = init_qnet(3, 2, 1);
    REQUIRE_THROWS_AS(forward(p, random_state(rng, 2, 4)), ArgumentError);
    REQUIRE_THROWS_AS(forward(p, StateWindow{}), ArgumentError);
}

TEST_CASE("regression gradient matches central differences") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> dim(1, 4), len(1, 5), act(0, 2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t C = dim(rng), H = dim(rng), L = len(rng);
        auto p = init_qnet(C, H, 100 + trial);
        for (Eigen::Index i = 0; i < p.head_bias().size(); ++i) p.head_bias()(i) = 0.3 * n(rng);
        std::vector<StateWindow> states;
        std::vector<std::size_t> actions;
        std::vector<double> targets;
        for (int b = 0; b < 3; ++b) {
            states.push_back(random_state(rng, L, C));
            actions.push_back(act(rng));
            targets.push_back(n(rng));
        }
        std::vector<RegressionSample> batch;
        for (std::size_t b = 0; b < states.size(); ++b) batch.push_back({&states[b], actions[b], targets[b]});
        REQUIRE(mse_loss(p, batch) == Catch::Approx(regression_loss_oracle(p, states, actions, targets)).margin(1e-12));
        const auto g = gradient(p, batch);
        const double h = 1e-5;
        for (Eigen::Index i = 0; i < p.data().size(); ++i) {
            auto plus = p, minus = p;
            plus.data()(i) += h;
            minus.data()(i) -= h;
            const double numeric = (regression_loss_oracle(plus, states, actions, targets) -
                                    regression_loss_oracle(minus, states, actions, targets)) /
                                   (2 * h);
            INFO("trial " << trial << " parameter " << i);
            REQUIRE(close_enough(g.data()(i), numeric));
        }
    }
}

TEST_CASE("gradient at matched targets is zero and mean-invariant") {
    std::mt19937_64 rng(4);
    const auto p = init_qnet(3, 4, 9);
    const auto s1 = random_state(rng, 3, 3);
    const auto s2 = random_state(rng, 3, 3);
    std::vector<RegressionSample> exact{{&s1, 0, forward(p, s1)(0)}, {&s2, 2, forward(p, s2)(2)}};
    REQUIRE(gradient(p, exact).data().isZero(0.0));
    std::vector<RegressionSample> batch{{&s1, 1, 0.7}, {&s2, 0, -0.2}};
    std::vector<RegressionSample> doubled{batch[0], batch[1], batch[0], batch[1]};
    REQUIRE(gradient(p, doubled).data().isApprox(gradient(p, batch).data(), 1e-14));
    REQUIRE_THROWS_AS(gradient(p, std::vector<RegressionSample>{}), ArgumentError);
}

TEST_CASE("forward is independent of batch composition") {
    std::mt19937_64 rng(5);
    const auto p = init_qnet(2, 3, 1);
    const auto a = random_state(rng, 4, 2);
    const auto b = random_state(rng, 4, 2);
    const QValues alone = forward(p, a);
    forward(p, b);
    REQUIRE(forward(p, a) == alone);
}

TEST_CASE("Adam step behaviour") {
    auto p = init_qnet(2, 2, 3);
    const auto before = p;
    auto opt = make_optimizer(p);
    QNetParams zero(2, 2);
    adam_step(p, zero, opt);
    REQUIRE(p == before);

    auto q = before;
    auto opt2 = make_optimizer(q);
    QNetParams g(2, 2);
    for (Eigen::Index i = 0; i < g.data().size(); ++i) g.data()(i) = (i % 2 ? 1.0 : -1.0) * (0.01 + i);
    adam_step(q, g, opt2);
    const Eigen::VectorXd delta = q.data() - before.data();
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
        REQUIRE(delta(i) == Catch::Approx(-1e-3 * (g.data()(i) > 0 ? 1.0 : -1.0)).epsilon(1e-5));
    }

    auto r1 = before, r2 = before;
    auto o1 = make_optimizer(r1), o2 = make_optimizer(r2);
    adam_step(r1, g, o1);
    adam_step(r2, g, o2);
    REQUIRE(r1 == r2);
    REQUIRE(o1 == o2);

    QNetParams bad(2, 2);
    bad.data()(0) = std::nan("");
    const auto snapshot = r1;
    const auto opt_snapshot = o1;
    REQUIRE_THROWS_AS(adam_step(r1, bad, o1), NumericError);
    REQUIRE(r1 == snapshot);
    REQUIRE(o1 == opt_snapshot);
}

TEST_CASE("overfitting a fixed batch lowers the loss every step") {
    std::mt19937_64 rng(6);
    auto p = init_qnet(3, 4, 5);
    std::vector<StateWindow> states;
    for (int i = 0; i < 4; ++i) states.push_back(random_state(rng, 3, 3));
    std::vector<RegressionSample> batch{{&states[0], 0, 0.5}, {&states[1], 1, -0.3}, {&states[2], 2, 0.8}, {&states[3], 0, -0.6}};
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;
    auto opt = make_optimizer(p, cfg);
    double last = mse_loss(p, batch);
    for (int step = 0; step < 100; ++step) {
        adam_step(p, gradient(p, batch), opt);
        const double now = mse_loss(p, batch);
        REQUIRE(now < last);
        last = now;
    }
}

TEST_CASE("global norm clipping") {
    QNetParams g(1, 1);
    g.data().setConstant(3.0);
    const double norm = std::sqrt(9.0 * g.size());
    REQUIRE(clip_global_norm(g, 5.0) == Catch::Approx(norm));
    REQUIRE(g.data().norm() == Catch::Approx(5.0));
    QNetParams h(1, 1);
    h.data().setConstant(3.0);
    clip_global_norm(h, 0.0);
    REQUIRE(h.data()(0) == 3.0);
}

TEST_CASE("checkpoint round-trip is lossless") {
    auto p = init_qnet(3, 4, 77);
    auto opt = make_optimizer(p);
    QNetParams g(3, 4);
    g.data().setLinSpaced(-1.0, 1.0);
    adam_step(p, g, opt);
    const auto path = std::filesystem::temp_directory_path() / "qtrade_ck.json";
    save_checkpoint(path, p, &opt);
    const auto ck = load_checkpoint(path);
    REQUIRE(ck.params == p);
    REQUIRE(ck.optimizer.has_value());
    REQUIRE(*ck.optimizer == opt);
    std::filesystem::remove(path);
    REQUIRE(parse_checkpoint(checkpoint_json(p)).params == p);
    REQUIRE_THROWS(parse_checkpoint("{\"format\":\"other\"}"));
}
