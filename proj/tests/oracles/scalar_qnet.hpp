#pragma once

// Plain-loop reference implementations of the Q-network forward pass and the
// TD losses. They read the flat parameter vector directly (documented layout)
// and share no code with the library's Eigen implementation.

#include "qtrade/agent_training.hpp"
#include "qtrade/qnet.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace qtrade::oracle {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::array<double, 3> lstm_q(const QNetParams& p, const StateWindow& s) {
    const std::size_t C = p.input_size();
    const std::size_t H = p.hidden_size();
    const double* w = p.data().data();
    const double* wx = w;
    const double* wh = wx + 4 * H * C;
    const double* b = wh + 4 * H * H;
    const double* hw = b + 4 * H;
    const double* hb = hw + 3 * H;

    std::vector<double> h(H, 0.0), c(H, 0.0), z(4 * H);
    for (std::size_t t = 0; t < s.length(); ++t) {
        for (std::size_t r = 0; r < 4 * H; ++r) {
            double acc = b[r];
            for (std::size_t k = 0; k < C; ++k) acc += wx[r * C + k] * s.rows(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
            for (std::size_t k = 0; k < H; ++k) acc += wh[r * H + k] * h[k];
            z[r] = acc;
        }
        for (std::size_t j = 0; j < H; ++j) {
            const double ig = sigmoid(z[j]);
            const double fg = sigmoid(z[H + j]);
            const double gg = std::tanh(z[2 * H + j]);
            const double og = sigmoid(z[3 * H + j]);
            c[j] = fg * c[j] + ig * gg;
            h[j] = og * std::tanh(c[j]);
        }
    }
    std::array<double, 3> q{};
    for (std::size_t a = 0; a < 3; ++a) {
        double acc = hb[a];
        for (std::size_t k = 0; k < H; ++k) acc += hw[a * H + k] * h[k];
        q[a] = acc;
    }
    return q;
}

inline double max3(const std::array<double, 3>& q) {
    double m = q[0];
    if (q[1] > m) m = q[1];
    if (q[2] > m) m = q[2];
    return m;
}

inline int slot(Action a) { return static_cast<int>(a) + 1; }

/// Mean over the batch of (y - Q(s, a))^2, y = r + gamma max Q(s', .) or r at a terminal.
inline double td_loss(const std::vector<Transition>& batch, const QNetParams& p, double gamma, bool expert_side) {
    double total = 0.0;
    for (const auto& tr : batch) {
        const auto q = lstm_q(p, tr.state);
        const double r = expert_side ? tr.expert_reward : tr.reward;
        const Action a = expert_side ? tr.expert_action : tr.action;
        double y = r;
        if (tr.next_state) y += gamma * max3(lstm_q(p, *tr.next_state));
        const double e = y - q[static_cast<std::size_t>(slot(a))];
        total += e * e;
    }
    return total / static_cast<double>(batch.size());
}

inline double agent_loss(const std::vector<Transition>& b, const QNetParams& p, double g) {
    return td_loss(b, p, g, false);
}
inline double expert_loss(const std::vector<Transition>& b, const QNetParams& p, double g) {
    return td_loss(b, p, g, true);
}
inline double total_loss(const std::vector<Transition>& b, const QNetParams& p, double g) {
    return 0.5 * (agent_loss(b, p, g) + expert_loss(b, p, g));
}

/// Same losses with every bootstrap value taken from a frozen network, so that
/// the loss is a smooth function of `p` alone (semi-gradient reference).
inline double frozen_target_loss(const std::vector<Transition>& batch, const QNetParams& p,
                                 const QNetParams& frozen, double gamma, bool dual) {
    auto one_side = [&](bool expert_side) {
        double total = 0.0;
        for (const auto& tr : batch) {
            const auto q = lstm_q(p, tr.state);
            const double r = expert_side ? tr.expert_reward : tr.reward;
            const Action a = expert_side ? tr.expert_action : tr.action;
            double y = r;
            if (tr.next_state) y += gamma * max3(lstm_q(frozen, *tr.next_state));
            const double e = y - q[static_cast<std::size_t>(slot(a))];
            total += e * e;
        }
        return total / static_cast<double>(batch.size());
    };
    return dual ? 0.5 * (one_side(false) + one_side(true)) : one_side(false);
}

}  // namespace qtrade::oracle
