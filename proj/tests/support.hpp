#pragma once

#include "qtrade/features.hpp"
#include "qtrade/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace qtrade::testing {

inline constexpr std::int64_t kDay0 = 1609723800;  // 2021-01-04 01:30 UTC

/// Bars built from closes: open is the previous close, high/low envelope the
/// two, volume varies a little so volume statistics are not degenerate.
inline BarSeries series_from_closes(const std::vector<double>& closes, std::size_t bars_per_day = 48,
                                    int frequency_minutes = 5) {
    std::vector<Bar> bars;
    bars.reserve(closes.size());
    for (std::size_t i = 0; i < closes.size(); ++i) {
        const std::size_t day = i / bars_per_day;
        const std::size_t slot = i % bars_per_day;
        Bar b;
        b.timestamp = kDay0 + static_cast<std::int64_t>(day) * 86400 +
                      static_cast<std::int64_t>(slot) * frequency_minutes * 60;
        b.close = closes[i];
        b.open = slot == 0 ? closes[i] : closes[i - 1];
        b.high = std::max(b.open, b.close);
        b.low = std::min(b.open, b.close);
        b.volume = 1000.0 + static_cast<double>((i * 37) % 11);
        b.amount = b.volume * b.close;
        bars.push_back(b);
    }
    return make_series(std::move(bars), frequency_minutes);
}

/// Prices on a 0.2 tick grid so that equal consecutive closes occur.
inline std::vector<double> random_closes(std::mt19937_64& rng, std::size_t n, double start = 100.0) {
    std::uniform_int_distribution<int> ticks(-3, 3);
    std::vector<double> out(n);
    int level = static_cast<int>(start * 5);
    for (std::size_t i = 0; i < n; ++i) {
        level = std::max(level + ticks(rng), 50);
        out[i] = level / 5.0;
    }
    return out;
}

/// Random bars with wicks, a random number of bars per session.
inline BarSeries random_ohlc_series(std::mt19937_64& rng, std::size_t sessions, std::size_t bars_per_day) {
    std::normal_distribution<double> step(0.0, 0.5);
    std::uniform_real_distribution<double> wick(0.0, 0.6);
    std::vector<Bar> bars;
    double close = 100.0;
    for (std::size_t d = 0; d < sessions; ++d) {
        for (std::size_t s = 0; s < bars_per_day; ++s) {
            Bar b;
            b.timestamp = kDay0 + static_cast<std::int64_t>(d) * 86400 + static_cast<std::int64_t>(s) * 300;
            b.open = close + step(rng) * 0.3;
            close = std::max(1.0, close + step(rng));
            b.close = close;
            b.high = std::max(b.open, b.close) + wick(rng);
            b.low = std::max(0.5, std::min(b.open, b.close) - wick(rng));
            b.volume = 500.0 + std::floor(wick(rng) * 1000.0);
            b.amount = b.volume * b.close;
            bars.push_back(b);
        }
    }
    return make_series(std::move(bars), 5);
}

/// Raw OHLCV columns only; every row valid.
inline FeatureMatrix raw_features(const BarSeries& series) {
    return compute_features(series, std::vector<FactorSpec>{});
}

}  // namespace qtrade::testing
