#include "qtrade/features.hpp"

#include "qtrade/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>
#include <utility>

namespace qtrade {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::array<std::pair<FactorKind, const char*>, 12> kKindNames{{
    {FactorKind::ret, "ret"},
    {FactorKind::log_ret, "log_ret"},
    {FactorKind::volatility, "volatility"},
    {FactorKind::momentum, "momentum"},
    {FactorKind::rolling_mean, "rolling_mean"},
    {FactorKind::rolling_max, "rolling_max"},
    {FactorKind::rolling_min, "rolling_min"},
    {FactorKind::volume_z, "volume_z"},
    {FactorKind::range_ratio, "range_ratio"},
    {FactorKind::range_position, "range_position"},
    {FactorKind::ema_diff, "ema_diff"},
    {FactorKind::skew, "skew"},
}};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t");
    return std::string(s.substr(first, last - first + 1));
}

// Population mean/std of a window; std is reported as 0 when the spread is at
// the rounding level of the data.
struct Moments {
    double mean = 0.0;
    double std = 0.0;
    double m3 = 0.0;
};

template <typename Get>
Moments window_moments(std::size_t first, std::size_t last, Get&& get) {
    Moments m;
    const double n = static_cast<double>(last - first + 1);
    double sum = 0.0;
    double max_abs = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
        sum += get(i);
        max_abs = std::max(max_abs, std::abs(get(i)));
    }
    m.mean = sum / n;
    double m2 = 0.0;
    double m3 = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
        const double d = get(i) - m.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m.std = std::sqrt(m2);
    if (m.std <= 1e-12 * max_abs) {
        m.std = 0.0;
    }
    m.m3 = m3;
    return m;
}

std::vector<double> ema(const std::vector<double>& x, std::size_t period) {
    std::vector<double> out(x.size());
    const double alpha = 2.0 / (static_cast<double>(period) + 1.0);
    for (std::size_t t = 0; t < x.size(); ++t) {
        out[t] = t == 0 ? x[0] : out[t - 1] + alpha * (x[t] - out[t - 1]);
    }
    return out;
}

void fill_factor(const BarSeries& series, const FactorSpec& spec, Eigen::Ref<Eigen::VectorXd> col) {
    const auto& bars = series.bars();
    const std::size_t n = bars.size();
    const std::size_t k = spec.window;
    auto close = [&](std::size_t i) { return bars[i].close; };
    auto one_bar_return = [&](std::size_t i) { return bars[i].close / bars[i - 1].close - 1.0; };

    std::vector<double> ema_fast;
    std::vector<double> ema_slow;
    if (spec.kind == FactorKind::ema_diff) {
        const auto closes = series.closes();
        ema_fast = ema(closes, k);
        ema_slow = ema(closes, 2 * k);
    }

    const std::size_t warm = spec.warmup();
    for (std::size_t t = 0; t < n; ++t) {
        if (t < warm) {
            col[static_cast<Eigen::Index>(t)] = kNaN;
            continue;
        }
        double v = 0.0;
        switch (spec.kind) {
            case FactorKind::ret:
                v = close(t) / close(t - k) - 1.0;
                break;
            case FactorKind::log_ret:
                v = std::log(close(t) / close(t - k));
                break;
            case FactorKind::momentum:
                v = close(t) - close(t - k);
                break;
            case FactorKind::volatility:
                v = window_moments(t - k + 1, t, one_bar_return).std;
                break;
            case FactorKind::skew: {
                const auto m = window_moments(t - k + 1, t, one_bar_return);
                v = m.std > 0.0 ? m.m3 / (m.std * m.std * m.std) : 0.0;
                break;
            }
            case FactorKind::rolling_mean:
                v = window_moments(t + 1 - k, t, close).mean;
                break;
            case FactorKind::rolling_max: {
                v = close(t);
                for (std::size_t i = t + 1 - k; i < t; ++i) v = std::max(v, close(i));
                break;
            }
            case FactorKind::rolling_min: {
                v = close(t);
                for (std::size_t i = t + 1 - k; i < t; ++i) v = std::min(v, close(i));
                break;
            }
            case FactorKind::volume_z: {
                const auto m = window_moments(t + 1 - k, t, [&](std::size_t i) { return bars[i].volume; });
                v = m.std > 0.0 ? (bars[t].volume - m.mean) / m.std : 0.0;
                break;
            }
            case FactorKind::range_ratio:
            case FactorKind::range_position: {
                double hh = bars[t].high;
                double ll = bars[t].low;
                for (std::size_t i = t + 1 - k; i < t; ++i) {
                    hh = std::max(hh, bars[i].high);
                    ll = std::min(ll, bars[i].low);
                }
                if (spec.kind == FactorKind::range_ratio) {
                    v = (hh - ll) / close(t);
                } else {
                    v = hh > ll ? (close(t) - ll) / (hh - ll) : 0.5;
                }
                break;
            }
            case FactorKind::ema_diff:
                v = ema_fast[t] - ema_slow[t];
                break;
        }
        col[static_cast<Eigen::Index>(t)] = v;
    }
}

}  // namespace

std::string to_string(FactorKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

std::optional<FactorKind> parse_factor_kind(const std::string& id) {
    for (const auto& [k, name] : kKindNames) {
        if (id == name) return k;
    }
    return std::nullopt;
}

std::size_t FactorSpec::warmup() const {
    switch (kind) {
        case FactorKind::ret:
        case FactorKind::log_ret:
        case FactorKind::momentum:
        case FactorKind::volatility:
        case FactorKind::skew:
            return window;
        case FactorKind::ema_diff:
            return 2 * window - 1;
        default:
            return window - 1;
    }
}

std::vector<FactorSpec> default_factor_set() {
    std::vector<FactorSpec> out;
    for (const auto& [kind, name] : kKindNames) {
        for (std::size_t k : {3u, 5u, 10u, 20u}) {
            out.push_back({fmt::format("{}_{}", name, k), kind, k});
        }
    }
    return out;
}

std::vector<FactorSpec> parse_factor_list(const std::string& text) {
    const std::string trimmed = trim(text);
    if (trimmed == "default") {
        return default_factor_set();
    }
    std::vector<FactorSpec> out;
    if (trimmed.empty() || trimmed == "none") {
        return out;
    }
    std::string_view rest(trimmed);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string item = trim(rest.substr(0, comma));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            throw ArgumentError(fmt::format("factor '{}' must be written as formula:window", item));
        }
        const std::string id = trim(item.substr(0, colon));
        const std::string win = trim(item.substr(colon + 1));
        const auto kind = parse_factor_kind(id);
        if (!kind) {
            throw ArgumentError(fmt::format("unknown factor formula '{}'", id));
        }
        std::size_t window = 0;
        auto [ptr, ec] = std::from_chars(win.data(), win.data() + win.size(), window);
        if (ec != std::errc{} || ptr != win.data() + win.size() || window == 0) {
            throw ArgumentError(fmt::format("bad factor window '{}' for '{}'", win, id));
        }
        out.push_back({fmt::format("{}_{}", id, window), *kind, window});
    }
    return out;
}

std::size_t FeatureMatrix::first_valid() const {
    for (std::size_t i = 0; i < valid.size(); ++i) {
        if (valid[i]) return i;
    }
    return valid.size();
}

FeatureMatrix compute_features(const BarSeries& series, std::span<const FactorSpec> factors) {
    if (series.empty()) {
        throw ArgumentError("cannot compute features of an empty series");
    }
    std::set<std::string> names;
    for (const auto& f : factors) {
        if (f.window == 0) {
            throw ArgumentError(fmt::format("factor '{}' has a zero window", f.name));
        }
        if (f.window > series.size()) {
            throw ArgumentError(fmt::format("factor '{}' window {} exceeds series length {}", f.name,
                                            f.window, series.size()));
        }
        if (!names.insert(f.name).second) {
            throw ArgumentError(fmt::format("duplicate factor name '{}'", f.name));
        }
    }

    const std::size_t n = series.size();
    FeatureMatrix m;
    m.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kRawColumns + factors.size()));
    m.columns = {"open", "high", "low", "close", "volume", "amount"};
    for (std::size_t t = 0; t < n; ++t) {
        const Bar& b = series[t];
        const auto r = static_cast<Eigen::Index>(t);
        m.values(r, 0) = b.open;
        m.values(r, 1) = b.high;
        m.values(r, 2) = b.low;
        m.values(r, 3) = b.close;
        m.values(r, 4) = b.volume;
        m.values(r, 5) = b.amount;
    }

    std::size_t warm = 0;
    Eigen::VectorXd column(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < factors.size(); ++j) {
        fill_factor(series, factors[j], column);
        m.values.col(static_cast<Eigen::Index>(kRawColumns + j)) = column;
        m.columns.push_back(factors[j].name);
        warm = std::max(warm, factors[j].warmup());
    }
    m.valid.assign(n, 0);
    for (std::size_t t = warm; t < n; ++t) {
        m.valid[t] = 1;
    }
    return m;
}

FeatureMatrix normalize(const FeatureMatrix& matrix, std::size_t norm_window) {
    if (norm_window < 2) {
        throw ArgumentError("normalisation window must be at least 2");
    }
    FeatureMatrix out = matrix;
    std::vector<std::size_t> valid_rows;
    for (std::size_t t = 0; t < matrix.rows(); ++t) {
        if (matrix.is_valid(t)) valid_rows.push_back(t);
    }
    for (std::size_t p = 0; p < valid_rows.size(); ++p) {
        const std::size_t first = p + 1 >= norm_window ? p + 1 - norm_window : 0;
        const auto row = static_cast<Eigen::Index>(valid_rows[p]);
        for (Eigen::Index c = 0; c < matrix.values.cols(); ++c) {
            const auto m = window_moments(first, p, [&](std::size_t q) {
                return matrix.values(static_cast<Eigen::Index>(valid_rows[q]), c);
            });
            double z = m.std > 0.0 ? (matrix.values(row, c) - m.mean) / m.std : 0.0;
            out.values(row, c) = std::clamp(z, -kNormClip, kNormClip);
        }
    }
    return out;
}

bool state_available(const FeatureMatrix& matrix, std::size_t t, std::size_t length) {
    if (length == 0 || t >= matrix.rows() || t + 1 < length) {
        return false;
    }
    for (std::size_t i = t + 1 - length; i <= t; ++i) {
        if (!matrix.is_valid(i)) return false;
    }
    return true;
}

StateWindow build_state(const FeatureMatrix& matrix, std::size_t t, std::size_t length) {
    if (!state_available(matrix, t, length)) {
        throw StateError(fmt::format("state unavailable at bar {} (window {}, first valid row {})", t,
                                     length, matrix.first_valid()));
    }
    StateWindow s;
    s.rows = matrix.values.middleRows(static_cast<Eigen::Index>(t + 1 - length),
                                      static_cast<Eigen::Index>(length));
    return s;
}

void write_features_csv(std::ostream& out, const BarSeries& series, const FeatureMatrix& matrix) {
    out << "timestamp";
    for (const auto& c : matrix.columns) out << ',' << c;
    out << '\n';
    for (std::size_t t = 0; t < matrix.rows(); ++t) {
        out << series[t].timestamp;
        for (Eigen::Index c = 0; c < matrix.values.cols(); ++c) {
            const double v = matrix.values(static_cast<Eigen::Index>(t), c);
            out << ',';
            if (std::isfinite(v)) out << fmt::format("{}", v);
        }
        out << '\n';
    }
}

}  // namespace qtrade
