#include "qtrade/market_data.hpp"

#include "qtrade/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string_view>

namespace qtrade {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;
constexpr std::string_view kHeader = "timestamp,open,high,low,close,volume,amount";

std::string describe(const Bar& bar) {
    return fmt::format("timestamp {}", bar.timestamp);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

}  // namespace

std::int64_t utc_day(std::int64_t timestamp) {
    // floor division so pre-epoch timestamps land on the right day
    std::int64_t day = timestamp / kSecondsPerDay;
    if (timestamp % kSecondsPerDay < 0) {
        --day;
    }
    return day;
}

std::optional<std::string> bar_violation(const Bar& bar) {
    for (double p : {bar.open, bar.high, bar.low, bar.close}) {
        if (!std::isfinite(p) || p <= 0.0) {
            return "prices must be finite and positive";
        }
    }
    if (!std::isfinite(bar.volume) || bar.volume < 0.0) {
        return "volume must be finite and non-negative";
    }
    if (!std::isfinite(bar.amount) || bar.amount < 0.0) {
        return "amount must be finite and non-negative";
    }
    if (bar.low > bar.high) {
        return "high < low";
    }
    if (bar.low > std::min(bar.open, bar.close)) {
        return "low above min(open, close)";
    }
    if (bar.high < std::max(bar.open, bar.close)) {
        return "high below max(open, close)";
    }
    return std::nullopt;
}

std::size_t BarSeries::session_index(std::size_t bar) const {
    if (bar >= bars_.size()) {
        throw ArgumentError(fmt::format("bar index {} out of range (size {})", bar, bars_.size()));
    }
    return session_of_bar_[bar];
}

std::vector<double> BarSeries::closes() const {
    std::vector<double> out;
    out.reserve(bars_.size());
    for (const auto& b : bars_) {
        out.push_back(b.close);
    }
    return out;
}

BarSeries make_series(std::vector<Bar> bars, int frequency_minutes) {
    if (frequency_minutes <= 0) {
        throw ArgumentError("frequency must be a positive number of minutes");
    }
    const std::int64_t step = static_cast<std::int64_t>(frequency_minutes) * 60;

    BarSeries series;
    series.frequency_ = frequency_minutes;
    series.session_of_bar_.reserve(bars.size());

    for (std::size_t i = 0; i < bars.size(); ++i) {
        if (auto bad = bar_violation(bars[i])) {
            throw ValidationError(fmt::format("bar {} ({}): {}", i, describe(bars[i]), *bad));
        }
        if (i == 0 || utc_day(bars[i].timestamp) != utc_day(bars[i - 1].timestamp)) {
            if (i > 0 && bars[i].timestamp <= bars[i - 1].timestamp) {
                throw OrderingError(fmt::format("bar {} ({}): timestamps not strictly increasing", i,
                                                describe(bars[i])));
            }
            if (!series.sessions_.empty()) {
                series.sessions_.back().end = i;
            }
            series.sessions_.push_back({i, i});
        } else {
            const std::int64_t gap = bars[i].timestamp - bars[i - 1].timestamp;
            if (gap <= 0) {
                throw OrderingError(fmt::format("bar {} ({}): timestamps not strictly increasing", i,
                                                describe(bars[i])));
            }
            if (gap != step) {
                throw ValidationError(fmt::format(
                    "bar {} ({}): in-session spacing {}s differs from the {}-minute frequency", i,
                    describe(bars[i]), gap, frequency_minutes));
            }
        }
        series.session_of_bar_.push_back(series.sessions_.size() - 1);
    }
    if (!series.sessions_.empty()) {
        series.sessions_.back().end = bars.size();
    }
    series.bars_ = std::move(bars);
    return series;
}

BarSeries parse_bars(std::istream& in, int frequency_minutes) {
    std::string line;
    std::size_t line_no = 0;

    auto strip_cr = [](std::string& s) {
        if (!s.empty() && s.back() == '\r') {
            s.pop_back();
        }
    };

    if (!std::getline(in, line)) {
        throw ParseError("missing header", 1);
    }
    ++line_no;
    strip_cr(line);
    if (line != kHeader) {
        throw ParseError(fmt::format("expected header '{}'", kHeader), line_no);
    }

    std::vector<Bar> bars;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) {
            continue;
        }
        std::string_view rest(line);
        std::string_view fields[7];
        std::size_t count = 0;
        while (true) {
            const auto comma = rest.find(',');
            if (count == 7) {
                ++count;
                break;
            }
            fields[count++] = rest.substr(0, comma);
            if (comma == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(comma + 1);
        }
        if (count != 7) {
            throw ParseError("expected 7 comma-separated fields", line_no);
        }

        Bar bar;
        if (!parse_number(fields[0], bar.timestamp)) {
            throw ParseError(fmt::format("bad timestamp '{}'", fields[0]), line_no);
        }
        double* targets[6] = {&bar.open, &bar.high, &bar.low, &bar.close, &bar.volume, &bar.amount};
        for (std::size_t k = 0; k < 6; ++k) {
            if (!parse_number(fields[k + 1], *targets[k])) {
                throw ParseError(fmt::format("bad number '{}'", fields[k + 1]), line_no);
            }
        }
        if (auto bad = bar_violation(bar)) {
            throw ValidationError(fmt::format("row at line {} ({}): {}", line_no, describe(bar), *bad));
        }
        if (!bars.empty() && bar.timestamp <= bars.back().timestamp) {
            throw OrderingError(fmt::format("row at line {} ({}): timestamp not after previous row",
                                            line_no, describe(bar)));
        }
        bars.push_back(bar);
    }
    return make_series(std::move(bars), frequency_minutes);
}

BarSeries load_bars(const std::filesystem::path& path, int frequency_minutes) {
    std::ifstream in(path);
    if (!in) {
        throw ArgumentError(fmt::format("cannot open bar file '{}'", path.string()));
    }
    try {
        return parse_bars(in, frequency_minutes);
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()), e.line());
    }
}

void write_bars(std::ostream& out, const BarSeries& series) {
    out << kHeader << '\n';
    for (const auto& b : series.bars()) {
        out << fmt::format("{},{},{},{},{},{},{}\n", b.timestamp, b.open, b.high, b.low, b.close,
                           b.volume, b.amount);
    }
}

void write_bars(const std::filesystem::path& path, const BarSeries& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ArgumentError(fmt::format("cannot write bar file '{}'", path.string()));
    }
    write_bars(out, series);
}

BarSeries aggregate(const BarSeries& series, int target_frequency_minutes) {
    const int base = series.frequency_minutes();
    if (target_frequency_minutes <= 0 || base <= 0 || target_frequency_minutes % base != 0) {
        throw ArgumentError(fmt::format("target frequency {} is not a positive multiple of {}",
                                        target_frequency_minutes, base));
    }
    const std::size_t group = static_cast<std::size_t>(target_frequency_minutes / base);
    if (group == 1) {
        return series;
    }

    std::vector<Bar> out;
    for (const auto& session : series.sessions()) {
        for (std::size_t first = session.begin; first < session.end; first += group) {
            const std::size_t last = std::min(first + group, session.end);
            Bar agg = series[first];
            for (std::size_t i = first + 1; i < last; ++i) {
                const Bar& b = series[i];
                agg.high = std::max(agg.high, b.high);
                agg.low = std::min(agg.low, b.low);
                agg.close = b.close;
                agg.volume += b.volume;
                agg.amount += b.amount;
            }
            out.push_back(agg);
        }
    }
    return make_series(std::move(out), target_frequency_minutes);
}

IndexRange day_range(const BarSeries& series, std::optional<std::int64_t> first_day,
                     std::optional<std::int64_t> end_day) {
    const auto& bars = series.bars();
    auto day_lower = [&](std::int64_t day) {
        auto it = std::lower_bound(bars.begin(), bars.end(), day, [](const Bar& b, std::int64_t d) {
            return utc_day(b.timestamp) < d;
        });
        return static_cast<std::size_t>(it - bars.begin());
    };
    IndexRange r{0, bars.size()};
    if (first_day) {
        r.begin = day_lower(*first_day);
    }
    if (end_day) {
        r.end = day_lower(*end_day);
    }
    if (r.end < r.begin) {
        r.end = r.begin;
    }
    return r;
}

std::int64_t parse_date(const std::string& text) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
        !parse_number(std::string_view(text).substr(0, 4), y) ||
        !parse_number(std::string_view(text).substr(5, 2), m) ||
        !parse_number(std::string_view(text).substr(8, 2), d)) {
        throw ArgumentError(fmt::format("bad date '{}', expected YYYY-MM-DD", text));
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) {
        throw ArgumentError(fmt::format("bad date '{}'", text));
    }
    return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

std::optional<SynthKind> parse_synth_kind(const std::string& name) {
    if (name == "sine") return SynthKind::sine;
    if (name == "trend") return SynthKind::trend;
    if (name == "random-walk" || name == "random_walk") return SynthKind::random_walk;
    if (name == "regime-switch" || name == "regime_switch") return SynthKind::regime_switch;
    return std::nullopt;
}

std::string to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::sine: return "sine";
        case SynthKind::trend: return "trend";
        case SynthKind::random_walk: return "random-walk";
        case SynthKind::regime_switch: return "regime-switch";
    }
    return "unknown";
}

void SynthSpec::validate() const {
    if (length == 0) throw ArgumentError("synth length must be positive");
    if (!(base_price > 0.0)) throw ArgumentError("synth base price must be positive");
    if (bars_per_day == 0) throw ArgumentError("synth bars-per-day must be positive");
    if (frequency_minutes <= 0) throw ArgumentError("synth frequency must be positive");
    if (volatility < 0.0) throw ArgumentError("synth volatility must be non-negative");
    if (kind == SynthKind::sine) {
        if (!(period > 0.0)) throw ArgumentError("sine period must be positive");
        if (std::abs(amplitude) >= base_price) {
            throw ArgumentError("sine amplitude must be smaller than the base price");
        }
    }
    if (switch_probability < 0.0 || switch_probability > 1.0) {
        throw ArgumentError("switch probability must lie in [0, 1]");
    }
    const std::int64_t tod = start_timestamp - utc_day(start_timestamp) * kSecondsPerDay;
    const std::int64_t span = static_cast<std::int64_t>(bars_per_day - 1) * frequency_minutes * 60;
    if (tod + span >= kSecondsPerDay) {
        throw ArgumentError("a synthetic session would cross a UTC day boundary");
    }
}

BarSeries synth_series(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double floor_price = 0.01 * spec.base_price;
    std::vector<double> close(spec.length);
    double level = spec.base_price;
    double regime = 1.0;
    for (std::size_t t = 0; t < spec.length; ++t) {
        const double td = static_cast<double>(t);
        const double noise = spec.volatility > 0.0 ? spec.volatility * normal(rng) : 0.0;
        double value = 0.0;
        switch (spec.kind) {
            case SynthKind::sine:
                value = spec.base_price +
                        spec.amplitude * std::sin(2.0 * std::numbers::pi * td / spec.period) + noise;
                break;
            case SynthKind::trend:
                value = spec.base_price + spec.drift * td + noise;
                break;
            case SynthKind::random_walk:
                if (t > 0) level += spec.drift + noise;
                value = level;
                break;
            case SynthKind::regime_switch:
                if (t > 0) {
                    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec.switch_probability) {
                        regime = -regime;
                    }
                    level += regime * spec.drift + noise;
                }
                value = level;
                break;
        }
        value = std::max(value, floor_price);
        level = value;
        close[t] = value;
    }

    const bool noisy = spec.volatility > 0.0;
    std::vector<Bar> bars(spec.length);
    const std::int64_t step = static_cast<std::int64_t>(spec.frequency_minutes) * 60;
    for (std::size_t t = 0; t < spec.length; ++t) {
        Bar& b = bars[t];
        const auto day = static_cast<std::int64_t>(t / spec.bars_per_day);
        const auto slot = static_cast<std::int64_t>(t % spec.bars_per_day);
        b.timestamp = spec.start_timestamp + day * kSecondsPerDay + slot * step;
        b.close = close[t];
        b.open = t > 0 ? close[t - 1] : close[t];
        double up = 0.0;
        double down = 0.0;
        if (noisy) {
            up = 0.5 * spec.volatility * std::abs(normal(rng));
            down = 0.5 * spec.volatility * std::abs(normal(rng));
        }
        b.high = std::max(b.open, b.close) + up;
        b.low = std::max(std::min(b.open, b.close) - down, 0.5 * floor_price);
        b.volume = noisy ? std::round(1000.0 * std::exp(0.25 * normal(rng))) : 1000.0;
        b.amount = b.volume * b.close;
    }
    return make_series(std::move(bars), spec.frequency_minutes);
}

}  // namespace qtrade
