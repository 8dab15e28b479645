#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qtrade {

/// One OHLCV + turnover record. Timestamps are UTC epoch seconds.
struct Bar {
    std::int64_t timestamp = 0;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume = 0.0;
    double amount = 0.0;

    bool operator==(const Bar&) const = default;
};

/// Half-open bar index range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
    bool empty() const noexcept { return size() == 0; }
    bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
    bool operator==(const IndexRange&) const = default;
};

/// A validated, session-partitioned bar sequence at a fixed frequency.
///
/// Sessions are the maximal runs of bars sharing a UTC calendar day. Within a
/// session consecutive timestamps differ by exactly `frequency_minutes`.
/// Instances are only produced through `make_series` (and the loaders built on
/// it), so every BarSeries in circulation satisfies these invariants.
class BarSeries {
public:
    BarSeries() = default;

    const std::vector<Bar>& bars() const noexcept { return bars_; }
    const Bar& operator[](std::size_t i) const { return bars_[i]; }
    std::size_t size() const noexcept { return bars_.size(); }
    bool empty() const noexcept { return bars_.empty(); }
    int frequency_minutes() const noexcept { return frequency_; }
    const std::vector<IndexRange>& sessions() const noexcept { return sessions_; }

    std::size_t session_index(std::size_t bar) const;
    const IndexRange& session_of(std::size_t bar) const { return sessions_[session_index(bar)]; }
    bool is_session_final(std::size_t bar) const { return session_of(bar).end == bar + 1; }
    std::vector<double> closes() const;

    bool operator==(const BarSeries&) const = default;

    friend BarSeries make_series(std::vector<Bar> bars, int frequency_minutes);

private:
    std::vector<Bar> bars_;
    int frequency_ = 0;
    std::vector<IndexRange> sessions_;
    std::vector<std::size_t> session_of_bar_;
};

/// Validates bars and infers sessions. Throws ValidationError on OHLC envelope
/// violations, non-increasing timestamps or irregular in-session spacing.
BarSeries make_series(std::vector<Bar> bars, int frequency_minutes);

/// Checks the per-bar envelope invariant; returns a description of the first
/// violation or nullopt.
std::optional<std::string> bar_violation(const Bar& bar);

std::int64_t utc_day(std::int64_t timestamp);

BarSeries load_bars(const std::filesystem::path& path, int frequency_minutes);
BarSeries parse_bars(std::istream& in, int frequency_minutes);
void write_bars(std::ostream& out, const BarSeries& series);
void write_bars(const std::filesystem::path& path, const BarSeries& series);

/// OHLCV aggregation to a coarser multiple of the series frequency. Groups are
/// formed from each session start; a trailing partial group becomes a shorter bar.
BarSeries aggregate(const BarSeries& series, int target_frequency_minutes);

/// Bars whose UTC day lies in [first_day, last_day_exclusive). Either bound may be
/// omitted. The result is a contiguous index range aligned to session boundaries.
IndexRange day_range(const BarSeries& series, std::optional<std::int64_t> first_day,
                     std::optional<std::int64_t> end_day);

/// Parses "YYYY-MM-DD" into a UTC day number.
std::int64_t parse_date(const std::string& text);

enum class SynthKind { sine, trend, random_walk, regime_switch };

std::optional<SynthKind> parse_synth_kind(const std::string& name);
std::string to_string(SynthKind kind);

/// Parameters of a synthetic bar series. `length` counts bars; sessions hold
/// `bars_per_day` bars starting 01:30 UTC on consecutive calendar days.
struct SynthSpec {
    SynthKind kind = SynthKind::sine;
    std::size_t length = 1000;
    double base_price = 100.0;
    double amplitude = 5.0;       // sine
    double period = 20.0;         // sine, in bars
    double drift = 0.0;           // trend, random_walk, regime_switch (per bar)
    double volatility = 0.0;      // per-bar std of close increments
    double switch_probability = 0.01;  // regime_switch
    std::size_t bars_per_day = 48;
    int frequency_minutes = 5;
    std::int64_t start_timestamp = 1609723800;  // 2021-01-04 01:30:00 UTC

    void validate() const;
};

/// Deterministic for a given (spec, seed).
BarSeries synth_series(const SynthSpec& spec, std::uint64_t seed);

}  // namespace qtrade
