#pragma once

#include "qtrade/market_data.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qtrade {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rolling factor kernels. Every kernel at bar t reads bars <= t only.
enum class FactorKind {
    ret,             // close_t / close_{t-k} - 1
    log_ret,         // ln(close_t / close_{t-k})
    volatility,      // population std of the last k one-bar returns
    momentum,        // close_t - close_{t-k}
    rolling_mean,    // mean close over the last k bars
    rolling_max,     // max close over the last k bars
    rolling_min,     // min close over the last k bars
    volume_z,        // z-score of volume_t against the last k volumes
    range_ratio,     // (max high - min low) / close_t over the last k bars
    range_position,  // (close_t - min low) / (max high - min low); 0.5 on a zero range
    ema_diff,        // EMA_k(close) - EMA_2k(close), seeded at the first close
    skew,            // population skewness of the last k one-bar returns
};

std::string to_string(FactorKind kind);
std::optional<FactorKind> parse_factor_kind(const std::string& id);

struct FactorSpec {
    std::string name;
    FactorKind kind = FactorKind::ret;
    std::size_t window = 1;

    /// Number of leading bars for which the kernel is undefined.
    std::size_t warmup() const;
};

/// All twelve kernels over k in {3, 5, 10, 20}: 48 factor columns.
std::vector<FactorSpec> default_factor_set();

/// Parses "default", "none" or a comma-separated list of `formula:window`
/// pairs, e.g. "ret:3, volatility:10".
std::vector<FactorSpec> parse_factor_list(const std::string& text);

/// Per-bar factor values. The first six columns are the raw bar fields
/// (open, high, low, close, volume, amount); factor columns follow in
/// declaration order. Rows whose lookback is incomplete are marked invalid and
/// hold NaN in the affected columns.
struct FeatureMatrix {
    RowMatrix values;
    std::vector<std::string> columns;
    std::vector<std::uint8_t> valid;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const noexcept { return static_cast<std::size_t>(values.cols()); }
    bool is_valid(std::size_t row) const { return row < valid.size() && valid[row] != 0; }
    /// Index of the first valid row, or rows() if none.
    std::size_t first_valid() const;
};

/// L consecutive valid feature rows ending at bar t, oldest first.
struct StateWindow {
    RowMatrix rows;

    std::size_t length() const noexcept { return static_cast<std::size_t>(rows.rows()); }
    std::size_t width() const noexcept { return static_cast<std::size_t>(rows.cols()); }
    bool operator==(const StateWindow& other) const {
        return rows.rows() == other.rows.rows() && rows.cols() == other.rows.cols() &&
               rows == other.rows;
    }
};

inline constexpr std::size_t kRawColumns = 6;

FeatureMatrix compute_features(const BarSeries& series, std::span<const FactorSpec> factors);

/// Trailing z-score over (up to) the last `norm_window` valid rows, per column.
/// Zero-variance windows map to 0; results are clipped to [-10, 10]. Validity is
/// carried over from the input.
FeatureMatrix normalize(const FeatureMatrix& matrix, std::size_t norm_window);

inline constexpr double kNormClip = 10.0;

bool state_available(const FeatureMatrix& matrix, std::size_t t, std::size_t length);

/// Throws StateError when any of rows t-L+1..t is missing or invalid.
StateWindow build_state(const FeatureMatrix& matrix, std::size_t t, std::size_t length);

/// `timestamp,<column>...` rows; invalid cells are written as empty fields.
void write_features_csv(std::ostream& out, const BarSeries& series, const FeatureMatrix& matrix);

}  // namespace qtrade
