#pragma once

#include "qtrade/agent_training.hpp"
#include "qtrade/backtest.hpp"
#include "qtrade/baselines.hpp"
#include "qtrade/features.hpp"
#include "qtrade/market_data.hpp"
#include "qtrade/trading_env.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qtrade {

enum class DataSource { synth, file };
enum class Method { expert_td, dqn, bc };

std::string to_string(DataSource source);
std::string to_string(Method method);
std::optional<Method> parse_method(const std::string& name);

/// Trading frequencies accepted by the pipeline, in minutes.
inline constexpr std::array<int, 7> kSupportedFrequencies{1, 3, 5, 10, 15, 30, 60};

/// Everything a command needs. Parsed from an INI file with sections
/// [data] [synth] [features] [qnet] [train] [env] [backtest] [macd]
/// [dual_thrust] [run]; unknown sections or keys are rejected.
struct RunConfig {
    std::filesystem::path config_dir;  // relative paths resolve against this

    DataSource source = DataSource::synth;
    std::filesystem::path data_path;
    int base_frequency_minutes = 5;  // frequency of the input bars
    int frequency_minutes = 5;       // trading frequency after aggregation
    std::optional<std::int64_t> train_start;
    std::int64_t train_end = 0;      // exclusive, UTC day number
    std::int64_t test_start = 0;
    std::optional<std::int64_t> test_end;  // exclusive
    SynthSpec synth;

    std::string factors = "default";
    std::size_t norm_window = 240;
    std::size_t window = 20;

    Method method = Method::expert_td;
    TrainConfig train;
    EnvConfig env;
    StopLossParams stop;
    MacdParams macd;
    DualThrustParams dual_thrust;
    std::vector<std::string> strategies{"expert_td", "dqn", "bc", "buy_and_hold", "macd", "dual_thrust"};

    std::filesystem::path output_dir = "runs";
    std::uint64_t seed = 7;

    void validate() const;
    /// Every setting, defaults included, as (section.key, value) in a fixed order.
    std::vector<std::pair<std::string, std::string>> echo() const;
    /// FNV-1a over the echo (output_dir excluded).
    std::uint64_t hash() const;
    std::filesystem::path resolved_data_path() const;
    std::filesystem::path run_dir() const;
    std::vector<FactorSpec> factor_specs() const;
};

RunConfig parse_config(std::istream& in, const std::filesystem::path& config_dir);
RunConfig load_config(const std::filesystem::path& path);
/// INI text that parses back to the same configuration.
std::string to_ini(const RunConfig& config);

}  // namespace qtrade
