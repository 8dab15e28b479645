#pragma once

#include "qtrade/agent_training.hpp"
#include "qtrade/backtest.hpp"
#include "qtrade/config.hpp"
#include "qtrade/expert.hpp"
#include "qtrade/features.hpp"
#include "qtrade/market_data.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qtrade {

/// Data, features and ranges derived from a RunConfig.
struct Pipeline {
    explicit Pipeline(RunConfig cfg);

    RunConfig config;
    BarSeries series;
    FeatureMatrix features;  // normalised
    IndexRange train_range;
    IndexRange test_range;
    ExpertTrajectory expert;

    TrainingData training_data() const;
    BacktestSetup backtest_setup() const;
};

TrainResult train_method(const Pipeline& pipeline, Method method, const CheckpointCallback& on_checkpoint = {});

struct CommandOptions {
    bool dump_features = false;
    bool dump_expert = false;
};

/// Writes the synthetic series as bar CSV.
void cmd_synth(const SynthSpec& spec, std::uint64_t seed, const std::filesystem::path& out);

/// Trains `method` (the config's when omitted). Writes checkpoint_<method>.json
/// and training_log_<method>.csv to the run directory and returns it.
std::filesystem::path cmd_train(const std::filesystem::path& config_path, std::optional<Method> method,
                                const CommandOptions& options = {});

/// Backtests each strategy (the config's list when empty) over the test range.
/// Learned strategies load checkpoint_<method>.json from the run directory and
/// train it first when absent; `checkpoint` adds a strategy named "checkpoint".
std::filesystem::path cmd_backtest(const std::filesystem::path& config_path, std::vector<std::string> strategies,
                                   const std::optional<std::filesystem::path>& checkpoint = std::nullopt,
                                   const CommandOptions& options = {});

/// One backtest per value of `parameter` ("stop_loss_k" or "frequency") for a
/// single strategy. Writes sweep_<parameter>_<strategy>.csv and returns its path.
std::filesystem::path cmd_sweep(const std::filesystem::path& config_path, const std::string& parameter,
                                const std::vector<int>& values, const std::string& strategy);

}  // namespace qtrade
