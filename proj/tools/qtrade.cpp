#include "qtrade/cli.hpp"
#include "qtrade/errors.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Futures trading with expert-trajectory reinforcement learning"};
    app.require_subcommand(1);

    qtrade::SynthSpec spec;
    std::string kind = "sine";
    std::uint64_t seed = 7;
    std::string out_path;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic bar CSV");
    synth->add_option("--kind", kind, "sine, trend, random-walk or regime-switch")->capture_default_str();
    synth->add_option("--length", spec.length, "Number of bars")->capture_default_str();
    synth->add_option("--base-price", spec.base_price)->capture_default_str();
    synth->add_option("--amplitude", spec.amplitude)->capture_default_str();
    synth->add_option("--period", spec.period, "Sine period in bars")->capture_default_str();
    synth->add_option("--drift", spec.drift, "Per-bar drift")->capture_default_str();
    synth->add_option("--volatility", spec.volatility, "Per-bar noise std")->capture_default_str();
    synth->add_option("--switch-probability", spec.switch_probability)->capture_default_str();
    synth->add_option("--bars-per-day", spec.bars_per_day)->capture_default_str();
    synth->add_option("--frequency", spec.frequency_minutes, "Bar length in minutes")->capture_default_str();
    synth->add_option("--start-timestamp", spec.start_timestamp, "Unix seconds of the first bar")
        ->capture_default_str();
    synth->add_option("--seed", seed)->capture_default_str();
    synth->add_option("--out", out_path, "Output CSV path")->required();

    std::string config_path;
    std::string method_name;
    qtrade::CommandOptions options;
    auto* train = app.add_subcommand("train", "Train a Q-network from a run config");
    train->add_option("config", config_path, "Run config (INI)")->required();
    train->add_option("--method", method_name, "expert_td, dqn or bc (default: the config's)");
    train->add_flag("--dump-features", options.dump_features, "Write features.csv to the run directory");
    train->add_flag("--dump-expert", options.dump_expert, "Write expert_actions.csv to the run directory");

    std::vector<std::string> strategies;
    std::string checkpoint;
    auto* backtest = app.add_subcommand("backtest", "Backtest strategies over the test range");
    backtest->add_option("config", config_path, "Run config (INI)")->required();
    backtest->add_option("--strategy", strategies,
                         "expert_td, dqn, bc, buy_and_hold, macd, dual_thrust or expert (repeatable)")
        ->delimiter(',');
    backtest->add_option("--checkpoint", checkpoint, "Also backtest this checkpoint");
    backtest->add_flag("--dump-features", options.dump_features, "Write features.csv to the run directory");
    backtest->add_flag("--dump-expert", options.dump_expert, "Write expert_actions.csv to the run directory");

    std::string parameter;
    std::vector<int> values;
    std::string sweep_strategy = "expert_td";
    auto* sweep = app.add_subcommand("sweep", "Backtest one strategy across parameter values");
    sweep->add_option("config", config_path, "Run config (INI)")->required();
    sweep->add_option("parameter", parameter, "stop_loss_k or frequency")->required();
    sweep->add_option("--values", values, "Comma-separated values")->delimiter(',');
    sweep->add_option("--strategy", sweep_strategy)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const auto parsed = qtrade::parse_synth_kind(kind);
            if (!parsed) throw qtrade::ArgumentError(fmt::format("unknown synth kind '{}'", kind));
            spec.kind = *parsed;
            qtrade::cmd_synth(spec, seed, out_path);
            std::cout << out_path << "\n";
        } else if (train->parsed()) {
            std::optional<qtrade::Method> method;
            if (!method_name.empty()) {
                method = qtrade::parse_method(method_name);
                if (!method) throw qtrade::ArgumentError(fmt::format("unknown method '{}'", method_name));
            }
            std::cout << qtrade::cmd_train(config_path, method, options).string() << "\n";
        } else if (backtest->parsed()) {
            std::optional<std::filesystem::path> ck;
            if (!checkpoint.empty()) ck = checkpoint;
            std::cout << qtrade::cmd_backtest(config_path, strategies, ck, options).string() << "\n";
        } else if (sweep->parsed()) {
            std::cout << qtrade::cmd_sweep(config_path, parameter, values, sweep_strategy).string() << "\n";
        }
    } catch (const qtrade::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
