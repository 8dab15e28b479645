#include "qtrade/cli.hpp"

#include "qtrade/baselines.hpp"
#include "qtrade/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <future>

namespace qtrade {

namespace {

namespace fs = std::filesystem;

BarSeries load_series(const RunConfig& c) {
    BarSeries base = [&] {
        if (c.source == DataSource::synth) {
            SynthSpec spec = c.synth;
            spec.frequency_minutes = c.base_frequency_minutes;
            return synth_series(spec, c.seed);
        }
        return load_bars(c.resolved_data_path(), c.base_frequency_minutes);
    }();
    if (c.frequency_minutes == c.base_frequency_minutes) return base;
    return aggregate(base, c.frequency_minutes);
}

FeatureMatrix load_features(const BarSeries& series, const RunConfig& c) {
    const auto specs = c.factor_specs();
    return normalize(compute_features(series, specs), c.norm_window);
}

IndexRange checked_range(const BarSeries& series, std::optional<std::int64_t> first,
                         std::optional<std::int64_t> end, const char* what) {
    const IndexRange r = day_range(series, first, end);
    if (r.empty()) {
        throw ValidationError(fmt::format("{} range contains no bars", what));
    }
    return r;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError(fmt::format("cannot write {}", path.string()));
    return out;
}

void save_training(const fs::path& dir, Method method, const TrainResult& result) {
    save_checkpoint(dir / fmt::format("checkpoint_{}.json", to_string(method)), result.params, &result.optimizer);
    auto log = open_out(dir / fmt::format("training_log_{}.csv", to_string(method)));
    result.log.write_csv(log);
}

TrainResult train_and_save(const Pipeline& p, Method method, const fs::path& dir) {
    fs::create_directories(dir);
    CheckpointCallback periodic = [&](std::size_t update, const QNetParams& params, const OptimizerState& opt) {
        const auto path = dir / "checkpoints" / fmt::format("{}_{:06}.json", to_string(method), update + 1);
        fs::create_directories(path.parent_path());
        save_checkpoint(path, params, &opt);
    };
    TrainResult result = train_method(p, method, periodic);
    save_training(dir, method, result);
    return result;
}

QNetParams learned_params(const Pipeline& p, Method method, const fs::path& dir) {
    const auto path = dir / fmt::format("checkpoint_{}.json", to_string(method));
    if (fs::exists(path)) {
        Checkpoint ck = load_checkpoint(path);
        if (ck.params.input_size() != p.features.cols() || ck.params.hidden_size() != p.config.train.hidden_size) {
            throw ValidationError(fmt::format("checkpoint {} does not match the configured network", path.string()));
        }
        return std::move(ck.params);
    }
    return train_and_save(p, method, dir).params;
}

/// Whatever a strategy needs to act; the policy borrows from it.
struct Strategy {
    std::string name;
    std::optional<QNetParams> params;
    std::optional<SignalSeries> signals;
    bool expert = false;
};

Strategy resolve_strategy(const Pipeline& p, const std::string& name, const fs::path& dir) {
    Strategy s{name, std::nullopt, std::nullopt, false};
    const RunConfig& c = p.config;
    if (auto method = parse_method(name)) {
        s.params = learned_params(p, *method, dir);
    } else if (name == "buy_and_hold") {
        s.signals = buy_and_hold(p.series);
    } else if (name == "macd") {
        s.signals = macd_signals(p.series, c.macd);
    } else if (name == "dual_thrust") {
        s.signals = dual_thrust_signals(p.series, c.dual_thrust);
    } else if (name == "expert") {
        s.expert = true;
    } else {
        throw ArgumentError(fmt::format("unknown strategy '{}'", name));
    }
    return s;
}

Policy make_policy(const Strategy& s, const Pipeline& p) {
    if (s.params) return greedy_policy(*s.params, p.features, p.config.window);
    if (s.signals) return signal_policy(*s.signals);
    return trajectory_policy(p.expert);
}

BacktestReport backtest(const Strategy& s, const Pipeline& p, const StopLossParams& stop) {
    BacktestSetup setup = p.backtest_setup();
    setup.stop = stop;
    BacktestReport report = run_backtest(s.name, make_policy(s, p), setup);
    report.config = p.config.echo();
    report.config.emplace_back("backtest.stop_loss_k", fmt::format("{}", stop.k));
    report.config.emplace_back("backtest.stop_loss_enabled", stop.enabled ? "true" : "false");
    return report;
}

void dump(const Pipeline& p, const fs::path& dir, const CommandOptions& options) {
    if (options.dump_features) {
        auto out = open_out(dir / "features.csv");
        write_features_csv(out, p.series, p.features);
    }
    if (options.dump_expert) {
        auto out = open_out(dir / "expert_actions.csv");
        write_actions_csv(out, p.series, p.expert.actions);
    }
}

void write_config(const Pipeline& p, const fs::path& dir) {
    auto out = open_out(dir / "config.ini");
    out << to_ini(p.config);
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg)
    : config(std::move(cfg)),
      series(load_series(config)),
      features(load_features(series, config)),
      train_range(checked_range(series, config.train_start, config.train_end, "training")),
      test_range(checked_range(series, config.test_start, config.test_end, "test")),
      expert(expert_trajectory(series)) {}

TrainingData Pipeline::training_data() const {
    return TrainingData{series, features, config.window, train_range, config.env};
}

BacktestSetup Pipeline::backtest_setup() const {
    return BacktestSetup{series, features, config.window, test_range, config.env, config.stop};
}

TrainResult train_method(const Pipeline& pipeline, Method method, const CheckpointCallback& on_checkpoint) {
    const TrainingData data = pipeline.training_data();
    switch (method) {
        case Method::expert_td: return train(pipeline.config.train, data, pipeline.expert, on_checkpoint);
        case Method::dqn: return train_dqn(pipeline.config.train, data, on_checkpoint);
        case Method::bc: return train_bc(pipeline.config.train, data, pipeline.expert, on_checkpoint);
    }
    throw ArgumentError("unknown training method");
}

void cmd_synth(const SynthSpec& spec, std::uint64_t seed, const fs::path& out) {
    const BarSeries series = synth_series(spec, seed);
    auto file = open_out(out);
    write_bars(file, series);
}

fs::path cmd_train(const fs::path& config_path, std::optional<Method> method, const CommandOptions& options) {
    const Pipeline p(load_config(config_path));
    const fs::path dir = p.config.run_dir();
    fs::create_directories(dir);
    write_config(p, dir);
    dump(p, dir, options);
    train_and_save(p, method.value_or(p.config.method), dir);
    return dir;
}

fs::path cmd_backtest(const fs::path& config_path, std::vector<std::string> strategies,
                      const std::optional<fs::path>& checkpoint, const CommandOptions& options) {
    const Pipeline p(load_config(config_path));
    const fs::path dir = p.config.run_dir();
    fs::create_directories(dir);
    write_config(p, dir);
    dump(p, dir, options);
    if (strategies.empty() && !checkpoint) strategies = p.config.strategies;
    for (const auto& name : strategies) {
        const Strategy s = resolve_strategy(p, name, dir);
        if (s.signals) {
            auto out = open_out(dir / fmt::format("signals_{}.csv", name));
            write_actions_csv(out, p.series, s.signals->actions);
        }
        write_report(dir, backtest(s, p, p.config.stop));
    }
    if (checkpoint) {
        Checkpoint ck = load_checkpoint(*checkpoint);
        const Strategy s{"checkpoint", std::move(ck.params), std::nullopt, false};
        write_report(dir, backtest(s, p, p.config.stop));
    }
    return dir;
}

fs::path cmd_sweep(const fs::path& config_path, const std::string& parameter, const std::vector<int>& values,
                   const std::string& strategy) {
    if (values.empty()) {
        throw ArgumentError("sweep needs at least one value");
    }
    if (parameter != "stop_loss_k" && parameter != "frequency") {
        throw ArgumentError(fmt::format("unknown sweep parameter '{}' (stop_loss_k or frequency)", parameter));
    }
    for (int v : values) {
        if (v <= 0) throw ArgumentError(fmt::format("sweep values must be positive, got {}", v));
        if (std::count(values.begin(), values.end(), v) > 1) {
            throw ArgumentError(fmt::format("sweep value {} listed twice", v));
        }
    }
    const RunConfig base = load_config(config_path);
    const fs::path dir = base.run_dir();
    fs::create_directories(dir);

    std::vector<std::future<BacktestReport>> jobs;
    if (parameter == "stop_loss_k") {
        const Pipeline p(base);
        write_config(p, dir);
        const Strategy s = resolve_strategy(p, strategy, dir);
        for (int v : values) {
            StopLossParams stop{static_cast<std::size_t>(v), true};
            stop.validate();
            jobs.push_back(std::async(std::launch::async, [&s, &p, stop] { return backtest(s, p, stop); }));
        }
        std::vector<BacktestReport> reports;
        for (auto& j : jobs) reports.push_back(j.get());
        const fs::path table = dir / fmt::format("sweep_stop_loss_k_{}.csv", strategy);
        auto out = open_out(table);
        out << "value,profit,sharpe,sortino\n";
        for (std::size_t i = 0; i < values.size(); ++i) {
            out << fmt::format("{},{},{},{}\n", values[i], reports[i].profit, reports[i].sharpe, reports[i].sortino);
        }
        return table;
    }

    for (int v : values) {
        RunConfig cfg = base;
        cfg.frequency_minutes = v;
        cfg.validate();
        jobs.push_back(std::async(std::launch::async, [cfg, v, &dir, &strategy] {
            const Pipeline p(cfg);
            const fs::path sub = dir / fmt::format("sweep_frequency_{}", v);
            const Strategy s = resolve_strategy(p, strategy, sub);
            return backtest(s, p, cfg.stop);
        }));
    }
    std::vector<BacktestReport> reports;
    for (auto& j : jobs) reports.push_back(j.get());
    const fs::path table = dir / fmt::format("sweep_frequency_{}.csv", strategy);
    auto out = open_out(table);
    out << "value,profit,sharpe,sortino\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        out << fmt::format("{},{},{},{}\n", values[i], reports[i].profit, reports[i].sharpe, reports[i].sortino);
    }
    return table;
}

}  // namespace qtrade
