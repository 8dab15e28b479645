#include "qtrade/config.hpp"

#include "qtrade/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace qtrade {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
T parse_value(const std::string& where, const std::string& text) {
    T out{};
    if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw ValidationError(fmt::format("{}: expected true or false, got '{}'", where, text));
    } else if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else {
        const char* first = text.data();
        const char* last = first + text.size();
        if constexpr (std::is_unsigned_v<T>) {
            if (!text.empty() && text.front() == '-') {
                throw ValidationError(fmt::format("{}: expected a non-negative integer, got '{}'", where, text));
            }
        }
        auto [ptr, ec] = std::from_chars(first, last, out);
        if (text.empty() || ec != std::errc() || ptr != last) {
            throw ValidationError(fmt::format("{}: cannot parse '{}'", where, text));
        }
        return out;
    }
}

std::string format_date(std::int64_t day) {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
    return fmt::format("{:04}-{:02}-{:02}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()));
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ",";
        out += items[i];
    }
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T, typename Access>
Field plain(std::string section, std::string key, Access access) {
    const std::string where = section + "." + key;
    return {section, key,
            [access](const RunConfig& c) {
                if constexpr (std::is_same_v<T, bool>) {
                    return std::string(access(c) ? "true" : "false");
                } else {
                    return fmt::format("{}", access(c));
                }
            },
            [access, where](RunConfig& c, const std::string& v) { access(c) = parse_value<T>(where, v); }};
}

template <typename Access>
Field date(std::string section, std::string key, Access access) {
    return {section, key, [access](const RunConfig& c) { return format_date(access(c)); },
            [access](RunConfig& c, const std::string& v) { access(c) = parse_date(v); }};
}

template <typename Access>
Field optional_date(std::string section, std::string key, Access access) {
    return {section, key,
            [access](const RunConfig& c) {
                const auto& v = access(c);
                return v ? format_date(*v) : std::string();
            },
            [access](RunConfig& c, const std::string& v) {
                access(c) = v.empty() ? std::nullopt : std::optional<std::int64_t>(parse_date(v));
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"data", "source", [](const RunConfig& c) { return to_string(c.source); },
                     [](RunConfig& c, const std::string& v) {
                         if (v == "synth") {
                             c.source = DataSource::synth;
                         } else if (v == "file") {
                             c.source = DataSource::file;
                         } else {
                             throw ValidationError(fmt::format("data.source: expected synth or file, got '{}'", v));
                         }
                     }});
        f.push_back({"data", "path", [](const RunConfig& c) { return c.data_path.generic_string(); },
                     [](RunConfig& c, const std::string& v) { c.data_path = v; }});
        f.push_back(plain<int>("data", "base_frequency_minutes", [](auto& c) -> auto& { return c.base_frequency_minutes; }));
        f.push_back(plain<int>("data", "frequency_minutes", [](auto& c) -> auto& { return c.frequency_minutes; }));
        f.push_back(optional_date("data", "train_start", [](auto& c) -> auto& { return c.train_start; }));
        f.push_back(date("data", "train_end", [](auto& c) -> auto& { return c.train_end; }));
        f.push_back(date("data", "test_start", [](auto& c) -> auto& { return c.test_start; }));
        f.push_back(optional_date("data", "test_end", [](auto& c) -> auto& { return c.test_end; }));

        f.push_back({"synth", "kind", [](const RunConfig& c) { return to_string(c.synth.kind); },
                     [](RunConfig& c, const std::string& v) {
                         const auto kind = parse_synth_kind(v);
                         if (!kind) throw ValidationError(fmt::format("synth.kind: unknown kind '{}'", v));
                         c.synth.kind = *kind;
                     }});
        f.push_back(plain<std::size_t>("synth", "length", [](auto& c) -> auto& { return c.synth.length; }));
        f.push_back(plain<double>("synth", "base_price", [](auto& c) -> auto& { return c.synth.base_price; }));
        f.push_back(plain<double>("synth", "amplitude", [](auto& c) -> auto& { return c.synth.amplitude; }));
        f.push_back(plain<double>("synth", "period", [](auto& c) -> auto& { return c.synth.period; }));
        f.push_back(plain<double>("synth", "drift", [](auto& c) -> auto& { return c.synth.drift; }));
        f.push_back(plain<double>("synth", "volatility", [](auto& c) -> auto& { return c.synth.volatility; }));
        f.push_back(plain<double>("synth", "switch_probability",
                                  [](auto& c) -> auto& { return c.synth.switch_probability; }));
        f.push_back(plain<std::size_t>("synth", "bars_per_day", [](auto& c) -> auto& { return c.synth.bars_per_day; }));
        f.push_back(plain<std::int64_t>("synth", "start_timestamp",
                                        [](auto& c) -> auto& { return c.synth.start_timestamp; }));

        f.push_back(plain<std::string>("features", "factors", [](auto& c) -> auto& { return c.factors; }));
        f.push_back(plain<std::size_t>("features", "norm_window", [](auto& c) -> auto& { return c.norm_window; }));
        f.push_back(plain<std::size_t>("features", "window", [](auto& c) -> auto& { return c.window; }));

        f.push_back(plain<std::size_t>("qnet", "hidden_size", [](auto& c) -> auto& { return c.train.hidden_size; }));

        f.push_back({"train", "method", [](const RunConfig& c) { return to_string(c.method); },
                     [](RunConfig& c, const std::string& v) {
                         const auto m = parse_method(v);
                         if (!m) throw ValidationError(fmt::format("train.method: unknown method '{}'", v));
                         c.method = *m;
                     }});
        f.push_back(plain<std::size_t>("train", "episodes", [](auto& c) -> auto& { return c.train.episodes; }));
        f.push_back(plain<std::size_t>("train", "steps_per_episode",
                                       [](auto& c) -> auto& { return c.train.steps_per_episode; }));
        f.push_back(plain<std::size_t>("train", "buffer_capacity",
                                       [](auto& c) -> auto& { return c.train.buffer_capacity; }));
        f.push_back(plain<std::size_t>("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
        f.push_back(plain<double>("train", "gamma", [](auto& c) -> auto& { return c.train.gamma; }));
        f.push_back(plain<double>("train", "epsilon_start", [](auto& c) -> auto& { return c.train.epsilon_start; }));
        f.push_back(plain<double>("train", "epsilon_end", [](auto& c) -> auto& { return c.train.epsilon_end; }));
        f.push_back(plain<double>("train", "epsilon_decay_fraction",
                                  [](auto& c) -> auto& { return c.train.epsilon_decay_fraction; }));
        f.push_back(plain<double>("train", "learning_rate", [](auto& c) -> auto& { return c.train.learning_rate; }));
        f.push_back(plain<double>("train", "clip_norm", [](auto& c) -> auto& { return c.train.clip_norm; }));
        f.push_back(plain<bool>("train", "persistent_buffer",
                                [](auto& c) -> auto& { return c.train.persistent_buffer; }));
        f.push_back(plain<std::size_t>("train", "checkpoint_every",
                                       [](auto& c) -> auto& { return c.train.checkpoint_every; }));

        f.push_back(plain<double>("env", "cost_rate", [](auto& c) -> auto& { return c.env.cost_rate; }));
        f.push_back(plain<bool>("env", "force_flat_at_session_end",
                                [](auto& c) -> auto& { return c.env.force_flat_at_session_end; }));

        f.push_back(plain<std::size_t>("backtest", "stop_loss_k", [](auto& c) -> auto& { return c.stop.k; }));
        f.push_back(plain<bool>("backtest", "stop_loss_enabled", [](auto& c) -> auto& { return c.stop.enabled; }));
        f.push_back({"backtest", "strategies", [](const RunConfig& c) { return join(c.strategies); },
                     [](RunConfig& c, const std::string& v) { c.strategies = split_list(v); }});

        f.push_back(plain<std::size_t>("macd", "short_period", [](auto& c) -> auto& { return c.macd.short_period; }));
        f.push_back(plain<std::size_t>("macd", "long_period", [](auto& c) -> auto& { return c.macd.long_period; }));
        f.push_back(plain<std::size_t>("macd", "signal_period", [](auto& c) -> auto& { return c.macd.signal_period; }));

        f.push_back(plain<std::size_t>("dual_thrust", "window", [](auto& c) -> auto& { return c.dual_thrust.window; }));
        f.push_back(plain<double>("dual_thrust", "k1", [](auto& c) -> auto& { return c.dual_thrust.k1; }));
        f.push_back(plain<double>("dual_thrust", "k2", [](auto& c) -> auto& { return c.dual_thrust.k2; }));

        f.push_back({"run", "output_dir", [](const RunConfig& c) { return c.output_dir.generic_string(); },
                     [](RunConfig& c, const std::string& v) { c.output_dir = v; }});
        f.push_back(plain<std::uint64_t>("run", "seed", [](auto& c) -> auto& { return c.seed; }));
        return f;
    }();
    return table;
}

const std::set<std::string> kKnownStrategies{"expert_td", "dqn", "bc", "buy_and_hold", "macd", "dual_thrust",
                                             "expert"};

}  // namespace

std::string to_string(DataSource source) {
    return source == DataSource::synth ? "synth" : "file";
}

std::string to_string(Method method) {
    switch (method) {
        case Method::expert_td: return "expert_td";
        case Method::dqn: return "dqn";
        case Method::bc: return "bc";
    }
    return "?";
}

std::optional<Method> parse_method(const std::string& name) {
    if (name == "expert_td") return Method::expert_td;
    if (name == "dqn") return Method::dqn;
    if (name == "bc") return Method::bc;
    return std::nullopt;
}

void RunConfig::validate() const {
    auto supported = [](int f) {
        return std::find(kSupportedFrequencies.begin(), kSupportedFrequencies.end(), f) !=
               kSupportedFrequencies.end();
    };
    if (!supported(base_frequency_minutes) || !supported(frequency_minutes)) {
        throw ValidationError(fmt::format("frequencies must be one of 1,3,5,10,15,30,60 minutes (got {} and {})",
                                          base_frequency_minutes, frequency_minutes));
    }
    if (frequency_minutes % base_frequency_minutes != 0) {
        throw ValidationError(fmt::format("trading frequency {} is not a multiple of the data frequency {}",
                                          frequency_minutes, base_frequency_minutes));
    }
    if (source == DataSource::file && data_path.empty()) {
        throw ValidationError("data.path is required when data.source = file");
    }
    if (train_start && *train_start >= train_end) {
        throw ValidationError("data.train_start must precede data.train_end");
    }
    if (test_start < train_end) {
        throw ValidationError("test range must start on or after data.train_end (ranges are disjoint, train first)");
    }
    if (test_end && *test_end <= test_start) {
        throw ValidationError("data.test_end must follow data.test_start");
    }
    if (source == DataSource::synth) {
        SynthSpec spec = synth;
        spec.frequency_minutes = base_frequency_minutes;
        spec.validate();
    }
    if (window == 0) throw ValidationError("features.window must be at least 1");
    if (norm_window < 2) throw ValidationError("features.norm_window must be at least 2");
    (void)factor_specs();
    train.validate();
    env.validate();
    stop.validate();
    macd.validate();
    dual_thrust.validate();
    for (const auto& s : strategies) {
        if (!kKnownStrategies.count(s)) {
            throw ValidationError(fmt::format("backtest.strategies: unknown strategy '{}'", s));
        }
    }
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) {
        out.emplace_back(f.section + "." + f.key, f.get(*this));
    }
    return out;
}

std::uint64_t RunConfig::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    auto feed = [&h](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 1099511628211ull;
        }
    };
    for (const auto& [key, value] : echo()) {
        if (key == "run.output_dir") continue;
        if (key == "data.path" && source == DataSource::file) {
            feed(key + "=" + resolved_data_path().generic_string() + "\n");
            continue;
        }
        feed(key + "=" + value + "\n");
    }
    return h;
}

std::filesystem::path RunConfig::resolved_data_path() const {
    if (data_path.empty() || data_path.is_absolute()) return data_path;
    return config_dir / data_path;
}

std::filesystem::path RunConfig::run_dir() const {
    const auto base = output_dir.is_absolute() ? output_dir : config_dir / output_dir;
    return base / fmt::format("run-{:016x}", hash());
}

std::vector<FactorSpec> RunConfig::factor_specs() const {
    return parse_factor_list(factors);
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& config_dir) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ParseError(e.message(), e.line());
    }
    RunConfig config;
    config.config_dir = config_dir;
    std::set<std::string> seen;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ValidationError(fmt::format("key '{}' outside any section", section));
        }
        if (std::none_of(fields().begin(), fields().end(), [&](const Field& f) { return f.section == section; })) {
            throw ValidationError(fmt::format("unknown config section [{}]", section));
        }
        for (const auto& [key, value] : body) {
            const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) {
                return f.section == section && f.key == key;
            });
            if (it == fields().end()) {
                throw ValidationError(fmt::format("unknown config key [{}] {}", section, key));
            }
            it->set(config, trim(value.data()));
            seen.insert(section + "." + key);
        }
    }
    for (const char* required : {"data.train_end", "data.test_start"}) {
        if (!seen.count(required)) {
            throw ValidationError(fmt::format("missing required config key {}", required));
        }
    }
    config.train.seed = config.seed;
    config.synth.frequency_minutes = config.base_frequency_minutes;
    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArgumentError(fmt::format("cannot open config file {}", path.string()));
    }
    return parse_config(in, path.parent_path());
}

std::string to_ini(const RunConfig& config) {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(config) + "\n";
    }
    return out;
}

}  // namespace qtrade
