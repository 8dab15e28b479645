#include "qtrade/qnet.hpp"

#include "qtrade/errors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace qtrade {

namespace {

using Index = Eigen::Index;

constexpr const char* kCheckpointFormat = "qtrade-qnet";
constexpr int kCheckpointVersion = 1;
constexpr const char* kLayout =
    "lstm_wx[4H,C] lstm_wh[4H,H] lstm_b[4H] head_w[3,H] head_b[3]; row-major; gates input,forget,cell,output";

template <typename Derived>
Eigen::ArrayXd sigmoid(const Eigen::ArrayBase<Derived>& x) {
    return (1.0 + (-x).exp()).inverse();
}

Index idx(std::size_t v) { return static_cast<Index>(v); }

}  // namespace

QNetParams::QNetParams(std::size_t input_size, std::size_t hidden_size)
    : input_(input_size), hidden_(hidden_size),
      data_(Eigen::VectorXd::Zero(idx(parameter_count(input_size, hidden_size)))) {
    if (input_size == 0 || hidden_size == 0) {
        throw ArgumentError("Q-network input and hidden sizes must be at least 1");
    }
}

std::size_t QNetParams::parameter_count(std::size_t c, std::size_t h) {
    return 4 * (c * h + h * h + h) + 3 * h + 3;
}

QNetParams::MatrixMap QNetParams::lstm_wx() { return {data_.data(), idx(4 * hidden_), idx(input_)}; }
QNetParams::ConstMatrixMap QNetParams::lstm_wx() const {
    return {data_.data(), idx(4 * hidden_), idx(input_)};
}
QNetParams::MatrixMap QNetParams::lstm_wh() {
    return {data_.data() + offset_wh(), idx(4 * hidden_), idx(hidden_)};
}
QNetParams::ConstMatrixMap QNetParams::lstm_wh() const {
    return {data_.data() + offset_wh(), idx(4 * hidden_), idx(hidden_)};
}
QNetParams::VectorMap QNetParams::lstm_bias() { return {data_.data() + offset_bias(), idx(4 * hidden_)}; }
QNetParams::ConstVectorMap QNetParams::lstm_bias() const {
    return {data_.data() + offset_bias(), idx(4 * hidden_)};
}
QNetParams::MatrixMap QNetParams::head_w() { return {data_.data() + offset_head_w(), 3, idx(hidden_)}; }
QNetParams::ConstMatrixMap QNetParams::head_w() const {
    return {data_.data() + offset_head_w(), 3, idx(hidden_)};
}
QNetParams::VectorMap QNetParams::head_bias() { return {data_.data() + offset_head_b(), 3}; }
QNetParams::ConstVectorMap QNetParams::head_bias() const { return {data_.data() + offset_head_b(), 3}; }

QNetParams init_qnet(std::size_t input_size, std::size_t hidden_size, std::uint64_t seed) {
    QNetParams p(input_size, hidden_size);
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (double& w : p.lstm_wx().reshaped()) w = uniform(rng);
    for (double& w : p.lstm_wh().reshaped()) w = uniform(rng);
    for (double& w : p.head_w().reshaped()) w = uniform(rng);
    p.lstm_bias().setZero();
    p.lstm_bias().segment(idx(hidden_size), idx(hidden_size)).setOnes();
    p.head_bias().setZero();
    return p;
}

QValues forward(const QNetParams& params, const StateWindow& state) {
    ForwardTrace trace;
    return forward(params, state, trace);
}

QValues forward(const QNetParams& params, const StateWindow& state, ForwardTrace& trace) {
    const Index H = idx(params.hidden_size());
    if (state.width() != params.input_size()) {
        throw ArgumentError(fmt::format("state has {} columns, network expects {}", state.width(),
                                        params.input_size()));
    }
    const Index L = idx(state.length());
    if (L == 0) {
        throw ArgumentError("empty state window");
    }
    const auto wx = params.lstm_wx();
    const auto wh = params.lstm_wh();
    const auto bias = params.lstm_bias();

    trace.gates.resize(L, 4 * H);
    trace.cells.resize(L, H);
    trace.hidden.resize(L, H);

    Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd z(4 * H);
    for (Index t = 0; t < L; ++t) {
        z.noalias() = wx * state.rows.row(t).transpose();
        z.noalias() += wh * h;
        z += bias;
        const Eigen::ArrayXd in = sigmoid(z.segment(0, H).array());
        const Eigen::ArrayXd forget = sigmoid(z.segment(H, H).array());
        const Eigen::ArrayXd cand = z.segment(2 * H, H).array().tanh();
        const Eigen::ArrayXd out = sigmoid(z.segment(3 * H, H).array());
        c = (forget * c.array() + in * cand).matrix();
        h = (out * c.array().tanh()).matrix();

        auto g = trace.gates.row(t);
        g.segment(0, H) = in.transpose();
        g.segment(H, H) = forget.transpose();
        g.segment(2 * H, H) = cand.transpose();
        g.segment(3 * H, H) = out.transpose();
        trace.cells.row(t) = c.transpose();
        trace.hidden.row(t) = h.transpose();
    }
    trace.q = params.head_w() * h + params.head_bias();
    return trace.q;
}

void backward(const QNetParams& params, const StateWindow& state, const ForwardTrace& trace,
              const QValues& dq, QNetParams& grad) {
    const Index H = idx(params.hidden_size());
    const Index L = idx(state.length());
    const auto wh = params.lstm_wh();

    auto g_wx = grad.lstm_wx();
    auto g_wh = grad.lstm_wh();
    auto g_b = grad.lstm_bias();

    grad.head_w().noalias() += dq * trace.hidden.row(L - 1);
    grad.head_bias() += dq;

    Eigen::VectorXd dh = params.head_w().transpose() * dq;
    Eigen::ArrayXd dc_next = Eigen::ArrayXd::Zero(H);
    Eigen::VectorXd dz(4 * H);
    for (Index t = L - 1; t >= 0; --t) {
        const auto gates = trace.gates.row(t);
        const Eigen::ArrayXd in = gates.segment(0, H).transpose().array();
        const Eigen::ArrayXd forget = gates.segment(H, H).transpose().array();
        const Eigen::ArrayXd cand = gates.segment(2 * H, H).transpose().array();
        const Eigen::ArrayXd out = gates.segment(3 * H, H).transpose().array();
        const Eigen::ArrayXd tc = trace.cells.row(t).transpose().array().tanh();
        const Eigen::ArrayXd c_prev =
            t > 0 ? Eigen::ArrayXd(trace.cells.row(t - 1).transpose().array()) : Eigen::ArrayXd::Zero(H);

        const Eigen::ArrayXd dh_a = dh.array();
        const Eigen::ArrayXd d_out = dh_a * tc;
        const Eigen::ArrayXd dc = dc_next + dh_a * out * (1.0 - tc.square());
        const Eigen::ArrayXd d_in = dc * cand;
        const Eigen::ArrayXd d_cand = dc * in;
        const Eigen::ArrayXd d_forget = dc * c_prev;
        dc_next = dc * forget;

        dz.segment(0, H) = (d_in * in * (1.0 - in)).matrix();
        dz.segment(H, H) = (d_forget * forget * (1.0 - forget)).matrix();
        dz.segment(2 * H, H) = (d_cand * (1.0 - cand.square())).matrix();
        dz.segment(3 * H, H) = (d_out * out * (1.0 - out)).matrix();

        g_wx.noalias() += dz * state.rows.row(t);
        if (t > 0) {
            g_wh.noalias() += dz * trace.hidden.row(t - 1);
        }
        g_b += dz;
        dh.noalias() = wh.transpose() * dz;
    }
}

double mse_loss(const QNetParams& params, std::span<const RegressionSample> batch) {
    if (batch.empty()) {
        throw ArgumentError("loss of an empty batch");
    }
    double sum = 0.0;
    for (const auto& s : batch) {
        const double err = forward(params, *s.state)[idx(s.action)] - s.target;
        sum += err * err;
    }
    return sum / static_cast<double>(batch.size());
}

QNetParams gradient(const QNetParams& params, std::span<const RegressionSample> batch) {
    if (batch.empty()) {
        throw ArgumentError("gradient of an empty batch");
    }
    QNetParams grad(params.input_size(), params.hidden_size());
    const double scale = 2.0 / static_cast<double>(batch.size());
    ForwardTrace trace;
    for (const auto& s : batch) {
        if (s.action > 2) {
            throw ArgumentError("action index must be 0, 1 or 2");
        }
        const QValues q = forward(params, *s.state, trace);
        QValues dq = QValues::Zero();
        dq[idx(s.action)] = scale * (q[idx(s.action)] - s.target);
        backward(params, *s.state, trace, dq, grad);
    }
    return grad;
}

double clip_global_norm(QNetParams& grad, double max_norm) {
    const double norm = grad.data().norm();
    if (max_norm > 0.0 && norm > max_norm) {
        grad.data() *= max_norm / norm;
    }
    return norm;
}

OptimizerState make_optimizer(const QNetParams& params, AdamConfig config) {
    OptimizerState opt;
    opt.config = config;
    opt.first_moment = Eigen::VectorXd::Zero(idx(params.size()));
    opt.second_moment = Eigen::VectorXd::Zero(idx(params.size()));
    return opt;
}

void adam_step(QNetParams& params, const QNetParams& grads, OptimizerState& opt) {
    if (!params.same_shape(grads) || opt.first_moment.size() != params.data().size() ||
        opt.second_moment.size() != params.data().size()) {
        throw ArgumentError("Adam shapes do not match the parameters");
    }
    if (!grads.data().allFinite()) {
        throw NumericError(fmt::format("non-finite gradient at optimizer step {}", opt.step + 1));
    }
    const auto& cfg = opt.config;
    const Eigen::ArrayXd g = grads.data().array();
    opt.step += 1;
    opt.first_moment = (cfg.beta1 * opt.first_moment.array() + (1.0 - cfg.beta1) * g).matrix();
    opt.second_moment = (cfg.beta2 * opt.second_moment.array() + (1.0 - cfg.beta2) * g.square()).matrix();
    const double step = static_cast<double>(opt.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    const Eigen::ArrayXd m_hat = opt.first_moment.array() / bc1;
    const Eigen::ArrayXd v_hat = opt.second_moment.array() / bc2;
    params.data().array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
}

std::string checkpoint_json(const QNetParams& params, const OptimizerState* optimizer) {
    using nlohmann::json;
    auto to_array = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["input_size"] = params.input_size();
    j["hidden_size"] = params.hidden_size();
    j["layout"] = kLayout;
    j["params"] = to_array(params.data());
    if (optimizer) {
        j["optimizer"] = {
            {"kind", "adam"},
            {"learning_rate", optimizer->config.learning_rate},
            {"beta1", optimizer->config.beta1},
            {"beta2", optimizer->config.beta2},
            {"epsilon", optimizer->config.epsilon},
            {"step", optimizer->step},
            {"first_moment", to_array(optimizer->first_moment)},
            {"second_moment", to_array(optimizer->second_moment)},
        };
    }
    return j.dump(1) + "\n";
}

void save_checkpoint(const std::filesystem::path& path, const QNetParams& params,
                     const OptimizerState* optimizer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ArgumentError(fmt::format("cannot write checkpoint '{}'", path.string()));
    }
    out << checkpoint_json(params, optimizer);
}

Checkpoint parse_checkpoint(const std::string& json_text) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ArgumentError(fmt::format("checkpoint is not valid JSON: {}", e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) {
            throw ArgumentError("not a qtrade Q-network checkpoint");
        }
        if (j.at("version").get<int>() != kCheckpointVersion) {
            throw ArgumentError(fmt::format("unsupported checkpoint version {}", j.at("version").dump()));
        }
        const auto c = j.at("input_size").get<std::size_t>();
        const auto h = j.at("hidden_size").get<std::size_t>();
        const auto values = j.at("params").get<std::vector<double>>();
        Checkpoint cp{QNetParams(c, h), std::nullopt};
        if (values.size() != cp.params.size()) {
            throw ArgumentError(fmt::format("checkpoint holds {} parameters, shape ({}, {}) needs {}",
                                            values.size(), c, h, cp.params.size()));
        }
        cp.params.data() = Eigen::Map<const Eigen::VectorXd>(values.data(), idx(values.size()));
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            OptimizerState opt;
            opt.config.learning_rate = o.at("learning_rate").get<double>();
            opt.config.beta1 = o.at("beta1").get<double>();
            opt.config.beta2 = o.at("beta2").get<double>();
            opt.config.epsilon = o.at("epsilon").get<double>();
            opt.step = o.at("step").get<std::uint64_t>();
            const auto m = o.at("first_moment").get<std::vector<double>>();
            const auto v = o.at("second_moment").get<std::vector<double>>();
            if (m.size() != values.size() || v.size() != values.size()) {
                throw ArgumentError("optimizer moments do not match the parameter count");
            }
            opt.first_moment = Eigen::Map<const Eigen::VectorXd>(m.data(), idx(m.size()));
            opt.second_moment = Eigen::Map<const Eigen::VectorXd>(v.data(), idx(v.size()));
            cp.optimizer = std::move(opt);
        }
        return cp;
    } catch (const json::exception& e) {
        throw ArgumentError(fmt::format("malformed checkpoint: {}", e.what()));
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArgumentError(fmt::format("cannot open checkpoint '{}'", path.string()));
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_checkpoint(buffer.str());
}

}  // namespace qtrade
