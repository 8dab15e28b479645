#pragma once

#include "qtrade/features.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

namespace qtrade {

/// Action values ordered (short, flat, long).
using QValues = Eigen::Vector3d;

/// All weights of a single-layer LSTM followed by a linear 3-output head,
/// stored in one contiguous vector. Layout (row-major blocks):
///
///   lstm_wx [4H x C] | lstm_wh [4H x H] | lstm_b [4H] | head_w [3 x H] | head_b [3]
///
/// Gate rows are ordered input, forget, cell, output. The same type is used for
/// gradients, which share the layout.
class QNetParams {
public:
    using MatrixMap = Eigen::Map<RowMatrix>;
    using ConstMatrixMap = Eigen::Map<const RowMatrix>;
    using VectorMap = Eigen::Map<Eigen::VectorXd>;
    using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

    QNetParams() = default;
    QNetParams(std::size_t input_size, std::size_t hidden_size);

    static std::size_t parameter_count(std::size_t input_size, std::size_t hidden_size);

    std::size_t input_size() const noexcept { return input_; }
    std::size_t hidden_size() const noexcept { return hidden_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }

    Eigen::VectorXd& data() noexcept { return data_; }
    const Eigen::VectorXd& data() const noexcept { return data_; }

    MatrixMap lstm_wx();
    ConstMatrixMap lstm_wx() const;
    MatrixMap lstm_wh();
    ConstMatrixMap lstm_wh() const;
    VectorMap lstm_bias();
    ConstVectorMap lstm_bias() const;
    MatrixMap head_w();
    ConstMatrixMap head_w() const;
    VectorMap head_bias();
    ConstVectorMap head_bias() const;

    bool same_shape(const QNetParams& other) const noexcept {
        return input_ == other.input_ && hidden_ == other.hidden_;
    }
    bool operator==(const QNetParams& other) const {
        return same_shape(other) && data_ == other.data_;
    }

private:
    std::size_t offset_wh() const noexcept { return 4 * hidden_ * input_; }
    std::size_t offset_bias() const noexcept { return offset_wh() + 4 * hidden_ * hidden_; }
    std::size_t offset_head_w() const noexcept { return offset_bias() + 4 * hidden_; }
    std::size_t offset_head_b() const noexcept { return offset_head_w() + 3 * hidden_; }

    std::size_t input_ = 0;
    std::size_t hidden_ = 0;
    Eigen::VectorXd data_;
};

/// Weights uniform in [-1/sqrt(H), 1/sqrt(H)]; forget-gate bias 1, other biases 0.
QNetParams init_qnet(std::size_t input_size, std::size_t hidden_size, std::uint64_t seed);

/// Activations kept by a forward pass for back-propagation through time.
struct ForwardTrace {
    RowMatrix gates;   // L x 4H, post-activation (i, f, g, o)
    RowMatrix cells;   // L x H
    RowMatrix hidden;  // L x H
    QValues q = QValues::Zero();
};

QValues forward(const QNetParams& params, const StateWindow& state);
QValues forward(const QNetParams& params, const StateWindow& state, ForwardTrace& trace);

/// Accumulates dLoss/dtheta into `grad` given dLoss/dQ for one state.
void backward(const QNetParams& params, const StateWindow& state, const ForwardTrace& trace,
              const QValues& dq, QNetParams& grad);

/// One regression item: pull Q(state)[action] towards a fixed target.
struct RegressionSample {
    const StateWindow* state = nullptr;
    std::size_t action = 0;
    double target = 0.0;
};

/// Mean squared error over the batch; targets are constants.
double mse_loss(const QNetParams& params, std::span<const RegressionSample> batch);

/// Gradient of mse_loss. Throws ArgumentError on an empty batch.
QNetParams gradient(const QNetParams& params, std::span<const RegressionSample> batch);

/// Rescales `grad` in place so its L2 norm is at most max_norm (no-op when
/// max_norm <= 0). Returns the norm before clipping.
double clip_global_norm(QNetParams& grad, double max_norm);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    std::uint64_t step = 0;

    bool operator==(const OptimizerState& o) const {
        return step == o.step && first_moment == o.first_moment && second_moment == o.second_moment &&
               config.learning_rate == o.config.learning_rate && config.beta1 == o.config.beta1 &&
               config.beta2 == o.config.beta2 && config.epsilon == o.config.epsilon;
    }
};

OptimizerState make_optimizer(const QNetParams& params, AdamConfig config = {});

/// Bias-corrected Adam update. Throws NumericError on a non-finite gradient
/// (parameters and optimizer state are left untouched).
void adam_step(QNetParams& params, const QNetParams& grads, OptimizerState& opt);

/// JSON checkpoint: {"format": "qtrade-qnet", "version": 1, "input_size",
/// "hidden_size", "layout", "params": [...], "optimizer": {...}?}. Doubles are
/// written in shortest round-trip form, so save/load is lossless.
void save_checkpoint(const std::filesystem::path& path, const QNetParams& params,
                     const OptimizerState* optimizer = nullptr);
std::string checkpoint_json(const QNetParams& params, const OptimizerState* optimizer = nullptr);

struct Checkpoint {
    QNetParams params;
    std::optional<OptimizerState> optimizer;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(const std::string& json_text);

}  // namespace qtrade
