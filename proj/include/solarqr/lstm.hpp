#pragma once

#include "solarqr/core.hpp"
#include "solarqr/features.hpp"
#include "solarqr/nnet.hpp"
#include "solarqr/qcore.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace solarqr::lstm {

struct LSTMShape {
  index_t inputs = 4;
  index_t hidden = 100;
  index_t steps = kHoursPerDay;
  index_t outputs = 99;
};

/// Gate order used for every per-gate array below.
enum Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCell = 3 };
inline constexpr std::array<const char*, 4> kGateNames{"i", "f", "o", "g"};

/// 4 x (hidden x inputs + hidden x hidden + hidden) + outputs x hidden + outputs.
constexpr index_t parameter_count(const LSTMShape& s) {
  return 4 * (s.hidden * s.inputs + s.hidden * s.hidden + s.hidden) + s.outputs * s.hidden + s.outputs;
}

/// Blocks W_<gate>, U_<gate>, b_<gate> for gates i, f, o, g, then W_out and b_out.
nnet::ParamPack make_layout(const LSTMShape& shape);

template <class Scalar>
struct LSTMParams {
  std::array<matrix<Scalar>, 4> W;  ///< hidden x inputs
  std::array<matrix<Scalar>, 4> U;  ///< hidden x hidden
  std::array<vector<Scalar>, 4> b;  ///< hidden
  nnet::DenseParams<Scalar> readout;

  index_t hidden() const { return U[0].rows(); }
  index_t inputs() const { return W[0].cols(); }
};

LSTMParams<real> unpack(const nnet::ParamPack& layout, const vec& flat);

/// One recurrent step on a batch of columns:
///   i, f, o = sigmoid(W x + U h + b),  g = tanh(W_g x + U_g h + b_g),
///   c' = f .* c + i .* g,  h' = o .* tanh(c').
/// `all_sigmoid` replaces both tanh squashings by the sigmoid.
template <class Scalar, class DX, class DH, class DC>
std::pair<matrix<Scalar>, matrix<Scalar>> lstm_cell(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DH>& h,
                                                    const Eigen::MatrixBase<DC>& c, const LSTMParams<Scalar>& p,
                                                    bool all_sigmoid = false) {
  if (x.rows() != p.inputs() || h.rows() != p.hidden() || c.rows() != p.hidden() || h.cols() != x.cols() ||
      c.cols() != x.cols())
    throw PreconditionError("lstm_cell: shape mismatch");
  using nnet::Activation;
  const auto squash = all_sigmoid ? Activation::sigmoid : Activation::tanh;
  auto gate = [&](std::size_t k, Activation a) {
    matrix<Scalar> z = p.W[k] * x + p.U[k] * h;
    z.colwise() += p.b[k];
    return matrix<Scalar>(nnet::apply_activation(z, a));
  };
  const auto i = gate(kInput, Activation::sigmoid);
  const auto f = gate(kForget, Activation::sigmoid);
  const auto o = gate(kOutput, Activation::sigmoid);
  const auto g = gate(kCell, squash);
  matrix<Scalar> c_next = f.cwiseProduct(c) + i.cwiseProduct(g);
  matrix<Scalar> h_next = o.cwiseProduct(matrix<Scalar>(nnet::apply_activation(c_next, squash)));
  return {std::move(h_next), std::move(c_next)};
}

/// Runs the sequence (inputs x steps) from zero state and returns the readout of every
/// step (outputs x steps), before clipping or crossing repair.
mat lstm_forward(const Eigen::Ref<const mat>& sequence, const LSTMParams<real>& p, const LSTMShape& shape,
                 bool all_sigmoid = false);

/// Per-day sequences: one (inputs x steps) matrix per day plus targets (steps) per day.
struct SequenceBatch {
  std::vector<mat> inputs;  ///< Indexed by day.
  mat targets;              ///< days x steps
};

/// Mean pinball loss over days, active steps and levels, and its BPTT gradient.
/// `dropout` holds one (hidden x batch) mask per step, or is empty.
real loss_and_gradient(const nnet::ParamPack& layout, const vec& flat, const LSTMShape& shape,
                       std::span<const mat> step_inputs, const Eigen::Ref<const mat>& targets,
                       std::span<const char> active_steps, std::span<const real> taus, std::span<const mat> dropout,
                       bool all_sigmoid, vec& gradient, real smoothing_eta = 0);

struct LSTMOptions {
  index_t hidden = 100;
  bool all_sigmoid = false;
  real forget_bias = 1.0;
};

/// TrainConfig defaults for the recurrent model: batch 16 days, gradient clip 5.
nnet::TrainConfig default_train_config();

struct LSTMModel {
  LSTMShape shape;
  nnet::ParamPack params = make_layout(LSTMShape{});
  nnet::TrainConfig config;
  bool all_sigmoid = false;
  std::vector<real> taus;
  features::Standardizer input_standardizer;  ///< One mean/scale per input channel.
  dataio::NightMask night;
  real initial_training_loss = 0;
  real final_training_loss = 0;
  real final_validation_loss = 0;
};

/// Channel t of day d: [P(d-1, t), SSRD(d, t), STRD(d, t), TSR(d, t)], unstandardized,
/// as an (inputs x steps) matrix per day.
std::vector<mat> day_sequences(const features::SampleSet& samples);

LSTMModel fit_lstm(const features::SampleSet& samples, const dataio::NightMask& mask, const qcore::QuantileGrid& grid,
                   const nnet::TrainConfig& config = default_train_config(), const LSTMOptions& options = {});

/// Mean pinball loss of the model over the samples' non-night steps (prediction mode, unclipped).
real training_loss(const LSTMModel& model, const features::SampleSet& samples);

/// Night hours exactly 0 for every level; other rows clipped and rearranged.
std::vector<qcore::QuantileForecast> predict_lstm(const LSTMModel& model, const features::SampleSet& samples);

nlohmann::json to_json(const LSTMModel& model);

}  // namespace solarqr::lstm
