#pragma once

#include "solarqr/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace solarqr::nnet {

enum class Activation { identity, tanh, sigmoid };

template <class Scalar>
Scalar activate(Scalar z, Activation a) {
  switch (a) {
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return Scalar(1) / (Scalar(1) + std::exp(-z));
    case Activation::identity: break;
  }
  return z;
}

/// Derivative expressed through the activation's output y = activate(z).
template <class Scalar>
Scalar activation_slope(Scalar y, Activation a) {
  switch (a) {
    case Activation::tanh: return Scalar(1) - y * y;
    case Activation::sigmoid: return y * (Scalar(1) - y);
    case Activation::identity: break;
  }
  return Scalar(1);
}

template <class Derived>
auto apply_activation(const Eigen::MatrixBase<Derived>& z, Activation a) {
  using Scalar = typename Derived::Scalar;
  return z.unaryExpr([a](Scalar v) { return activate(v, a); });
}

template <class Scalar>
struct DenseParams {
  matrix<Scalar> W;  ///< out x in
  vector<Scalar> b;  ///< out

  index_t inputs() const noexcept { return W.cols(); }
  index_t outputs() const noexcept { return W.rows(); }
};

/// activation(W x + b); x is one column per sample.
template <class Scalar, class Derived>
matrix<Scalar> dense_forward(const DenseParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x, Activation a) {
  if (x.rows() != p.inputs() || p.b.size() != p.outputs())
    throw PreconditionError("dense_forward: input has " + std::to_string(x.rows()) + " rows, layer expects " +
                            std::to_string(p.inputs()));
  matrix<Scalar> z = p.W * x;
  z.colwise() += p.b;
  return apply_activation(z, a);
}

template <class Scalar>
struct DenseGrads {
  matrix<Scalar> dW;
  vector<Scalar> db;
};

/// Gradients of sum(upstream .* y) with y = dense_forward(p, x, a), summed over samples.
template <class Scalar, class DX, class DY, class DU>
std::pair<DenseGrads<Scalar>, matrix<Scalar>> backprop_dense(const DenseParams<Scalar>& p,
                                                              const Eigen::MatrixBase<DX>& x,
                                                              const Eigen::MatrixBase<DY>& y,
                                                              const Eigen::MatrixBase<DU>& upstream, Activation a) {
  require(upstream.rows() == p.outputs() && upstream.cols() == x.cols() && y.rows() == upstream.rows() &&
              y.cols() == upstream.cols(),
          "backprop_dense: shape mismatch");
  const matrix<Scalar> delta =
      upstream.cwiseProduct(y.unaryExpr([a](Scalar v) { return activation_slope(v, a); }));
  DenseGrads<Scalar> g{delta * x.transpose(), delta.rowwise().sum()};
  return {std::move(g), p.W.transpose() * delta};
}

struct PinballGradient {
  real loss = 0;     ///< Mean (smoothed) pinball loss over elements.
  vec gradient;      ///< Per-element derivative of the element loss w.r.t. y_hat (not divided by n).
};

/// Pinball loss and its subgradient for training.
///
/// With e = y_hat - y the element derivative is -tau for e < 0 and 1 - tau for e >= 0
/// (the tie takes the else branch). With smoothing_eta > 0 the two slopes are joined
/// linearly over |e| < eta; the loss stays C1 and equals the raw loss outside that band.
PinballGradient pinball_subgradient(const Eigen::Ref<const vec>& y_hat, const Eigen::Ref<const vec>& y, real tau,
                                    real smoothing_eta = 0);

/// Adam moments for a flat parameter vector.
struct AdamState {
  vec m;
  vec v;
  long step = 0;

  explicit AdamState(index_t n = 0) : m(vec::Zero(n)), v(vec::Zero(n)) {}
};

struct AdamHyper {
  real beta1 = 0.9;
  real beta2 = 0.999;
  real epsilon = 1e-8;
};

void adam_step(Eigen::Ref<vec> params, const Eigen::Ref<const vec>& gradient, AdamState& state, real learning_rate,
               const AdamHyper& hyper = {});

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Eigen::Ref<mat> W, std::mt19937_64& rng);

/// Glorot-uniform weights and zero bias for an out x in layer.
DenseParams<real> init_dense(index_t out, index_t in, std::uint64_t seed);

/// Maps parameters to predictions (one per target element).
using ApplyFn = std::function<vec(const vec& params)>;

/// Max relative error between `analytic` and central differences of the mean pinball
/// objective of apply(params) against y. Coordinates whose +-h perturbation moves any
/// residual across zero are skipped. Denominators are floored at 1e-6.
real grad_check(const ApplyFn& apply, const vec& params, const Eigen::Ref<const vec>& y, real tau,
                const Eigen::Ref<const vec>& analytic, real h = 1e-5);

/// Named, shaped blocks over one flat parameter vector.
class ParamPack {
 public:
  struct Block {
    std::string name;
    index_t offset;
    index_t rows;
    index_t cols;
  };

  /// Appends a rows x cols block; returns its offset.
  index_t add(std::string name, index_t rows, index_t cols = 1);

  index_t size() const noexcept { return values_.size(); }
  vec& values() noexcept { return values_; }
  const vec& values() const noexcept { return values_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const Block& block(std::string_view name) const;

  Eigen::Map<mat> view(std::string_view name) { return view(name, values_); }
  Eigen::Map<const mat> view(std::string_view name) const { return view(name, values_); }
  /// Same block, laid over another vector of identical size (e.g. a gradient).
  Eigen::Map<mat> view(std::string_view name, vec& storage) const;
  Eigen::Map<const mat> view(std::string_view name, const vec& storage) const;

 private:
  std::vector<Block> blocks_;
  vec values_;
};

inline constexpr int kParamFormatVersion = 1;

/// `{version, arrays: [{name, shape: [rows, cols], data}]}`; data is column-major.
nlohmann::json to_json(const ParamPack& pack);
/// Values are loaded into an already laid-out pack; names and shapes must match.
void load_json(ParamPack& pack, const nlohmann::json& j);

struct TrainConfig {
  real learning_rate = 1e-3;
  int epochs = 200;
  index_t batch_size = 32;
  real dropout_rate = 0.2;
  int early_stop_patience = 20;
  real validation_fraction = 0.1;
  std::uint64_t seed = 0;
  real smoothing_eta = 0;
  real clip_norm = 0;  ///< Global gradient-norm clip; 0 disables.

  void validate() const;
};

/// Loss and gradient of a minibatch in training mode (dropout active).
using BatchObjective =
    std::function<real(const vec& params, std::span<const index_t> rows, std::mt19937_64& rng, vec& gradient)>;
/// Loss of a row set in prediction mode.
using Evaluator = std::function<real(const vec& params, std::span<const index_t> rows)>;

struct TrainResult {
  vec params;
  real validation_loss = 0;
  int best_epoch = 0;  ///< 0 means the initial parameters were never beaten.
  int epochs_run = 0;
};

/// Minibatch Adam with early stopping. Rows are assumed chronological; the last
/// validation_fraction of them form the validation slice (at least one row, when there
/// are at least two). Returns the parameters with the best validation loss.
/// Throws TrainingError when a loss turns non-finite.
TrainResult train(vec initial, index_t n_rows, const TrainConfig& config, const BatchObjective& objective,
                  const Evaluator& evaluate);

/// Random inverted-dropout mask: kept entries are 1 / (1 - rate), dropped are 0.
mat dropout_mask(index_t rows, index_t cols, real rate, std::mt19937_64& rng);

}  // namespace solarqr::nnet
