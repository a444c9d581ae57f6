#pragma once

#include "solarqr/core.hpp"
#include "solarqr/features.hpp"
#include "solarqr/nnet.hpp"
#include "solarqr/qcore.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <span>
#include <vector>

namespace solarqr::fcann {

inline constexpr index_t kHiddenUnits = 10;

/// Blocks W1 (hidden x in), b1, W2 (1 x hidden), b2.
nnet::ParamPack make_layout(index_t inputs, index_t hidden = kHiddenUnits);

/// inputs -> tanh hidden layer -> linear scalar output, trained for one quantile level.
struct FCANNModel {
  real tau = 0.5;
  int horizon = -1;
  nnet::ParamPack params = make_layout(0);
  nnet::TrainConfig config;
  real final_validation_loss = 0;

  index_t inputs() const { return params.block("W1").cols; }
};

/// Unclipped outputs for the rows of X (samples x inputs).
vec forward(const nnet::ParamPack& layout, const vec& params, const Eigen::Ref<const mat>& X);

/// Mean pinball loss over the rows and its gradient w.r.t. the flat parameters.
/// `hidden_mask` (hidden x rows), when given, multiplies the hidden activations.
real loss_and_gradient(const nnet::ParamPack& layout, const vec& params, const Eigen::Ref<const mat>& X,
                       const Eigen::Ref<const vec>& y, real tau, const mat* hidden_mask, vec& gradient,
                       real smoothing_eta = 0);

/// X must already be standardized; rows chronological. Weights start glorot-uniform in
/// the hidden layer with a zero output layer whose bias is the empirical tau-quantile of y.
FCANNModel fit_fcann(const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y, qcore::QuantileLevel tau,
                     const nnet::TrainConfig& config);

/// Trains on the horizon's standardized selected inputs and hour-`spec.horizon` targets.
FCANNModel fit_fcann(const features::SampleSet& samples, const features::FeatureSpec& spec,
                     qcore::QuantileLevel tau, const nnet::TrainConfig& config);

/// Forward pass clipped to [0, 1]; dropout is never applied here.
vec predict_fcann(const FCANNModel& model, const Eigen::Ref<const mat>& X);

struct FCANNFamily {
  std::vector<real> taus;
  std::vector<features::FeatureSpec> specs;
  std::vector<std::vector<FCANNModel>> models;  ///< [horizon][level]; empty at night horizons.
  std::array<bool, kHoursPerDay> zero_horizon{};
};

/// One network per (horizon, level); each gets its own seed derived from config.seed.
FCANNFamily fit_fcann_family(const features::SampleSet& train, std::span<const features::FeatureSpec> specs,
                             const qcore::QuantileGrid& grid, const nnet::TrainConfig& config,
                             std::size_t workers = 1);

/// Raw (unclipped, unrepaired) per-day forecasts; night horizons are exactly 0.
std::vector<qcore::QuantileForecast> predict_fcann_family(const FCANNFamily& family,
                                                          const features::SampleSet& samples);

nlohmann::json to_json(const FCANNModel& model);
FCANNModel fcann_model_from_json(const nlohmann::json& j);

}  // namespace solarqr::fcann
