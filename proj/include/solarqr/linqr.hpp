#pragma once

#include "solarqr/core.hpp"
#include "solarqr/features.hpp"
#include "solarqr/qcore.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace solarqr::linqr {

/// Linear quantile regression y ~ intercept + X * weights for one level tau.
struct LinearQRModel {
  real tau = 0.5;
  int horizon = -1;
  int degree = 1;
  real intercept = 0;
  vec weights;
  real training_objective = 0;  ///< Mean pinball loss on the training rows (unclipped).
  std::vector<std::string> feature_names;
};

inline constexpr real kDefaultTolerance = 1e-6;
inline constexpr int kDefaultMaxIter = 500;

/// Minimizes the mean pinball loss of an affine predictor.
///
/// A smoothed-pinball IRLS pass (smoothing decayed 1e-2 -> 1e-6) lands close to the
/// optimum; an exact edge walk over basic solutions then finishes on an optimal vertex
/// of the underlying linear program. Rank-deficient designs are solved on an independent
/// column subset and mapped back to the minimum-norm parameter vector.
///
/// Throws PreconditionError when X has fewer than cols + 1 rows and ConvergenceError
/// (carrying the best objective seen) when the edge walk exceeds max_iter pivots.
LinearQRModel fit_linear_qr(const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y, qcore::QuantileLevel tau,
                            real tol = kDefaultTolerance, int max_iter = kDefaultMaxIter);

/// Unclipped affine prediction.
vec predict_linear_raw(const LinearQRModel& model, const Eigen::Ref<const mat>& X);

/// Affine prediction clipped to [0, 1].
vec predict_linear(const LinearQRModel& model, const Eigen::Ref<const mat>& X);

/// Mean pinball objective of the unclipped predictor on (X, y).
real objective(const LinearQRModel& model, const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y);

/// CV trainer for forward selection: degree-1 fit at `tau`, scored by mean pinball loss of
/// the clipped predictions on the validation fold.
features::CvTrainer linear_cv_trainer(real tau = 0.5);

/// Poly1/Poly2/Poly3: one model per (horizon, level).
struct PolyFamily {
  int degree = 1;
  std::vector<real> taus;
  std::vector<features::FeatureSpec> specs;           ///< Indexed by horizon.
  std::vector<std::vector<LinearQRModel>> models;     ///< [horizon][level].
  std::array<bool, kHoursPerDay> zero_horizon{};      ///< Night horizons predict 0.

  const LinearQRModel& model(int horizon, index_t level) const {
    return models.at(static_cast<std::size_t>(horizon)).at(static_cast<std::size_t>(level));
  }
};

/// Expanded design for one horizon: standardized selected columns raised to `degree`.
features::Expansion design_matrix(const features::FeatureSpec& spec, const features::SampleSet& samples, int degree);

/// `specs` holds one FeatureSpec per horizon (index = hour). Night horizons of the sample
/// mask get constant-zero models. Fits run on up to `workers` threads.
PolyFamily fit_poly_family(const features::SampleSet& train, std::span<const features::FeatureSpec> specs,
                           const qcore::QuantileGrid& grid, int degree, std::size_t workers = 1,
                           real tol = kDefaultTolerance, int max_iter = kDefaultMaxIter);

/// Raw (unclipped, unrepaired) per-day forecasts; night horizons are exactly 0.
std::vector<qcore::QuantileForecast> predict_poly_family(const PolyFamily& family, const features::SampleSet& samples);

/// `{tau, horizon, degree, intercept, weights, feature_names}`.
nlohmann::json to_json(const LinearQRModel& model);
LinearQRModel linear_model_from_json(const nlohmann::json& j);

}  // namespace solarqr::linqr
