#pragma once

#include "solarqr/core.hpp"
#include "solarqr/dataio.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace solarqr::features {

/// Raw sample layout: 24 lagged power values, then 24 hourly values of SSRD, STRD and TSR.
inline constexpr index_t kRawFeatureCount = 4 * kHoursPerDay;

constexpr index_t lag_column(int hour) { return hour; }
constexpr index_t radiation_column(dataio::Variable v, int hour) {
  return kHoursPerDay * (1 + static_cast<index_t>(v)) + hour;
}

/// One row per forecast day d: inputs from day d-1 power and day d radiation forecasts,
/// targets are day d power at hours 0..23.
struct SampleSet {
  mat X;
  mat Y;
  std::vector<std::string> feature_names;
  std::vector<std::int64_t> day_indices;
  dataio::NightMask night;
  std::size_t skipped_days = 0;  ///< Candidate days dropped for lack of a complete (d-1, d) pair.

  index_t rows() const noexcept { return X.rows(); }
  SampleSet select_rows(std::span<const index_t> rows) const;
  /// Rows with day index in [first_day, last_day].
  SampleSet day_range(std::int64_t first_day, std::int64_t last_day) const;
};

SampleSet build_samples(const dataio::RawDataset& data, const dataio::NightMask& mask);

/// The 24 lag columns plus SSRD, STRD and TSR at hour h.
std::vector<index_t> candidates_for_horizon(int h);

struct Expansion {
  mat X;
  std::vector<std::string> names;
};

/// All monomials of total degree 1..degree over the chosen columns, ordered by degree and
/// then lexicographically by column position. No constant term.
Expansion polynomial_expand(const Eigen::Ref<const mat>& X, std::span<const index_t> columns, int degree,
                            std::span<const std::string> names = {});

/// Number of monomials of degree 1..degree in n variables: C(n + degree, degree) - 1.
index_t monomial_count(index_t n_vars, int degree);

struct Standardizer {
  vec means;
  vec scales;

  mat apply(const Eigen::Ref<const mat>& X) const;
  mat invert(const Eigen::Ref<const mat>& Z) const;
};

/// Column means and population standard deviations; constant columns get scale 1.
Standardizer fit_standardizer(const Eigen::Ref<const mat>& X_train);

/// Per-horizon model input description shared by the polynomial and FCANN families.
struct FeatureSpec {
  int horizon = 0;
  std::vector<std::string> candidate_names;
  std::vector<index_t> selected_indices;  ///< Raw SampleSet column indices, at most 4.
  int degree = 1;
  Standardizer standardizer;  ///< Fitted on the selected raw columns of the training rows.

  std::vector<std::string> selected_names(const SampleSet& samples) const;
  /// Standardized selected columns of X (before any polynomial expansion).
  mat inputs(const Eigen::Ref<const mat>& X) const;
};

inline constexpr std::size_t kMaxSelected = 4;

void validate(const FeatureSpec& spec, index_t n_columns);

/// Validation loss of a model trained on (X_train, y_train) and evaluated on the validation fold.
using CvTrainer = std::function<real(const mat& X_train, const vec& y_train, const mat& X_valid,
                                     const vec& y_valid, std::uint64_t seed)>;

struct Selection {
  std::vector<index_t> selected;  ///< In order of addition.
  std::vector<real> cv_losses;    ///< CV loss after each addition.
  bool degenerate = false;        ///< Targets carried no signal; the k lowest candidate indices are returned.
};

/// Contiguous [begin, end) row blocks for k-fold CV.
std::vector<std::pair<index_t, index_t>> contiguous_folds(index_t n, int folds);

/// Mean validation loss over contiguous folds for the given column subset.
real cross_validate(const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y, std::span<const index_t> columns,
                    const CvTrainer& trainer, int folds, std::uint64_t seed);

/// Greedy forward selection: repeatedly add the candidate with the lowest CV loss.
/// Candidates are scanned in ascending column order and only a strictly lower loss
/// replaces the incumbent, so ties go to the lowest column index.
Selection forward_select(const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y,
                         std::span<const index_t> candidates, std::size_t k, const CvTrainer& trainer, int folds,
                         std::uint64_t seed);

/// Sidecar record `{horizon, selected: [names], degree, means, scales}`.
nlohmann::json to_json(const FeatureSpec& spec, const SampleSet& samples);
FeatureSpec feature_spec_from_json(const nlohmann::json& j, const SampleSet& samples);

}  // namespace solarqr::features
