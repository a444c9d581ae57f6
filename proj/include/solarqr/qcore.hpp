#pragma once

#include "solarqr/core.hpp"
#include "solarqr/dataio.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace solarqr::qcore {

/// A probability level tau in the open interval (0, 1).
class QuantileLevel {
 public:
  explicit QuantileLevel(real tau);
  real value() const noexcept { return tau_; }
  operator real() const noexcept { return tau_; }

 private:
  real tau_;
};

/// Strictly increasing set of quantile levels.
class QuantileGrid {
 public:
  explicit QuantileGrid(std::vector<real> levels);

  /// tau = 0.01, 0.02, ..., 0.99.
  static QuantileGrid percentiles();

  index_t size() const noexcept { return static_cast<index_t>(levels_.size()); }
  real operator[](index_t i) const { return levels_[static_cast<std::size_t>(i)]; }
  std::span<const real> levels() const noexcept { return levels_; }

  std::optional<index_t> find(real tau, real tolerance = 1e-9) const;
  /// Throws LookupError when tau is not a grid level.
  index_t index_of(real tau) const;

 private:
  std::vector<real> levels_;
};

/// Pinball (quantile) loss of estimate `y_hat` for observation `y`:
/// tau * (y - y_hat) when y > y_hat, else (1 - tau) * (y_hat - y).
/// Its expected value is minimized by the tau-quantile of y. The tie y == y_hat belongs
/// to the else branch, which also fixes the subgradient there (1 - tau).
template <class Scalar>
constexpr Scalar pinball(Scalar y_hat, Scalar y, Scalar tau) {
  return y > y_hat ? tau * (y - y_hat) : (Scalar(1) - tau) * (y_hat - y);
}

/// Elementwise mean pinball loss of an estimate vector against observations.
template <class DerivedA, class DerivedB>
typename DerivedA::Scalar mean_pinball(const Eigen::MatrixBase<DerivedA>& y_hat, const Eigen::MatrixBase<DerivedB>& y,
                                       typename DerivedA::Scalar tau) {
  using Scalar = typename DerivedA::Scalar;
  require(y_hat.size() == y.size(), "mean_pinball: size mismatch");
  if (y.size() == 0) return Scalar(0);
  Scalar sum(0);
  for (index_t i = 0; i < y.size(); ++i) sum += pinball<Scalar>(y_hat.derived().coeff(i), y.derived().coeff(i), tau);
  return sum / static_cast<Scalar>(y.size());
}

/// One day of quantile estimates: rows are hours 0..23, columns follow the grid.
struct QuantileForecast {
  std::int64_t day_index = 0;  ///< Day number as in dataio::HourStamp::day().
  mat estimates;

  dataio::HourStamp timestamp(int hour) const { return dataio::HourStamp::from_day_hour(day_index, hour); }
};

struct IntervalForecast {
  real lower_tau = 0;
  real upper_tau = 0;
  vec lower;
  vec upper;
  real nominal_coverage = 0;
};

struct EvaluationReport {
  std::string model_name;
  std::vector<real> taus;
  vec per_tau_losses;
  real avg_loss = 0;
  index_t n = 0;  ///< Number of scored (day, hour) pairs.
};

struct ScoreOptions {
  /// Hours excluded from scoring; null scores every hour.
  const dataio::NightMask* exclude_hours = nullptr;
};

/// Per-level mean pinball loss over every (day, hour) covered, and the mean over levels.
/// Forecast and actual timestamps must coincide exactly.
EvaluationReport score(std::span<const QuantileForecast> forecasts, const dataio::TimeSeries& actuals,
                       const QuantileGrid& grid, std::string model_name, const ScoreOptions& options = {});

/// Monotone rearrangement: the row's values sorted ascending.
vec repair_crossing(const Eigen::Ref<const vec>& row);

/// Clip to [0, 1], then rearrange each hour row.
void clip_and_repair(QuantileForecast& forecast);

IntervalForecast interval(const QuantileForecast& forecast, const QuantileGrid& grid, real lower_tau, real upper_tau);

/// Loss in percent rounded half away from zero to two decimals, e.g. 0.0143 -> "1.43".
std::string format_percent(real loss);

/// Two-column text table: `Model  Avg. Pinball-loss [%]`, one row per report in the given order.
std::string render_table(std::span<const EvaluationReport> reports);

/// CSV `model,tau,loss` with one row per level and a final `model,mean,avg` row.
std::string render_csv(const EvaluationReport& report);

}  // namespace solarqr::qcore
