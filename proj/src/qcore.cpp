#include "solarqr/qcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace solarqr::qcore {

QuantileLevel::QuantileLevel(real tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw PreconditionError("quantile level must lie in (0, 1)");
}

QuantileGrid::QuantileGrid(std::vector<real> levels) : levels_(std::move(levels)) {
  require(!levels_.empty(), "quantile grid must not be empty");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    QuantileLevel{levels_[i]};
    if (i > 0 && !(levels_[i] > levels_[i - 1])) throw PreconditionError("quantile grid must be strictly increasing");
  }
}

QuantileGrid QuantileGrid::percentiles() {
  std::vector<real> taus;
  for (int i = 1; i <= 99; ++i) taus.push_back(i / 100.0);
  return QuantileGrid(std::move(taus));
}

std::optional<index_t> QuantileGrid::find(real tau, real tolerance) const {
  const auto it = std::lower_bound(levels_.begin(), levels_.end(), tau - tolerance);
  if (it != levels_.end() && std::abs(*it - tau) <= tolerance) return static_cast<index_t>(it - levels_.begin());
  return std::nullopt;
}

index_t QuantileGrid::index_of(real tau) const {
  if (auto i = find(tau)) return *i;
  std::ostringstream os;
  os << "quantile level " << tau << " is not in the grid";
  throw LookupError(os.str());
}

EvaluationReport score(std::span<const QuantileForecast> forecasts, const dataio::TimeSeries& actuals,
                       const QuantileGrid& grid, std::string model_name, const ScoreOptions& options) {
  std::map<std::int64_t, real> actual_at;
  for (index_t i = 0; i < actuals.size(); ++i)
    actual_at.emplace(actuals.timestamps[static_cast<std::size_t>(i)].hours, actuals.values[i]);

  std::vector<std::string> missing;
  auto note_missing = [&](const std::string& what) {
    if (missing.size() < 10) missing.push_back(what);
  };
  std::map<std::int64_t, bool> covered;
  for (const auto& f : forecasts) {
    if (f.estimates.rows() != kHoursPerDay || f.estimates.cols() != grid.size())
      throw ScoringError("forecast for day " + dataio::format_date(f.timestamp(0)) + " has shape " +
                         std::to_string(f.estimates.rows()) + "x" + std::to_string(f.estimates.cols()));
    for (int h = 0; h < kHoursPerDay; ++h) {
      const auto t = f.timestamp(h);
      if (!covered.emplace(t.hours, true).second)
        throw ScoringError("duplicate forecast for " + dataio::format_timestamp(t));
      if (!actual_at.count(t.hours)) note_missing("actual " + dataio::format_timestamp(t));
    }
  }
  for (const auto& [t, _] : actual_at)
    if (!covered.count(t)) note_missing("forecast " + dataio::format_timestamp(dataio::HourStamp{t}));
  if (!missing.empty() || forecasts.empty()) {
    std::string msg = "forecasts do not cover the actuals exactly; missing:";
    for (const auto& m : missing) msg += " " + m + ";";
    if (forecasts.empty()) msg += " (no forecasts)";
    throw ScoringError(msg);
  }

  EvaluationReport report;
  report.model_name = std::move(model_name);
  report.taus.assign(grid.levels().begin(), grid.levels().end());
  report.per_tau_losses = vec::Zero(grid.size());
  for (const auto& f : forecasts) {
    for (int h = 0; h < kHoursPerDay; ++h) {
      if (options.exclude_hours && options.exclude_hours->contains(h)) continue;
      const real y = actual_at.at(f.timestamp(h).hours);
      for (index_t q = 0; q < grid.size(); ++q) report.per_tau_losses[q] += pinball(f.estimates(h, q), y, grid[q]);
      ++report.n;
    }
  }
  if (report.n == 0) throw ScoringError("no (day, hour) pairs left to score");
  report.per_tau_losses /= static_cast<real>(report.n);
  report.avg_loss = report.per_tau_losses.mean();
  return report;
}

vec repair_crossing(const Eigen::Ref<const vec>& row) {
  require(row.size() > 0, "repair_crossing: empty row");
  vec out = row;
  std::sort(out.data(), out.data() + out.size());
  return out;
}

void clip_and_repair(QuantileForecast& forecast) {
  auto& e = forecast.estimates;
  e = e.cwiseMax(0.0).cwiseMin(1.0);
  for (index_t h = 0; h < e.rows(); ++h) {
    vec row = e.row(h).transpose();
    std::sort(row.data(), row.data() + row.size());
    e.row(h) = row.transpose();
  }
}

IntervalForecast interval(const QuantileForecast& forecast, const QuantileGrid& grid, real lower_tau,
                          real upper_tau) {
  if (!(lower_tau < upper_tau)) throw PreconditionError("interval: lower level must be below upper level");
  const auto lo = grid.index_of(lower_tau);
  const auto hi = grid.index_of(upper_tau);
  require(forecast.estimates.cols() == grid.size(), "interval: forecast width does not match the grid");
  IntervalForecast out;
  out.lower_tau = grid[lo];
  out.upper_tau = grid[hi];
  out.lower = forecast.estimates.col(lo);
  out.upper = forecast.estimates.col(hi);
  out.nominal_coverage = out.upper_tau - out.lower_tau;
  return out;
}

std::string format_percent(real loss) {
  const real pct = loss * 100.0;
  // Round on the scaled value; std::round rounds half away from zero.
  const real rounded = std::round(pct * 100.0) / 100.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", rounded == 0.0 ? 0.0 : rounded);
  return buf;
}

std::string render_table(std::span<const EvaluationReport> reports) {
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.model_name.size());
  std::ostringstream os;
  os << std::string("Model") << std::string(width - 5 + 2, ' ') << "Avg. Pinball-loss [%]\n";
  for (const auto& r : reports)
    os << r.model_name << std::string(width - r.model_name.size() + 2, ' ') << format_percent(r.avg_loss) << '\n';
  return os.str();
}

std::string render_csv(const EvaluationReport& report) {
  std::ostringstream os;
  char buf[64];
  os << "model,tau,loss\n";
  for (std::size_t i = 0; i < report.taus.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g,%.17g", report.taus[i], report.per_tau_losses[static_cast<index_t>(i)]);
    os << report.model_name << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g", report.avg_loss);
  os << report.model_name << ",mean," << buf << '\n';
  return os.str();
}

}  // namespace solarqr::qcore
