#pragma once

// Fixtures and brute-force oracles shared by the unit and acceptance tests. The oracles
// deliberately avoid the library code paths they check.

#include "solarqr/core.hpp"
#include "solarqr/dataio.hpp"
#include "solarqr/qcore.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace solarqr::testing {

/// Hourly dataset starting at `first` with power(i) and radiation(i, v) given by callbacks.
inline dataio::RawDataset make_dataset(dataio::HourStamp first, index_t hours, const std::function<real(index_t)>& power,
                                       const std::function<real(index_t, int)>& radiation = {}) {
  dataio::TimeSeries p;
  p.values.resize(hours);
  std::vector<dataio::ExogenousSeries> exo;
  for (auto v : dataio::kVariables) exo.push_back({v, {}, vec(hours)});
  for (index_t i = 0; i < hours; ++i) {
    p.timestamps.push_back(first + i);
    p.values[i] = power(i);
    for (int v = 0; v < 3; ++v) {
      exo[static_cast<std::size_t>(v)].timestamps.push_back(first + i);
      exo[static_cast<std::size_t>(v)].values[i] = radiation ? radiation(i, v) : 1000.0 * (v + 1) + static_cast<real>(i);
    }
  }
  return dataio::align_and_join(p, exo);
}

/// Day 15340 is 2012-01-01.
inline dataio::HourStamp jan1_2012(int hour = 0) { return dataio::HourStamp::from_day_hour(15340, hour); }

inline real pinball_oracle(real y_hat, real y, real tau) {
  const real u = y - y_hat;
  return u > 0 ? tau * u : (tau - 1.0) * u;
}

/// Straight double loop over (timestamp, level), looking actuals up by linear search.
inline std::vector<real> naive_per_tau(const std::vector<qcore::QuantileForecast>& forecasts,
                                       const dataio::TimeSeries& actuals, const std::vector<real>& taus,
                                       const dataio::NightMask* exclude = nullptr) {
  std::vector<real> sums(taus.size(), 0.0);
  long count = 0;
  for (const auto& f : forecasts)
    for (int h = 0; h < kHoursPerDay; ++h) {
      if (exclude && exclude->is_night[static_cast<std::size_t>(h)]) continue;
      const auto t = dataio::HourStamp::from_day_hour(f.day_index, h);
      real y = std::numeric_limits<real>::quiet_NaN();
      for (std::size_t i = 0; i < actuals.timestamps.size(); ++i)
        if (actuals.timestamps[i] == t) y = actuals.values[static_cast<index_t>(i)];
      ++count;
      for (std::size_t q = 0; q < taus.size(); ++q)
        sums[q] += pinball_oracle(f.estimates(h, static_cast<index_t>(q)), y, taus[q]);
    }
  for (auto& s : sums) s /= static_cast<real>(count);
  return sums;
}

inline real sum_pinball(const vec& y_hat, const vec& y, real tau) {
  real s = 0;
  for (index_t i = 0; i < y.size(); ++i) s += pinball_oracle(y_hat[i], y[i], tau);
  return s;
}

/// Exact optimum of mean pinball loss for an affine model by enumerating every basic
/// solution: some optimum interpolates p = cols + 1 data points.
inline real qr_vertex_oracle(const mat& X, const vec& y, real tau) {
  const auto n = X.rows(), p = X.cols() + 1;
  mat A(n, p);
  A.col(0).setOnes();
  A.rightCols(p - 1) = X;
  real best = std::numeric_limits<real>::infinity();
  std::vector<index_t> idx(static_cast<std::size_t>(p));
  std::function<void(index_t, index_t)> rec = [&](index_t start, index_t depth) {
    if (depth == p) {
      mat M(p, p);
      vec b(p);
      for (index_t k = 0; k < p; ++k) {
        M.row(k) = A.row(idx[static_cast<std::size_t>(k)]);
        b[k] = y[idx[static_cast<std::size_t>(k)]];
      }
      Eigen::FullPivLU<mat> lu(M);
      if (!lu.isInvertible()) return;
      const vec theta = lu.solve(b);
      best = std::min(best, sum_pinball(A * theta, y, tau) / static_cast<real>(n));
      return;
    }
    for (index_t i = start; i < n; ++i) {
      idx[static_cast<std::size_t>(depth)] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

/// Intercept-only oracle: dense grid over [min y, max y] refined around the best point.
inline real intercept_grid_oracle(const vec& y, real tau) {
  real lo = y.minCoeff(), hi = y.maxCoeff(), best = std::numeric_limits<real>::infinity();
  real arg = lo;
  for (int round = 0; round < 6; ++round) {
    const int steps = 2000;
    for (int k = 0; k <= steps; ++k) {
      const real c = lo + (hi - lo) * k / steps;
      const real v = sum_pinball(vec::Constant(y.size(), c), y, tau) / static_cast<real>(y.size());
      if (v < best) best = v, arg = c;
    }
    const real width = (hi - lo) / steps * 2;
    lo = arg - width;
    hi = arg + width;
  }
  return best;
}

}  // namespace solarqr::testing
