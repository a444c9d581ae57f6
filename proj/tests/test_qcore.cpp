#include "support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace solarqr;
using namespace solarqr::qcore;
using doctest::Approx;

TEST_CASE("quantile levels and grids validate") {
  CHECK_THROWS_AS(QuantileLevel(0.0), PreconditionError);
  CHECK_THROWS_AS(QuantileLevel(1.0), PreconditionError);
  CHECK(QuantileLevel(0.3).value() == 0.3);
  const auto grid = QuantileGrid::percentiles();
  CHECK(grid.size() == 99);
  CHECK(grid[0] == Approx(0.01));
  CHECK(grid[98] == Approx(0.99));
  CHECK(grid.index_of(0.05) == 4);
  CHECK(grid.index_of(0.95) == 94);
  CHECK_THROWS_AS(grid.index_of(0.055), LookupError);
  CHECK_THROWS(QuantileGrid({0.2, 0.1}));
}

TEST_CASE("pinball hand values") {
  CHECK(pinball(0.5, 0.5, 0.3) == 0.0);
  // Under-forecast pays tau per unit, over-forecast pays 1 - tau.
  CHECK(pinball(0.5, 0.8, 0.9) == Approx(0.27));
  CHECK(pinball(0.6, 0.4, 0.2) == Approx(0.16));
  CHECK(pinball(0.5, 0.8, 0.9) == Approx(testing::pinball_oracle(0.5, 0.8, 0.9)));
}

TEST_CASE("pinball properties on random inputs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<real> u(-1, 2), unit(0.001, 0.999);
  for (int k = 0; k < 2000; ++k) {
    const real a = u(rng), b = u(rng), y = u(rng), tau = unit(rng), lam = unit(rng);
    CHECK(pinball(a, y, tau) >= 0.0);
    CHECK((pinball(a, y, tau) == 0.0) == (a == y));
    CHECK(pinball(lam * a + (1 - lam) * b, y, tau) <= lam * pinball(a, y, tau) + (1 - lam) * pinball(b, y, tau) + 1e-12);
    CHECK(pinball(a, y, 0.5) == Approx(0.5 * std::abs(a - y)).epsilon(1e-12));
    CHECK(pinball(a, y, tau) == Approx(testing::pinball_oracle(a, y, tau)).epsilon(1e-12));
  }
}

TEST_CASE("score: perfect forecast and the alternating-actuals example") {
  const auto grid = QuantileGrid({0.5});
  dataio::TimeSeries actuals;
  actuals.values.resize(24);
  for (int h = 0; h < 24; ++h) {
    actuals.timestamps.push_back(testing::jan1_2012(h));
    actuals.values[h] = h % 2 == 0 ? 0.0 : 0.4;
  }
  QuantileForecast f{15340, mat::Constant(24, 1, 0.2)};
  const auto r = score(std::span(&f, 1), actuals, grid, "const");
  CHECK(r.per_tau_losses[0] == Approx(0.1).epsilon(1e-14));
  CHECK(r.avg_loss == Approx(0.1).epsilon(1e-14));
  CHECK(r.n == 24);

  QuantileForecast perfect{15340, actuals.values};
  CHECK(score(std::span(&perfect, 1), actuals, grid, "p").avg_loss == 0.0);
}

TEST_CASE("score matches a naive loop and honours the night exclusion") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<real> u(0, 1);
  const auto grid = QuantileGrid::percentiles();
  const std::vector<real> taus(grid.levels().begin(), grid.levels().end());
  dataio::TimeSeries actuals;
  actuals.values.resize(5 * 24);
  for (int i = 0; i < 5 * 24; ++i) {
    actuals.timestamps.push_back(testing::jan1_2012() + i);
    actuals.values[i] = u(rng);
  }
  std::vector<QuantileForecast> fc;
  for (int d = 0; d < 5; ++d) fc.push_back({15340 + d, mat::NullaryExpr(24, 99, [&] { return u(rng); })});
  dataio::NightMask night;
  for (int h : {0, 1, 2, 22, 23}) night.is_night[static_cast<std::size_t>(h)] = true;

  for (const dataio::NightMask* mask : std::array<const dataio::NightMask*, 2>{nullptr, &night}) {
    const auto r = score(fc, actuals, grid, "rand", {mask});
    const auto oracle = testing::naive_per_tau(fc, actuals, taus, mask);
    real mean = 0;
    for (std::size_t q = 0; q < taus.size(); ++q) {
      CHECK(std::abs(r.per_tau_losses[static_cast<index_t>(q)] - oracle[q]) <= 1e-12);
      mean += oracle[q] / 99.0;
    }
    CHECK(std::abs(r.avg_loss - mean) <= 1e-12);
  }
}

TEST_CASE("score rejects forecasts without matching actuals") {
  const auto grid = QuantileGrid({0.5});
  dataio::TimeSeries actuals;
  actuals.values = vec::Zero(24);
  for (int h = 0; h < 24; ++h) actuals.timestamps.push_back(testing::jan1_2012(h));
  QuantileForecast f{15341, mat::Zero(24, 1)};
  CHECK_THROWS_AS(score(std::span(&f, 1), actuals, grid, "x"), ScoringError);
}

TEST_CASE("repair_crossing examples and sort-oracle property") {
  CHECK(repair_crossing(vec{{0.2, 0.3, 0.5}}) == vec{{0.2, 0.3, 0.5}});
  CHECK(repair_crossing(vec{{0.3, 0.2, 0.5}}) == vec{{0.2, 0.3, 0.5}});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<real> u(0, 1);
  for (int k = 0; k < 50; ++k) {
    const vec row = vec::NullaryExpr(99, [&] { return u(rng); });
    const vec out = repair_crossing(row);
    std::vector<real> a(row.data(), row.data() + 99), b(out.data(), out.data() + 99);
    CHECK(std::is_sorted(b.begin(), b.end()));
    std::sort(a.begin(), a.end());
    CHECK(a == b);
  }
}

TEST_CASE("repair never raises the grid-averaged loss on small random instances") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<real> u(0, 1);
  const auto grid = QuantileGrid::percentiles();
  for (int k = 0; k < 200; ++k) {
    const vec row = vec::NullaryExpr(99, [&] { return u(rng); });
    const real y = u(rng);
    const vec fixed = repair_crossing(row);
    real before = 0, after = 0;
    for (index_t q = 0; q < 99; ++q) {
      before += pinball(row[q], y, grid[q]);
      after += pinball(fixed[q], y, grid[q]);
    }
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("clip_and_repair bounds and orders each row") {
  QuantileForecast f{0, mat(24, 3)};
  f.estimates.setConstant(0.5);
  f.estimates.row(3) << 1.4, -0.2, 0.3;
  clip_and_repair(f);
  CHECK(f.estimates(3, 0) == 0.0);
  CHECK(f.estimates(3, 1) == 0.3);
  CHECK(f.estimates(3, 2) == 1.0);
}

TEST_CASE("interval extraction") {
  const auto grid = QuantileGrid::percentiles();
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<real> u(0, 1);
  QuantileForecast f{15340, mat::NullaryExpr(24, 99, [&] { return u(rng); })};
  clip_and_repair(f);
  const auto iv = interval(f, grid, 0.05, 0.95);
  CHECK(iv.nominal_coverage == Approx(0.90));
  CHECK(((iv.upper - iv.lower).array() >= 0).all());
  CHECK_THROWS_AS(interval(f, grid, 0.5, 0.5), PreconditionError);
  CHECK_THROWS_AS(interval(f, grid, 0.05, 0.955), LookupError);
}

TEST_CASE("percent rendering and table layout") {
  CHECK(format_percent(0.0143) == "1.43");
  CHECK(format_percent(0.014349) == "1.43");
  CHECK(format_percent(0.014351) == "1.44");
  CHECK(format_percent(0.017) == "1.70");
  CHECK(format_percent(0.0) == "0.00");
  EvaluationReport r;
  r.model_name = "FCANN";
  r.avg_loss = 0.0143;
  const auto table = render_table(std::span(&r, 1));
  CHECK(table.find("FCANN  1.43") != std::string::npos);
  CHECK(table.rfind("Model", 0) == 0);
  r.taus = {0.5};
  r.per_tau_losses = vec::Constant(1, 0.0143);
  const auto csv = render_csv(r);
  CHECK(csv.rfind("model,tau,loss\n", 0) == 0);
  CHECK(csv.find("FCANN,0.5,") != std::string::npos);
}
