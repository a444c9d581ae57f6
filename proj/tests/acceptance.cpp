// Acceptance runner: one PASS / FAIL / SKIP line per criterion.
//
//   acceptance [--only 3,4,5] [--gefcom-config path]
//
// Criteria 1 and 2 need the GEFCom14 solar files. Point --gefcom-config (or the
// SOLARQR_GEFCOM_CONFIG environment variable) at a bench config naming them; without it
// both are reported as SKIP. Exit status: 0 when nothing failed and something ran,
// 77 when every selected criterion was skipped, 1 otherwise.

#include "support.hpp"

#include "solarqr/bench.hpp"
#include "solarqr/fcann.hpp"
#include "solarqr/features.hpp"
#include "solarqr/linqr.hpp"
#include "solarqr/lstm.hpp"
#include "solarqr/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

using namespace solarqr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum class Status { pass, fail, skip } status;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Status::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Status::skip, std::move(d)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const std::map<bench::ModelKind, real> kTableTargets{{bench::ModelKind::Poly1, 1.70}, {bench::ModelKind::Poly2, 1.59},
                                                      {bench::ModelKind::Poly3, 1.66}, {bench::ModelKind::FCANN, 1.43},
                                                      {bench::ModelKind::LSTM, 1.43}};

std::optional<bench::BenchConfig> gefcom_config(const std::string& path) {
  if (path.empty()) return std::nullopt;
  auto c = bench::load_config(path);
  c.models.assign(bench::kAllModels.begin(), bench::kAllModels.end());
  return c;
}

std::map<bench::ModelKind, real> percent_losses(const bench::BenchReport& r) {
  std::map<bench::ModelKind, real> out;
  for (const auto& run : r.runs) out[run.kind] = 100.0 * run.evaluation.avg_loss;
  return out;
}

struct GefcomRuns {
  std::vector<std::map<bench::ModelKind, real>> per_seed;
};

GefcomRuns& gefcom_runs(const bench::BenchConfig& base, std::size_t seeds) {
  static GefcomRuns cache;
  while (cache.per_seed.size() < seeds) {
    auto c = base;
    c.seed = base.seed + cache.per_seed.size();
    c.out_dir = base.out_dir / ("acceptance_seed_" + std::to_string(c.seed));
    cache.per_seed.push_back(percent_losses(bench::run(c)));
  }
  return cache;
}

Outcome table_reproduction(const std::optional<bench::BenchConfig>& cfg) {
  if (!cfg) return skip("GEFCom14 data not configured (set SOLARQR_GEFCOM_CONFIG)");
  const auto& losses = gefcom_runs(*cfg, 1).per_seed.front();
  std::ostringstream detail;
  bool ok = true;
  for (auto [kind, target] : kTableTargets) {
    const real got = losses.at(kind);
    ok = ok && std::abs(got - target) <= 0.35;
    detail << bench::display_name(kind) << " " << fmt("%.2f", got) << " (target " << fmt("%.2f", target) << ") ";
  }
  return ok ? pass(detail.str()) : fail(detail.str());
}

Outcome ordering(const std::optional<bench::BenchConfig>& cfg) {
  if (!cfg) return skip("GEFCom14 data not configured (set SOLARQR_GEFCOM_CONFIG)");
  using bench::ModelKind;
  bool ok = true;
  std::ostringstream detail;
  for (const auto& l : gefcom_runs(*cfg, 3).per_seed) {
    const bool seed_ok = l.at(ModelKind::Poly2) < l.at(ModelKind::Poly1) && l.at(ModelKind::FCANN) < l.at(ModelKind::Poly2) &&
                         std::abs(l.at(ModelKind::LSTM) - l.at(ModelKind::FCANN)) <= 0.15;
    ok = ok && seed_ok;
    detail << "[" << fmt("%.2f", l.at(ModelKind::Poly1)) << " " << fmt("%.2f", l.at(ModelKind::Poly2)) << " "
           << fmt("%.2f", l.at(ModelKind::FCANN)) << " " << fmt("%.2f", l.at(ModelKind::LSTM)) << "] ";
  }
  return ok ? pass(detail.str()) : fail(detail.str());
}

Outcome solver_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<real> u(0, 1);
  real worst = 0;
  int instances = 0;
  for (int k = 0; k < 24; ++k) {
    const bool intercept_only = k % 2 == 0;
    const index_t n = 10 + 40 * k / 23;
    const mat X = mat::NullaryExpr(n, intercept_only ? 0 : 2, [&] { return u(rng); });
    vec y = vec::NullaryExpr(n, [&] { return u(rng); });
    if (!intercept_only) y += 0.8 * X.col(0) - 0.3 * X.col(1);
    const real tau = 0.05 + 0.9 * u(rng);
    const auto m = linqr::fit_linear_qr(X, y, qcore::QuantileLevel(tau));
    real oracle = testing::qr_vertex_oracle(X, y, tau);
    if (intercept_only) oracle = std::min(oracle, testing::intercept_grid_oracle(y, tau));
    worst = std::max(worst, std::abs(m.training_objective - oracle) / oracle);
    ++instances;
  }
  const auto d = std::to_string(instances) + " instances, n <= 50, worst relative gap " + fmt("%.2e", worst);
  return worst <= 1e-6 ? pass(d) : fail(d);
}

Outcome gradient_checks() {
  std::mt19937_64 rng(99);
  std::normal_distribution<real> g(0, 0.7);

  // FCANN 4 -> 10 -> 1.
  real fc_worst = 0;
  {
    const auto layout = fcann::make_layout(4, 10);
    const vec params = vec::NullaryExpr(layout.size(), [&] { return g(rng); });
    const mat X = mat::NullaryExpr(30, 4, [&] { return g(rng); });
    const vec y = vec::NullaryExpr(30, [&] { return g(rng); });
    for (real tau : {0.05, 0.5, 0.95}) {
      vec grad;
      fcann::loss_and_gradient(layout, params, X, y, tau, nullptr, grad);
      const nnet::ApplyFn apply = [&](const vec& p) { return fcann::forward(layout, p, X); };
      fc_worst = std::max(fc_worst, nnet::grad_check(apply, params, y, tau, grad));
    }
  }

  // LSTM, hidden 3, 4 steps, one output level.
  real lstm_worst = 0;
  {
    const lstm::LSTMShape shape{4, 3, 4, 1};
    const auto layout = lstm::make_layout(shape);
    const vec flat = vec::NullaryExpr(layout.size(), [&] { return g(rng); });
    const index_t B = 3;
    std::vector<mat> steps;
    for (int t = 0; t < 4; ++t) steps.push_back(mat::NullaryExpr(4, B, [&] { return g(rng); }));
    const mat targets = mat::NullaryExpr(4, B, [&] { return g(rng); });
    const std::vector<char> active(4, 1);
    // Element order day-major, step-minor on both sides.
    vec y(4 * B);
    for (index_t b = 0; b < B; ++b) y.segment(4 * b, 4) = targets.col(b);
    for (const bool sigmoid_only : {false, true})
      for (real tau : {0.1, 0.5, 0.9}) {
        const std::vector<real> taus{tau};
        vec grad;
        lstm::loss_and_gradient(layout, flat, shape, steps, targets, active, taus, {}, sigmoid_only, grad);
        const nnet::ApplyFn apply = [&](const vec& p) {
          const auto params = lstm::unpack(layout, p);
          vec out(4 * B);
          for (index_t b = 0; b < B; ++b) {
            mat seq(4, 4);
            for (int t = 0; t < 4; ++t) seq.col(t) = steps[static_cast<std::size_t>(t)].col(b);
            out.segment(4 * b, 4) = lstm::lstm_forward(seq, params, shape, sigmoid_only).row(0).transpose();
          }
          return out;
        };
        lstm_worst = std::max(lstm_worst, nnet::grad_check(apply, flat, y, tau, grad));
      }
  }
  const auto d = "FCANN 4-10-1 max rel err " + fmt("%.2e", fc_worst) + ", LSTM h=3 T=4 max rel err " + fmt("%.2e", lstm_worst);
  return (fc_worst <= 1e-4 && lstm_worst <= 1e-4) ? pass(d) : fail(d);
}

Outcome quantile_recovery() {
  const auto train = synthetic::heteroscedastic(2000, 7);
  const auto scaler = features::fit_standardizer(train.X);
  const mat Z = scaler.apply(train.X);
  mat grid_x(101, 1);
  for (index_t i = 0; i <= 100; ++i) grid_x(i, 0) = static_cast<real>(i) / 100.0;
  const mat grid_z = scaler.apply(grid_x);

  nnet::TrainConfig cfg;
  cfg.seed = 11;
  cfg.dropout_rate = 0;
  cfg.learning_rate = 1e-2;

  real poly_worst = 0, nn_worst = 0;
  for (real tau : {0.1, 0.5, 0.9}) {
    const auto lin = linqr::fit_linear_qr(train.X, train.y, qcore::QuantileLevel(tau));
    const vec lin_pred = linqr::predict_linear_raw(lin, grid_x);
    const auto net = fcann::fit_fcann(Z, train.y, qcore::QuantileLevel(tau), cfg);
    const vec net_pred = fcann::forward(net.params, net.params.values(), grid_z);
    for (index_t i = 0; i <= 100; ++i) {
      const real truth = synthetic::heteroscedastic_quantile(grid_x(i, 0), tau);
      poly_worst = std::max(poly_worst, std::abs(lin_pred[i] - truth));
      nn_worst = std::max(nn_worst, std::abs(net_pred[i] - truth));
    }
  }
  const auto d = "max abs error on x in [0,1]: Poly1 " + fmt("%.4f", poly_worst) + ", FCANN " + fmt("%.4f", nn_worst);
  return (poly_worst <= 0.05 && nn_worst <= 0.05) ? pass(d) : fail(d);
}

Outcome invariant_suite() {
  std::vector<std::string> broken;
  auto expect = [&](bool ok, const char* name) {
    if (!ok) broken.emplace_back(name);
  };
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<real> u(0, 1);

  {
    bool nonneg = true, convex = true;
    for (int k = 0; k < 5000; ++k) {
      const real a = 2 * u(rng) - 0.5, b = 2 * u(rng) - 0.5, y = u(rng), tau = 0.001 + 0.998 * u(rng), lam = u(rng);
      nonneg = nonneg && qcore::pinball(a, y, tau) >= 0 && (qcore::pinball(a, y, tau) == 0) == (a == y);
      convex = convex && qcore::pinball(lam * a + (1 - lam) * b, y, tau) <=
                             lam * qcore::pinball(a, y, tau) + (1 - lam) * qcore::pinball(b, y, tau) + 1e-12;
    }
    expect(nonneg, "pinball non-negativity");
    expect(convex, "pinball convexity");
  }
  {
    bool ok = true;
    for (int k = 0; k < 200; ++k) {
      const vec row = vec::NullaryExpr(99, [&] { return u(rng); });
      const vec fixed = qcore::repair_crossing(row);
      std::vector<real> a(row.data(), row.data() + 99), b(fixed.data(), fixed.data() + 99);
      std::sort(a.begin(), a.end());
      ok = ok && std::is_sorted(b.begin(), b.end()) && a == b;
    }
    expect(ok, "crossing repair monotone and permutation-preserving");
  }

  synthetic::SolarConfig sc;
  sc.days = 40;
  const auto solar = synthetic::generate_solar(sc);
  const auto data = dataio::align_and_join(solar.power, solar.weather);
  const auto split = dataio::split_train_test(data, 0.7);
  {
    std::vector<dataio::HourStamp> ts = split.train.power.timestamps;
    ts.insert(ts.end(), split.test.power.timestamps.begin(), split.test.power.timestamps.end());
    vec v(data.size());
    v << split.train.power.values, split.test.power.values;
    expect(ts == data.power.timestamps && v == data.power.values, "split round-trip");
  }
  {
    const mat R = mat::NullaryExpr(50, 6, [&] { return 1e4 * u(rng); });
    const auto s = features::fit_standardizer(R);
    expect((s.invert(s.apply(R)) - R).cwiseAbs().maxCoeff() <= 1e-12 * 1e4, "standardizer round-trip");
  }

  const auto night = dataio::derive_night_mask(split.train);
  const auto samples = features::build_samples(data, night);
  const auto cut = split.test.first().day();
  const auto train = samples.day_range(std::numeric_limits<std::int64_t>::min(), cut - 1);
  const auto test = samples.day_range(cut, std::numeric_limits<std::int64_t>::max());
  std::vector<features::FeatureSpec> specs;
  for (int h = 0; h < kHoursPerDay; ++h) {
    features::FeatureSpec spec;
    spec.horizon = h;
    spec.selected_indices = {features::lag_column(h), features::radiation_column(dataio::Variable::SSRD, h)};
    mat sel(train.rows(), 2);
    for (int k = 0; k < 2; ++k) sel.col(k) = train.X.col(spec.selected_indices[static_cast<std::size_t>(k)]);
    spec.standardizer = features::fit_standardizer(sel);
    specs.push_back(std::move(spec));
  }
  const auto grid = qcore::QuantileGrid({0.1, 0.5, 0.9});
  {
    auto fc = linqr::predict_poly_family(linqr::fit_poly_family(train, specs, grid, 1), test);
    bool zero = true;
    for (auto& f : fc) {
      qcore::clip_and_repair(f);
      for (int h : night.night_hours()) zero = zero && f.estimates.row(h).isZero(0.0);
    }
    expect(!night.night_hours().empty() && zero, "night-hour zero-forcing (linear)");
  }
  {
    nnet::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 3;
    const auto a = fcann::fit_fcann_family(train, specs, grid, cfg);
    const auto b = fcann::fit_fcann_family(train, specs, grid, cfg);
    auto fa = fcann::predict_fcann_family(a, test), fb = fcann::predict_fcann_family(b, test);
    bool same = fa.size() == fb.size(), zero = true;
    for (std::size_t d = 0; d < fa.size() && same; ++d) {
      same = fa[d].estimates == fb[d].estimates;
      for (int h : night.night_hours()) zero = zero && fa[d].estimates.row(h).isZero(0.0);
    }
    expect(same, "FCANN determinism under fixed seed");
    expect(zero, "night-hour zero-forcing (FCANN)");
  }
  {
    auto cfg = lstm::default_train_config();
    cfg.epochs = 3;
    cfg.seed = 3;
    lstm::LSTMOptions opt;
    opt.hidden = 6;
    const auto a = lstm::fit_lstm(train, night, grid, cfg, opt);
    const auto b = lstm::fit_lstm(train, night, grid, cfg, opt);
    expect(a.params.values() == b.params.values(), "LSTM determinism under fixed seed");
    bool zero = true;
    for (const auto& f : lstm::predict_lstm(a, test))
      for (int h : night.night_hours()) zero = zero && f.estimates.row(h).isZero(0.0);
    expect(zero, "night-hour zero-forcing (LSTM)");
  }
  {
    const auto trainer = linqr::linear_cv_trainer(0.5);
    const auto cand = features::candidates_for_horizon(12);
    const auto a = features::forward_select(train.X, train.Y.col(12), cand, 4, trainer, 5, 8);
    const auto b = features::forward_select(train.X, train.Y.col(12), cand, 4, trainer, 5, 8);
    expect(a.selected == b.selected, "forward selection determinism");
  }

  if (broken.empty()) return pass("all invariants hold");
  std::string d = "violated:";
  for (const auto& b : broken) d += " [" + b + "]";
  return fail(d);
}

Outcome scoring_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<real> u(0, 1);
  const auto grid = qcore::QuantileGrid::percentiles();
  const std::vector<real> taus(grid.levels().begin(), grid.levels().end());
  real worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto first = testing::jan1_2012() + trial * 24;
    dataio::TimeSeries actuals;
    actuals.values.resize(5 * 24);
    for (int i = 0; i < 5 * 24; ++i) {
      actuals.timestamps.push_back(first + i);
      actuals.values[i] = u(rng) < 0.3 ? 0.0 : u(rng);
    }
    std::vector<qcore::QuantileForecast> fc;
    for (int d = 0; d < 5; ++d) {
      qcore::QuantileForecast f{first.day() + d, mat::NullaryExpr(24, 99, [&] { return u(rng); })};
      qcore::clip_and_repair(f);
      fc.push_back(std::move(f));
    }
    dataio::NightMask mask;
    for (int h = 0; h < kHoursPerDay; ++h) mask.is_night[static_cast<std::size_t>(h)] = u(rng) < 0.3;
    for (const dataio::NightMask* m : std::array<const dataio::NightMask*, 2>{nullptr, &mask}) {
      const auto r = qcore::score(fc, actuals, grid, "oracle", {m});
      const auto naive = testing::naive_per_tau(fc, actuals, taus, m);
      real mean = 0;
      for (std::size_t q = 0; q < taus.size(); ++q) {
        worst = std::max(worst, std::abs(r.per_tau_losses[static_cast<index_t>(q)] - naive[q]));
        mean += naive[q];
      }
      worst = std::max(worst, std::abs(r.avg_loss - mean / static_cast<real>(taus.size())));
    }
  }
  const auto d = "40 scorings of 5-day fixtures, max abs diff " + fmt("%.2e", worst);
  return worst <= 1e-12 ? pass(d) : fail(d);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string config_path;
  if (const char* env = std::getenv("SOLARQR_GEFCOM_CONFIG")) config_path = env;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--gefcom-config", config_path, "Bench config naming the GEFCom14 solar files");
  CLI11_PARSE(app, argc, argv);

  std::optional<bench::BenchConfig> gefcom;
  try {
    gefcom = gefcom_config(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"Table 1 losses within 0.35 pp", [&] { return table_reproduction(gefcom); }},
      {"Model ordering across 3 seeds", [&] { return ordering(gefcom); }},
      {"Exact solver vs enumeration oracle", solver_oracle},
      {"Gradient checks", gradient_checks},
      {"Synthetic quantile recovery", quantile_recovery},
      {"Invariant suite", invariant_suite},
      {"Scoring vs naive loop", scoring_oracle},
  };
  const std::set<int> selected(only.begin(), only.end());
  int passed = 0, failed = 0, skipped = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.status == Outcome::Status::pass ? "PASS" : o.status == Outcome::Status::fail ? "FAIL" : "SKIP";
    (o.status == Outcome::Status::pass ? passed : o.status == Outcome::Status::fail ? failed : skipped)++;
    std::printf("%s  [%d] %s: %s (%.1fs)\n", tag, id, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d passed, %d failed, %d skipped\n", passed, failed, skipped);
  if (failed > 0) return 1;
  return passed == 0 ? 77 : 0;
}
