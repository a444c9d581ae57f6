#include "solarqr/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace solarqr::features {

namespace {

std::string hour_name(std::string_view prefix, int hour) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*s_h%02d", static_cast<int>(prefix.size()), prefix.data(), hour);
  return buf;
}

std::vector<std::string> raw_feature_names() {
  std::vector<std::string> names;
  for (int h = 0; h < kHoursPerDay; ++h) names.push_back(hour_name("P_lag", h));
  for (auto v : dataio::kVariables)
    for (int h = 0; h < kHoursPerDay; ++h) names.push_back(hour_name(dataio::to_string(v), h));
  return names;
}

// Visit every non-decreasing index tuple of length `degree` over n variables.
void for_each_multiset(index_t n, int degree, const std::function<void(const std::vector<index_t>&)>& visit) {
  std::vector<index_t> idx(static_cast<std::size_t>(degree), 0);
  if (n == 0) return;
  for (;;) {
    visit(idx);
    int pos = degree - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - 1) --pos;
    if (pos < 0) return;
    const auto next = idx[static_cast<std::size_t>(pos)] + 1;
    for (auto p = static_cast<std::size_t>(pos); p < idx.size(); ++p) idx[p] = next;
  }
}

}  // namespace

SampleSet SampleSet::select_rows(std::span<const index_t> rows) const {
  SampleSet out;
  out.X.resize(static_cast<index_t>(rows.size()), X.cols());
  out.Y.resize(static_cast<index_t>(rows.size()), Y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<index_t>(i)) = X.row(rows[i]);
    out.Y.row(static_cast<index_t>(i)) = Y.row(rows[i]);
    out.day_indices.push_back(day_indices[static_cast<std::size_t>(rows[i])]);
  }
  out.feature_names = feature_names;
  out.night = night;
  return out;
}

SampleSet SampleSet::day_range(std::int64_t first_day, std::int64_t last_day) const {
  std::vector<index_t> rows;
  for (std::size_t i = 0; i < day_indices.size(); ++i)
    if (day_indices[i] >= first_day && day_indices[i] <= last_day) rows.push_back(static_cast<index_t>(i));
  return select_rows(rows);
}

SampleSet build_samples(const dataio::RawDataset& data, const dataio::NightMask& mask) {
  const auto days = dataio::whole_days(data);
  if (days.size() < 2) throw SplitError("build_samples: need at least 2 whole days");

  const auto origin = data.first().hours;
  auto at = [&](std::int64_t day, int hour) { return dataio::HourStamp::from_day_hour(day, hour).hours - origin; };

  SampleSet s;
  s.feature_names = raw_feature_names();
  s.night = mask;
  const auto n = static_cast<index_t>(days.size() - 1);
  s.X.resize(n, kRawFeatureCount);
  s.Y.resize(n, kHoursPerDay);
  for (index_t r = 0; r < n; ++r) {
    const auto prev = days[static_cast<std::size_t>(r)];
    const auto day = days[static_cast<std::size_t>(r) + 1];
    s.X.row(r).segment(0, kHoursPerDay) = data.power.values.segment(at(prev, 0), kHoursPerDay).transpose();
    for (auto v : dataio::kVariables)
      s.X.row(r).segment(radiation_column(v, 0), kHoursPerDay) =
          data.exo(v).values.segment(at(day, 0), kHoursPerDay).transpose();
    s.Y.row(r) = data.power.values.segment(at(day, 0), kHoursPerDay).transpose();
    s.day_indices.push_back(day);
  }
  const auto touched = data.last().day() - data.first().day() + 1;
  s.skipped_days = static_cast<std::size_t>(touched) - days.size();
  if (!s.X.allFinite() || !s.Y.allFinite()) throw ValidationError("build_samples: non-finite input value");
  return s;
}

std::vector<index_t> candidates_for_horizon(int h) {
  if (h < 0 || h >= kHoursPerDay) throw PreconditionError("candidates_for_horizon: hour out of range");
  std::vector<index_t> out;
  for (int lag = 0; lag < kHoursPerDay; ++lag) out.push_back(lag_column(lag));
  for (auto v : dataio::kVariables) out.push_back(radiation_column(v, h));
  return out;
}

index_t monomial_count(index_t n_vars, int degree) {
  // C(n + d, d) - 1
  index_t c = 1;
  for (int i = 1; i <= degree; ++i) c = c * (n_vars + i) / i;
  return c - 1;
}

Expansion polynomial_expand(const Eigen::Ref<const mat>& X, std::span<const index_t> columns, int degree,
                            std::span<const std::string> names) {
  if (columns.empty()) throw PreconditionError("polynomial_expand: no columns selected");
  if (degree < 1 || degree > 3) throw PreconditionError("polynomial_expand: degree must be 1, 2 or 3");
  for (auto c : columns) require(c >= 0 && c < X.cols(), "polynomial_expand: column index out of range");

  const auto n = static_cast<index_t>(columns.size());
  Expansion out;
  out.X.resize(X.rows(), monomial_count(n, degree));
  index_t col = 0;
  for (int d = 1; d <= degree; ++d) {
    for_each_multiset(n, d, [&](const std::vector<index_t>& idx) {
      vec term = vec::Ones(X.rows());
      std::string name;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto c = columns[static_cast<std::size_t>(idx[k])];
        term.array() *= X.col(c).array();
        // Collapse runs of the same variable into powers.
        if (k > 0 && idx[k] == idx[k - 1]) continue;
        const auto run = std::count(idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), idx[k]);
        if (!name.empty()) name += '*';
        name += names.empty() ? "x" + std::to_string(c) : names[static_cast<std::size_t>(idx[k])];
        if (run > 1) name += '^' + std::to_string(run);
      }
      out.X.col(col++) = term;
      out.names.push_back(std::move(name));
    });
  }
  return out;
}

mat Standardizer::apply(const Eigen::Ref<const mat>& X) const {
  require(X.cols() == means.size(), "Standardizer::apply: column count mismatch");
  return (X.rowwise() - means.transpose()).array().rowwise() / scales.transpose().array();
}

mat Standardizer::invert(const Eigen::Ref<const mat>& Z) const {
  require(Z.cols() == means.size(), "Standardizer::invert: column count mismatch");
  return (Z.array().rowwise() * scales.transpose().array()).matrix().rowwise() + means.transpose();
}

Standardizer fit_standardizer(const Eigen::Ref<const mat>& X_train) {
  require(X_train.rows() >= 2, "fit_standardizer: need at least 2 rows");
  Standardizer s;
  s.means = X_train.colwise().mean().transpose();
  s.scales.resize(X_train.cols());
  for (index_t c = 0; c < X_train.cols(); ++c) {
    const real var = (X_train.col(c).array() - s.means[c]).square().mean();
    const real sd = std::sqrt(var);
    s.scales[c] = sd > 1e-12 * std::max(1.0, std::abs(s.means[c])) ? sd : 1.0;
  }
  return s;
}

std::vector<std::string> FeatureSpec::selected_names(const SampleSet& samples) const {
  std::vector<std::string> out;
  for (auto c : selected_indices) out.push_back(samples.feature_names.at(static_cast<std::size_t>(c)));
  return out;
}

mat FeatureSpec::inputs(const Eigen::Ref<const mat>& X) const {
  mat sel(X.rows(), static_cast<index_t>(selected_indices.size()));
  for (std::size_t k = 0; k < selected_indices.size(); ++k) sel.col(static_cast<index_t>(k)) = X.col(selected_indices[k]);
  return standardizer.apply(sel);
}

void validate(const FeatureSpec& spec, index_t n_columns) {
  require(spec.selected_indices.size() <= kMaxSelected, "FeatureSpec: more than 4 selected features");
  require(spec.degree >= 1 && spec.degree <= 3, "FeatureSpec: degree must be 1..3");
  std::vector<index_t> sorted = spec.selected_indices;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "FeatureSpec: duplicate selection");
  for (auto c : sorted) require(c >= 0 && c < n_columns, "FeatureSpec: selected index out of range");
  require(spec.standardizer.scales.size() == static_cast<index_t>(spec.selected_indices.size()),
          "FeatureSpec: standardizer width mismatch");
  require((spec.standardizer.scales.array() > 0).all(), "FeatureSpec: non-positive scale");
}

std::vector<std::pair<index_t, index_t>> contiguous_folds(index_t n, int folds) {
  require(folds >= 2, "contiguous_folds: need at least 2 folds");
  require(n >= folds, "contiguous_folds: fewer rows than folds");
  std::vector<std::pair<index_t, index_t>> out;
  for (int f = 0; f < folds; ++f) out.emplace_back(n * f / folds, n * (f + 1) / folds);
  return out;
}

real cross_validate(const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y, std::span<const index_t> columns,
                    const CvTrainer& trainer, int folds, std::uint64_t seed) {
  const auto n = X.rows();
  const auto p = static_cast<index_t>(columns.size());
  real total = 0;
  int fold_id = 0;
  for (const auto& [begin, end] : contiguous_folds(n, folds)) {
    const auto n_valid = end - begin;
    mat Xtr(n - n_valid, p), Xva(n_valid, p);
    vec ytr(n - n_valid), yva(n_valid);
    for (index_t r = 0, t = 0, v = 0; r < n; ++r) {
      const bool valid = r >= begin && r < end;
      for (index_t k = 0; k < p; ++k) (valid ? Xva(v, k) : Xtr(t, k)) = X(r, columns[static_cast<std::size_t>(k)]);
      if (valid) yva[v++] = y[r];
      else ytr[t++] = y[r];
    }
    total += trainer(Xtr, ytr, Xva, yva, derive_seed(seed, static_cast<std::uint64_t>(fold_id++))) *
             static_cast<real>(n_valid);
  }
  return total / static_cast<real>(n);
}

Selection forward_select(const Eigen::Ref<const mat>& X, const Eigen::Ref<const vec>& y,
                         std::span<const index_t> candidates, std::size_t k, const CvTrainer& trainer, int folds,
                         std::uint64_t seed) {
  require(k <= candidates.size(), "forward_select: k exceeds the number of candidates");
  require(folds >= 2, "forward_select: need at least 2 folds");
  require(X.rows() == y.size(), "forward_select: X and y row counts differ");

  Selection out;
  std::vector<index_t> pool(candidates.begin(), candidates.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  require(k <= pool.size(), "forward_select: k exceeds the number of distinct candidates");

  if ((y.array() == 0.0).all()) {
    out.selected.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    out.degenerate = true;
    return out;
  }

  while (out.selected.size() < k) {
    index_t best = -1;
    real best_loss = std::numeric_limits<real>::infinity();
    for (auto c : pool) {
      if (std::find(out.selected.begin(), out.selected.end(), c) != out.selected.end()) continue;
      auto trial = out.selected;
      trial.push_back(c);
      const real loss = cross_validate(X, y, trial, trainer, folds, seed);
      if (loss < best_loss || best < 0) {
        best = c;
        best_loss = loss;
      }
    }
    out.selected.push_back(best);
    out.cv_losses.push_back(best_loss);
  }
  return out;
}

nlohmann::json to_json(const FeatureSpec& spec, const SampleSet& samples) {
  nlohmann::json j;
  j["horizon"] = spec.horizon;
  j["selected"] = spec.selected_names(samples);
  j["degree"] = spec.degree;
  j["means"] = std::vector<real>(spec.standardizer.means.data(),
                                 spec.standardizer.means.data() + spec.standardizer.means.size());
  j["scales"] = std::vector<real>(spec.standardizer.scales.data(),
                                  spec.standardizer.scales.data() + spec.standardizer.scales.size());
  return j;
}

FeatureSpec feature_spec_from_json(const nlohmann::json& j, const SampleSet& samples) {
  FeatureSpec spec;
  try {
    spec.horizon = j.at("horizon").get<int>();
    spec.degree = j.at("degree").get<int>();
    for (const auto& name : j.at("selected").get<std::vector<std::string>>()) {
      const auto it = std::find(samples.feature_names.begin(), samples.feature_names.end(), name);
      if (it == samples.feature_names.end()) throw ConfigError("feature sidecar names unknown feature '" + name + "'");
      spec.selected_indices.push_back(static_cast<index_t>(it - samples.feature_names.begin()));
    }
    const auto means = j.at("means").get<std::vector<real>>();
    const auto scales = j.at("scales").get<std::vector<real>>();
    spec.standardizer.means = Eigen::Map<const vec>(means.data(), static_cast<index_t>(means.size()));
    spec.standardizer.scales = Eigen::Map<const vec>(scales.data(), static_cast<index_t>(scales.size()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed feature sidecar: ") + e.what());
  }
  for (auto c : candidates_for_horizon(spec.horizon))
    spec.candidate_names.push_back(samples.feature_names.at(static_cast<std::size_t>(c)));
  validate(spec, samples.X.cols());
  return spec;
}

}  // namespace solarqr::features
