#include "solarqr/bench.hpp"

#include "solarqr/fcann.hpp"
#include "solarqr/linqr.hpp"
#include "solarqr/lstm.hpp"
#include "solarqr/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace solarqr::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 5> kDisplay{"Poly1", "Poly2", "Poly3", "FCANN", "LSTM"};
constexpr std::array<std::string_view, 5> kKeys{"poly1", "poly2", "poly3", "fcann", "lstm"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == s.npos ? s.npos : pos - start)));
    if (pos == s.npos) return out;
    start = pos + 1;
  }
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

template <class T>
T number_or_throw(std::string_view s, std::string_view what) {
  T v{};
  if (!parse_number(s, v)) throw ConfigError(std::string(what) + ": expected a number, got '" + std::string(s) + "'");
  return v;
}

bool parse_bool(std::string_view s, std::string_view what) {
  std::string v(trim(s));
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(what) + ": expected true/false, got '" + std::string(s) + "'");
}

std::optional<int> parse_zone(std::string_view s, std::string_view what) {
  s = trim(s);
  if (s == "none" || s == "all") return std::nullopt;
  return number_or_throw<int>(s, what);
}

std::string fmt(const char* format, real v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

// Rethrows the active exception as the same error class, prefixed with the stage name.
[[noreturn]] void rethrow_in_stage(const std::string& stage) {
  const std::string p = "stage '" + stage + "': ";
  try {
    throw;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(p + e.what(), e.best_objective());
  } catch (const TrainingError& e) {
    throw TrainingError(p + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(p + e.what());
  } catch (const ParseError& e) {
    throw ParseError(p + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(p + e.what());
  } catch (const AlignmentError& e) {
    throw AlignmentError(p + e.what());
  } catch (const SplitError& e) {
    throw SplitError(p + e.what());
  } catch (const ScoringError& e) {
    throw ScoringError(p + e.what());
  } catch (const DataError& e) {
    throw DataError(p + e.what());
  } catch (const LookupError& e) {
    throw LookupError(p + e.what());
  } catch (const PreconditionError& e) {
    throw PreconditionError(p + e.what());
  } catch (const std::exception& e) {
    throw Error(p + e.what());
  }
}

json config_to_json(const BenchConfig& c) {
  json j;
  j["power_path"] = c.power_path.string();
  j["weather_path"] = c.weather_path.string();
  j["plant_id"] = c.plant_id ? json(*c.plant_id) : json(nullptr);
  j["zone_id"] = c.zone_id ? json(*c.zone_id) : json(nullptr);
  j["train_fraction"] = c.train_fraction;
  std::vector<std::string> models;
  for (auto m : c.models) models.emplace_back(key_name(m));
  j["models"] = models;
  j["seed"] = c.seed;
  j["score_night_hours"] = c.score_night_hours;
  j["out_dir"] = c.out_dir.string();
  j["interval_pairs"] = c.interval_pairs;
  j["plot_days"] = {c.plot_days.first, c.plot_days.last};
  j["workers"] = c.workers;
  j["epsilon_night"] = c.epsilon_night;
  json vars;
  for (const auto& [name, v] : c.variables) vars[std::string(dataio::to_string(v))] = name;
  j["variables"] = vars;
  j["selection_folds"] = c.selection_folds;
  j["resume"] = c.resume;
  j["fcann"] = {{"epochs", c.fcann_epochs}, {"batch", c.fcann_batch}, {"learning_rate", c.fcann_learning_rate}};
  j["lstm"] = {{"epochs", c.lstm_epochs},
               {"batch", c.lstm_batch},
               {"learning_rate", c.lstm_learning_rate},
               {"hidden", c.lstm_hidden},
               {"all_sigmoid", c.all_sigmoid},
               {"clip_norm", c.clip_norm}};
  j["dropout_rate"] = c.dropout_rate;
  j["patience"] = c.patience;
  j["validation_fraction"] = c.validation_fraction;
  return j;
}

json fingerprint_to_json(const DataFingerprint& f) {
  return {{"power_rows", f.power_rows},         {"weather_rows", f.weather_rows},
          {"joined_rows", f.joined_rows},       {"first_timestamp", f.first_timestamp},
          {"last_timestamp", f.last_timestamp}, {"split_boundary", f.split_boundary},
          {"train_days", f.train_days},         {"test_days", f.test_days},
          {"train_samples", f.train_samples},   {"test_samples", f.test_samples},
          {"night_hours", f.night_hours}};
}

json evaluation_to_json(const qcore::EvaluationReport& r) {
  return {{"model", r.model_name},
          {"avg_loss", r.avg_loss},
          {"avg_pinball_pct", qcore::format_percent(r.avg_loss)},
          {"scored_pairs", r.n},
          {"per_tau_losses", std::vector<real>(r.per_tau_losses.data(), r.per_tau_losses.data() + r.per_tau_losses.size())}};
}

// Night rows forced to exactly zero, then clip and rearrange.
void postprocess(std::vector<qcore::QuantileForecast>& forecasts, const dataio::NightMask& night) {
  for (auto& f : forecasts) {
    for (int h = 0; h < kHoursPerDay; ++h)
      if (night.contains(h)) f.estimates.row(h).setZero();
    qcore::clip_and_repair(f);
  }
}

dataio::TimeSeries actuals_of(const features::SampleSet& samples) {
  dataio::TimeSeries out;
  out.values.resize(samples.rows() * kHoursPerDay);
  for (index_t d = 0; d < samples.rows(); ++d)
    for (int h = 0; h < kHoursPerDay; ++h) {
      out.timestamps.push_back(dataio::HourStamp::from_day_hour(samples.day_indices[static_cast<std::size_t>(d)], h));
      out.values[d * kHoursPerDay + h] = samples.Y(d, h);
    }
  return out;
}

std::vector<features::FeatureSpec> select_features(const features::SampleSet& train, const BenchConfig& config) {
  // The linear fit is affine invariant, so selecting on standardized columns only helps conditioning.
  const mat Z = features::fit_standardizer(train.X).apply(train.X);
  const auto trainer = linqr::linear_cv_trainer(0.5);
  std::vector<features::FeatureSpec> specs(kHoursPerDay);
  parallel_for(kHoursPerDay, config.workers, [&](std::size_t hu) {
    const int h = static_cast<int>(hu);
    auto& spec = specs[hu];
    spec.horizon = h;
    const auto candidates = features::candidates_for_horizon(h);
    for (auto c : candidates) spec.candidate_names.push_back(train.feature_names[static_cast<std::size_t>(c)]);
    if (train.night.contains(h)) return;
    const auto sel = features::forward_select(Z, train.Y.col(h), candidates, features::kMaxSelected, trainer,
                                              config.selection_folds, derive_seed(config.seed, 100 + hu));
    spec.selected_indices = sel.selected;
    mat chosen(train.rows(), static_cast<index_t>(sel.selected.size()));
    for (std::size_t k = 0; k < sel.selected.size(); ++k) chosen.col(static_cast<index_t>(k)) = train.X.col(sel.selected[k]);
    spec.standardizer = features::fit_standardizer(chosen);
  });
  return specs;
}

nnet::TrainConfig fcann_config(const BenchConfig& c) {
  nnet::TrainConfig t;
  t.learning_rate = c.fcann_learning_rate;
  t.epochs = c.fcann_epochs;
  t.batch_size = c.fcann_batch;
  t.dropout_rate = c.dropout_rate;
  t.early_stop_patience = c.patience;
  t.validation_fraction = c.validation_fraction;
  t.seed = derive_seed(c.seed, static_cast<std::uint64_t>(ModelKind::FCANN));
  return t;
}

nnet::TrainConfig lstm_config(const BenchConfig& c) {
  auto t = lstm::default_train_config();
  t.learning_rate = c.lstm_learning_rate;
  t.epochs = c.lstm_epochs;
  t.batch_size = c.lstm_batch;
  t.dropout_rate = c.dropout_rate;
  t.early_stop_patience = c.patience;
  t.validation_fraction = c.validation_fraction;
  t.clip_norm = c.clip_norm;
  t.seed = derive_seed(c.seed, static_cast<std::uint64_t>(ModelKind::LSTM));
  return t;
}

}  // namespace

std::string_view display_name(ModelKind m) { return kDisplay.at(static_cast<std::size_t>(m)); }
std::string_view key_name(ModelKind m) { return kKeys.at(static_cast<std::size_t>(m)); }

ModelKind model_from_string(std::string_view name) {
  std::string lower(trim(name));
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto m : kAllModels)
    if (key_name(m) == lower) return m;
  throw ConfigError("unknown model '" + std::string(name) + "' (expected poly1, poly2, poly3, fcann or lstm)");
}

std::vector<ModelKind> parse_model_list(std::string_view list) {
  std::array<bool, 5> wanted{};
  for (auto part : split(list, ','))
    if (!part.empty()) wanted[static_cast<std::size_t>(model_from_string(part))] = true;
  std::vector<ModelKind> out;
  for (auto m : kAllModels)
    if (wanted[static_cast<std::size_t>(m)]) out.push_back(m);
  if (out.empty()) throw ConfigError("model list is empty");
  return out;
}

DayRange parse_day_range(std::string_view text) {
  const auto dots = text.find("..");
  if (dots == text.npos) throw ConfigError("day range must look like 'a..b', got '" + std::string(text) + "'");
  DayRange r;
  r.first = number_or_throw<std::size_t>(text.substr(0, dots), "day range start");
  r.last = number_or_throw<std::size_t>(text.substr(dots + 2), "day range end");
  if (r.first > r.last) throw ConfigError("day range start exceeds end: '" + std::string(text) + "'");
  return r;
}

std::pair<real, real> parse_pair(std::string_view text) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError("interval pair must look like '0.05,0.95', got '" + std::string(text) + "'");
  const auto lo = number_or_throw<real>(parts[0], "interval lower level");
  const auto hi = number_or_throw<real>(parts[1], "interval upper level");
  if (!(lo > 0 && lo < hi && hi < 1))
    throw ConfigError("interval pair needs 0 < lower < upper < 1, got '" + std::string(text) + "'");
  return {lo, hi};
}

BenchConfig parse_config(std::istream& in, const fs::path& base_dir) {
  BenchConfig c;
  auto resolve = [&](std::string_view v) {
    fs::path p{std::string(v)};
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  std::string ssrd = "VAR169", strd = "VAR175", tsr = "VAR178";

  using Setter = std::function<void(std::string_view)>;
  const std::map<std::string, Setter, std::less<>> setters{
      {"power_path", [&](auto v) { c.power_path = resolve(v); }},
      {"weather_path", [&](auto v) { c.weather_path = resolve(v); }},
      {"data_path", [&](auto v) { c.power_path = c.weather_path = resolve(v); }},
      {"plant_id", [&](auto v) { c.plant_id = parse_zone(v, "plant_id"); }},
      {"zone_id", [&](auto v) { c.zone_id = parse_zone(v, "zone_id"); }},
      {"train_fraction", [&](auto v) { c.train_fraction = number_or_throw<real>(v, "train_fraction"); }},
      {"models", [&](auto v) { c.models = parse_model_list(v); }},
      {"seed", [&](auto v) { c.seed = number_or_throw<std::uint64_t>(v, "seed"); }},
      {"score_night_hours", [&](auto v) { c.score_night_hours = parse_bool(v, "score_night_hours"); }},
      {"out_dir", [&](auto v) { c.out_dir = resolve(v); }},
      {"interval_pairs",
       [&](auto v) {
         c.interval_pairs.clear();
         for (auto p : split(v, ';'))
           if (!p.empty()) c.interval_pairs.push_back(parse_pair(p));
       }},
      {"plot_days", [&](auto v) { c.plot_days = parse_day_range(v); }},
      {"workers", [&](auto v) { c.workers = number_or_throw<std::size_t>(v, "workers"); }},
      {"epsilon_night", [&](auto v) { c.epsilon_night = number_or_throw<real>(v, "epsilon_night"); }},
      {"var_ssrd", [&](auto v) { ssrd = v; }},
      {"var_strd", [&](auto v) { strd = v; }},
      {"var_tsr", [&](auto v) { tsr = v; }},
      {"selection_folds", [&](auto v) { c.selection_folds = number_or_throw<int>(v, "selection_folds"); }},
      {"resume", [&](auto v) { c.resume = parse_bool(v, "resume"); }},
      {"fcann_epochs", [&](auto v) { c.fcann_epochs = number_or_throw<int>(v, "fcann_epochs"); }},
      {"fcann_batch", [&](auto v) { c.fcann_batch = number_or_throw<index_t>(v, "fcann_batch"); }},
      {"fcann_learning_rate", [&](auto v) { c.fcann_learning_rate = number_or_throw<real>(v, "fcann_learning_rate"); }},
      {"lstm_epochs", [&](auto v) { c.lstm_epochs = number_or_throw<int>(v, "lstm_epochs"); }},
      {"lstm_batch", [&](auto v) { c.lstm_batch = number_or_throw<index_t>(v, "lstm_batch"); }},
      {"lstm_learning_rate", [&](auto v) { c.lstm_learning_rate = number_or_throw<real>(v, "lstm_learning_rate"); }},
      {"lstm_hidden", [&](auto v) { c.lstm_hidden = number_or_throw<index_t>(v, "lstm_hidden"); }},
      {"dropout_rate", [&](auto v) { c.dropout_rate = number_or_throw<real>(v, "dropout_rate"); }},
      {"patience", [&](auto v) { c.patience = number_or_throw<int>(v, "patience"); }},
      {"validation_fraction", [&](auto v) { c.validation_fraction = number_or_throw<real>(v, "validation_fraction"); }},
      {"all_sigmoid", [&](auto v) { c.all_sigmoid = parse_bool(v, "all_sigmoid"); }},
      {"clip_norm", [&](auto v) { c.clip_norm = number_or_throw<real>(v, "clip_norm"); }},
  };

  std::map<std::string, int, std::less<>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != text.npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    const auto where = "config line " + std::to_string(line_no) + ": ";
    if (eq == text.npos) throw ConfigError(where + "expected 'key = value'");
    const auto key = trim(text.substr(0, eq));
    const auto value = trim(text.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (auto [pos, fresh] = seen.emplace(std::string(key), line_no); !fresh)
      throw ConfigError(where + "key '" + std::string(key) + "' already set on line " + std::to_string(pos->second));
    try {
      it->second(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  c.variables = {{ssrd, dataio::Variable::SSRD}, {strd, dataio::Variable::STRD}, {tsr, dataio::Variable::TSR}};
  if (c.variables.size() != 3) throw ConfigError("var_ssrd, var_strd and var_tsr must name distinct columns");
  return c;
}

BenchConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.parent_path());
}

void validate(const BenchConfig& c) {
  if (c.power_path.empty()) throw ConfigError("power_path is not set");
  if (c.weather_path.empty()) throw ConfigError("weather_path is not set");
  for (const auto& p : {c.power_path, c.weather_path})
    if (!fs::is_regular_file(p)) throw ConfigError("data file does not exist: " + p.string());
  if (c.models.empty()) throw ConfigError("models must not be empty");
  if (!(c.train_fraction > 0 && c.train_fraction < 1)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  if (!(c.epsilon_night >= 0)) throw ConfigError("epsilon_night must be non-negative");
  if (c.selection_folds < 2) throw ConfigError("selection_folds must be at least 2");
  if (c.lstm_hidden < 1) throw ConfigError("lstm_hidden must be at least 1");
  for (const auto& [lo, hi] : c.interval_pairs)
    if (!(lo > 0 && lo < hi && hi < 1)) throw ConfigError("interval pairs need 0 < lower < upper < 1");
  if (c.out_dir.empty()) throw ConfigError("out_dir is not set");
  fcann_config(c).validate();
  lstm_config(c).validate();
}

std::string emit_table(const BenchReport& report) {
  std::vector<qcore::EvaluationReport> rows;
  for (const auto& r : report.runs) rows.push_back(r.evaluation);
  return qcore::render_table(rows);
}

std::string emit_table_csv(const BenchReport& report) {
  std::string out = "model,avg_pinball_pct\n";
  for (const auto& r : report.runs)
    out += std::string(display_name(r.kind)) + "," + qcore::format_percent(r.evaluation.avg_loss) + "\n";
  return out;
}

void write_forecasts_csv(std::ostream& out, std::span<const qcore::QuantileForecast> forecasts,
                         const qcore::QuantileGrid& grid) {
  out << "timestamp";
  for (auto tau : grid.levels()) out << ',' << fmt("%.6g", tau);
  out << '\n';
  for (const auto& f : forecasts) {
    require(f.estimates.rows() == kHoursPerDay && f.estimates.cols() == grid.size(),
            "write_forecasts_csv: forecast shape does not match the grid");
    for (int h = 0; h < kHoursPerDay; ++h) {
      out << dataio::format_timestamp(f.timestamp(h));
      for (index_t q = 0; q < grid.size(); ++q) out << ',' << fmt("%.17g", f.estimates(h, q));
      out << '\n';
    }
  }
}

std::vector<qcore::QuantileForecast> read_forecasts_csv(std::istream& in, const qcore::QuantileGrid& grid) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("forecast CSV is empty");
  const auto header = split(line, ',');
  if (header.empty() || header[0] != "timestamp" || static_cast<index_t>(header.size()) != grid.size() + 1)
    throw ParseError("forecast CSV header does not match the quantile grid");
  for (index_t q = 0; q < grid.size(); ++q) {
    real tau = 0;
    if (!parse_number(header[static_cast<std::size_t>(q + 1)], tau) || std::abs(tau - grid[q]) > 1e-9)
      throw ParseError("forecast CSV level '" + std::string(header[static_cast<std::size_t>(q + 1)]) +
                       "' does not match the grid");
  }
  std::vector<qcore::QuantileForecast> out;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split(line, ',');
    const auto where = "forecast CSV row " + std::to_string(row);
    if (static_cast<index_t>(cells.size()) != grid.size() + 1) throw ParseError(where + ": wrong number of cells");
    const auto t = dataio::parse_timestamp(cells[0]);
    const int h = t.hour_of_day();
    if (h == 0) out.push_back({t.day(), mat(kHoursPerDay, grid.size())});
    if (out.empty() || out.back().day_index != t.day() || (h > 0 && out.back().timestamp(h - 1) + 1 != t))
      throw ParseError(where + ": days must be complete and in hour order");
    for (index_t q = 0; q < grid.size(); ++q)
      if (!parse_number(cells[static_cast<std::size_t>(q + 1)], out.back().estimates(h, q)))
        throw ParseError(where + ": malformed value");
  }
  if (row % kHoursPerDay != 0) throw ParseError("forecast CSV ends inside a day");
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const TrainingError*>(&e)) return 3;
  return 1;
}

BenchReport run(const BenchConfig& config) {
  validate(config);
  fs::create_directories(config.out_dir / "models");

  BenchReport report;
  report.config = config;
  std::string current;
  auto stage = [&](const std::string& name, auto&& fn) {
    current = name;
    const auto start = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (...) {
      rethrow_in_stage(name);
    }
    report.stage_seconds.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  };

  auto write_report_json = [&](bool complete, const std::string& error) {
    json j;
    j["complete"] = complete;
    if (!complete) {
      j["failed_stage"] = current;
      j["error"] = error;
    }
    j["config"] = config_to_json(config);
    j["data"] = fingerprint_to_json(report.fingerprint);
    json models = json::array();
    for (const auto& r : report.runs) models.push_back(evaluation_to_json(r.evaluation));
    j["models"] = models;
    json timings = json::object();
    for (const auto& [name, s] : report.stage_seconds) timings[name] = s;
    j["stage_seconds"] = timings;
    write_file(config.out_dir / "report.json", j.dump(2) + "\n");
  };

  try {
    const auto grid = qcore::QuantileGrid::percentiles();
    dataio::RawDataset data;
    dataio::Split split;
    dataio::NightMask night;
    features::SampleSet train, test;
    std::vector<features::FeatureSpec> specs;
    auto& fp = report.fingerprint;

    stage("ingest", [&] {
      auto power_in = open_input(config.power_path);
      const auto power = dataio::parse_power_csv(power_in, config.plant_id);
      auto weather_in = open_input(config.weather_path);
      const auto weather = dataio::parse_weather_csv(weather_in, config.variables, config.zone_id);
      data = dataio::align_and_join(power, weather);
      fp.power_rows = power.size();
      fp.weather_rows = weather.front().size();
      fp.joined_rows = data.size();
      fp.first_timestamp = dataio::format_timestamp(data.first());
      fp.last_timestamp = dataio::format_timestamp(data.last());
    });

    stage("split", [&] {
      split = dataio::split_train_test(data, config.train_fraction);
      fp.split_boundary = dataio::format_timestamp(split.test.first());
      fp.train_days = split.train_days;
      fp.test_days = split.test_days;
    });

    stage("night_mask", [&] {
      night = dataio::derive_night_mask(split.train, config.epsilon_night);
      fp.night_hours = night.night_hours();
    });

    stage("samples", [&] {
      const auto all = features::build_samples(data, night);
      const auto cut = split.test.first().day();
      constexpr auto lo = std::numeric_limits<std::int64_t>::min();
      constexpr auto hi = std::numeric_limits<std::int64_t>::max();
      train = all.day_range(lo, cut - 1);
      test = all.day_range(cut, hi);
      if (train.rows() < 2 * config.selection_folds)
        throw SplitError("only " + std::to_string(train.rows()) + " training samples; need at least " +
                         std::to_string(2 * config.selection_folds));
      if (test.rows() == 0) throw SplitError("no test samples after the split boundary");
      fp.train_samples = train.rows();
      fp.test_samples = test.rows();
      report.actuals = actuals_of(test);
    });

    stage("selection", [&] {
      const auto sidecar = config.out_dir / "selection.json";
      if (config.resume && fs::exists(sidecar)) {
        auto in = open_input(sidecar);
        json j;
        try {
          in >> j;
        } catch (const json::exception& e) {
          throw ConfigError("unreadable selection sidecar: " + std::string(e.what()));
        }
        if (!j.is_array() || j.size() != kHoursPerDay) throw ConfigError("selection sidecar must hold 24 records");
        for (const auto& rec : j) specs.push_back(features::feature_spec_from_json(rec, train));
        for (int h = 0; h < kHoursPerDay; ++h)
          if (specs[static_cast<std::size_t>(h)].horizon != h) throw ConfigError("selection sidecar out of hour order");
        return;
      }
      specs = select_features(train, config);
      json j = json::array();
      for (const auto& s : specs) j.push_back(features::to_json(s, train));
      write_file(sidecar, j.dump(2) + "\n");
    });

    for (auto kind : config.models) {
      const std::string key(key_name(kind));
      ModelRun run;
      run.kind = kind;
      stage("fit_" + key, [&] {
        json models = json::array();
        switch (kind) {
          case ModelKind::Poly1:
          case ModelKind::Poly2:
          case ModelKind::Poly3: {
            const int degree = 1 + static_cast<int>(kind);
            const auto family = linqr::fit_poly_family(train, specs, grid, degree, config.workers);
            for (const auto& per_h : family.models)
              for (const auto& m : per_h) models.push_back(linqr::to_json(m));
            run.forecasts = linqr::predict_poly_family(family, test);
            break;
          }
          case ModelKind::FCANN: {
            const auto family = fcann::fit_fcann_family(train, specs, grid, fcann_config(config), config.workers);
            for (const auto& per_h : family.models)
              for (const auto& m : per_h) models.push_back(fcann::to_json(m));
            run.forecasts = fcann::predict_fcann_family(family, test);
            break;
          }
          case ModelKind::LSTM: {
            lstm::LSTMOptions options;
            options.hidden = config.lstm_hidden;
            options.all_sigmoid = config.all_sigmoid;
            const auto model = lstm::fit_lstm(train, night, grid, lstm_config(config), options);
            models.push_back(lstm::to_json(model));
            run.forecasts = lstm::predict_lstm(model, test);
            break;
          }
        }
        write_file(config.out_dir / "models" / (key + ".json"), models.dump() + "\n");
      });

      stage("predict_" + key, [&] {
        postprocess(run.forecasts, night);
        std::ofstream out(config.out_dir / ("forecasts_" + key + ".csv"), std::ios::binary);
        if (!out) throw ConfigError("cannot write forecasts for " + key);
        write_forecasts_csv(out, run.forecasts, grid);
      });

      stage("score_" + key, [&] {
        qcore::ScoreOptions options;
        if (!config.score_night_hours) options.exclude_hours = &night;
        run.evaluation = qcore::score(run.forecasts, report.actuals, grid, std::string(display_name(kind)), options);
        write_file(config.out_dir / ("losses_" + key + ".csv"), qcore::render_csv(run.evaluation));
      });
      report.runs.push_back(std::move(run));
    }

    stage("report", [&] {
      std::ofstream actuals(config.out_dir / "actuals.csv", std::ios::binary);
      dataio::write_power_csv(actuals, report.actuals, config.plant_id.value_or(1));
      write_file(config.out_dir / "table.txt", emit_table(report));
      write_file(config.out_dir / "table.csv", emit_table_csv(report));
    });

    stage("plot", [&] {
      std::vector<PlotSeries> series;
      for (const auto& r : report.runs) series.push_back({std::string(key_name(r.kind)), r.forecasts});
      DayRange days = config.plot_days;
      const auto available = static_cast<std::size_t>(test.rows());
      days.last = std::min(days.last, available - 1);
      days.first = std::min(days.first, days.last);
      for (const auto& pair : config.interval_pairs)
        emit_interval_plot(series, report.actuals, grid, pair, days, config.out_dir / "plots");
    });
  } catch (const std::exception& e) {
    try {
      write_report_json(false, e.what());
    } catch (...) {
    }
    throw;
  }
  write_report_json(true, "");
  return report;
}

}  // namespace solarqr::bench
