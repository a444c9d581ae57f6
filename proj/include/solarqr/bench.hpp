#pragma once

#include "solarqr/core.hpp"
#include "solarqr/dataio.hpp"
#include "solarqr/features.hpp"
#include "solarqr/qcore.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace solarqr::bench {

enum class ModelKind { Poly1 = 0, Poly2 = 1, Poly3 = 2, FCANN = 3, LSTM = 4 };

/// Table order.
inline constexpr std::array<ModelKind, 5> kAllModels{ModelKind::Poly1, ModelKind::Poly2, ModelKind::Poly3,
                                                     ModelKind::FCANN, ModelKind::LSTM};

/// "Poly1", "FCANN", ...
std::string_view display_name(ModelKind m);
/// "poly1", "fcann", ...; used in CLI flags and file names.
std::string_view key_name(ModelKind m);
/// Case-insensitive; throws ConfigError on unknown names.
ModelKind model_from_string(std::string_view name);
/// Comma separated list, returned deduplicated in table order.
std::vector<ModelKind> parse_model_list(std::string_view list);

struct DayRange {
  std::size_t first = 0;  ///< Offsets into the test days, inclusive.
  std::size_t last = 2;
};

/// "a..b" with a <= b.
DayRange parse_day_range(std::string_view text);
/// "0.05,0.95" with lower < upper.
std::pair<real, real> parse_pair(std::string_view text);

struct BenchConfig {
  std::filesystem::path power_path;
  std::filesystem::path weather_path;  ///< May equal power_path for combined task files.
  std::optional<int> plant_id = 1;     ///< ZONEID filter on the power file.
  std::optional<int> zone_id = 1;      ///< ZONEID filter on the weather file.
  real train_fraction = 0.7;
  std::vector<ModelKind> models{kAllModels.begin(), kAllModels.end()};
  std::uint64_t seed = 42;
  bool score_night_hours = true;
  std::filesystem::path out_dir = "bench_out";
  std::vector<std::pair<real, real>> interval_pairs{{0.05, 0.95}, {0.25, 0.75}};
  DayRange plot_days;
  std::size_t workers = 1;
  real epsilon_night = dataio::kDefaultNightEpsilon;
  dataio::VariableMap variables = dataio::default_variable_map();
  int selection_folds = 5;
  bool resume = false;

  int fcann_epochs = 200;
  index_t fcann_batch = 32;
  real fcann_learning_rate = 1e-3;
  int lstm_epochs = 200;
  index_t lstm_batch = 16;
  real lstm_learning_rate = 1e-3;
  index_t lstm_hidden = 100;
  real dropout_rate = 0.2;
  int patience = 20;
  real validation_fraction = 0.1;
  bool all_sigmoid = false;
  real clip_norm = 5.0;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown keys, malformed values and
/// repeated keys throw ConfigError naming the line.
BenchConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
BenchConfig load_config(const std::filesystem::path& path);

/// Value ranges plus existence of the data files; throws ConfigError.
void validate(const BenchConfig& config);

struct DataFingerprint {
  index_t power_rows = 0;
  index_t weather_rows = 0;
  index_t joined_rows = 0;
  std::string first_timestamp;
  std::string last_timestamp;
  std::string split_boundary;  ///< First hour of the test part.
  std::size_t train_days = 0;
  std::size_t test_days = 0;
  index_t train_samples = 0;
  index_t test_samples = 0;
  std::vector<int> night_hours;
};

struct ModelRun {
  ModelKind kind = ModelKind::Poly1;
  qcore::EvaluationReport evaluation;
  std::vector<qcore::QuantileForecast> forecasts;  ///< Clipped, night-zeroed, repaired.
};

struct BenchReport {
  BenchConfig config;
  DataFingerprint fingerprint;
  std::vector<ModelRun> runs;  ///< One per requested model, in table order.
  dataio::TimeSeries actuals;  ///< Observed power on the forecast days.
  std::vector<std::pair<std::string, double>> stage_seconds;
};

/// The complete experiment. Every stage error is rethrown as the same error class with
/// the stage name prefixed; report.json in out_dir then carries `"complete": false`.
BenchReport run(const BenchConfig& config);

/// Fixed-order text table and `model,avg_pinball_pct` CSV.
std::string emit_table(const BenchReport& report);
std::string emit_table_csv(const BenchReport& report);

/// `timestamp,<tau_1>,...,<tau_n>` rows, full precision.
void write_forecasts_csv(std::ostream& out, std::span<const qcore::QuantileForecast> forecasts,
                         const qcore::QuantileGrid& grid);
std::vector<qcore::QuantileForecast> read_forecasts_csv(std::istream& in, const qcore::QuantileGrid& grid);

struct PlotSeries {
  std::string model;  ///< Key name, e.g. "fcann".
  std::vector<qcore::QuantileForecast> forecasts;
};

struct PlotOutput {
  std::vector<std::filesystem::path> files;
  std::map<std::string, real> mean_width;  ///< Per model key.
};

/// For each series writes `<model>_<lower>_<upper>.csv` (timestamp,actual,lower,upper) and
/// a matching SVG over the requested test days, plus `interval_<lower>_<upper>.json` with
/// mean band widths. Throws PreconditionError for days outside the forecast range and
/// LookupError for levels not on the grid.
PlotOutput emit_interval_plot(std::span<const PlotSeries> series, const dataio::TimeSeries& actuals,
                              const qcore::QuantileGrid& grid, std::pair<real, real> pair, DayRange days,
                              const std::filesystem::path& out_dir);

/// SVG with the actual power as a line over the shaded [lower, upper] band.
std::string render_interval_svg(std::string_view title, std::span<const dataio::HourStamp> timestamps,
                                const Eigen::Ref<const vec>& actual, const Eigen::Ref<const vec>& lower,
                                const Eigen::Ref<const vec>& upper);

/// 0 success, 1 ConfigError, 2 DataError, 3 TrainingError; anything else 1.
int exit_code_for(const std::exception& e);

}  // namespace solarqr::bench
