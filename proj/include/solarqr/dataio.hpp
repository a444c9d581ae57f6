#pragma once

#include "solarqr/core.hpp"

#include <array>
#include <compare>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace solarqr::dataio {

/// Hourly timestamp label, stored as whole hours since 1970-01-01 00:00.
/// Labels are treated as opaque wall-clock values; no timezone handling.
struct HourStamp {
  std::int64_t hours = 0;

  constexpr std::int64_t day() const noexcept {
    return hours >= 0 ? hours / kHoursPerDay : -((-hours + kHoursPerDay - 1) / kHoursPerDay);
  }
  constexpr int hour_of_day() const noexcept {
    return static_cast<int>(hours - day() * kHoursPerDay);
  }
  static constexpr HourStamp from_day_hour(std::int64_t day, int hour) noexcept {
    return HourStamp{day * kHoursPerDay + hour};
  }
  constexpr HourStamp operator+(std::int64_t h) const noexcept { return HourStamp{hours + h}; }
  friend constexpr auto operator<=>(HourStamp, HourStamp) = default;
};

/// Accepts `YYYYMMDD HH:MM` (GEFCom14) and ISO-8601 `YYYY-MM-DD[T ]HH:MM[:SS][Z]`.
/// Throws ParseError on anything else, including labels off the hourly grid.
HourStamp parse_timestamp(std::string_view text);

/// Renders in the GEFCom14 layout `YYYYMMDD HH:MM`.
std::string format_timestamp(HourStamp t);

/// ISO date `YYYY-MM-DD` of the day containing `t`.
std::string format_date(HourStamp t);

enum class Variable { SSRD = 0, STRD = 1, TSR = 2 };
inline constexpr std::array<Variable, 3> kVariables{Variable::SSRD, Variable::STRD, Variable::TSR};

std::string_view to_string(Variable v);
Variable variable_from_string(std::string_view name);

struct TimeSeries {
  std::vector<HourStamp> timestamps;
  vec values;

  index_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.size() == 0; }
};

struct ExogenousSeries {
  Variable variable = Variable::SSRD;
  std::vector<HourStamp> timestamps;
  vec values;

  index_t size() const noexcept { return values.size(); }
};

/// Weather column header -> physical variable.
using VariableMap = std::map<std::string, Variable, std::less<>>;

/// VAR169 -> SSRD, VAR175 -> STRD, VAR178 -> TSR.
VariableMap default_variable_map();

/// Power plus the three radiation forecasts on one contiguous hourly grid.
struct RawDataset {
  TimeSeries power;
  std::array<ExogenousSeries, 3> exogenous;

  const ExogenousSeries& exo(Variable v) const { return exogenous[static_cast<std::size_t>(v)]; }
  index_t size() const noexcept { return power.size(); }
  HourStamp first() const { return power.timestamps.front(); }
  HourStamp last() const { return power.timestamps.back(); }

  /// Hours [begin, end) by position; all four series are sliced together.
  RawDataset slice(index_t begin, index_t end) const;
};

struct NightMask {
  std::array<bool, kHoursPerDay> is_night{};

  bool contains(int hour) const { return is_night.at(static_cast<std::size_t>(hour)); }
  std::vector<int> night_hours() const;
  friend bool operator==(const NightMask&, const NightMask&) = default;
};

/// Columns are located by header name (ZONEID, TIMESTAMP, POWER); extra columns are
/// ignored, so a combined GEFCom14 task file parses directly. When `zone` is set, rows of
/// other zones are dropped. Row numbers in errors count data rows from 1.
TimeSeries parse_power_csv(std::istream& in, std::optional<int> zone = std::nullopt);

std::vector<ExogenousSeries> parse_weather_csv(std::istream& in,
                                               const VariableMap& variable_map = default_variable_map(),
                                               std::optional<int> zone = std::nullopt);

void write_power_csv(std::ostream& out, const TimeSeries& series, int zone_id = 1);

RawDataset align_and_join(const TimeSeries& power, std::span<const ExogenousSeries> exogenous);

/// Days whose 24 hours all lie inside the dataset, in chronological order.
std::vector<std::int64_t> whole_days(const RawDataset& data);

struct Split {
  RawDataset train;
  RawDataset test;
  std::size_t train_days = 0;
  std::size_t test_days = 0;
};

/// Chronological split at the first hour of whole day floor(fraction * days).
Split split_train_test(const RawDataset& data, real train_fraction);

inline constexpr real kDefaultNightEpsilon = 1e-6;

/// Hour h is night iff max training power at h is strictly below epsilon, or exactly zero
/// (so epsilon 0 reduces to a strict positivity test).
/// Hours never observed in `train` are not night.
NightMask derive_night_mask(const RawDataset& train, real epsilon_night = kDefaultNightEpsilon);

}  // namespace solarqr::dataio
