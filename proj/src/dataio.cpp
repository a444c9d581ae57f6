#include "solarqr/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace solarqr::dataio {

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_real(std::string_view s, real& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::int64_t days_from_civil(int y, int m, int d, bool& ok) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  ok = ymd.ok();
  if (!ok) return 0;
  return sys_days{ymd}.time_since_epoch().count();
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

Table read_table(std::istream& in) {
  Table table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    std::vector<std::string> owned(cells.begin(), cells.end());
    if (!have_header) {
      // Tolerate a UTF-8 byte order mark on the first header cell.
      if (!owned.empty() && owned[0].rfind("\xEF\xBB\xBF", 0) == 0) owned[0].erase(0, 3);
      table.header = std::move(owned);
      have_header = true;
    } else {
      table.rows.push_back(std::move(owned));
    }
  }
  if (!have_header) throw ParseError("CSV is empty (missing header row)");
  return table;
}

std::string row_label(std::size_t data_row) { return "row " + std::to_string(data_row); }

const std::string& cell(const std::vector<std::string>& row, std::size_t col, std::size_t data_row) {
  if (col >= row.size()) throw ParseError(row_label(data_row) + ": too few columns");
  return row[col];
}

std::vector<std::size_t> keep_rows(const Table& table, std::optional<int> zone) {
  std::vector<std::size_t> keep;
  const auto zone_col = table.column("ZONEID");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (zone && zone_col) {
      int z = 0;
      if (!parse_int(cell(table.rows[r], *zone_col, r + 1), z))
        throw ParseError(row_label(r + 1) + ": malformed ZONEID '" + table.rows[r][*zone_col] + "'");
      if (z != *zone) continue;
    }
    keep.push_back(r);
  }
  return keep;
}

// Sort by timestamp, then reject duplicates and gaps. `rows` carries the data row of each entry.
void check_hourly_grid(std::vector<HourStamp>& stamps, vec& values, std::vector<std::size_t>& rows,
                       std::string_view what) {
  std::vector<std::size_t> order(stamps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return stamps[a] < stamps[b]; });
  std::vector<HourStamp> s(stamps.size());
  vec v(values.size());
  std::vector<std::size_t> r(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    s[i] = stamps[order[i]];
    v[static_cast<index_t>(i)] = values[static_cast<index_t>(order[i])];
    r[i] = rows[order[i]];
  }
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] == s[i - 1])
      throw ValidationError(std::string(what) + ": duplicate timestamp " + format_timestamp(s[i]) + " at " +
                            row_label(r[i]));
    if (s[i].hours != s[i - 1].hours + 1)
      throw ValidationError(std::string(what) + ": gap in hourly series, missing hour " +
                            format_timestamp(s[i - 1] + 1) + " (before " + row_label(r[i]) + ")");
  }
  stamps = std::move(s);
  values = std::move(v);
  rows = std::move(r);
}

}  // namespace

HourStamp parse_timestamp(std::string_view text) {
  const auto t = trim(text);
  int y = 0, mo = 0, d = 0;
  std::string_view rest;
  if (t.size() >= 8 && all_digits(t.substr(0, 8))) {
    parse_int(t.substr(0, 4), y);
    parse_int(t.substr(4, 2), mo);
    parse_int(t.substr(6, 2), d);
    rest = t.substr(8);
  } else if (t.size() >= 10 && t[4] == '-' && t[7] == '-' && all_digits(t.substr(0, 4)) &&
             all_digits(t.substr(5, 2)) && all_digits(t.substr(8, 2))) {
    parse_int(t.substr(0, 4), y);
    parse_int(t.substr(5, 2), mo);
    parse_int(t.substr(8, 2), d);
    rest = t.substr(10);
  } else {
    throw ParseError("malformed timestamp '" + std::string(t) + "'");
  }
  if (rest.empty() || (rest.front() != ' ' && rest.front() != 'T'))
    throw ParseError("malformed timestamp '" + std::string(t) + "' (missing time of day)");
  rest.remove_prefix(1);
  if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);

  const auto colon = rest.find(':');
  if (colon == std::string_view::npos) throw ParseError("malformed timestamp '" + std::string(t) + "'");
  int hh = 0, mm = 0, ss = 0;
  const auto hour_part = rest.substr(0, colon);
  auto minute_part = rest.substr(colon + 1);
  std::string_view second_part;
  if (const auto c2 = minute_part.find(':'); c2 != std::string_view::npos) {
    second_part = minute_part.substr(c2 + 1);
    minute_part = minute_part.substr(0, c2);
  }
  const bool ok_fields = all_digits(hour_part) && hour_part.size() <= 2 && parse_int(hour_part, hh) &&
                         all_digits(minute_part) && minute_part.size() == 2 && parse_int(minute_part, mm) &&
                         (second_part.empty() || (all_digits(second_part) && parse_int(second_part, ss)));
  if (!ok_fields || hh > 23 || mm > 59 || ss > 59)
    throw ParseError("malformed timestamp '" + std::string(t) + "'");
  if (mm != 0 || ss != 0) throw ParseError("timestamp '" + std::string(t) + "' is not on the hourly grid");

  bool ok = false;
  const auto days = days_from_civil(y, mo, d, ok);
  if (!ok) throw ParseError("malformed timestamp '" + std::string(t) + "' (invalid date)");
  return HourStamp::from_day_hour(days, hh);
}

std::string format_timestamp(HourStamp t) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{t.day()}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d%02u%02u %02d:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), t.hour_of_day());
  return buf;
}

std::string format_date(HourStamp t) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{t.day()}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string_view to_string(Variable v) {
  switch (v) {
    case Variable::SSRD: return "SSRD";
    case Variable::STRD: return "STRD";
    case Variable::TSR: return "TSR";
  }
  return "?";
}

Variable variable_from_string(std::string_view name) {
  for (auto v : kVariables)
    if (to_string(v) == name) return v;
  throw ConfigError("unknown exogenous variable '" + std::string(name) + "' (expected SSRD, STRD or TSR)");
}

VariableMap default_variable_map() {
  return {{"VAR169", Variable::SSRD}, {"VAR175", Variable::STRD}, {"VAR178", Variable::TSR}};
}

RawDataset RawDataset::slice(index_t begin, index_t end) const {
  require(0 <= begin && begin <= end && end <= size(), "RawDataset::slice: range out of bounds");
  RawDataset out;
  const auto b = static_cast<std::size_t>(begin), e = static_cast<std::size_t>(end);
  out.power.timestamps.assign(power.timestamps.begin() + b, power.timestamps.begin() + e);
  out.power.values = power.values.segment(begin, end - begin);
  for (std::size_t k = 0; k < exogenous.size(); ++k) {
    out.exogenous[k].variable = exogenous[k].variable;
    out.exogenous[k].timestamps.assign(exogenous[k].timestamps.begin() + b, exogenous[k].timestamps.begin() + e);
    out.exogenous[k].values = exogenous[k].values.segment(begin, end - begin);
  }
  return out;
}

std::vector<int> NightMask::night_hours() const {
  std::vector<int> out;
  for (int h = 0; h < kHoursPerDay; ++h)
    if (is_night[static_cast<std::size_t>(h)]) out.push_back(h);
  return out;
}

TimeSeries parse_power_csv(std::istream& in, std::optional<int> zone) {
  const auto table = read_table(in);
  const auto ts_col = table.column("TIMESTAMP");
  const auto p_col = table.column("POWER");
  if (!ts_col || !p_col) throw ParseError("power CSV header must contain TIMESTAMP and POWER columns");

  const auto keep = keep_rows(table, zone);
  std::vector<HourStamp> stamps;
  std::vector<std::size_t> rows;
  vec values(static_cast<index_t>(keep.size()));
  stamps.reserve(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto r = keep[i];
    const auto& row = table.rows[r];
    try {
      stamps.push_back(parse_timestamp(cell(row, *ts_col, r + 1)));
    } catch (const ParseError& e) {
      throw ParseError(row_label(r + 1) + ": " + e.what());
    }
    real p = 0;
    if (!parse_real(cell(row, *p_col, r + 1), p))
      throw ParseError(row_label(r + 1) + ": non-numeric POWER '" + row[*p_col] + "'");
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError(row_label(r + 1) + ": POWER " + row[*p_col] + " outside [0, 1]");
    values[static_cast<index_t>(i)] = p;
    rows.push_back(r + 1);
  }
  if (stamps.empty()) throw ValidationError("power CSV contains no rows for the requested zone");
  check_hourly_grid(stamps, values, rows, "power");
  return TimeSeries{std::move(stamps), std::move(values)};
}

std::vector<ExogenousSeries> parse_weather_csv(std::istream& in, const VariableMap& variable_map,
                                               std::optional<int> zone) {
  std::array<std::optional<std::string>, 3> column_of;
  for (const auto& [column, variable] : variable_map) column_of[static_cast<std::size_t>(variable)] = column;
  for (auto v : kVariables)
    if (!column_of[static_cast<std::size_t>(v)])
      throw ConfigError("weather variable map has no column for required variable " + std::string(to_string(v)));

  const auto table = read_table(in);
  const auto ts_col = table.column("TIMESTAMP");
  if (!ts_col) throw ParseError("weather CSV header must contain a TIMESTAMP column");
  std::array<std::size_t, 3> cols{};
  for (auto v : kVariables) {
    const auto& name = *column_of[static_cast<std::size_t>(v)];
    const auto c = table.column(name);
    if (!c)
      throw ConfigError("weather CSV has no column '" + name + "' mapped to " + std::string(to_string(v)));
    cols[static_cast<std::size_t>(v)] = *c;
  }

  const auto keep = keep_rows(table, zone);
  if (keep.empty()) throw ValidationError("weather CSV contains no rows for the requested zone");
  std::vector<HourStamp> stamps;
  std::array<vec, 3> values;
  for (auto& v : values) v.resize(static_cast<index_t>(keep.size()));
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto r = keep[i];
    const auto& row = table.rows[r];
    try {
      stamps.push_back(parse_timestamp(cell(row, *ts_col, r + 1)));
    } catch (const ParseError& e) {
      throw ParseError(row_label(r + 1) + ": " + e.what());
    }
    for (std::size_t k = 0; k < 3; ++k) {
      real x = 0;
      if (!parse_real(cell(row, cols[k], r + 1), x))
        throw ParseError(row_label(r + 1) + ": non-numeric " + table.header[cols[k]] + " '" + row[cols[k]] + "'");
      values[k][static_cast<index_t>(i)] = x;
    }
    rows.push_back(r + 1);
  }

  std::vector<ExogenousSeries> out;
  for (auto v : kVariables) {
    auto s = stamps;
    auto r = rows;
    auto x = values[static_cast<std::size_t>(v)];
    check_hourly_grid(s, x, r, "weather");
    out.push_back(ExogenousSeries{v, std::move(s), std::move(x)});
  }
  return out;
}

void write_power_csv(std::ostream& out, const TimeSeries& series, int zone_id) {
  out << "ZONEID,TIMESTAMP,POWER\n";
  char buf[64];
  for (index_t i = 0; i < series.size(); ++i) {
    // %.17g round-trips every double exactly.
    std::snprintf(buf, sizeof buf, "%.17g", series.values[i]);
    out << zone_id << ',' << format_timestamp(series.timestamps[static_cast<std::size_t>(i)]) << ',' << buf << '\n';
  }
}

RawDataset align_and_join(const TimeSeries& power, std::span<const ExogenousSeries> exogenous) {
  require(!power.empty(), "align_and_join: power series is empty");
  std::array<const ExogenousSeries*, 3> by_var{};
  for (const auto& e : exogenous) {
    require(e.size() > 0, "align_and_join: exogenous series " + std::string(to_string(e.variable)) + " is empty");
    by_var[static_cast<std::size_t>(e.variable)] = &e;
  }
  for (auto v : kVariables)
    if (!by_var[static_cast<std::size_t>(v)])
      throw ConfigError("align_and_join: missing exogenous series " + std::string(to_string(v)));

  HourStamp lo = power.timestamps.front(), hi = power.timestamps.back();
  for (const auto* e : by_var) {
    lo = std::max(lo, e->timestamps.front());
    hi = std::min(hi, e->timestamps.back());
  }
  if (hi < lo)
    throw AlignmentError("power and weather time ranges do not overlap (power " +
                         format_timestamp(power.timestamps.front()) + ".." + format_timestamp(power.timestamps.back()) +
                         ")");

  // Series are contiguous, so the overlap is a positional window in each.
  auto window = [&](const std::vector<HourStamp>& ts, const vec& values, std::vector<HourStamp>& out_ts,
                    vec& out_values, std::string_view what) {
    const auto first = lo.hours - ts.front().hours;
    const auto count = hi.hours - lo.hours + 1;
    if (first < 0 || first + count > static_cast<std::int64_t>(ts.size()) ||
        ts[static_cast<std::size_t>(first + count - 1)] != hi)
      throw AlignmentError(std::string(what) + " series is not contiguous over the aligned range");
    out_ts.assign(ts.begin() + first, ts.begin() + first + count);
    out_values = values.segment(first, count);
  };

  RawDataset data;
  window(power.timestamps, power.values, data.power.timestamps, data.power.values, "power");
  for (auto v : kVariables) {
    const auto k = static_cast<std::size_t>(v);
    data.exogenous[k].variable = v;
    window(by_var[k]->timestamps, by_var[k]->values, data.exogenous[k].timestamps, data.exogenous[k].values,
           to_string(v));
  }
  return data;
}

std::vector<std::int64_t> whole_days(const RawDataset& data) {
  std::vector<std::int64_t> days;
  if (data.size() == 0) return days;
  const auto first = data.first(), last = data.last();
  const auto first_day = first.hour_of_day() == 0 ? first.day() : first.day() + 1;
  const auto last_day = last.hour_of_day() == kHoursPerDay - 1 ? last.day() : last.day() - 1;
  for (auto d = first_day; d <= last_day; ++d) days.push_back(d);
  return days;
}

Split split_train_test(const RawDataset& data, real train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw PreconditionError("split_train_test: train_fraction must lie strictly between 0 and 1");
  const auto days = whole_days(data);
  if (days.size() < 2)
    throw SplitError("split_train_test: need at least 2 whole days, have " + std::to_string(days.size()));
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<real>(days.size())));
  if (n_train == 0 || n_train >= days.size())
    throw SplitError("split_train_test: fraction leaves one partition without whole days");
  const auto cut = HourStamp::from_day_hour(days[n_train], 0);
  const auto cut_index = cut.hours - data.first().hours;
  Split s;
  s.train = data.slice(0, cut_index);
  s.test = data.slice(cut_index, data.size());
  s.train_days = n_train;
  s.test_days = days.size() - n_train;
  return s;
}

NightMask derive_night_mask(const RawDataset& train, real epsilon_night) {
  require(train.size() > 0, "derive_night_mask: training data is empty");
  std::array<real, kHoursPerDay> max_power;
  std::array<bool, kHoursPerDay> seen{};
  max_power.fill(0.0);
  for (index_t i = 0; i < train.size(); ++i) {
    const auto h = static_cast<std::size_t>(train.power.timestamps[static_cast<std::size_t>(i)].hour_of_day());
    max_power[h] = seen[h] ? std::max(max_power[h], train.power.values[i]) : train.power.values[i];
    seen[h] = true;
  }
  NightMask mask;
  require(epsilon_night >= 0, "derive_night_mask: epsilon_night must be non-negative");
  for (std::size_t h = 0; h < mask.is_night.size(); ++h)
    mask.is_night[h] = seen[h] && (max_power[h] < epsilon_night || max_power[h] <= 0.0);
  return mask;
}

}  // namespace solarqr::dataio
