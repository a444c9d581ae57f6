#include "solarqr/bench.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace solarqr::bench {

namespace fs = std::filesystem;

namespace {

std::string num(const char* format, real v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

real actual_at(const dataio::TimeSeries& actuals, dataio::HourStamp t) {
  const auto it = std::lower_bound(actuals.timestamps.begin(), actuals.timestamps.end(), t);
  if (it == actuals.timestamps.end() || *it != t)
    throw ScoringError("no observed power at " + dataio::format_timestamp(t));
  return actuals.values[it - actuals.timestamps.begin()];
}

}  // namespace

std::string render_interval_svg(std::string_view title, std::span<const dataio::HourStamp> timestamps,
                                const Eigen::Ref<const vec>& actual, const Eigen::Ref<const vec>& lower,
                                const Eigen::Ref<const vec>& upper) {
  const auto n = static_cast<index_t>(timestamps.size());
  require(n > 0 && actual.size() == n && lower.size() == n && upper.size() == n, "render_interval_svg: size mismatch");
  constexpr real width = 960, height = 360, left = 56, right = 16, top = 36, bottom = 44;
  const real plot_w = width - left - right, plot_h = height - top - bottom;
  const real y_max = std::max({1.0, actual.maxCoeff(), upper.maxCoeff()});
  auto x = [&](index_t i) { return left + (n == 1 ? plot_w / 2 : plot_w * static_cast<real>(i) / static_cast<real>(n - 1)); };
  auto y = [&](real v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, y_max) / y_max); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"22\" font-size=\"14\">" << escape_xml(title) << "</text>\n";

  for (int k = 0; k <= 4; ++k) {
    const real v = y_max * k / 4.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << width - right << "\" y1=\"" << num("%.2f", y(v)) << "\" y2=\""
        << num("%.2f", y(v)) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << num("%.2f", y(v) + 4) << "\" text-anchor=\"end\">"
        << num("%.2f", v) << "</text>\n";
  }
  for (index_t i = 0; i < n; ++i) {
    if (timestamps[static_cast<std::size_t>(i)].hour_of_day() != 0) continue;
    svg << "<line x1=\"" << num("%.2f", x(i)) << "\" x2=\"" << num("%.2f", x(i)) << "\" y1=\"" << top << "\" y2=\""
        << height - bottom << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << num("%.2f", x(i)) << "\" y=\"" << height - bottom + 16 << "\" text-anchor=\"middle\">"
        << dataio::format_date(timestamps[static_cast<std::size_t>(i)]) << "</text>\n";
  }

  svg << "<polygon fill=\"#4a7ebb\" fill-opacity=\"0.35\" stroke=\"none\" points=\"";
  for (index_t i = 0; i < n; ++i) svg << num("%.2f", x(i)) << ',' << num("%.2f", y(upper[i])) << ' ';
  for (index_t i = n - 1; i >= 0; --i) svg << num("%.2f", x(i)) << ',' << num("%.2f", y(lower[i])) << ' ';
  svg << "\"/>\n";

  svg << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
  for (index_t i = 0; i < n; ++i) svg << num("%.2f", x(i)) << ',' << num("%.2f", y(actual[i])) << ' ';
  svg << "\"/>\n";

  svg << "<line x1=\"" << left << "\" x2=\"" << left << "\" y1=\"" << top << "\" y2=\"" << height - bottom
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" x2=\"" << width - right << "\" y1=\"" << height - bottom << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"14\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 14 " << top + plot_h / 2
      << ")\" text-anchor=\"middle\">power</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

PlotOutput emit_interval_plot(std::span<const PlotSeries> series, const dataio::TimeSeries& actuals,
                              const qcore::QuantileGrid& grid, std::pair<real, real> pair, DayRange days,
                              const fs::path& out_dir) {
  require(!series.empty(), "emit_interval_plot: no forecasts given");
  require(days.first <= days.last, "emit_interval_plot: day range start exceeds end");
  const auto lo = grid.index_of(pair.first);
  const auto hi = grid.index_of(pair.second);
  require(lo < hi, "emit_interval_plot: lower level must be below upper level");
  const std::string suffix = num("%g", pair.first) + "_" + num("%g", pair.second);

  fs::create_directories(out_dir);
  PlotOutput output;
  for (const auto& s : series) {
    if (days.last >= s.forecasts.size())
      throw PreconditionError("day " + std::to_string(days.last) + " is outside the test range 0.." +
                              std::to_string(s.forecasts.size() == 0 ? 0 : s.forecasts.size() - 1) + " for " +
                              s.model);
    const auto n = static_cast<index_t>((days.last - days.first + 1) * kHoursPerDay);
    std::vector<dataio::HourStamp> stamps;
    vec actual(n), lower(n), upper(n);
    index_t i = 0;
    for (auto d = days.first; d <= days.last; ++d) {
      const auto& f = s.forecasts[d];
      for (int h = 0; h < kHoursPerDay; ++h, ++i) {
        stamps.push_back(f.timestamp(h));
        actual[i] = actual_at(actuals, stamps.back());
        lower[i] = f.estimates(h, lo);
        upper[i] = f.estimates(h, hi);
      }
    }

    const auto stem = s.model + "_" + suffix;
    std::ostringstream csv;
    csv << "timestamp,actual,lower,upper\n";
    for (index_t k = 0; k < n; ++k)
      csv << dataio::format_timestamp(stamps[static_cast<std::size_t>(k)]) << ',' << num("%.17g", actual[k]) << ','
          << num("%.17g", lower[k]) << ',' << num("%.17g", upper[k]) << '\n';
    const auto title = s.model + ": " + num("%g", pair.first) + " to " + num("%g", pair.second) + " quantile band";
    for (const auto& [ext, content] : {std::pair<std::string, std::string>{".csv", csv.str()},
                                       {".svg", render_interval_svg(title, stamps, actual, lower, upper)}}) {
      const auto path = out_dir / (stem + ext);
      std::ofstream out(path, std::ios::binary);
      if (!out) throw ConfigError("cannot write " + path.string());
      out << content;
      output.files.push_back(path);
    }
    output.mean_width[s.model] = (upper - lower).mean();
  }

  nlohmann::json meta;
  meta["lower"] = pair.first;
  meta["upper"] = pair.second;
  meta["days"] = {days.first, days.last};
  meta["mean_band_width"] = output.mean_width;
  if (output.mean_width.contains("lstm") && output.mean_width.contains("fcann") && output.mean_width["fcann"] > 0)
    meta["lstm_to_fcann_width_ratio"] = output.mean_width["lstm"] / output.mean_width["fcann"];
  const auto meta_path = out_dir / ("interval_" + suffix + ".json");
  std::ofstream out(meta_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + meta_path.string());
  out << meta.dump(2) << '\n';
  output.files.push_back(meta_path);
  return output;
}

}  // namespace solarqr::bench
