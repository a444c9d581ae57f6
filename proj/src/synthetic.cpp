#include "solarqr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

namespace solarqr::synthetic {

SolarData generate_solar(const SolarConfig& config) {
  require(config.days >= 1, "generate_solar: need at least one day");
  require(config.sunrise >= 0 && config.sunset < kHoursPerDay && config.sunrise < config.sunset,
          "generate_solar: invalid daylight window");
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<real> gauss(0.0, 1.0);

  const auto n_hours = static_cast<index_t>(config.days) * kHoursPerDay;
  const auto first = dataio::HourStamp::from_day_hour(config.start_day, config.start_hour);
  SolarData out;
  out.power.values.resize(n_hours);
  std::array<vec, 3> radiation;
  for (auto& r : radiation) r.resize(n_hours);

  real cloud = 0.3;
  std::int64_t current_day = first.day() - 1;
  real forecast_cloud = cloud;
  for (index_t i = 0; i < n_hours; ++i) {
    const auto t = first + i;
    out.power.timestamps.push_back(t);
    if (t.day() != current_day) {
      current_day = t.day();
      cloud = std::clamp(0.3 + 0.6 * (cloud - 0.3) + 0.25 * gauss(rng), 0.0, 1.0);
      forecast_cloud = std::clamp(cloud + 0.1 * gauss(rng), 0.0, 1.0);
    }
    const int h = t.hour_of_day();
    // Seasonal amplitude over a one-year cycle.
    const real season = 0.85 + 0.15 * std::cos(2.0 * std::numbers::pi * static_cast<real>(t.day() - config.start_day) / 365.0);
    real clear = 0.0;
    if (h >= config.sunrise && h <= config.sunset) {
      const real phase = (static_cast<real>(h - config.sunrise) + 0.5) / static_cast<real>(config.sunset - config.sunrise + 1);
      clear = season * std::sin(std::numbers::pi * phase);
    }
    real p = 0.0;
    if (clear > 0) p = std::clamp(0.9 * clear * (1.0 - 0.75 * cloud) + config.noise * gauss(rng) * clear, 0.0, 1.0);
    out.power.values[i] = p;
    const real sky = clear * (1.0 - 0.7 * forecast_cloud);
    radiation[0][i] = 3.0e6 * sky + (clear > 0 ? 5.0e4 * gauss(rng) : 0.0);
    radiation[1][i] = 1.0e6 * (1.0 + 0.3 * forecast_cloud) + 2.0e4 * gauss(rng);
    radiation[2][i] = 3.5e6 * sky * (0.95 + 0.05 * forecast_cloud) + (clear > 0 ? 5.0e4 * gauss(rng) : 0.0);
  }
  for (auto v : dataio::kVariables)
    out.weather.push_back({v, out.power.timestamps, radiation[static_cast<std::size_t>(v)]});
  return out;
}

void write_gefcom_csv(std::ostream& out, const SolarData& data, int zone_id) {
  out << "ZONEID,TIMESTAMP,VAR169,VAR175,VAR178,POWER\n";
  char buf[160];
  for (index_t i = 0; i < data.power.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", data.weather[0].values[i], data.weather[1].values[i],
                  data.weather[2].values[i], data.power.values[i]);
    out << zone_id << ',' << dataio::format_timestamp(data.power.timestamps[static_cast<std::size_t>(i)]) << ','
        << buf << '\n';
  }
}

Heteroscedastic heteroscedastic(index_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<real> unit(0.0, 1.0);
  Heteroscedastic out{mat(n, 1), vec(n)};
  for (index_t i = 0; i < n; ++i) {
    const real x = unit(rng);
    const real u = unit(rng);
    out.X(i, 0) = x;
    out.y[i] = 0.5 * x + (0.1 + 0.2 * x) * (u - 0.5);
  }
  return out;
}

}  // namespace solarqr::synthetic
