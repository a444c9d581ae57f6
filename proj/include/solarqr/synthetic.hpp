#pragma once

#include "solarqr/core.hpp"
#include "solarqr/dataio.hpp"

#include <iosfwd>
#include <vector>

// Synthetic fixtures with known structure, used by the test suites and the `synth`
// CLI command. None of this is needed to run on real data.
namespace solarqr::synthetic {

struct SolarConfig {
  std::size_t days = 60;
  std::uint64_t seed = 1;
  std::int64_t start_day = 15431;  ///< 2012-04-01
  int start_hour = 1;              ///< First label's hour of day (GEFCom14 files start at 01:00).
  int sunrise = 6;                 ///< First hour with possible generation.
  int sunset = 18;                 ///< Last hour with possible generation.
  real noise = 0.03;               ///< Std. dev. of additive power noise during daylight.
};

struct SolarData {
  dataio::TimeSeries power;
  std::vector<dataio::ExogenousSeries> weather;
};

/// Clear-sky bell shape between sunrise and sunset, attenuated by a daily AR(1) cloud
/// cover; radiation forecasts see the cloud cover through forecast noise. Power is
/// exactly zero outside [sunrise, sunset] and clipped to [0, 1].
SolarData generate_solar(const SolarConfig& config);

/// One GEFCom14-style file: ZONEID,TIMESTAMP,VAR169,VAR175,VAR178,POWER.
void write_gefcom_csv(std::ostream& out, const SolarData& data, int zone_id = 1);

/// y = 0.5 x + (0.1 + 0.2 x)(u - 0.5), x and u uniform on [0, 1].
struct Heteroscedastic {
  mat X;  ///< n x 1
  vec y;
};

Heteroscedastic heteroscedastic(index_t n, std::uint64_t seed);

/// Conditional tau-quantile of the heteroscedastic model at x.
constexpr real heteroscedastic_quantile(real x, real tau) { return 0.5 * x + (0.1 + 0.2 * x) * (tau - 0.5); }

}  // namespace solarqr::synthetic
