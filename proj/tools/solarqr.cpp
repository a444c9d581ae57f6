#include "solarqr/bench.hpp"
#include "solarqr/synthetic.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace solarqr;

namespace {

int cmd_run(const fs::path& config_path, const std::string& models, std::optional<std::uint64_t> seed,
            const std::string& out, std::optional<std::size_t> workers) {
  auto config = bench::load_config(config_path);
  if (!models.empty()) config.models = bench::parse_model_list(models);
  if (seed) config.seed = *seed;
  if (!out.empty()) config.out_dir = out;
  if (workers) config.workers = *workers;
  const auto report = bench::run(config);
  std::cout << bench::emit_table(report);
  std::cerr << "artifacts written to " << config.out_dir.string() << '\n';
  return 0;
}

int cmd_plot(const fs::path& run_dir, const std::string& models, const std::string& days, const std::string& pair,
             const std::string& plot_dir) {
  const auto grid = qcore::QuantileGrid::percentiles();
  std::ifstream actual_in(run_dir / "actuals.csv");
  if (!actual_in) throw ConfigError("no actuals.csv in " + run_dir.string() + "; run the benchmark first");
  const auto actuals = dataio::parse_power_csv(actual_in);
  std::vector<bench::PlotSeries> series;
  for (auto kind : bench::parse_model_list(models)) {
    const std::string key(bench::key_name(kind));
    std::ifstream in(run_dir / ("forecasts_" + key + ".csv"));
    if (!in) throw ConfigError("no forecasts for " + key + " in " + run_dir.string());
    series.push_back({key, bench::read_forecasts_csv(in, grid)});
  }
  const auto out = plot_dir.empty() ? run_dir / "plots" : fs::path(plot_dir);
  const auto result =
      bench::emit_interval_plot(series, actuals, grid, bench::parse_pair(pair), bench::parse_day_range(days), out);
  for (const auto& f : result.files) std::cout << f.string() << '\n';
  for (const auto& [model, width] : result.mean_width) std::cerr << model << " mean band width " << width << '\n';
  return 0;
}

int cmd_synth(const fs::path& out, std::size_t days, std::uint64_t seed) {
  synthetic::SolarConfig config;
  config.days = days;
  config.seed = seed;
  std::ofstream file(out, std::ios::binary);
  if (!file) throw ConfigError("cannot write " + out.string());
  synthetic::write_gefcom_csv(file, synthetic::generate_solar(config));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic day-ahead solar power forecasting benchmark"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the benchmark described by a config file");
  fs::path config_path;
  std::string models, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  run->add_option("--config", config_path, "Flat key = value config file")->required();
  run->add_option("--models", models, "Comma separated subset of poly1,poly2,poly3,fcann,lstm");
  run->add_option("--seed", seed, "Global seed");
  run->add_option("--out", out, "Output directory");
  run->add_option("--workers", workers, "Concurrent trainings");

  auto* plot = app.add_subcommand("plot", "Interval plots from a finished run");
  fs::path run_dir = "bench_out";
  std::string plot_models = "fcann,lstm", days = "0..2", pair = "0.05,0.95", plot_dir;
  plot->add_option("--run", run_dir, "Directory of a finished run")->capture_default_str();
  plot->add_option("--model", plot_models, "Model or comma separated models")->capture_default_str();
  plot->add_option("--days", days, "Test-day offsets a..b")->capture_default_str();
  plot->add_option("--pair", pair, "Lower and upper level")->capture_default_str();
  plot->add_option("--out", plot_dir, "Plot directory (default <run>/plots)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic GEFCom-style data file");
  fs::path synth_out;
  std::size_t synth_days = 120;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "CSV path")->required();
  synth->add_option("--days", synth_days, "Number of days")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, models, seed, out, workers);
    if (plot->parsed()) return cmd_plot(run_dir, plot_models, days, pair, plot_dir);
    if (synth->parsed()) return cmd_synth(synth_out, synth_days, synth_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return bench::exit_code_for(e);
  }
  return 0;
}
