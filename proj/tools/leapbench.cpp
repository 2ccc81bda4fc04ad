#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pageleap/bench.hpp"
#include "pageleap/engine.hpp"
#include "pageleap/errors.hpp"

using namespace pageleap;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

int run_command(const std::string& experiment, const std::string& page_size,
                const std::string& region, const std::string& areas,
                const std::string& rates, const std::string& skew, uint64_t seed,
                unsigned reps, double timeout_s, unsigned reduction,
                const std::string& mode, const std::string& out_path,
                const std::string& format, size_t rand_count, size_t write_count,
                unsigned writer_threads, double burst_seconds) {
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.seed = seed;
  cfg.reps = reps;
  cfg.timeout_s = timeout_s;
  cfg.reduction_factor = reduction;
  cfg.rand_access_count = rand_count;
  cfg.write_count = write_count;
  cfg.writer_threads = writer_threads;
  cfg.burst_seconds = burst_seconds;

  if (page_size == "huge")
    cfg.huge_pages = true;
  else if (page_size != "small")
    throw std::invalid_argument("--page-size must be small or huge");

  if (!region.empty()) cfg.region_bytes = parse_byte_size(region);
  for (const auto& a : split_list(areas)) cfg.area_sizes.push_back(parse_byte_size(a));
  for (const auto& r : split_list(rates)) cfg.rates.push_back(std::stod(r));

  if (!skew.empty()) {
    auto colon = skew.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("--skew must be FRACTION:HOT_BYTES, e.g. 0.75:8M");
    SkewSpec s;
    s.hot_fraction = std::stod(skew.substr(0, colon));
    s.hot_bytes = parse_byte_size(skew.substr(colon + 1));
    cfg.skew = s;
  }

  if (mode == "auto")
    cfg.mode = RunMode::Auto;
  else if (mode == "real-numa")
    cfg.mode = RunMode::Real;
  else if (mode == "simulated")
    cfg.mode = RunMode::Simulated;
  else
    throw std::invalid_argument("--mode must be auto, real-numa or simulated");

  auto records = run_experiment(cfg);

  size_t skips = 0;
  for (const auto& r : records) skips += r.skipped;
  fprintf(stderr, "%s: %zu records (%zu skipped arms)\n", cfg.experiment.c_str(),
          records.size(), skips);

  if (!out_path.empty()) {
    if (format == "json")
      write_json(out_path, records);
    else if (format == "csv")
      write_csv(out_path, records);
    else
      throw std::invalid_argument("--format must be csv or json");
    fprintf(stderr, "wrote %s\n", out_path.c_str());
  } else {
    // No output file: print CSV to stdout.
    const auto& names = record_field_names();
    for (size_t i = 0; i < names.size(); ++i)
      printf("%s%s", i ? "," : "", names[i].c_str());
    printf("\n");
    for (const auto& r : records) {
      auto vals = record_field_values(r);
      for (size_t i = 0; i < vals.size(); ++i)
        printf("%s%s", i ? "," : "", vals[i].c_str());
      printf("\n");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"page-migration benchmark harness"};
  app.require_subcommand(1);

  auto* env = app.add_subcommand("env-check", "report what this host can run");
  bool env_json = false;
  env->add_flag("--json", env_json, "emit JSON instead of text");

  auto* run = app.add_subcommand("run", "run one experiment");
  std::string experiment, page_size = "small", region, areas, rates, skew;
  std::string mode = "auto", out_path, format = "csv";
  uint64_t seed = 42;
  unsigned reps = 3, reduction = 2, writer_threads = 2;
  double timeout_s = 10.0, burst_seconds = 3.0;
  size_t rand_count = 10'000'000, write_count = 1'000'000;

  run->add_option("--experiment", experiment, "E1..E7")->required();
  run->add_option("--page-size", page_size, "small|huge (default small)");
  run->add_option("--region-bytes", region, "region size, e.g. 256M");
  run->add_option("--areas", areas, "comma list of initial area sizes, e.g. 512K,16M");
  run->add_option("--rates", rates, "comma list of write rates per second");
  run->add_option("--skew", skew, "FRACTION:HOT_BYTES, e.g. 0.75:8M");
  run->add_option("--seed", seed, "RNG seed (default 42)");
  run->add_option("--reps", reps, "repetitions per arm (default 3)");
  run->add_option("--timeout-s", timeout_s, "migration timeout seconds (default 10)");
  run->add_option("--reduction-factor", reduction, "area split factor (default 2)");
  run->add_option("--mode", mode, "auto|real-numa|simulated");
  run->add_option("--out", out_path, "output file path");
  run->add_option("--format", format, "csv|json (default csv)");
  run->add_option("--rand-count", rand_count, "random accesses for E1");
  run->add_option("--write-count", write_count, "journaled updates for E7");
  run->add_option("--writer-threads", writer_threads, "burst writer threads");
  run->add_option("--burst-seconds", burst_seconds, "sustained window for E5");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (env->parsed()) {
      EnvReport report = env_check();
      if (env_json)
        printf("%s\n", report.to_json_string().c_str());
      else
        printf("%s", report.to_text().c_str());
      return 0;
    }
    install_fault_handler();
    return run_command(experiment, page_size, region, areas, rates, skew, seed, reps,
                       timeout_s, reduction, mode, out_path, format, rand_count,
                       write_count, writer_threads, burst_seconds);
  } catch (const std::invalid_argument& e) {
    fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
