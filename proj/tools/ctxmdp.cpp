#include <CLI11.hpp>
#include <iostream>
#include <thread>

#include "ctxmdp/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

struct Options {
  std::string config;
  std::string out;
  std::string seeds;
  std::string axis;
  std::string values;
  std::size_t jobs = 1;
  std::string input;
  std::uint64_t seed = 0;
  std::size_t window = 500;
};

ctxmdp::ExperimentConfig configured(const Options& o) {
  auto config = ctxmdp::load_config(o.config);
  if (!o.seeds.empty()) config.seeds = ctxmdp::parse_seed_list(o.seeds);
  if (!o.out.empty()) config.output_dir = o.out;
  config.validate();
  return config;
}

int finish_runs(const std::vector<ctxmdp::RunResult>& results) {
  int failed = 0;
  for (const auto& r : results) {
    if (r.failed) {
      std::cerr << "run " << r.run_id << " failed: " << r.error << '\n';
      ++failed;
    }
  }
  std::cout << results.size() - failed << "/" << results.size() << " runs completed\n";
  return failed == 0 ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-summarizing agents: runs, sweeps and reports"};
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "Run every baseline for every seed");
  run->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", o.out, "Output directory");
  run->add_option("--seeds", o.seeds, "Seeds, e.g. 0,1,2 or 0-4");
  run->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "Sweep one factor of the summarized agent");
  sweep->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", o.axis, "tokens | update_mode | summarizer")->required();
  sweep->add_option("--values", o.values, "Comma-separated axis values")->required();
  sweep->add_option("--out", o.out, "Output directory");
  sweep->add_option("--seeds", o.seeds, "Seeds, e.g. 0,1,2 or 0-4");
  sweep->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Aggregate the runs under a directory");
  report->add_option("--out", o.out, "Directory holding the runs")->required();
  report->add_option("--window", o.window, "Steps per MI/regret window")->check(CLI::PositiveNumber);

  auto* fit = app.add_subcommand("fit-latency", "Fit latency = b0 + b1 * H^alpha to a CSV");
  fit->add_option("input", o.input, "CSV with entropy_nats,latency_ms columns")->required()->check(CLI::ExistingFile);

  auto* mi = app.add_subcommand("estimate-mi", "Exact and variational MI of a count matrix");
  mi->add_option("input", o.input, "Counts as a JSON matrix or CSV")->required()->check(CLI::ExistingFile);
  mi->add_option("--seed", o.seed, "Sampler seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (run->parsed()) {
      const auto config = configured(o);
      return finish_runs(ctxmdp::run_experiment(config, config.output_dir, o.jobs));
    }
    if (sweep->parsed()) {
      const auto config = configured(o);
      const auto axis = ctxmdp::parse_sweep_axis(o.axis);
      const auto values = ctxmdp::split_list(o.values);
      if (values.empty()) throw ctxmdp::ConfigError("--values: at least one value is required");
      const auto rows = ctxmdp::run_sweep(config, axis, values, config.output_dir, o.jobs);
      int failed = 0;
      for (const auto& r : rows) {
        if (r.summary.value("status", "") != "ok") ++failed;
      }
      std::cout << rows.size() - failed << "/" << rows.size() << " sweep runs completed\n";
      return failed == 0 ? kOk : kRuntime;
    }
    if (report->parsed()) {
      ctxmdp::ReportOptions options;
      options.regret_window = o.window;
      if (ctxmdp::build_report(o.out, std::cerr, options)) {
        std::cout << "wrote " << (std::filesystem::path(o.out) / "report.json").string() << '\n';
      }
      return kOk;
    }
    if (fit->parsed()) {
      std::cout << ctxmdp::fit_latency_csv(o.input).dump(2) << '\n';
      return kOk;
    }
    if (mi->parsed()) {
      std::cout << ctxmdp::estimate_mi_file(o.input, o.seed).dump(2) << '\n';
      return kOk;
    }
  } catch (const ctxmdp::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ctxmdp::Unfittable& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
  return kInvalid;
}
