// Experiment configuration, seeded runs over the three baselines, parameter
// sweeps and report generation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxmdp/agent.hpp"
#include "ctxmdp/costmodel.hpp"
#include "ctxmdp/envs.hpp"
#include "ctxmdp/loop.hpp"
#include "ctxmdp/objective.hpp"
#include "ctxmdp/summarize.hpp"

namespace ctxmdp {

inline constexpr const char* kStepsSchema = "ctxmdp.steps/1";
inline constexpr const char* kLossesSchema = "ctxmdp.losses/1";
inline constexpr const char* kSummarySchema = "ctxmdp.summary/1";
inline constexpr const char* kReportSchema = "ctxmdp.report/1";

// Invalid configuration or arguments (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AgentSpec {
  std::string policy = "linear_q";  // linear_q | tabular_q | softmax | uniform
  StepSize step;
  Exploration exploration;
  std::optional<double> discount;  // defaults to the environment's
  double initial_value = 0.0;      // Q learners
  double temperature = 1.0;        // softmax policy
  double probe_temperature = 0.1;
  std::uint64_t episodes = 1000;
};

struct MiEstimation {
  bool enabled = true;
  std::size_t steps = 200;
  double learning_rate = 0.5;
  std::size_t batch_size = 128;
  std::size_t eval_batch = 512;
  std::size_t eval_batches = 2;
};

// Critic training budget used by estimate-mi and the estimator checks.
MiEstimation standard_mi_budget();

struct ExperimentConfig {
  std::string run_id = "run";
  EnvConfig env;
  SummarizerSpec summarizer = Truncate{};
  BudgetSpec budget;
  AgentSpec agent;
  MetaPolicy meta;
  std::vector<Baseline> baselines{Baseline::None, Baseline::Raw, Baseline::Summarized};
  std::vector<std::uint64_t> seeds{0};
  std::size_t entropy_window = 256;
  std::size_t mi_window = 256;
  std::size_t history_capacity = 64;
  CostModel cost;
  LossWeights loss_weights;
  MiEstimation mi;
  std::size_t probe_states = 32;
  std::uint64_t log_every = 0;  // episodes per loss epoch; 0 means episodes / 20
  bool measure_wall_clock = false;
  std::string output_dir = "runs";

  void validate() const;
};

// Parses a JSON config. Unknown keys and bad values raise ConfigError with
// the JSON path and the line it appears on.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// "0,1,2" and "0-4" forms, mixed freely.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<std::string> split_list(const std::string& text);

std::unique_ptr<Policy> make_policy(const ExperimentConfig& config, const Environment& env);

struct RunResult {
  std::string run_id;
  Baseline baseline = Baseline::Summarized;
  std::uint64_t seed = 0;
  nlohmann::ordered_json summary;
  bool failed = false;
  std::string error;
};

// One (baseline, seed) run: writes <out>/<run_id>/steps.jsonl and
// losses.jsonl, returns the summary (summary.json is written by the caller
// once cross-run fields are known).
RunResult execute_run(const ExperimentConfig& config, Baseline baseline, std::uint64_t seed,
                      const std::string& run_id, const std::filesystem::path& out_dir);

// All (baseline, seed) runs on `jobs` worker threads, plus runs.json.
std::vector<RunResult> run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                      std::size_t jobs = 1);

enum class SweepAxis { Tokens, UpdateMode, Summarizer };
SweepAxis parse_sweep_axis(const std::string& text);

struct SweepRow {
  std::string value;
  std::uint64_t seed = 0;
  nlohmann::ordered_json summary;
};

// Summarized runs for every (value, seed) plus a no-context reference per
// seed; writes sweep.csv at the output root.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
                                const std::filesystem::path& out_dir, std::size_t jobs = 1);

struct ReportOptions {
  std::size_t regret_window = 500;
  std::size_t plot_stride = 50;
};

// Reads every run under `dir` and writes report.json and the report CSVs.
// Returns false (with notices printed to `log`) when there is nothing to report.
bool build_report(const std::filesystem::path& dir, std::ostream& log, const ReportOptions& options = {});

// Standalone helpers behind fit-latency and estimate-mi.
nlohmann::json fit_latency_csv(const std::filesystem::path& csv);
nlohmann::json estimate_mi_file(const std::filesystem::path& counts, std::uint64_t seed);

}  // namespace ctxmdp
