#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ctxmdp/experiment.hpp"
#include "ctxmdp/infotheory.hpp"
#include "ctxmdp/metrics.hpp"
#include "ctxmdp/objective.hpp"

namespace py = pybind11;
using namespace ctxmdp;

namespace {

JointCounts to_counts(const std::vector<std::vector<std::uint64_t>>& rows) { return JointCounts::from_rows(rows); }

std::string estimate(const std::vector<std::vector<std::uint64_t>>& rows, std::uint64_t seed) {
  const auto counts = to_counts(rows);
  const auto budget = standard_mi_budget();
  DiscreteJointSampler sampler(counts);
  Rng rng(seed);
  nlohmann::json out{{"exact_mi", exact_mi(counts)}};
  for (const auto& [bound, name] : {std::pair{MiBound::Mine, "mine"}, std::pair{MiBound::InfoNce, "infonce"}}) {
    const auto trained = train_critic(bound, sampler, CriticParameters::bilinear(counts.rows(), counts.cols()),
                                      budget.steps, budget.learning_rate, budget.batch_size, rng);
    out[name] = evaluate_bound(bound, sampler, trained.params, budget.eval_batch, budget.eval_batches, rng);
  }
  return out.dump();
}

py::tuple power_law(const std::vector<double>& entropy, const std::vector<double>& latency) {
  if (entropy.size() != latency.size()) throw std::invalid_argument("entropy and latency lengths differ");
  std::vector<LatencySample> samples;
  for (std::size_t i = 0; i < entropy.size(); ++i) {
    samples.push_back(LatencySample{entropy[i], latency[i], 0, LatencySource::Measured});
  }
  const auto f = fit_power_law(samples);
  return py::make_tuple(f.beta0, f.beta1, f.alpha, f.r_squared);
}

std::vector<std::uint32_t> summarize_tokens(const std::string& kind, const std::vector<std::uint32_t>& signal,
                                            std::int64_t token_cap, const std::string& meta,
                                            const std::map<std::uint32_t, double>& scores) {
  SummarizerSpec spec;
  if (kind == "truncate") spec = Truncate{};
  else if (kind == "top_frequency") spec = TopFrequency{};
  else if (kind == "relevance") spec = RelevanceExtract{scores};
  else throw std::invalid_argument("unknown summarizer '" + kind + "'");
  MetaAction m = MetaAction::Refresh;
  if (meta == "compress") m = MetaAction::Compress;
  else if (meta != "refresh") throw std::invalid_argument("meta must be refresh or compress");
  BudgetSpec budget;
  budget.token_cap = token_cap;
  ExogenousSignal sig;
  for (auto s : signal) sig.tokens.push_back(Token{s});
  std::vector<std::uint32_t> out;
  for (auto t : summarize(spec, HistoryBuffer{}, sig, budget, m).tokens) out.push_back(t.symbol);
  return out;
}

std::vector<std::string> run(const std::string& config_text, const std::filesystem::path& out, std::size_t jobs) {
  const auto config = parse_config(config_text, "<python>");
  std::vector<std::string> summaries;
  for (const auto& r : run_experiment(config, out, jobs)) summaries.push_back(r.summary.dump());
  return summaries;
}

std::vector<std::string> sweep(const std::string& config_text, const std::string& axis,
                               const std::vector<std::string>& values, const std::filesystem::path& out,
                               std::size_t jobs) {
  const auto config = parse_config(config_text, "<python>");
  std::vector<std::string> rows;
  for (const auto& r : run_sweep(config, parse_sweep_axis(axis), values, out, jobs)) rows.push_back(r.summary.dump());
  return rows;
}

py::tuple report(const std::filesystem::path& dir, std::size_t regret_window) {
  std::ostringstream log;
  ReportOptions opts;
  opts.regret_window = regret_window;
  const bool wrote = build_report(dir, log, opts);
  return py::make_tuple(wrote, log.str());
}

py::tuple cross_factor(const std::vector<std::array<double, 4>>& records, std::size_t permutations,
                       std::uint64_t seed) {
  std::vector<FactorRecord> recs;
  for (const auto& r : records) recs.push_back(FactorRecord{r[0], r[1], r[2], r[3]});
  Rng rng(seed);
  const auto fit = cross_factor_fit(recs, permutations, rng);
  return py::make_tuple(std::vector<double>(fit.beta.data(), fit.beta.data() + 5), fit.p_value);
}

}  // namespace

PYBIND11_MODULE(_ctxmdp, m) {
  m.doc() = "Context-summarizing agents: estimators, summarizers and the experiment runner";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<Unfittable>(m, "Unfittable", PyExc_ValueError);

  m.def("exact_mi", [](const std::vector<std::vector<std::uint64_t>>& rows) { return exact_mi(to_counts(rows)); },
        py::arg("counts"));
  m.def("estimate_mi_json", &estimate, py::arg("counts"), py::arg("seed") = 0);
  m.def("fit_power_law", &power_law, py::arg("entropy"), py::arg("latency"));
  m.def("summarize", &summarize_tokens, py::arg("kind"), py::arg("signal"), py::arg("token_cap"),
        py::arg("meta") = "refresh", py::arg("scores") = std::map<std::uint32_t, double>{});
  m.def("sufficiency_epsilon",
        [](const ActionDistributions& full, const ActionDistributions& summary, const std::vector<double>& w) {
          return sufficiency_epsilon(full, summary, w);
        },
        py::arg("pi_full"), py::arg("pi_summary"), py::arg("state_weights"));
  m.def("token_elasticity", &token_elasticity, py::arg("perf_lo"), py::arg("perf_hi"), py::arg("tok_lo"),
        py::arg("tok_hi"));
  m.def("sqrt_scaling_slope",
        [](const std::vector<double>& regret, std::size_t burn_in) { return sqrt_scaling_slope(regret, burn_in); },
        py::arg("cumulative_regret"), py::arg("burn_in") = 0);
  m.def("cross_factor_fit", &cross_factor, py::arg("records"), py::arg("permutations") = 999, py::arg("seed") = 0);
  m.def("validate_config", [](const std::string& text) { parse_config(text, "<python>"); }, py::arg("text"));
  m.def("run_json", &run, py::arg("config"), py::arg("out"), py::arg("jobs") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("sweep_json", &sweep, py::arg("config"), py::arg("axis"), py::arg("values"), py::arg("out"),
        py::arg("jobs") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("report", &report, py::arg("dir"), py::arg("regret_window") = 500);
}
