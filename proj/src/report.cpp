#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ctxmdp/experiment.hpp"
#include "ctxmdp/infotheory.hpp"
#include "ctxmdp/metrics.hpp"
#include "ctxmdp/numeric.hpp"

namespace ctxmdp {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct RunData {
  std::string run_id;
  json summary;
  std::vector<double> t, entropy, latency, mi, regret_step, regret_cum;
};

RunData load_run(const fs::path& dir) {
  RunData run;
  run.run_id = dir.filename().string();
  {
    std::ifstream in(dir / "summary.json");
    run.summary = json::parse(in);
  }
  std::ifstream in(dir / "steps.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json r = json::parse(line);
    if (r.contains("schema")) continue;
    run.t.push_back(r.at("t").get<double>());
    run.entropy.push_back(r.at("entropy_nats").get<double>());
    run.latency.push_back(r.at("latency_ms_synth").get<double>());
    run.mi.push_back(r.at("mi_window").get<double>());
    run.regret_step.push_back(r.at("regret_step").get<double>());
    run.regret_cum.push_back(r.at("regret_cum").get<double>());
  }
  return run;
}

ordered_json fit_json(const PowerLawFit& f) {
  return ordered_json{{"beta0", f.beta0}, {"beta1", f.beta1}, {"alpha", f.alpha}, {"r_squared", f.r_squared}};
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

bool build_report(const fs::path& dir, std::ostream& log, const ReportOptions& options) {
  std::vector<fs::path> run_dirs;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "summary.json") && fs::exists(entry.path() / "steps.jsonl")) {
        run_dirs.push_back(entry.path());
      }
    }
  }
  if (run_dirs.empty()) {
    log << "notice: no run summaries under " << dir.string() << "; nothing to report\n";
    return false;
  }
  std::sort(run_dirs.begin(), run_dirs.end());
  std::vector<RunData> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));

  ordered_json report;
  report["schema"] = kReportSchema;
  report["runs"] = runs.size();
  ordered_json notices = ordered_json::array();

  // (a) latency-entropy power law, per run and pooled.
  {
    std::ofstream csv(dir / "report_power_law.csv", std::ios::binary | std::ios::trunc);
    csv << "run_id,beta0,beta1,alpha,r_squared\n";
    ordered_json per_run = ordered_json::object();
    std::vector<LatencySample> pooled;
    for (const auto& r : runs) {
      std::vector<LatencySample> samples;
      for (std::size_t i = 0; i < r.entropy.size(); ++i) samples.push_back(LatencySample{r.entropy[i], r.latency[i], 0, LatencySource::Synthetic});
      pooled.insert(pooled.end(), samples.begin(), samples.end());
      try {
        const auto fit = fit_power_law(samples);
        per_run[r.run_id] = fit_json(fit);
        csv << r.run_id << ',' << num(fit.beta0) << ',' << num(fit.beta1) << ',' << num(fit.alpha) << ','
            << num(fit.r_squared) << '\n';
      } catch (const std::exception& e) {
        notices.push_back("power law skipped for " + r.run_id + ": " + e.what());
      }
    }
    report["power_law"] = per_run;
    try {
      report["power_law_pooled"] = fit_json(fit_power_law(pooled));
    } catch (const std::exception& e) {
      notices.push_back(std::string("pooled power law skipped: ") + e.what());
    }
  }

  // (b) windowed MI against windowed regret.
  {
    std::ofstream csv(dir / "plot_mi_regret.csv", std::ios::binary | std::ios::trunc);
    csv << "run_id,window,mi,regret\n";
    std::vector<double> mis, regrets;
    const std::size_t w = std::max<std::size_t>(1, options.regret_window);
    for (const auto& r : runs) {
      for (std::size_t start = 0, k = 0; start + w <= r.mi.size(); start += w, ++k) {
        double mi = 0.0, regret = 0.0;
        for (std::size_t i = start; i < start + w; ++i) {
          mi += r.mi[i];
          regret += r.regret_step[i];
        }
        mi /= static_cast<double>(w);
        mis.push_back(mi);
        regrets.push_back(regret);
        csv << r.run_id << ',' << k << ',' << num(mi) << ',' << num(regret) << '\n';
      }
    }
    const double rho = mis.size() >= 3 ? spearman(mis, regrets) : std::nan("");
    if (std::isnan(rho)) {
      notices.push_back("MI-regret correlation skipped: fewer than 3 windows or no variation");
    } else {
      report["mi_regret"] = ordered_json{{"spearman", rho}, {"windows", mis.size()}, {"window_steps", w}};
    }
  }

  // (c) cross-factor regression over runs that carry context.
  {
    std::vector<FactorRecord> records;
    for (const auto& r : runs) {
      if (r.summary.value("baseline", "") == "none" || !r.summary.contains("factors")) continue;
      const auto& f = r.summary["factors"];
      records.push_back(FactorRecord{r.summary.value("mean_reward", 0.0), f.value("cap", 0.0), f.value("tok", 0.0),
                                     f.value("upd", 0.0)});
    }
    try {
      Rng rng(0);
      const auto fit = cross_factor_fit(records, 1000, rng);
      report["cross_factor"] = ordered_json{{"beta0", fit.beta(0)},  {"beta_cap", fit.beta(1)},
                                            {"beta_tok", fit.beta(2)}, {"beta_upd", fit.beta(3)},
                                            {"beta_cap_tok", fit.beta(4)}, {"p_value", fit.p_value},
                                            {"records", records.size()}};
    } catch (const std::exception& e) {
      notices.push_back(std::string("cross-factor regression skipped: ") + e.what());
    }
  }

  // (d) plot-ready series.
  {
    const std::size_t stride = std::max<std::size_t>(1, options.plot_stride);
    std::ofstream regret(dir / "plot_regret.csv", std::ios::binary | std::ios::trunc);
    std::ofstream latency(dir / "plot_latency_entropy.csv", std::ios::binary | std::ios::trunc);
    regret << "run_id,t,regret_cum\n";
    latency << "run_id,entropy_nats,latency_ms\n";
    for (const auto& r : runs) {
      for (std::size_t i = 0; i < r.t.size(); i += stride) {
        regret << r.run_id << ',' << num(r.t[i]) << ',' << num(r.regret_cum[i]) << '\n';
        latency << r.run_id << ',' << num(r.entropy[i]) << ',' << num(r.latency[i]) << '\n';
      }
    }
    std::ofstream runs_csv(dir / "report_runs.csv", std::ios::binary | std::ios::trunc);
    runs_csv << "run_id,baseline,seed,mean_reward,cumulative_regret,success_rate,mean_tokens,mean_latency_ms,stability,exact_mi\n";
    for (const auto& r : runs) {
      const auto& s = r.summary;
      auto field = [&](const char* k) { return s.contains(k) && s[k].is_number() ? num(s[k].get<double>()) : std::string(); };
      runs_csv << r.run_id << ',' << s.value("baseline", "") << ',' << s.value("seed", 0) << ',' << field("mean_reward")
               << ',' << field("cumulative_regret") << ',' << field("success_rate") << ',' << field("mean_tokens") << ','
               << field("mean_latency_ms") << ',' << field("stability") << ',' << field("exact_mi") << '\n';
    }
  }

  report["notices"] = notices;
  for (const auto& n : notices) log << "notice: " << n.get<std::string>() << '\n';
  std::ofstream out(dir / "report.json", std::ios::binary | std::ios::trunc);
  out << report.dump(2) << '\n';
  return true;
}

json fit_latency_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  const auto header = split_list(line);
  auto column = [&](std::initializer_list<const char*> names) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      for (const char* n : names) {
        if (header[i] == n) return i;
      }
    }
    throw ConfigError(path.string() + ":1: header needs entropy_nats and latency_ms columns");
  };
  const std::size_t he = column({"entropy_nats", "entropy"});
  const std::size_t hl = column({"latency_ms", "latency"});
  std::vector<LatencySample> samples;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_list(line);
    try {
      samples.push_back(LatencySample{std::stod(cells.at(he)), std::stod(cells.at(hl)), 0, LatencySource::Measured});
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected numeric entropy and latency");
    }
  }
  const auto fit = fit_power_law(samples);
  return json{{"beta0", fit.beta0}, {"beta1", fit.beta1}, {"alpha", fit.alpha}, {"r_squared", fit.r_squared},
              {"samples", samples.size()}};
}

json estimate_mi_file(const fs::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<std::vector<std::uint64_t>> rows;
  const auto first = text.find_first_not_of(" \t\r\n");
  try {
    if (first != std::string::npos && text[first] == '[') {
      rows = json::parse(text).get<std::vector<std::vector<std::uint64_t>>>();
    } else {
      std::stringstream lines(text);
      std::string line;
      while (std::getline(lines, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<std::uint64_t> row;
        for (const auto& cell : split_list(line)) {
          std::size_t used = 0;
          const long long v = std::stoll(cell, &used);
          if (used != cell.size() || v < 0) throw std::invalid_argument("'" + cell + "' is not a non-negative integer");
          row.push_back(static_cast<std::uint64_t>(v));
        }
        rows.push_back(std::move(row));
      }
    }
  } catch (const std::exception& e) {
    throw ConfigError(path.string() + ": counts must be a JSON matrix or CSV of non-negative integers (" + e.what() + ")");
  }
  JointCounts counts = [&] {
    try {
      return JointCounts::from_rows(rows);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }();
  if (counts.total() == 0) throw ConfigError(path.string() + ": total count must be > 0");
  const MiEstimation budget = standard_mi_budget();
  DiscreteJointSampler sampler(counts);
  Rng rng(seed);
  json out{{"rows", counts.rows()}, {"cols", counts.cols()}, {"total", counts.total()}, {"exact_mi", exact_mi(counts)}};
  for (const auto& [bound, name] : {std::pair{MiBound::Mine, "mine"}, std::pair{MiBound::InfoNce, "infonce"}}) {
    const auto trained = train_critic(bound, sampler, CriticParameters::bilinear(counts.rows(), counts.cols()),
                                      budget.steps, budget.learning_rate, budget.batch_size, rng);
    out[name] = evaluate_bound(bound, sampler, trained.params, budget.eval_batch, budget.eval_batches, rng);
  }
  out["infonce_ceiling"] = std::log(static_cast<double>(budget.eval_batch));
  return out;
}

}  // namespace ctxmdp

namespace ctxmdp {

MiEstimation standard_mi_budget() {
  MiEstimation m;
  m.steps = 500;
  m.learning_rate = 2.0;
  m.batch_size = 256;
  m.eval_batch = 512;
  m.eval_batches = 4;
  return m;
}

}  // namespace ctxmdp
