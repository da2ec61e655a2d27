// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "ctxmdp/experiment.hpp"
#include "ctxmdp/infotheory.hpp"
#include "ctxmdp/metrics.hpp"
#include "ctxmdp/numeric.hpp"
#include "ctxmdp/objective.hpp"

using namespace ctxmdp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

fs::path source_path(const std::string& rel) { return fs::path(CTXMDP_SOURCE_DIR) / rel; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<json> read_steps(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    auto j = json::parse(line);
    if (!j.contains("schema")) out.push_back(std::move(j));
  }
  return out;
}

const RunResult& find_run(const std::vector<RunResult>& runs, Baseline b, std::uint64_t seed) {
  for (const auto& r : runs) {
    if (r.baseline == b && r.seed == seed) return r;
  }
  throw std::runtime_error("missing run");
}

double field(const RunResult& r, const char* key) { return r.summary.at(key).get<double>(); }

// Least-squares slope of ln(mean cumulative regret) on ln t after a 10% burn-in.
double mean_curve_slope(const std::vector<std::vector<double>>& curves) {
  const std::size_t n = curves.front().size();
  std::vector<double> mean(n, 0.0);
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += c[i] / static_cast<double>(curves.size());
  }
  return sqrt_scaling_slope(mean, n / 10);
}

std::vector<double> regret_curve(const fs::path& steps) {
  std::vector<double> out;
  for (const auto& s : read_steps(steps)) out.push_back(s.at("regret_cum").get<double>());
  return out;
}

struct Context {
  fs::path out;
  std::vector<RunResult> bandit;
  std::vector<RunResult> grid;
  ExperimentConfig bandit_config;
  ExperimentConfig grid_config;
  std::vector<fs::path> summarized_dirs;
};

Outcome baseline_ordering(Context& ctx) {
  int ordered = 0;
  double summ = 0.0, none = 0.0;
  std::ostringstream d;
  for (auto seed : ctx.bandit_config.seeds) {
    const double s = field(find_run(ctx.bandit, Baseline::Summarized, seed), "cumulative_regret");
    const double r = field(find_run(ctx.bandit, Baseline::Raw, seed), "cumulative_regret");
    const double n = field(find_run(ctx.bandit, Baseline::None, seed), "cumulative_regret");
    if (s < r && r < n) ++ordered;
    summ += s;
    none += n;
    d << " s" << seed << "=" << fmt(s, 0) << "/" << fmt(r, 0) << "/" << fmt(n, 0);
  }
  const double ratio = summ / none;
  return {ordered >= 4 && ratio <= 0.5,
          "ordered " + std::to_string(ordered) + "/5, summarized/none " + fmt(ratio, 3) + ";" + d.str()};
}

Outcome success_ordering(Context& ctx) {
  int ordered = 0;
  std::ostringstream d;
  for (auto seed : ctx.grid_config.seeds) {
    const double s = field(find_run(ctx.grid, Baseline::Summarized, seed), "success_rate");
    const double r = field(find_run(ctx.grid, Baseline::Raw, seed), "success_rate");
    const double n = field(find_run(ctx.grid, Baseline::None, seed), "success_rate");
    if (s >= r && r >= n) ++ordered;
    d << " s" << seed << "=" << fmt(s, 3) << "/" << fmt(r, 3) << "/" << fmt(n, 3);
  }
  return {ordered >= 4, "ordered " + std::to_string(ordered) + "/5;" + d.str()};
}

Outcome mi_regret(Context& ctx) {
  auto config = load_config(source_path("configs/bandit_tokens.json"));
  const fs::path dir = ctx.out / "token_sweep";
  fs::remove_all(dir);
  const auto rows = run_sweep(config, SweepAxis::Tokens, {"1", "2", "4", "8"}, dir, 1);
  for (const auto& r : rows) ctx.summarized_dirs.push_back(dir / r.summary.at("run_id").get<std::string>());
  std::ostringstream log;
  if (!build_report(dir, log)) return {false, "report produced nothing"};
  const auto report = read_json(dir / "report.json");
  if (!report.contains("mi_regret")) return {false, "no MI-regret section"};
  const double rho = report["mi_regret"]["spearman"].get<double>();
  return {rho < -0.5, "spearman " + fmt(rho, 3) + " over " + std::to_string(report["mi_regret"]["windows"].get<int>()) +
                          " windows"};
}

std::vector<JointCounts> joint_suite() {
  std::vector<JointCounts> suite;
  Rng rng(20240);
  auto make = [](std::size_t r, std::size_t c, auto cell) {
    JointCounts j(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t k = 0; k < c; ++k) j.add(i, k, cell(i, k));
    }
    return j;
  };
  for (std::size_t n : {2, 4, 8}) {
    suite.push_back(make(n, n, [](std::size_t, std::size_t) { return 10; }));                 // independent
    suite.push_back(make(n, n, [](std::size_t i, std::size_t k) { return i == k ? 10 : 0; }));  // bijection
    suite.push_back(make(n, n, [](std::size_t i, std::size_t k) { return i == k ? 30 : 2; }));  // noisy diagonal
  }
  for (std::size_t n : {3, 5, 6}) {
    suite.push_back(make(n, n, [n](std::size_t i, std::size_t k) { return (i + 1) % n == k ? 12 : 1; }));
  }
  suite.push_back(make(2, 8, [](std::size_t i, std::size_t k) { return k % 2 == i ? 5 : 0; }));
  suite.push_back(make(8, 2, [](std::size_t i, std::size_t k) { return i < 4 ? (k == 0 ? 9 : 1) : (k == 0 ? 1 : 9); }));
  suite.push_back(make(4, 8, [](std::size_t i, std::size_t k) { return k / 2 == i ? 7 : 1; }));
  std::uniform_int_distribution<int> cell(0, 20);
  while (suite.size() < 20) {
    const std::size_t r = 2 + suite.size() % 7;
    const std::size_t c = 2 + (suite.size() * 3) % 7;
    suite.push_back(make(r, c, [&](std::size_t, std::size_t) { return cell(rng); }));
  }
  return suite;
}

Outcome mi_soundness(Context&) {
  const auto budget = standard_mi_budget();
  const double ceiling = std::log(static_cast<double>(budget.eval_batch));
  double worst = 0.0;
  int within = 0;
  bool capped = true;
  std::ostringstream d;
  const auto suite = joint_suite();
  for (std::size_t i = 0; i < suite.size(); ++i) {
    DiscreteJointSampler sampler(suite[i]);
    Rng rng(derive_seed(7, i));
    const double exact = exact_mi(suite[i]);
    bool ok = true;
    for (MiBound bound : {MiBound::Mine, MiBound::InfoNce}) {
      const auto trained = train_critic(bound, sampler, CriticParameters::bilinear(suite[i].rows(), suite[i].cols()),
                                        budget.steps, budget.learning_rate, budget.batch_size, rng);
      const double est = evaluate_bound(bound, sampler, trained.params, budget.eval_batch, budget.eval_batches, rng);
      const double err = est - exact;
      if (err < -0.15 || err > 0.05) {
        ok = false;
        d << " #" << i << (bound == MiBound::Mine ? " mine " : " infonce ") << fmt(est, 3) << " vs " << fmt(exact, 3);
      }
      if (bound == MiBound::InfoNce && est > ceiling) capped = false;
      worst = std::max(worst, std::abs(err));
    }
    within += ok;
  }
  return {within == 20 && capped, std::to_string(within) + "/20 joints within [-0.15, +0.05], worst |err| " +
                                      fmt(worst, 3) + (capped ? "" : ", InfoNCE above ln B") + d.str()};
}

Outcome gradient_check(Context&) {
  Rng rng(99);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> dims(1, 4);
  double worst = 0.0;
  const double h = 1e-5;
  for (int form = 0; form < 2; ++form) {
    for (MiBound bound : {MiBound::Mine, MiBound::InfoNce}) {
      for (int draw = 0; draw < 100; ++draw) {
        const std::size_t ds = dims(rng), dc = dims(rng);
        CriticParameters p = form == 0 ? CriticParameters::bilinear(ds, dc) : CriticParameters::mlp(ds, dc, 5, rng);
        Eigen::VectorXd flat = p.flatten();
        for (Eigen::Index k = 0; k < flat.size(); ++k) flat(k) = 0.5 * g(rng);
        p = p.unflatten(flat);
        SampleBatch batch;
        auto pair = [&](bool joint) {
          SamplePair sp{Eigen::VectorXd(ds), Eigen::VectorXd(dc), joint};
          for (std::size_t k = 0; k < ds; ++k) sp.s_embed(static_cast<Eigen::Index>(k)) = g(rng);
          for (std::size_t k = 0; k < dc; ++k) sp.c_embed(static_cast<Eigen::Index>(k)) = g(rng);
          return sp;
        };
        for (int k = 0; k < 6; ++k) {
          batch.joint.push_back(pair(true));
          batch.marginal.push_back(pair(false));
        }
        const Eigen::VectorXd analytic = critic_gradient(bound, batch, p).flatten();
        Eigen::VectorXd numeric(flat.size());
        for (Eigen::Index k = 0; k < flat.size(); ++k) {
          Eigen::VectorXd up = flat, down = flat;
          up(k) += h;
          down(k) -= h;
          numeric(k) = (bound_estimate(bound, batch, p.unflatten(up)) - bound_estimate(bound, batch, p.unflatten(down))) /
                       (2.0 * h);
        }
        const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-12});
        worst = std::max(worst, (analytic - numeric).cwiseAbs().maxCoeff() / scale);
      }
    }
  }
  return {worst <= 1e-4, "max relative error " + [&] {
            std::ostringstream os;
            os << worst;
            return os.str();
          }() + " over 400 draws"};
}

Outcome power_law(Context&) {
  std::vector<double> entropies;
  for (int i = 0; i < 60; ++i) entropies.push_back(0.2 + 5.8 * i / 59.0);
  const AlphaGrid grid;
  double worst_alpha = 0.0, worst_r2 = 1.0, worst_noisy_r2 = 1.0;
  Rng rng(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double b0 : {1.0, 2.0, 4.0}) {
    for (double b1 : {1.0, 3.0, 8.0}) {
      for (double alpha : {0.8, 1.2, 1.6}) {
        std::vector<LatencySample> exact, noisy;
        for (double h : entropies) {
          const double y = b0 + b1 * std::pow(h, alpha);
          exact.push_back(LatencySample{h, y, 0, LatencySource::Synthetic});
          noisy.push_back(LatencySample{h, y * (1.0 + 0.05 * noise(rng)), 0, LatencySource::Synthetic});
        }
        const auto f = fit_power_law(exact, grid);
        worst_alpha = std::max(worst_alpha, std::abs(f.alpha - alpha));
        worst_r2 = std::min(worst_r2, f.r_squared);
        worst_noisy_r2 = std::min(worst_noisy_r2, fit_power_law(noisy, grid).r_squared);
      }
    }
  }
  const bool pass = worst_alpha <= grid.spacing() + 1e-12 && worst_r2 >= 1.0 - 1e-6 && worst_noisy_r2 >= 0.8;
  return {pass, "worst alpha error " + fmt(worst_alpha, 4) + " (step " + fmt(grid.spacing(), 4) + "), worst R2 " +
                    fmt(worst_r2, 9) + ", worst noisy R2 " + fmt(worst_noisy_r2, 3)};
}

Outcome sqrt_scaling(Context& ctx) {
  std::vector<std::vector<double>> curves;
  std::ostringstream d;
  for (auto seed : ctx.bandit_config.seeds) {
    const auto& r = find_run(ctx.bandit, Baseline::Summarized, seed);
    curves.push_back(regret_curve(ctx.out / "bandit" / r.run_id / "steps.jsonl"));
    d << " " << fmt(field(r, "regret_slope"), 3);
  }
  const double summarized = mean_curve_slope(curves);

  auto config = ctx.bandit_config;
  config.run_id = "uniform";
  config.agent.policy = "uniform";
  config.baselines = {Baseline::Summarized};
  const fs::path dir = ctx.out / "uniform";
  fs::remove_all(dir);
  const auto runs = run_experiment(config, dir, 1);
  std::vector<std::vector<double>> uniform_curves;
  for (const auto& r : runs) {
    ctx.summarized_dirs.push_back(dir / r.run_id);
    uniform_curves.push_back(regret_curve(dir / r.run_id / "steps.jsonl"));
  }
  const double uniform = mean_curve_slope(uniform_curves);
  return {summarized >= 0.40 && summarized <= 0.65 && uniform >= 0.95 && uniform <= 1.05,
          "summarized " + fmt(summarized, 3) + " (per seed" + d.str() + "), uniform " + fmt(uniform, 3)};
}

Outcome budget_schedule(Context& ctx) {
  std::size_t violations = 0, lines = 0;
  for (const auto& dir : ctx.summarized_dirs) {
    const auto summary = read_json(dir / "summary.json");
    const auto cap = summary.at("token_cap").get<std::int64_t>();
    for (const auto& s : read_steps(dir / "steps.jsonl")) {
      ++lines;
      if (s.at("tokens").get<std::int64_t>() > cap || static_cast<std::int64_t>(s.at("summary").size()) > cap) {
        ++violations;
      }
    }
  }
  std::ostringstream d;
  bool conforms = true;
  for (const char* mode : {"per_step", "sliding_window:16", "periodic:8"}) {
    auto config = ctx.bandit_config;
    config.run_id = std::string("schedule-") + mode;
    std::replace(config.run_id.begin(), config.run_id.end(), ':', '-');
    config.budget.update_mode = parse_update_mode(mode);
    config.baselines = {Baseline::Summarized};
    config.seeds = {0};
    config.agent.episodes = 2000;
    const fs::path dir = ctx.out / "schedules";
    const auto runs = run_experiment(config, dir, 1);
    std::vector<std::uint64_t> refreshed;
    std::uint64_t steps = 0;
    for (const auto& s : read_steps(dir / runs[0].run_id / "steps.jsonl")) {
      if (s.at("refresh_flag").get<bool>()) refreshed.push_back(s.at("t").get<std::uint64_t>());
      ++steps;
      if (s.at("tokens").get<std::int64_t>() > config.budget.token_cap) ++violations;
    }
    const bool same = refreshed == predicted_refresh_steps(config.budget.update_mode, steps);
    conforms = conforms && same;
    d << " " << mode << (same ? " exact" : " MISMATCH") << " (" << refreshed.size() << " refreshes)";
  }
  return {violations == 0 && conforms,
          std::to_string(violations) + " cap violations over " + std::to_string(lines) + " summarized lines;" + d.str()};
}

Outcome stability(Context& ctx) {
  auto mean_stability = [](const std::vector<RunResult>& runs, Baseline b) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : runs) {
      if (r.baseline == b) {
        sum += field(r, "stability");
        ++n;
      }
    }
    return sum / n;
  };
  const double bs = mean_stability(ctx.bandit, Baseline::Summarized), br = mean_stability(ctx.bandit, Baseline::Raw);
  const double gs = mean_stability(ctx.grid, Baseline::Summarized), gr = mean_stability(ctx.grid, Baseline::Raw);
  return {bs < br && gs < gr, "bandit " + fmt(bs, 4) + " < " + fmt(br, 4) + ", gridworld " + fmt(gs, 4) + " < " + fmt(gr, 4)};
}

Outcome sufficiency(Context& ctx) {
  // Relevance summary keeps the true context token: zero gap in every mode.
  auto env = make_environment(ctx.bandit_config.env);
  RelevanceExtract rel;
  for (std::uint32_t m = 0; m < env->num_context_modes(); ++m) rel.scores[m] = 1.0;
  double worst = 0.0;
  const double tau = 0.1;
  BudgetSpec budget;
  budget.token_cap = 1;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto obs = env->reset(seed);
    const auto summary = summarize(rel, HistoryBuffer{}, obs.raw_context, budget, MetaAction::Refresh);
    const std::vector<double> w{1.0};
    const double eps = sufficiency_epsilon(
        optimal_softmax_policy(*env, mode_indicator(*env, env->context_mode()), tau),
        optimal_softmax_policy(*env, mode_posterior(*env, summary), tau), w);
    worst = std::max(worst, std::abs(eps));
  }

  // Empty summary, two modes with swapped best arms.
  BanditConfig two;
  two.num_contexts = 2;
  two.num_arms = 2;
  two.mean_matrix = {{0.9, 0.3}, {0.2, 0.7}};
  ContextualBandit bandit(two);
  const auto blind = optimal_softmax_policy(bandit, mode_posterior(bandit, ContextSummary{}), tau);
  const std::vector<double> w{1.0};
  double gap = 0.0;
  double hand = 0.0;
  // Posterior-averaged values are (0.55, 0.50).
  const double q0 = 0.55 / tau, q1 = 0.50 / tau;
  const double b0 = 1.0 / (1.0 + std::exp(q1 - q0)), b1 = 1.0 - b0;
  for (std::size_t m = 0; m < 2; ++m) {
    gap += 0.5 * sufficiency_epsilon(optimal_softmax_policy(bandit, mode_indicator(bandit, m), tau), blind, w);
    const double a = two.mean_matrix[m][0] / tau, b = two.mean_matrix[m][1] / tau;
    const double p0 = 1.0 / (1.0 + std::exp(b - a)), p1 = 1.0 - p0;
    hand += 0.5 * (p0 * std::log(p0 / b0) + p1 * std::log(p1 / b1));
  }
  return {worst <= 1e-10 && std::abs(gap - hand) <= 1e-9,
          "retained-token gap " + fmt(worst, 12) + ", empty-summary gap " + fmt(gap, 9) + " vs hand " + fmt(hand, 9)};
}

std::vector<FactorRecord> planted_records(double b12, double noise_sd, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<FactorRecord> out;
  for (double cap : {1.0, 2.0, 4.0, 8.0}) {
    for (double tok : {16.0, 32.0, 64.0, 128.0}) {
      for (double upd : {1.0, 8.0, 16.0}) {
        const double perf = 0.2 + 0.03 * cap + 0.002 * tok - 0.01 * upd + b12 * cap * tok + noise_sd * noise(rng);
        out.push_back(FactorRecord{perf, cap, tok, upd});
      }
    }
  }
  return out;
}

Outcome cross_factor(Context&) {
  const double b12 = 4e-4;
  Rng rng(11);
  const auto exact = cross_factor_fit(planted_records(b12, 0.0, rng), 199, rng);
  const double rel = std::abs(exact.beta(4) - b12) / b12;
  int significant = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng r(derive_seed(31, seed));
    if (cross_factor_fit(planted_records(b12, 0.05, r), 999, r).p_value <= 0.05) ++significant;
  }
  std::vector<double> p;
  for (std::uint64_t draw = 0; draw < 200; ++draw) {
    Rng r(derive_seed(77, draw));
    p.push_back(cross_factor_fit(planted_records(0.0, 0.05, r), 199, r).p_value);
  }
  std::sort(p.begin(), p.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double n = static_cast<double>(p.size());
    ks = std::max({ks, std::abs((i + 1) / n - p[i]), std::abs(p[i] - i / n)});
  }
  return {rel <= 0.05 && significant >= 4 && ks <= 0.15, "noiseless rel error " + fmt(rel, 9) + ", significant " +
                                                             std::to_string(significant) + "/5, null KS " + fmt(ks, 3)};
}

Outcome determinism(Context& ctx) {
  auto config = ctx.bandit_config;
  config.run_id = "repeat";
  config.seeds = {3};
  config.agent.episodes = 3000;
  std::vector<std::string> files;
  bool same = true;
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = ctx.out / ("repeat" + std::to_string(k));
    fs::remove_all(dir);
    run_experiment(config, dir, 2);
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(ctx.out / "repeat0")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), ctx.out / "repeat0");
    same = same && read_bytes(entry.path()) == read_bytes(ctx.out / "repeat1" / rel);
    ++compared;
  }
  return {same && compared > 0, std::to_string(compared) + " files compared, " + (same ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");
  fs::create_directories(ctx.out);
  const auto started = std::chrono::steady_clock::now();
  try {
    ctx.bandit_config = load_config(source_path("configs/bandit.json"));
    ctx.grid_config = load_config(source_path("configs/gridworld.json"));
    fs::remove_all(ctx.out / "bandit");
    fs::remove_all(ctx.out / "gridworld");
    ctx.bandit = run_experiment(ctx.bandit_config, ctx.out / "bandit", 2);
    ctx.grid = run_experiment(ctx.grid_config, ctx.out / "gridworld", 2);
    for (const auto* runs : {&ctx.bandit, &ctx.grid}) {
      for (const auto& r : *runs) {
        if (r.failed) throw std::runtime_error("run " + r.run_id + " failed: " + r.error);
      }
    }
    for (const auto& r : ctx.bandit) {
      if (r.baseline == Baseline::Summarized) ctx.summarized_dirs.push_back(ctx.out / "bandit" / r.run_id);
    }
    for (const auto& r : ctx.grid) {
      if (r.baseline == Baseline::Summarized) ctx.summarized_dirs.push_back(ctx.out / "gridworld" / r.run_id);
    }
  } catch (const std::exception& e) {
    std::cout << "FAIL setup: " << e.what() << '\n';
    return 1;
  }

  const std::vector<std::pair<const char*, Outcome (*)(Context&)>> criteria{
      {"1 baseline regret ordering (bandit)", baseline_ordering},
      {"2 success ordering (gridworld)", success_ordering},
      {"3 MI-regret correlation (token sweep)", mi_regret},
      {"4 MI estimator soundness (20 joints)", mi_soundness},
      {"5 critic gradient correctness", gradient_check},
      {"6 power-law recovery", power_law},
      {"7 sqrt(T) regret scaling", sqrt_scaling},
      {"8 budget and schedule invariants", budget_schedule},
      {"9 stability ordering", stability},
      {"10 sufficiency exactness", sufficiency},
      {"11 cross-factor regression", cross_factor},
      {"12 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed in " << fmt(secs, 1) << " s\n";
  return failed == 0 ? 0 : 1;
}
