#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ctxmdp/experiment.hpp"
#include "ctxmdp/external.hpp"

namespace ctxmdp {

using nlohmann::json;

namespace {

// Maps a JSON path back to an approximate source line by scanning for its keys.
class Locator {
 public:
  Locator(const std::string& text, std::string origin) : text_(text), origin_(std::move(origin)) {}

  std::string where(const std::vector<std::string>& keys) const {
    std::size_t pos = 0;
    for (const auto& k : keys) {
      if (!k.empty() && std::all_of(k.begin(), k.end(), ::isdigit)) continue;
      const auto found = text_.find("\"" + k + "\"", pos);
      if (found == std::string::npos) break;
      pos = found;
    }
    const auto line = 1 + std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
    return origin_ + ":" + std::to_string(line);
  }

 private:
  const std::string& text_;
  std::string origin_;
};

std::string pointer(const std::vector<std::string>& keys) {
  std::string out;
  for (const auto& k : keys) out += "/" + k;
  return out.empty() ? "/" : out;
}

class Reader {
 public:
  Reader(const json& node, std::vector<std::string> path, const Locator& loc)
      : node_(node), path_(std::move(path)), loc_(loc) {
    if (!node_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& what, const std::string& key = {}) const {
    auto p = path_;
    if (!key.empty()) p.push_back(key);
    throw ConfigError(loc_.where(p) + ": " + pointer(p) + ": " + what);
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) fail("missing required field", key);
    return convert<T>(key);
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    auto p = path_;
    p.push_back(key);
    return Reader(node_.at(key), p, loc_);
  }

  Reader element(const std::string& key, std::size_t i) {
    seen_.insert(key);
    auto p = path_;
    p.push_back(key);
    p.push_back(std::to_string(i));
    return Reader(node_.at(key).at(i), p, loc_);
  }

  std::vector<std::string> path(const std::string& key) const {
    auto p = path_;
    p.push_back(key);
    return p;
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) fail("unknown key", it.key());
    }
  }

  template <class Fn>
  void check(const std::string& key, Fn&& fn) const {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      fail(e.what(), key);
    }
  }

 private:
  template <class T>
  T convert(const std::string& key) {
    seen_.insert(key);
    const json& v = node_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail("expected a boolean", key);
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail("expected a string", key);
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) fail("expected a non-negative integer", key);
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) fail("expected an integer", key);
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) fail("expected a number", key);
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      fail(std::string("bad value: ") + e.what(), key);
    }
  }

  const json& node_;
  std::vector<std::string> path_;
  const Locator& loc_;
  std::set<std::string> seen_;
};

std::vector<double> number_list(Reader& r, const std::string& key) {
  const json& v = r.raw(key);
  if (!v.is_array()) r.fail("expected an array of numbers", key);
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) r.fail("expected an array of numbers", key);
    out.push_back(x.get<double>());
  }
  return out;
}

Cell parse_cell(Reader& r, const std::string& key, const json& v) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
    r.fail("expected a cell [x, y]", key);
  }
  return Cell{v[0].get<int>(), v[1].get<int>()};
}

EnvConfig parse_env(Reader r) {
  const auto type = r.require<std::string>("type");
  if (type == "bandit") {
    BanditConfig c;
    const json& m = r.raw("mean_matrix");
    if (!m.is_array() || m.empty()) r.fail("expected a non-empty matrix", "mean_matrix");
    for (const auto& row : m) {
      if (!row.is_array()) r.fail("expected a matrix (array of rows)", "mean_matrix");
      std::vector<double> values;
      for (const auto& x : row) {
        if (!x.is_number()) r.fail("matrix entries must be numbers", "mean_matrix");
        values.push_back(x.get<double>());
      }
      c.mean_matrix.push_back(std::move(values));
    }
    c.num_contexts = r.get<std::size_t>("num_contexts", c.mean_matrix.size());
    c.num_arms = r.get<std::size_t>("num_arms", c.mean_matrix[0].size());
    c.distractor_count = r.get<std::size_t>("distractor_count", 0);
    c.noise_vocab = r.get<std::size_t>("noise_vocab", c.noise_vocab);
    if (r.has("context_distribution")) c.context_distribution = number_list(r, "context_distribution");
    r.finish();
    r.check("mean_matrix", [&] { c.validate(); });
    return c;
  }
  if (type == "gridworld") {
    GridworldConfig c;
    c.width = r.get<int>("width", c.width);
    c.height = r.get<int>("height", c.height);
    if (r.has("start")) c.start = parse_cell(r, "start", r.raw("start"));
    if (r.has("goal")) c.goal = parse_cell(r, "goal", r.raw("goal"));
    if (r.has("holes")) {
      const json& h = r.raw("holes");
      if (!h.is_array()) r.fail("expected an array of cells", "holes");
      for (const auto& cell : h) c.holes.push_back(parse_cell(r, "holes", cell));
    }
    const json& modes = r.raw("context_modes");
    if (!modes.is_array() || modes.empty()) r.fail("expected a non-empty array", "context_modes");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      Reader mr = r.element("context_modes", i);
      ContextModeSpec spec;
      spec.name = mr.get<std::string>("name", "mode" + std::to_string(i));
      spec.slip = mr.get<double>("slip", 0.0);
      mr.finish();
      c.context_modes.push_back(spec);
    }
    if (r.has("context_prior")) c.context_prior = number_list(r, "context_prior");
    c.horizon = r.get<int>("horizon", c.horizon);
    c.distractor_count = r.get<std::size_t>("distractor_count", 0);
    c.discount = r.get<double>("discount", c.discount);
    c.noise_vocab = r.get<std::size_t>("noise_vocab", c.noise_vocab);
    c.drift_probability = r.get<double>("drift_probability", 0.0);
    r.finish();
    r.check("type", [&] { c.validate(); });
    return c;
  }
  r.fail("unknown environment type '" + type + "' (expected bandit or gridworld)", "type");
}

SummarizerSpec parse_summarizer(Reader r, const EnvConfig& env) {
  const auto type = r.require<std::string>("type");
  SummarizerSpec spec;
  if (type == "truncate") {
    spec = Truncate{};
  } else if (type == "top_frequency") {
    spec = TopFrequency{};
  } else if (type == "relevance") {
    RelevanceExtract rel;
    if (r.has("scores")) {
      const json& scores = r.raw("scores");
      if (!scores.is_object()) r.fail("expected an object mapping token symbols to scores", "scores");
      for (auto it = scores.begin(); it != scores.end(); ++it) {
        std::uint32_t symbol = 0;
        try {
          std::size_t used = 0;
          symbol = static_cast<std::uint32_t>(std::stoul(it.key(), &used));
          if (used != it.key().size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
          r.fail("score keys must be token symbols (non-negative integers), got '" + it.key() + "'", "scores");
        }
        if (!it.value().is_number() || !std::isfinite(it.value().get<double>())) {
          r.fail("scores must be finite numbers", "scores");
        }
        rel.scores[symbol] = it.value().get<double>();
      }
    }
    // Shortcut: give every context-mode token the same score.
    if (r.has("context_score")) {
      const double score = r.get<double>("context_score", 1.0);
      const std::size_t modes = std::visit(
          [](const auto& c) -> std::size_t {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, BanditConfig>) return c.num_contexts;
            else return c.context_modes.size();
          },
          env);
      for (std::uint32_t m = 0; m < modes; ++m) rel.scores.try_emplace(m, score);
    }
    spec = std::move(rel);
  } else if (type == "external") {
    External ext;
    ext.endpoint = r.get<std::string>("endpoint", "");
    ext.timeout_ms = r.get<int>("timeout_ms", ext.timeout_ms);
    if (ext.timeout_ms <= 0) r.fail("must be > 0", "timeout_ms");
    spec = std::move(ext);
  } else {
    r.fail("unknown summarizer '" + type + "' (expected truncate, top_frequency, relevance, external)", "type");
  }
  r.finish();
  return spec;
}

BudgetSpec parse_budget(Reader r) {
  BudgetSpec b;
  b.token_cap = r.get<std::int64_t>("token_cap", b.token_cap);
  b.latency_cap_ms = r.get<double>("latency_cap_ms", b.latency_cap_ms);
  b.lambda = r.get<double>("lambda", b.lambda);
  b.mu = r.get<double>("mu", b.mu);
  b.nu = r.get<double>("nu", b.nu);
  if (r.has("update_mode")) {
    const auto text = r.get<std::string>("update_mode", "per_step");
    r.check("update_mode", [&] { b.update_mode = parse_update_mode(text); });
  }
  r.finish();
  r.check("token_cap", [&] { b.validate(); });
  return b;
}

Exploration parse_exploration(Reader r) {
  Exploration e;
  const auto schedule = r.get<std::string>("schedule", "constant");
  if (schedule == "constant") e.schedule = Exploration::Schedule::Constant;
  else if (schedule == "inverse_sqrt") e.schedule = Exploration::Schedule::InverseSqrt;
  else r.fail("unknown schedule '" + schedule + "' (expected constant or inverse_sqrt)", "schedule");
  e.epsilon = r.get<double>("epsilon", e.epsilon);
  e.scale = r.get<double>("scale", e.scale);
  r.finish();
  r.check("epsilon", [&] { e.validate(); });
  return e;
}

AgentSpec parse_agent(Reader r) {
  AgentSpec a;
  a.policy = r.get<std::string>("policy", a.policy);
  static const std::set<std::string> known{"linear_q", "tabular_q", "softmax", "uniform"};
  if (!known.count(a.policy)) r.fail("unknown policy '" + a.policy + "' (expected linear_q, tabular_q, softmax, uniform)", "policy");
  a.step.learning_rate = r.get<double>("learning_rate", a.step.learning_rate);
  a.step.decay_visits = r.get<double>("lr_decay_visits", a.step.decay_visits);
  r.check("learning_rate", [&] { a.step.validate(); });
  if (r.has("exploration")) a.exploration = parse_exploration(r.child("exploration"));
  if (r.has("discount")) {
    a.discount = r.get<double>("discount", 0.0);
    if (!(*a.discount >= 0.0 && *a.discount < 1.0)) r.fail("must lie in [0, 1)", "discount");
  }
  a.initial_value = r.get<double>("initial_value", a.initial_value);
  if (!std::isfinite(a.initial_value)) r.fail("must be finite", "initial_value");
  a.temperature = r.get<double>("temperature", a.temperature);
  if (!(a.temperature > 0.0)) r.fail("must be > 0", "temperature");
  a.probe_temperature = r.get<double>("probe_temperature", a.probe_temperature);
  if (!(a.probe_temperature > 0.0)) r.fail("must be > 0", "probe_temperature");
  a.episodes = r.get<std::uint64_t>("episodes", a.episodes);
  if (a.episodes == 0) r.fail("must be >= 1", "episodes");
  r.finish();
  return a;
}

MetaPolicy parse_meta(Reader r, double latency_default) {
  MetaPolicy m;
  m.thresholds.latency_high = latency_default;
  const auto mode = r.get<std::string>("mode", "heuristic");
  if (mode == "heuristic") m.mode = MetaPolicy::Mode::Heuristic;
  else if (mode == "epsilon_greedy") m.mode = MetaPolicy::Mode::EpsilonGreedy;
  else r.fail("unknown meta mode '" + mode + "' (expected heuristic or epsilon_greedy)", "mode");
  m.epsilon = r.get<double>("epsilon", m.epsilon);
  m.thresholds.entropy_high = r.get<double>("entropy_high", m.thresholds.entropy_high);
  m.thresholds.latency_high = r.get<double>("latency_high", m.thresholds.latency_high);
  m.thresholds.age_max = r.get<std::int64_t>("age_max", m.thresholds.age_max);
  r.finish();
  r.check("mode", [&] { m.validate(); });
  return m;
}

CostModel parse_cost(Reader r) {
  CostModel c;
  c.c0 = r.get<double>("c0", c.c0);
  c.c1 = r.get<double>("c1", c.c1);
  c.entropy_coeff = r.get<double>("entropy_coeff", c.entropy_coeff);
  c.entropy_exponent = r.get<double>("entropy_exponent", c.entropy_exponent);
  c.summarizer_ms = r.get<double>("summarizer_ms", c.summarizer_ms);
  r.finish();
  r.check("c0", [&] { c.validate(); });
  return c;
}

LossWeights parse_weights(Reader r) {
  LossWeights w;
  w.eta1 = r.get<double>("eta1", w.eta1);
  w.eta2 = r.get<double>("eta2", w.eta2);
  w.eta3 = r.get<double>("eta3", w.eta3);
  w.eta4 = r.get<double>("eta4", w.eta4);
  w.eta5 = r.get<double>("eta5", w.eta5);
  w.warmup_fraction = r.get<double>("warmup_fraction", w.warmup_fraction);
  w.lipschitz_q = r.get<double>("lipschitz_q", w.lipschitz_q);
  w.lipschitz_pi = r.get<double>("lipschitz_pi", w.lipschitz_pi);
  r.finish();
  r.check("eta1", [&] { w.validate(); });
  return w;
}

MiEstimation parse_mi(Reader r) {
  MiEstimation m;
  m.enabled = r.get<bool>("enabled", m.enabled);
  m.steps = r.get<std::size_t>("steps", m.steps);
  m.learning_rate = r.get<double>("learning_rate", m.learning_rate);
  m.batch_size = r.get<std::size_t>("batch_size", m.batch_size);
  m.eval_batch = r.get<std::size_t>("eval_batch", m.eval_batch);
  m.eval_batches = r.get<std::size_t>("eval_batches", m.eval_batches);
  if (m.steps == 0) r.fail("must be >= 1", "steps");
  if (m.batch_size < 2) r.fail("must be >= 2", "batch_size");
  if (m.eval_batch < 2) r.fail("must be >= 2", "eval_batch");
  if (m.eval_batches == 0) r.fail("must be >= 1", "eval_batches");
  if (!(m.learning_rate > 0.0)) r.fail("must be > 0", "learning_rate");
  r.finish();
  return m;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (baselines.empty()) throw ConfigError("config: at least one baseline is required");
  if (seeds.empty()) throw ConfigError("config: at least one seed is required");
  if (entropy_window == 0 || mi_window == 0) throw ConfigError("config: windows must hold >= 1 step");
  if (history_capacity == 0) throw ConfigError("config: history_capacity must be >= 1");
  try {
    std::visit([](const auto& c) { c.validate(); }, env);
    budget.validate();
    agent.step.validate();
    agent.exploration.validate();
    meta.validate();
    cost.validate();
    loss_weights.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (const auto* ext = std::get_if<External>(&summarizer); ext && resolve_external_endpoint(ext->endpoint).empty()) {
    throw ConfigError("config: external summarizer needs an endpoint (or CTXMDP_EXTERNAL_SUMMARIZER)");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "line L, column C" inside the message.
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
  Locator loc(text, origin);
  Reader r(doc, {}, loc);
  ExperimentConfig c;
  c.run_id = r.get<std::string>("run_id", c.run_id);
  if (c.run_id.empty() || c.run_id.find_first_of("/\\") != std::string::npos) r.fail("must be a non-empty name without slashes", "run_id");
  if (!r.has("env")) r.fail("missing required section", "env");
  c.env = parse_env(r.child("env"));
  if (r.has("summarizer")) c.summarizer = parse_summarizer(r.child("summarizer"), c.env);
  if (r.has("budget")) c.budget = parse_budget(r.child("budget"));
  if (r.has("agent")) c.agent = parse_agent(r.child("agent"));
  c.meta.thresholds.latency_high = c.budget.latency_cap_ms;
  if (r.has("meta")) c.meta = parse_meta(r.child("meta"), c.budget.latency_cap_ms);
  if (r.has("baselines")) {
    const json& b = r.raw("baselines");
    if (!b.is_array() || b.empty()) r.fail("expected a non-empty array", "baselines");
    c.baselines.clear();
    for (const auto& x : b) {
      if (!x.is_string()) r.fail("baselines must be strings", "baselines");
      try {
        c.baselines.push_back(parse_baseline(x.get<std::string>()));
      } catch (const std::invalid_argument& e) {
        r.fail(e.what(), "baselines");
      }
    }
  }
  if (r.has("seeds")) {
    const json& s = r.raw("seeds");
    if (!s.is_array()) r.fail("expected an array of seeds", "seeds");
    c.seeds.clear();
    for (const auto& x : s) {
      if (!x.is_number_unsigned()) r.fail("seeds must be non-negative integers", "seeds");
      c.seeds.push_back(x.get<std::uint64_t>());
    }
    if (c.seeds.empty()) r.fail("at least one seed is required", "seeds");
  }
  c.entropy_window = r.get<std::size_t>("entropy_window", c.entropy_window);
  c.mi_window = r.get<std::size_t>("mi_window", c.mi_window);
  c.history_capacity = r.get<std::size_t>("history_capacity", c.history_capacity);
  if (r.has("cost")) c.cost = parse_cost(r.child("cost"));
  if (r.has("loss_weights")) c.loss_weights = parse_weights(r.child("loss_weights"));
  if (r.has("mi_estimation")) c.mi = parse_mi(r.child("mi_estimation"));
  c.probe_states = r.get<std::size_t>("probe_states", c.probe_states);
  c.log_every = r.get<std::uint64_t>("log_every", c.log_every);
  c.measure_wall_clock = r.get<bool>("measure_wall_clock", c.measure_wall_clock);
  c.output_dir = r.get<std::string>("output_dir", c.output_dir);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t\r");
    const auto e = item.find_last_not_of(" \t\r");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(text)) {
    try {
      const auto dash = item.find('-');
      std::size_t used = 0;
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
        continue;
      }
      const auto lo = std::stoull(item.substr(0, dash));
      const auto hi = std::stoull(item.substr(dash + 1), &used);
      if (used != item.size() - dash - 1 || hi < lo) throw std::invalid_argument(item);
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } catch (const std::exception&) {
      throw ConfigError("bad seed list entry '" + item + "' (expected N or A-B)");
    }
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

}  // namespace ctxmdp
