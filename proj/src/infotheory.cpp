#include "ctxmdp/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace ctxmdp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_dims(const CriticParameters& p, const Eigen::VectorXd& s, const Eigen::VectorXd& c) {
  if (static_cast<std::size_t>(s.size()) != p.s_dim() || static_cast<std::size_t>(c.size()) != p.c_dim()) {
    throw DimensionMismatch("critic expects (" + std::to_string(p.s_dim()) + ", " +
                            std::to_string(p.c_dim()) + ") embeddings, got (" +
                            std::to_string(s.size()) + ", " + std::to_string(c.size()) + ")");
  }
}

Eigen::MatrixXd stack(const std::vector<SamplePair>& batch, bool s_side) {
  if (batch.empty()) return {};
  const auto d = s_side ? batch[0].s_embed.size() : batch[0].c_embed.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(batch.size()), d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = s_side ? batch[i].s_embed.transpose() : batch[i].c_embed.transpose();
  }
  return out;
}

// scores(i, j) = f(s_i, c_j)
Eigen::MatrixXd score_matrix(const CriticParameters& params, const std::vector<SamplePair>& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  for (const auto& p : batch) check_dims(params, p.s_embed, p.c_embed);
  if (const auto* b = std::get_if<BilinearCritic>(&params.form)) {
    return stack(batch, true) * b->w * stack(batch, false).transpose();
  }
  Eigen::MatrixXd scores(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      scores(i, j) = critic_eval(params, batch[static_cast<std::size_t>(i)].s_embed,
                                 batch[static_cast<std::size_t>(j)].c_embed);
    }
  }
  return scores;
}

Eigen::VectorXd eval_pairs(const CriticParameters& params, const std::vector<SamplePair>& batch) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = critic_eval(params, batch[i].s_embed, batch[i].c_embed);
  }
  return out;
}

double log_mean_exp(const Eigen::VectorXd& v) {
  const double hi = v.maxCoeff();
  return hi + std::log((v.array() - hi).exp().mean());
}

// Accumulates sum_k coeff_k * grad f(s_k, c_k) in flat form.
Eigen::VectorXd weighted_point_gradients(const CriticParameters& params,
                                         const std::vector<const Eigen::VectorXd*>& s,
                                         const std::vector<const Eigen::VectorXd*>& c,
                                         const std::vector<double>& coeff) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  if (const auto* b = std::get_if<BilinearCritic>(&params.form)) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(b->w.rows(), b->w.cols());
    for (std::size_t k = 0; k < coeff.size(); ++k) {
      if (coeff[k] != 0.0) g.noalias() += coeff[k] * (*s[k]) * c[k]->transpose();
    }
    return Eigen::Map<Eigen::VectorXd>(g.data(), g.size());
  }
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    if (coeff[k] != 0.0) acc += coeff[k] * critic_point_gradient(params, *s[k], *c[k]).flatten();
  }
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------

JointCounts::JointCounts(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), counts_(rows * cols, 0) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("joint counts need >= 1 row and column");
}

JointCounts JointCounts::from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  if (rows.empty() || rows[0].empty()) throw std::invalid_argument("joint counts must be non-empty");
  JointCounts out(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != out.cols_) throw std::invalid_argument("joint counts rows must have equal length");
    for (std::size_t c = 0; c < out.cols_; ++c) out.add(r, c, rows[r][c]);
  }
  return out;
}

void JointCounts::add(std::size_t r, std::size_t c, std::uint64_t n) {
  counts_.at(r * cols_ + c) += n;
  total_ += n;
}

double exact_mi(const JointCounts& counts) {
  if (counts.total() == 0) throw std::invalid_argument("exact_mi: total count must be > 0");
  const double n = static_cast<double>(counts.total());
  std::vector<double> row(counts.rows(), 0.0), col(counts.cols(), 0.0);
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    for (std::size_t c = 0; c < counts.cols(); ++c) {
      row[r] += static_cast<double>(counts.at(r, c));
      col[c] += static_cast<double>(counts.at(r, c));
    }
  }
  double mi = 0.0;
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    for (std::size_t c = 0; c < counts.cols(); ++c) {
      const double nrc = static_cast<double>(counts.at(r, c));
      if (nrc == 0.0) continue;
      mi += (nrc / n) * std::log(nrc * n / (row[r] * col[c]));
    }
  }
  return std::max(0.0, mi);
}

// ---------------------------------------------------------------------------

CriticParameters CriticParameters::bilinear(std::size_t d_s, std::size_t d_c) {
  return CriticParameters{BilinearCritic{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d_s),
                                                               static_cast<Eigen::Index>(d_c))}};
}

CriticParameters CriticParameters::mlp(std::size_t d_s, std::size_t d_c, std::size_t hidden, Rng& rng) {
  std::normal_distribution<double> init(0.0, 0.1);
  MlpCritic m;
  const auto h = static_cast<Eigen::Index>(hidden);
  m.w1 = Eigen::MatrixXd::NullaryExpr(h, static_cast<Eigen::Index>(d_s + d_c), [&] { return init(rng); });
  m.b1 = Eigen::VectorXd::Zero(h);
  m.w2 = Eigen::VectorXd::NullaryExpr(h, [&] { return init(rng); });
  m.b2 = 0.0;
  m.d_s = d_s;
  return CriticParameters{std::move(m)};
}

std::size_t CriticParameters::s_dim() const {
  return std::visit(overloaded{[](const BilinearCritic& b) { return static_cast<std::size_t>(b.w.rows()); },
                               [](const MlpCritic& m) { return m.d_s; }},
                    form);
}

std::size_t CriticParameters::c_dim() const {
  return std::visit(overloaded{[](const BilinearCritic& b) { return static_cast<std::size_t>(b.w.cols()); },
                               [](const MlpCritic& m) { return static_cast<std::size_t>(m.w1.cols()) - m.d_s; }},
                    form);
}

std::size_t CriticParameters::size() const {
  return std::visit(overloaded{[](const BilinearCritic& b) { return static_cast<std::size_t>(b.w.size()); },
                               [](const MlpCritic& m) {
                                 return static_cast<std::size_t>(m.w1.size() + m.b1.size() + m.w2.size() + 1);
                               }},
                    form);
}

Eigen::VectorXd CriticParameters::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
  std::visit(overloaded{[&](const BilinearCritic& b) { flat = Eigen::Map<const Eigen::VectorXd>(b.w.data(), b.w.size()); },
                        [&](const MlpCritic& m) {
                          Eigen::Index at = 0;
                          flat.segment(at, m.w1.size()) = Eigen::Map<const Eigen::VectorXd>(m.w1.data(), m.w1.size());
                          at += m.w1.size();
                          flat.segment(at, m.b1.size()) = m.b1;
                          at += m.b1.size();
                          flat.segment(at, m.w2.size()) = m.w2;
                          at += m.w2.size();
                          flat(at) = m.b2;
                        }},
             form);
  return flat;
}

CriticParameters CriticParameters::unflatten(const Eigen::VectorXd& flat) const {
  if (static_cast<std::size_t>(flat.size()) != size()) {
    throw DimensionMismatch("unflatten: parameter vector has the wrong length");
  }
  CriticParameters out = *this;
  std::visit(overloaded{[&](BilinearCritic& b) {
                          b.w = Eigen::Map<const Eigen::MatrixXd>(flat.data(), b.w.rows(), b.w.cols());
                        },
                        [&](MlpCritic& m) {
                          Eigen::Index at = 0;
                          m.w1 = Eigen::Map<const Eigen::MatrixXd>(flat.data(), m.w1.rows(), m.w1.cols());
                          at += m.w1.size();
                          m.b1 = flat.segment(at, m.b1.size());
                          at += m.b1.size();
                          m.w2 = flat.segment(at, m.w2.size());
                          at += m.w2.size();
                          m.b2 = flat(at);
                        }},
             out.form);
  return out;
}

bool CriticParameters::all_finite() const { return flatten().allFinite(); }

// ---------------------------------------------------------------------------

double critic_eval(const CriticParameters& params, const Eigen::VectorXd& s, const Eigen::VectorXd& c) {
  check_dims(params, s, c);
  return std::visit(overloaded{[&](const BilinearCritic& b) { return s.dot(b.w * c); },
                               [&](const MlpCritic& m) {
                                 Eigen::VectorXd x(s.size() + c.size());
                                 x << s, c;
                                 const Eigen::VectorXd h = (m.w1 * x + m.b1).array().tanh().matrix();
                                 return m.w2.dot(h) + m.b2;
                               }},
                    params.form);
}

CriticParameters critic_point_gradient(const CriticParameters& params, const Eigen::VectorXd& s,
                                       const Eigen::VectorXd& c) {
  check_dims(params, s, c);
  CriticParameters g = params;
  std::visit(overloaded{[&](BilinearCritic& b) { b.w = s * c.transpose(); },
                        [&](MlpCritic& m) {
                          const auto& src = std::get<MlpCritic>(params.form);
                          Eigen::VectorXd x(s.size() + c.size());
                          x << s, c;
                          const Eigen::VectorXd h = (src.w1 * x + src.b1).array().tanh().matrix();
                          const Eigen::VectorXd delta =
                              (src.w2.array() * (1.0 - h.array().square())).matrix();
                          m.w1 = delta * x.transpose();
                          m.b1 = delta;
                          m.w2 = h;
                          m.b2 = 1.0;
                        }},
             g.form);
  return g;
}

double mine_estimate(const std::vector<SamplePair>& joint, const std::vector<SamplePair>& marginal,
                     const CriticParameters& params) {
  if (joint.empty() || marginal.empty()) throw std::invalid_argument("mine_estimate: empty batch");
  return eval_pairs(params, joint).mean() - log_mean_exp(eval_pairs(params, marginal));
}

double infonce_estimate(const std::vector<SamplePair>& batch, const CriticParameters& params) {
  if (batch.size() < 2) throw std::invalid_argument("infonce_estimate: batch size must be >= 2");
  const Eigen::MatrixXd scores = score_matrix(params, batch);
  const auto n = scores.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = scores.row(i).maxCoeff();
    const double lse = hi + std::log((scores.row(i).array() - hi).exp().sum());
    total += scores(i, i) - lse;
  }
  const double value = total / static_cast<double>(n) + std::log(static_cast<double>(n));
  // Each term is log of a probability, so the bound never exceeds log(B).
  return std::min(value, std::log(static_cast<double>(n)));
}

double bound_estimate(MiBound bound, const SampleBatch& batch, const CriticParameters& params) {
  return bound == MiBound::Mine ? mine_estimate(batch.joint, batch.marginal, params)
                                : infonce_estimate(batch.joint, params);
}

CriticParameters critic_gradient(MiBound bound, const SampleBatch& batch, const CriticParameters& params) {
  std::vector<const Eigen::VectorXd*> s, c;
  std::vector<double> coeff;
  if (bound == MiBound::Mine) {
    if (batch.joint.empty() || batch.marginal.empty()) throw std::invalid_argument("critic_gradient: empty batch");
    const double nj = static_cast<double>(batch.joint.size());
    for (const auto& p : batch.joint) {
      check_dims(params, p.s_embed, p.c_embed);
      s.push_back(&p.s_embed);
      c.push_back(&p.c_embed);
      coeff.push_back(1.0 / nj);
    }
    // Marginal term: softmax-weighted mean of the point gradients.
    const Eigen::VectorXd f = eval_pairs(params, batch.marginal);
    const Eigen::VectorXd w = (f.array() - f.maxCoeff()).exp().matrix();
    const double z = w.sum();
    for (std::size_t k = 0; k < batch.marginal.size(); ++k) {
      s.push_back(&batch.marginal[k].s_embed);
      c.push_back(&batch.marginal[k].c_embed);
      coeff.push_back(-w(static_cast<Eigen::Index>(k)) / z);
    }
    return params.unflatten(weighted_point_gradients(params, s, c, coeff));
  }
  const auto& b = batch.joint;
  if (b.size() < 2) throw std::invalid_argument("critic_gradient: InfoNCE batch size must be >= 2");
  const Eigen::MatrixXd scores = score_matrix(params, b);
  const auto n = scores.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::ArrayXd e = (scores.row(i).array() - scores.row(i).maxCoeff()).exp().transpose();
    const Eigen::ArrayXd p = e / e.sum();
    for (Eigen::Index j = 0; j < n; ++j) {
      s.push_back(&b[static_cast<std::size_t>(i)].s_embed);
      c.push_back(&b[static_cast<std::size_t>(j)].c_embed);
      coeff.push_back(inv_n * ((i == j ? 1.0 : 0.0) - p(j)));
    }
  }
  return params.unflatten(weighted_point_gradients(params, s, c, coeff));
}

// ---------------------------------------------------------------------------

DiscreteJointSampler::DiscreteJointSampler(JointCounts counts) : counts_(std::move(counts)) {
  if (counts_.total() == 0) throw std::invalid_argument("sampler needs a joint with total > 0");
  row_weights_.assign(counts_.rows(), 0.0);
  col_weights_.assign(counts_.cols(), 0.0);
  for (std::size_t r = 0; r < counts_.rows(); ++r) {
    for (std::size_t c = 0; c < counts_.cols(); ++c) {
      const auto v = static_cast<double>(counts_.at(r, c));
      cell_weights_.push_back(v);
      row_weights_[r] += v;
      col_weights_[c] += v;
    }
  }
}

SampleBatch DiscreteJointSampler::sample(std::size_t n, Rng& rng) const {
  std::discrete_distribution<std::size_t> cell(cell_weights_.begin(), cell_weights_.end());
  std::discrete_distribution<std::size_t> row(row_weights_.begin(), row_weights_.end());
  std::discrete_distribution<std::size_t> col(col_weights_.begin(), col_weights_.end());
  const auto rs = static_cast<Eigen::Index>(counts_.rows());
  const auto cs = static_cast<Eigen::Index>(counts_.cols());
  auto one_hot = [](Eigen::Index dim, std::size_t at) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v(static_cast<Eigen::Index>(at)) = 1.0;
    return v;
  };
  SampleBatch batch;
  batch.joint.reserve(n);
  batch.marginal.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = cell(rng);
    batch.joint.push_back(SamplePair{one_hot(rs, k / counts_.cols()), one_hot(cs, k % counts_.cols()), true});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = row(rng);
    const std::size_t c = col(rng);
    batch.marginal.push_back(SamplePair{one_hot(rs, r), one_hot(cs, c), false});
  }
  return batch;
}

EmpiricalPairSampler::EmpiricalPairSampler(std::vector<Eigen::VectorXd> s, std::vector<Eigen::VectorXd> c)
    : s_(std::move(s)), c_(std::move(c)) {
  if (s_.empty() || s_.size() != c_.size()) throw std::invalid_argument("empirical sampler needs equal, non-empty s and c lists");
}

SampleBatch EmpiricalPairSampler::sample(std::size_t n, Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, s_.size() - 1);
  SampleBatch batch;
  batch.joint.reserve(n);
  batch.marginal.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = pick(rng);
    batch.joint.push_back(SamplePair{s_[k], c_[k], true});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = pick(rng);
    const std::size_t b = pick(rng);
    batch.marginal.push_back(SamplePair{s_[a], c_[b], false});
  }
  return batch;
}

CriticTraining train_critic(MiBound bound, const PairSampler& sampler, CriticParameters params0,
                            std::size_t steps, double learning_rate, std::size_t batch_size, Rng& rng) {
  if (steps < 1) throw std::invalid_argument("train_critic: steps must be >= 1");
  if (learning_rate < 0.0) throw std::invalid_argument("train_critic: learning_rate must be >= 0");
  CriticTraining out{std::move(params0), {}};
  out.trajectory.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    const SampleBatch batch = sampler.sample(batch_size, rng);
    const double value = bound_estimate(bound, batch, out.params);
    if (!std::isfinite(value)) {
      throw TrainingDiverged("critic training diverged at step " + std::to_string(step) +
                             ": bound = " + std::to_string(value));
    }
    out.trajectory.push_back(value);
    if (learning_rate == 0.0) continue;
    const Eigen::VectorXd grad = critic_gradient(bound, batch, out.params).flatten();
    out.params = out.params.unflatten(out.params.flatten() + learning_rate * grad);
    if (!out.params.all_finite()) {
      throw TrainingDiverged("critic parameters became non-finite at step " + std::to_string(step));
    }
  }
  return out;
}

double evaluate_bound(MiBound bound, const PairSampler& sampler, const CriticParameters& params,
                      std::size_t batch_size, std::size_t batches, Rng& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < batches; ++i) {
    total += bound_estimate(bound, sampler.sample(batch_size, rng), params);
  }
  return total / static_cast<double>(batches);
}

}  // namespace ctxmdp
