// Mutual-information machinery: the exact discrete oracle plus the
// Donsker-Varadhan (MINE) and InfoNCE variational lower bounds with a
// trainable critic and hand-derived gradients.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

#include "ctxmdp/core.hpp"

namespace ctxmdp {

class JointCounts {
 public:
  JointCounts(std::size_t rows, std::size_t cols);
  static JointCounts from_rows(const std::vector<std::vector<std::uint64_t>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t at(std::size_t r, std::size_t c) const { return counts_[r * cols_ + c]; }
  void add(std::size_t r, std::size_t c, std::uint64_t n = 1);

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// Plug-in mutual information of the empirical joint, in nats.
double exact_mi(const JointCounts& counts);

struct BilinearCritic {
  Eigen::MatrixXd w;  // d_s x d_c
};

struct MlpCritic {
  Eigen::MatrixXd w1;  // h x (d_s + d_c)
  Eigen::VectorXd b1;  // h
  Eigen::VectorXd w2;  // h
  double b2 = 0.0;
  std::size_t d_s = 0;  // leading block of the input is s, the rest is c
};

// Critic f(s, c). Gradients share this type: a gradient is a parameter set.
struct CriticParameters {
  std::variant<BilinearCritic, MlpCritic> form;

  static CriticParameters bilinear(std::size_t d_s, std::size_t d_c);
  // Small random weights (scale 0.1) so the hidden units are not symmetric.
  static CriticParameters mlp(std::size_t d_s, std::size_t d_c, std::size_t hidden, Rng& rng);

  std::size_t s_dim() const;
  std::size_t c_dim() const;
  std::size_t size() const;
  Eigen::VectorXd flatten() const;
  CriticParameters unflatten(const Eigen::VectorXd& flat) const;  // same shape as *this
  bool all_finite() const;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SamplePair {
  Eigen::VectorXd s_embed;
  Eigen::VectorXd c_embed;
  bool joint = true;
};

struct SampleBatch {
  std::vector<SamplePair> joint;     // draws from p(s, c)
  std::vector<SamplePair> marginal;  // draws from p(s) p(c)
};

double critic_eval(const CriticParameters& params, const Eigen::VectorXd& s, const Eigen::VectorXd& c);

// Gradient of f(s, c) with respect to every parameter.
CriticParameters critic_point_gradient(const CriticParameters& params, const Eigen::VectorXd& s,
                                       const Eigen::VectorXd& c);

// mean_joint[f] - log mean_marginal[exp f], with a max-shifted log-sum-exp.
double mine_estimate(const std::vector<SamplePair>& joint, const std::vector<SamplePair>& marginal,
                     const CriticParameters& params);

// Mean over anchors of log softmax of the matched pair against all in-batch
// candidates, plus log(B). K = B - 1 negatives; never exceeds log(B).
double infonce_estimate(const std::vector<SamplePair>& batch, const CriticParameters& params);

enum class MiBound { Mine, InfoNce };

double bound_estimate(MiBound bound, const SampleBatch& batch, const CriticParameters& params);

// Analytic gradient of the chosen bound. InfoNCE only reads batch.joint.
CriticParameters critic_gradient(MiBound bound, const SampleBatch& batch,
                                 const CriticParameters& params);

class PairSampler {
 public:
  virtual ~PairSampler() = default;
  virtual SampleBatch sample(std::size_t n, Rng& rng) const = 0;
};

// Samples (s, c) index pairs from a discrete joint, embedded as one-hot vectors.
class DiscreteJointSampler final : public PairSampler {
 public:
  explicit DiscreteJointSampler(JointCounts counts);
  SampleBatch sample(std::size_t n, Rng& rng) const override;
  const JointCounts& counts() const { return counts_; }

 private:
  JointCounts counts_;
  std::vector<double> cell_weights_;
  std::vector<double> row_weights_;
  std::vector<double> col_weights_;
};

// Resamples recorded (s, c) pairs: joint draws pick one record, marginal
// draws pair the s of one record with the c of an independent one.
class EmpiricalPairSampler final : public PairSampler {
 public:
  EmpiricalPairSampler(std::vector<Eigen::VectorXd> s, std::vector<Eigen::VectorXd> c);
  SampleBatch sample(std::size_t n, Rng& rng) const override;

 private:
  std::vector<Eigen::VectorXd> s_;
  std::vector<Eigen::VectorXd> c_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CriticTraining {
  CriticParameters params;
  std::vector<double> trajectory;  // bound value of each training batch
};

// Plain gradient ascent with a fixed step. Throws TrainingDiverged on a
// non-finite bound or parameter.
CriticTraining train_critic(MiBound bound, const PairSampler& sampler, CriticParameters params0,
                            std::size_t steps, double learning_rate, std::size_t batch_size,
                            Rng& rng);

// Average bound over `batches` fresh held-out batches of size `batch_size`.
double evaluate_bound(MiBound bound, const PairSampler& sampler, const CriticParameters& params,
                      std::size_t batch_size, std::size_t batches, Rng& rng);

}  // namespace ctxmdp
