#include <doctest.h>

#include <cmath>

#include "ctxmdp/infotheory.hpp"

using namespace ctxmdp;

namespace {

// Plug-in MI by direct summation over cells.
double brute_mi(const std::vector<std::vector<std::uint64_t>>& n) {
  double total = 0.0;
  std::vector<double> row(n.size(), 0.0), col(n[0].size(), 0.0);
  for (std::size_t i = 0; i < n.size(); ++i) {
    for (std::size_t j = 0; j < n[i].size(); ++j) {
      total += n[i][j];
      row[i] += n[i][j];
      col[j] += n[i][j];
    }
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    for (std::size_t j = 0; j < n[i].size(); ++j) {
      if (n[i][j] == 0) continue;
      const double p = n[i][j] / total;
      mi += p * std::log(p / (row[i] / total * col[j] / total));
    }
  }
  return mi;
}

SampleBatch constant_critic_batch(double value, std::size_t n) {
  SampleBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd s = Eigen::VectorXd::Constant(1, 1.0), c = Eigen::VectorXd::Constant(1, value);
    b.joint.push_back({s, c, true});
    b.marginal.push_back({s, c, false});
  }
  return b;
}

}  // namespace

TEST_CASE("exact MI agrees with direct summation and vanishes exactly on product joints") {
  for (std::uint64_t a = 0; a <= 12; ++a) {
    for (std::uint64_t b = 0; a + b <= 12; ++b) {
      for (std::uint64_t c = 0; a + b + c <= 12; ++c) {
        for (std::uint64_t d = 0; a + b + c + d <= 12; ++d) {
          if (a + b + c + d == 0) continue;
          const std::vector<std::vector<std::uint64_t>> n{{a, b}, {c, d}};
          const double mi = exact_mi(JointCounts::from_rows(n));
          CHECK(mi >= 0.0);
          CHECK(std::abs(mi - brute_mi(n)) < 1e-12);
          const bool factorizes = a * d == b * c;
          CHECK((mi < 1e-12) == factorizes);
        }
      }
    }
  }
  CHECK_THROWS_AS(exact_mi(JointCounts(2, 2)), std::invalid_argument);
}

TEST_CASE("bijection MI is log of the alphabet size") {
  JointCounts j(4, 4);
  for (std::size_t i = 0; i < 4; ++i) j.add(i, i, 5);
  CHECK(exact_mi(j) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("MINE stays finite for extreme critic outputs") {
  CriticParameters p = CriticParameters::bilinear(1, 1);
  for (double v : {500.0, -500.0}) {
    auto flat = p.flatten();
    flat(0) = 1.0;
    const auto q = p.unflatten(flat);
    const auto batch = constant_critic_batch(v, 8);
    CHECK(std::isfinite(mine_estimate(batch.joint, batch.marginal, q)));
    CHECK(std::isfinite(infonce_estimate(batch.joint, q)));
  }
}

TEST_CASE("critic dimension mismatch is reported") {
  const auto p = CriticParameters::bilinear(2, 3);
  const Eigen::VectorXd s = Eigen::VectorXd::Ones(2), c = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(critic_eval(p, s, c), DimensionMismatch);
  CHECK_THROWS_AS(p.unflatten(Eigen::VectorXd::Zero(5)), DimensionMismatch);
}

TEST_CASE("flatten and unflatten round-trip") {
  Rng rng(2);
  const auto p = CriticParameters::mlp(2, 3, 4, rng);
  CHECK(p.s_dim() == 2);
  CHECK(p.c_dim() == 3);
  const auto flat = p.flatten();
  CHECK(static_cast<std::size_t>(flat.size()) == p.size());
  CHECK(p.unflatten(flat).flatten() == flat);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int form = 0; form < 2; ++form) {
    for (MiBound bound : {MiBound::Mine, MiBound::InfoNce}) {
      for (int draw = 0; draw < 10; ++draw) {
        auto p = form == 0 ? CriticParameters::bilinear(3, 2) : CriticParameters::mlp(3, 2, 4, rng);
        Eigen::VectorXd flat = p.flatten();
        for (Eigen::Index k = 0; k < flat.size(); ++k) flat(k) = 0.5 * g(rng);
        p = p.unflatten(flat);
        SampleBatch batch;
        for (int i = 0; i < 5; ++i) {
          batch.joint.push_back({Eigen::VectorXd::NullaryExpr(3, [&] { return g(rng); }),
                                 Eigen::VectorXd::NullaryExpr(2, [&] { return g(rng); }), true});
          batch.marginal.push_back({Eigen::VectorXd::NullaryExpr(3, [&] { return g(rng); }),
                                    Eigen::VectorXd::NullaryExpr(2, [&] { return g(rng); }), false});
        }
        const Eigen::VectorXd analytic = critic_gradient(bound, batch, p).flatten();
        for (Eigen::Index k = 0; k < flat.size(); ++k) {
          Eigen::VectorXd up = flat, down = flat;
          up(k) += 1e-5;
          down(k) -= 1e-5;
          const double numeric =
              (bound_estimate(bound, batch, p.unflatten(up)) - bound_estimate(bound, batch, p.unflatten(down))) / 2e-5;
          CHECK(analytic(k) == doctest::Approx(numeric).epsilon(1e-5).scale(1.0));
        }
      }
    }
  }
}

TEST_CASE("independent pairs give a MINE estimate near zero") {
  JointCounts j(3, 3);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) j.add(r, c, 4);
  }
  DiscreteJointSampler sampler(j);
  Rng rng(1);
  const auto trained = train_critic(MiBound::Mine, sampler, CriticParameters::bilinear(3, 3), 300, 0.5, 256, rng);
  const double est = evaluate_bound(MiBound::Mine, sampler, trained.params, 512, 4, rng);
  CHECK(est >= -0.05);
  CHECK(est <= 0.1);
}

TEST_CASE("InfoNCE approaches the bijection MI") {
  JointCounts j(4, 4);
  for (std::size_t i = 0; i < 4; ++i) j.add(i, i, 1);
  DiscreteJointSampler sampler(j);
  Rng rng(2);
  const auto trained = train_critic(MiBound::InfoNce, sampler, CriticParameters::bilinear(4, 4), 500, 2.0, 256, rng);
  const double est = evaluate_bound(MiBound::InfoNce, sampler, trained.params, 512, 2, rng);
  CHECK(est == doctest::Approx(std::min(std::log(4.0), std::log(512.0))).epsilon(0.1 / std::log(4.0)));
  CHECK(est <= std::log(512.0));
}

TEST_CASE("zero learning rate leaves the critic unchanged") {
  JointCounts j(2, 2);
  j.add(0, 0, 3);
  j.add(1, 1, 3);
  DiscreteJointSampler sampler(j);
  Rng rng(3);
  const auto p0 = CriticParameters::bilinear(2, 2);
  const auto trained = train_critic(MiBound::Mine, sampler, p0, 20, 0.0, 32, rng);
  CHECK(trained.params.flatten() == p0.flatten());
  CHECK(trained.trajectory.size() == 20);
}

TEST_CASE("bounds stay below the exact MI for random critics") {
  Rng rng(6);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_int_distribution<int> cell(0, 9);
  for (int trial = 0; trial < 20; ++trial) {
    JointCounts j(3, 4);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 4; ++c) j.add(r, c, static_cast<std::uint64_t>(cell(rng)) + (r == c ? 10 : 0));
    }
    DiscreteJointSampler sampler(j);
    auto p = CriticParameters::bilinear(3, 4);
    Eigen::VectorXd flat = p.flatten();
    for (Eigen::Index k = 0; k < flat.size(); ++k) flat(k) = g(rng);
    p = p.unflatten(flat);
    const double exact = exact_mi(j);
    CHECK(evaluate_bound(MiBound::Mine, sampler, p, 512, 4, rng) <= exact + 0.05);
    const double nce = evaluate_bound(MiBound::InfoNce, sampler, p, 512, 4, rng);
    CHECK(nce <= std::min(exact + 0.05, std::log(512.0)));
  }
}

TEST_CASE("empirical sampler pairs recorded values") {
  std::vector<Eigen::VectorXd> s{Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0)};
  std::vector<Eigen::VectorXd> c = s;
  EmpiricalPairSampler sampler(s, c);
  Rng rng(0);
  const auto batch = sampler.sample(50, rng);
  CHECK(batch.joint.size() == 50);
  for (const auto& p : batch.joint) CHECK(p.s_embed(0) == p.c_embed(0));
  CHECK_THROWS_AS(EmpiricalPairSampler({}, {}), std::invalid_argument);
}
