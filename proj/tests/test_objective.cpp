#include <doctest.h>

#include <cmath>

#include "ctxmdp/objective.hpp"

using namespace ctxmdp;

namespace {

// KL(p || q) summed directly; a zero in either row smooths both rows.
double brute_kl(std::vector<double> p, std::vector<double> q, double delta) {
  bool zero = false;
  for (std::size_t i = 0; i < p.size(); ++i) zero = zero || p[i] == 0.0 || q[i] == 0.0;
  auto smooth = [delta, zero](std::vector<double>& r) {
    if (!zero) return;
    double z = 0.0;
    for (double& v : r) z += (v += delta);
    for (double& v : r) v /= z;
  };
  smooth(p);
  smooth(q);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

}  // namespace

TEST_CASE("lagrangian monotonicity") {
  BudgetSpec b;
  b.token_cap = 8;
  b.latency_cap_ms = 50.0;
  ObjectiveComponents c{0.5, 1.0, 40.0, 4, 0, 0, 0};
  const double base = lagrangian(c, b);
  auto with = [&](auto f) {
    auto d = c;
    f(d);
    return lagrangian(d, b);
  };
  CHECK(with([](auto& d) { d.mi_estimate = 0.9; }) <= base);
  CHECK(with([](auto& d) { d.entropy_nats = 2.0; }) >= base);
  CHECK(with([](auto& d) { d.latency_ms = 80.0; }) >= base);
  CHECK(with([](auto& d) { d.tokens = 12; }) >= base);
  CHECK(with([](auto& d) { d.latency_ms = 80.0; }) == doctest::Approx(base + 30.0));
}

TEST_CASE("sufficiency gap agrees with brute-force KL over a probability grid") {
  std::vector<std::vector<double>> grid;
  for (int a = 0; a <= 4; ++a) {
    for (int b = 0; a + b <= 4; ++b) grid.push_back({a / 4.0, b / 4.0, (4 - a - b) / 4.0});
  }
  for (const auto& p : grid) {
    for (const auto& q : grid) {
      const double eps = sufficiency_epsilon({p}, {q}, std::vector<double>{1.0});
      CHECK(eps >= 0.0);
      CHECK(std::abs(eps - brute_kl(p, q, kSufficiencySmoothing)) <= 1e-12);
      if (p == q) CHECK(eps == 0.0);
    }
  }
}

TEST_CASE("sufficiency gap weights states") {
  const ActionDistributions full{{0.5, 0.5}, {0.9, 0.1}};
  const ActionDistributions sum{{0.5, 0.5}, {0.5, 0.5}};
  const double kl = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  CHECK(sufficiency_epsilon(full, sum, std::vector<double>{1.0, 3.0}) == doctest::Approx(0.75 * kl).epsilon(1e-12));
  CHECK(ExactSufficiency{}.estimate(full, sum, std::vector<double>{0.0, 1.0}) == doctest::Approx(kl));
  CHECK_THROWS_AS(sufficiency_epsilon(full, {{1.0, 0.0}}, std::vector<double>{1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("sensitivity norms by central differences") {
  // Q(x) = (2 x0 + x1, x0) and log pi = (-x0^2, 0): gradients are known.
  EmbeddingMap q = [](const Eigen::VectorXd& x) { return std::vector<double>{2 * x(0) + x(1), x(0)}; };
  EmbeddingMap lp = [](const Eigen::VectorXd& x) { return std::vector<double>{-x(0) * x(0), 0.0}; };
  const Eigen::VectorXd at = (Eigen::VectorXd(2) << 1.5, -0.5).finished();
  const auto n = sensitivity_norms(q, lp, at, 0, 1e-5);
  CHECK(n.q == doctest::Approx(std::sqrt(5.0)).epsilon(1e-8));
  CHECK(n.pi == doctest::Approx(3.0).epsilon(1e-8));
  LossWeights w;
  w.lipschitz_q = 2.0;
  w.lipschitz_pi = 5.0;
  const auto e = sensitivity_excess(n, w);
  CHECK(e.q == doctest::Approx(std::sqrt(5.0) - 2.0).epsilon(1e-8));
  CHECK(e.pi == 0.0);
}

TEST_CASE("linear learner sensitivity reads its weights") {
  LinearQ l(1, 2, 3, 0.0, StepSize{1.0, 0.0}, Exploration{});
  l.weights(0, 0) = (Eigen::VectorXd(4) << 0, 3, 4, 0).finished();
  const auto s = augment(StateId{0}, ContextSummary{make_tokens({0})});
  CHECK(sensitivity_norms(l, s, 1e-5).q == doctest::Approx(5.0).epsilon(1e-8));
}

TEST_CASE("warm-up ramps the auxiliary terms") {
  LossWeights w;
  BudgetSpec b;
  ObjectiveComponents c{0.4, 1.0, 10.0, 2, 0.1, 0.0, 0.0};
  CHECK(joint_loss(1.25, c, w, b, 0.0) == 1.25);
  const double full = joint_loss(1.25, c, w, b, 0.10);
  CHECK(joint_loss(1.25, c, w, b, 0.5) == full);
  CHECK(joint_loss(1.25, c, w, b, 0.05) == doctest::Approx(1.25 + 0.5 * (full - 1.25)));
  CHECK(joint_loss(1.25, c, w, b, 0.1 - 1e-12) == doctest::Approx(full).epsilon(1e-9));
  CHECK(joint_loss(2.0, ObjectiveComponents{}, w, b, 0.7) == 2.0);
  CHECK(full == doctest::Approx(1.25 - 0.4 + 5e-3 * 1.0 + 1e-2 * 0.1));
}

TEST_CASE("loss weight validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.warmup_fraction = 1.5;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
