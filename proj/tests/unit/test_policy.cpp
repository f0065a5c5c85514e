#include "metaadr/policy.hpp"

#include "../support/test_policies.hpp"

#include <doctest.h>

#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace metaadr;
using metaadr::testing::EnumerableMdp;
using metaadr::testing::TabularSoftmaxPolicy;

namespace {

GaussianPolicy nav_policy() { return GaussianPolicy(PolicySpec::make(2, {8, 8}, 2)); }

}  // namespace

TEST_CASE("gaussian log density closed forms") {
  const Eigen::Vector2d mu(0.3, -0.7);
  CHECK(gaussian_log_density(mu, mu, Eigen::Vector2d::Zero()) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  const Eigen::VectorXd ls = Eigen::VectorXd::Constant(1, 0.4);
  const Eigen::VectorXd m = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0 + std::exp(0.4));
  CHECK(gaussian_log_density(x, m, ls) ==
        doctest::Approx(-0.5 - 0.4 - 0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("policy log_prob integrates to one in 1D") {
  GaussianPolicy pi(PolicySpec::make(1, {4}, 1));
  Rng rng(3);
  ParamVector theta = pi.initial_params(rng, -0.3);
  const Eigen::VectorXd s = Eigen::VectorXd::Constant(1, 0.2);
  const double mu = pi.mean(theta, s)[0];
  double integral = 0.0;
  const double h = 1e-3;
  for (double a = mu - 10.0; a <= mu + 10.0; a += h)
    integral += std::exp(pi.log_prob(theta, s, Eigen::VectorXd::Constant(1, a))) * h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("log_std is clamped and its gradient vanishes where clamped") {
  GaussianPolicy pi = nav_policy();
  Rng rng(1);
  ParamVector theta = pi.initial_params(rng);
  theta.trailing() << 5.0, -30.0;
  CHECK(pi.log_std(theta) == Eigen::Vector2d(kLogStdMax, kLogStdMin));
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
  pi.accumulate_log_prob_gradient(theta, Eigen::MatrixXd::Random(2, 3), Eigen::MatrixXd::Random(2, 3),
                                  Eigen::VectorXd::Ones(3), g);
  CHECK(g.tail(2).isZero(0.0));
}

TEST_CASE("sampling: near-deterministic limit, reproducibility and moments") {
  GaussianPolicy pi = nav_policy();
  Rng rng(9);
  ParamVector theta = pi.initial_params(rng, -20.0);
  const Eigen::VectorXd s = Eigen::Vector2d(0.1, 0.2);
  CHECK((pi.sample_action(theta, s, rng) - pi.mean(theta, s)).cwiseAbs().maxCoeff() < 1e-6);

  theta.trailing().setConstant(-0.5);
  Rng a(77), b(77);
  CHECK(pi.sample_action(theta, s, a) == pi.sample_action(theta, s, b));

  const int n = 100000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  const Eigen::VectorXd mu = pi.mean(theta, s);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd d = pi.sample_action(theta, s, rng) - mu;
    sum += d;
    sq += d.cwiseProduct(d);
  }
  const Eigen::Vector2d var = sq / n - (sum / n).cwiseProduct(sum / n);
  for (int d = 0; d < 2; ++d) CHECK(std::abs(std::sqrt(var[d]) / std::exp(-0.5) - 1.0) < 0.02);
}

TEST_CASE("collect_rollouts counts, labels and determinism") {
  const Environment vel = Environment::point_vel();
  GaussianPolicy pi(PolicySpec::make(1, {8}, 1));
  Rng init(4);
  const ParamVector theta = pi.initial_params(init);
  const Task t{Eigen::VectorXd::Constant(1, 1.5)};
  Rng r1(5), r2(5);
  const TrajectoryBatch a = collect_rollouts(vel, pi, t, theta, 1, r1, BatchLabel::PostAdaptation);
  const TrajectoryBatch b = collect_rollouts(vel, pi, t, theta, 1, r2, BatchLabel::PostAdaptation);
  CHECK(a.total_steps() == 100);
  CHECK(a.label == BatchLabel::PostAdaptation);
  CHECK(a.episodes[0].actions == b.episodes[0].actions);
  CHECK(a.episodes[0].rewards == b.episodes[0].rewards);
  CHECK_NOTHROW(a.validate());
  CHECK_THROWS_AS(collect_rollouts(vel, pi, t, theta, 0, r1), InvalidInput);
}

TEST_CASE("near-deterministic zero-mean policy at the origin goal earns zero") {
  const Environment nav = Environment::point_nav();
  GaussianPolicy pi = nav_policy();
  ParamVector theta(pi.spec().mlp);
  theta.trailing().setConstant(kLogStdMin);
  Rng rng(2);
  const TrajectoryBatch b = collect_rollouts(nav, pi, Task{Eigen::Vector2d::Zero()}, theta, 3, rng);
  for (const auto& ep : b.episodes) CHECK(ep.rewards.cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("batch CSV export has one row per step") {
  const EnumerableMdp mdp;
  std::ostringstream out;
  write_batch_csv(out, mdp.single(1, 0));
  const std::string text = out.str();
  CHECK(text.rfind("episode,t,s0,s1,a0,reward,label\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("returns_to_go closed forms and brute force") {
  const Eigen::Vector3d r(1, 1, 1);
  CHECK(returns_to_go(r, 0.0) == Eigen::VectorXd(r));
  CHECK(returns_to_go(r, 0.5).isApprox(Eigen::Vector3d(1.75, 1.5, 1.0), 1e-15));

  Rng rng(8);
  std::normal_distribution<double> n;
  Eigen::VectorXd x(50), y(50);
  for (Index i = 0; i < 50; ++i) {
    x[i] = n(rng);
    y[i] = n(rng);
  }
  const Eigen::VectorXd g = returns_to_go(x, 0.97);
  for (Index t = 0; t < 50; ++t) {
    double direct = 0.0;
    for (Index k = t; k < 50; ++k) direct += std::pow(0.97, static_cast<double>(k - t)) * x[k];
    CHECK(g[t] == doctest::Approx(direct).epsilon(1e-12));
  }
  CHECK((returns_to_go(x + y, 0.9) - returns_to_go(x, 0.9) - returns_to_go(y, 0.9)).cwiseAbs().maxCoeff() < 1e-12);
}

namespace {

TrajectoryBatch batch_with_returns(const std::vector<Eigen::VectorXd>& rewards, Index horizon) {
  TrajectoryBatch b;
  b.horizon = horizon;
  b.task = Task{Eigen::VectorXd::Zero(1)};
  for (const auto& r : rewards)
    b.episodes.push_back({Eigen::MatrixXd::Zero(1, r.size()), Eigen::MatrixXd::Zero(1, r.size()), r});
  return b;
}

}  // namespace

TEST_CASE("time baseline reproduces constant and linear returns") {
  // gamma = 0: returns-to-go equal the rewards, so rewards set the regression target directly.
  const Index T = 100;
  Eigen::VectorXd c = Eigen::VectorXd::Constant(T, -3.25);
  const TimeBaseline bc = fit_time_baseline(batch_with_returns({c, c}, T), 0.0);
  for (Index t = 0; t < T; ++t) CHECK(std::abs(bc.predict(t) + 3.25) < 1e-8);

  Eigen::VectorXd lin(T);
  for (Index t = 0; t < T; ++t) lin[t] = 2.0 - 5.0 * static_cast<double>(t) / T;
  const TimeBaseline bl = fit_time_baseline(batch_with_returns({lin, lin, lin}, T), 0.0);
  for (Index t = 0; t < T; ++t) CHECK(std::abs(bl.predict(t) - lin[t]) < 1e-8);
}

TEST_CASE("time baseline matches an independent least-squares solve") {
  Rng rng(21);
  std::normal_distribution<double> n;
  const Index T = 40;
  std::vector<Eigen::VectorXd> eps;
  for (int e = 0; e < 5; ++e) {
    Eigen::VectorXd r(T - e);
    for (Index t = 0; t < r.size(); ++t) r[t] = n(rng);
    eps.push_back(r);
  }
  const TrajectoryBatch b = batch_with_returns(eps, T);
  const TimeBaseline fit = fit_time_baseline(b, 0.95);

  Index rows = 0;
  for (const auto& r : eps) rows += r.size();
  Eigen::MatrixXd F(rows, 3);
  Eigen::VectorXd y(rows);
  Index k = 0;
  for (const auto& r : eps) {
    const Eigen::VectorXd ret = returns_to_go(r, 0.95);
    for (Index t = 0; t < r.size(); ++t, ++k) {
      const double u = static_cast<double>(t) / T;
      F.row(k) << u, u * u, 1.0;
      y[k] = ret[t];
    }
  }
  const Eigen::Vector3d coef = F.colPivHouseholderQr().solve(y);
  for (Index t = 0; t < T; ++t) {
    const double u = static_cast<double>(t) / T;
    CHECK(fit.predict(t) == doctest::Approx(coef.dot(Eigen::Vector3d(u, u * u, 1.0))).epsilon(1e-8));
  }
}

TEST_CASE("advantages: standardization and its degenerate skip") {
  Eigen::VectorXd r(4);
  r << 1, 2, 3, 10;
  const auto adv = compute_advantages(batch_with_returns({r, r.reverse()}, 4), 0.9);
  double sum = 0.0, sq = 0.0;
  for (const auto& a : adv) {
    sum += a.sum();
    sq += a.squaredNorm();
  }
  CHECK(std::abs(sum / 8) < 1e-12);
  CHECK(sq / 8 == doctest::Approx(1.0).epsilon(1e-12));

  const Eigen::VectorXd c = Eigen::VectorXd::Constant(4, 2.0);
  for (const auto& a : compute_advantages(batch_with_returns({c, c}, 4), 0.0)) CHECK(a.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("zero advantages give a zero gradient") {
  GaussianPolicy pi = nav_policy();
  Rng rng(6);
  const ParamVector theta = pi.initial_params(rng);
  const TrajectoryBatch b = collect_rollouts(Environment::point_nav(), pi, Task{Eigen::Vector2d(0.2, 0.1)}, theta, 2, rng);
  std::vector<Eigen::VectorXd> zero;
  for (const auto& ep : b.episodes) zero.push_back(Eigen::VectorXd::Zero(ep.length()));
  CHECK(policy_gradient(pi, b, theta, zero).values.isZero(0.0));
}

TEST_CASE("reinforce_gradient matches finite differences of the surrogate") {
  GaussianPolicy pi = nav_policy();
  Rng rng(13);
  ParamVector theta = pi.initial_params(rng, -0.2);
  const TrajectoryBatch b = collect_rollouts(Environment::point_nav(), pi, Task{Eigen::Vector2d(-0.3, 0.4)}, theta, 3, rng);
  const auto adv = compute_advantages(b, 0.99);
  const ParamVector g = reinforce_gradient(pi, b, theta, 0.99);
  const double h = 1e-6;
  for (Index k = 0; k < theta.size(); ++k) {
    ParamVector up = theta, down = theta;
    up.values[k] += h;
    down.values[k] -= h;
    const double fd = (surrogate_loss(pi, b, up, adv) - surrogate_loss(pi, b, down, adv)) / (2 * h);
    CHECK(std::abs(fd - g.values[k]) / std::max(1.0, std::abs(fd)) < 1e-4);
  }
}

TEST_CASE("enumerable MDP: exhaustive REINFORCE equals the analytic gradient") {
  const EnumerableMdp mdp;
  const TabularSoftmaxPolicy pi(2, 2);
  Rng rng(31);
  const ParamVector theta = init_params(pi.spec(), rng);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd shifted = Eigen::VectorXd::Zero(theta.size());
  for (Index s = 0; s < 2; ++s)
    for (Index a = 0; a < 2; ++a) {
      const double w = mdp.start[s] * pi.probs(theta, EnumerableMdp::state(s))[a];
      const TrajectoryBatch b = mdp.single(s, a);
      auto adv = metaadr::testing::raw_advantages(b);
      expected += w * policy_gradient(pi, b, theta, adv).values;
      adv[0].array() += 4.0;  // constant baseline shift
      shifted += w * policy_gradient(pi, b, theta, adv).values;
    }
  const ParamVector exact = mdp.exact_gradient(pi, theta);
  // The surrogate is a loss, so its gradient is the negated return gradient.
  CHECK((expected + exact.values).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((shifted - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("reinforce_gradient is invariant to a constant reward shift") {
  const EnumerableMdp mdp;
  const TabularSoftmaxPolicy pi(2, 2);
  Rng rng(32);
  const ParamVector theta = init_params(pi.spec(), rng);
  TrajectoryBatch b = mdp.sample(pi, theta, 16, rng);
  const ParamVector g = reinforce_gradient(pi, b, theta, 0.99);
  for (auto& ep : b.episodes) ep.rewards.array() += 7.5;
  CHECK((reinforce_gradient(pi, b, theta, 0.99).values - g.values).cwiseAbs().maxCoeff() < 1e-10);
}
