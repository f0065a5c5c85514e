#include "metaadr/maml.hpp"

#include "metaadr/csv.hpp"

#include "../support/test_policies.hpp"

#include <doctest.h>

#include <limits>
#include <sstream>

using namespace metaadr;
using metaadr::testing::DigestPolicy;
using metaadr::testing::EnumerableMdp;
using metaadr::testing::TabularSoftmaxPolicy;

namespace {

MetaHyper small_hyper() {
  MetaHyper h;
  h.meta_batch_size = 3;
  h.inner_episodes = 2;
  h.outer_episodes = 3;
  return h;
}

struct Fixture {
  Environment env = Environment::point_nav();
  GaussianPolicy pi{PolicySpec::make(2, {6}, 2)};
  ParamVector theta;
  Fixture() {
    Rng rng(99);
    theta = pi.initial_params(rng);
  }
};

}  // namespace

TEST_CASE("alpha = 0 leaves the parameters unchanged") {
  Fixture f;
  MetaHyper h = small_hyper();
  h.alpha = 0.0;
  Rng rng(1);
  CHECK(inner_adapt(f.pi, f.env, f.theta, Task{Eigen::Vector2d(0.2, 0.2)}, h, rng).adapted.values == f.theta.values);
}

TEST_CASE("zero-advantage batch gives theta' = theta") {
  const EnumerableMdp mdp;
  const TabularSoftmaxPolicy pi(2, 2);
  Rng rng(2);
  const ParamVector theta = init_params(pi.spec(), rng);
  TrajectoryBatch b = mdp.single(0, 1);
  b.episodes.push_back(b.episodes.front());
  const ParamVector g = reinforce_gradient(pi, b, theta, 0.99);
  CHECK(g.values.isZero(0.0));
  CHECK(adapt_step(theta, g, 0.1).values == theta.values);
}

TEST_CASE("adapt_step with the exact gradient matches hand arithmetic") {
  const EnumerableMdp mdp;
  const TabularSoftmaxPolicy pi(2, 2);
  Rng rng(3);
  const ParamVector theta = init_params(pi.spec(), rng);
  const ParamVector g = mdp.exact_gradient(pi, theta);
  const ParamVector next = adapt_step(theta, g, 0.1);
  for (Index k = 0; k < theta.size(); ++k) CHECK(next.values[k] == theta.values[k] - 0.1 * g.values[k]);

  ParamVector bad = g;
  bad.values[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adapt_step(theta, bad, 0.1), DivergedRun);
}

TEST_CASE("d_pre is collected under theta and d_post under theta'") {
  const Environment env = Environment::point_nav();
  const DigestPolicy pi(2);
  ParamVector theta(MlpSpec{{1, 1}});
  theta.values << 0.3, -0.1;
  const MetaHyper h = small_hyper();
  Rng rng(4);
  const TaskRollouts r = maml_rl_subroutine(pi, env, theta, Task{Eigen::Vector2d(0.4, 0.0)}, h, rng);
  CHECK(r.d_pre.label == BatchLabel::PreAdaptation);
  CHECK(r.d_post.label == BatchLabel::PostAdaptation);
  CHECK(static_cast<Index>(r.d_pre.episodes.size()) == h.inner_episodes);
  CHECK(static_cast<Index>(r.d_post.episodes.size()) == h.outer_episodes);
  CHECK_FALSE(r.adapted.values == theta.values);
  for (const auto& ep : r.d_pre.episodes) CHECK((ep.actions.row(0).array() == DigestPolicy::tag(theta)).all());
  for (const auto& ep : r.d_post.episodes) CHECK((ep.actions.row(0).array() == DigestPolicy::tag(r.adapted)).all());
}

TEST_CASE("identical tasks on identical streams adapt identically and the loss is additive") {
  Fixture f;
  const MetaHyper h = small_hyper();
  const Task t{Eigen::Vector2d(-0.2, 0.3)};
  const MetaLoss one = meta_loss(f.pi, f.env, f.theta, {t}, {17}, h);
  const MetaLoss two = meta_loss(f.pi, f.env, f.theta, {t, t}, {17, 17}, h);
  CHECK(two.rollouts[0].adapted.values == two.rollouts[1].adapted.values);
  CHECK(two.loss == 2.0 * one.loss);
}

namespace {

// Surrogate recomputed from a CSV export with the Gaussian density written out by hand.
double surrogate_from_csv(const std::string& text, const GaussianPolicy& pi, const ParamVector& params,
                          const std::vector<Eigen::VectorXd>& adv) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  const Eigen::VectorXd ls = pi.log_std(params);
  double total = 0.0;
  Index episodes = 0;
  while (std::getline(in, line)) {
    const auto c = csv::split(line);
    const auto e = static_cast<std::size_t>(std::stoul(c[0]));
    const auto t = static_cast<Index>(std::stol(c[1]));
    episodes = std::max<Index>(episodes, static_cast<Index>(e) + 1);
    const Eigen::Vector2d s(csv::parse_real(c[2]), csv::parse_real(c[3]));
    const Eigen::Vector2d a(csv::parse_real(c[4]), csv::parse_real(c[5]));
    const Eigen::VectorXd mu = pi.mean(params, s);
    double lp = 0.0;
    for (Index d = 0; d < 2; ++d) {
      const double sd = std::exp(ls[d]);
      lp += -0.5 * std::pow((a[d] - mu[d]) / sd, 2) - ls[d] - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    total += lp * adv[e][t];
  }
  return -total / static_cast<double>(episodes);
}

}  // namespace

TEST_CASE("meta-loss is recomputable from exported batches") {
  Fixture f;
  const MetaHyper h = small_hyper();
  const std::vector<Task> tasks{Task{Eigen::Vector2d(0.1, 0.4)}, Task{Eigen::Vector2d(-0.5, -0.2)}};
  const MetaLoss m = meta_loss(f.pi, f.env, f.theta, tasks, {5, 6}, h);
  double recomputed = 0.0;
  for (const auto& r : m.rollouts) {
    std::ostringstream out;
    write_batch_csv(out, r.d_post);
    recomputed += surrogate_from_csv(out.str(), f.pi, r.adapted, compute_advantages(r.d_post, h.gamma));
  }
  CHECK(recomputed == doctest::Approx(m.loss).epsilon(1e-10));
}

TEST_CASE("first-order update direction matches an independent recomputation") {
  Fixture f;
  const MetaHyper h = small_hyper();
  const std::vector<Task> tasks{Task{Eigen::Vector2d(0.3, 0.1)}, Task{Eigen::Vector2d(0.0, -0.4)},
                                Task{Eigen::Vector2d(-0.1, 0.2)}};
  const MetaUpdateResult u = meta_update(f.pi, f.env, f.theta, tasks, {1, 2, 3}, h);
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(f.theta.size());
  for (const auto& r : u.rollouts) dir += reinforce_gradient(f.pi, r.d_post, r.adapted, h.gamma).values;
  CHECK((dir - u.direction.values).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((u.theta.values - (f.theta.values - h.beta * dir)).cwiseAbs().maxCoeff() < 1e-10);

  MetaHyper frozen = h;
  frozen.beta = 0.0;
  CHECK(meta_update(f.pi, f.env, f.theta, tasks, {1, 2, 3}, frozen).theta.values == f.theta.values);
}

TEST_CASE("worker count does not change results") {
  Fixture f;
  const MetaHyper h = small_hyper();
  const std::vector<Task> tasks{Task{Eigen::Vector2d(0.3, 0.1)}, Task{Eigen::Vector2d(0.0, -0.4)},
                                Task{Eigen::Vector2d(-0.1, 0.2)}, Task{Eigen::Vector2d(0.2, 0.2)}};
  const auto a = meta_update(f.pi, f.env, f.theta, tasks, {1, 2, 3, 4}, h, 1);
  const auto b = meta_update(f.pi, f.env, f.theta, tasks, {1, 2, 3, 4}, h, 3);
  CHECK(a.theta.values == b.theta.values);
  CHECK(a.loss == b.loss);
}

TEST_CASE("MetaHyper validation") {
  MetaHyper h;
  CHECK_NOTHROW(h.validate());
  CHECK(h.epochs == 200);
  h.meta_batch_size = 0;
  CHECK_THROWS_AS(h.validate(), InvalidInput);
}
