#pragma once

#include "metaadr/common.hpp"
#include "metaadr/env.hpp"
#include "metaadr/nn.hpp"
#include "metaadr/policy.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace metaadr {

enum class OuterOptimizer { FirstOrder };

/// Meta-training hyperparameters. Defaults are the PointNav reference setup.
struct MetaHyper {
  double alpha = 0.1;   // inner step size
  double beta = 0.01;   // outer step size
  Index meta_batch_size = 20;
  Index inner_episodes = 20;
  Index outer_episodes = 20;
  Index epochs = 200;
  double gamma = 0.99;
  OuterOptimizer outer = OuterOptimizer::FirstOrder;

  void validate() const;
};

struct AdaptResult {
  ParamVector adapted;
  TrajectoryBatch d_pre;
};

struct TaskRollouts {
  TrajectoryBatch d_pre;
  TrajectoryBatch d_post;
  ParamVector adapted;
};

/// theta - alpha * gradient; throws DivergedRun if the result is not finite.
ParamVector adapt_step(const ParamVector& theta, const ParamVector& gradient, double alpha);

/// One REINFORCE gradient step on rollouts collected under theta.
template <StochasticPolicy P>
AdaptResult inner_adapt(const P& policy, const Environment& env, const ParamVector& theta, const Task& task,
                        const MetaHyper& hyper, Rng& rng) {
  TrajectoryBatch d_pre = collect_rollouts(env, policy, task, theta, hyper.inner_episodes, rng,
                                           BatchLabel::PreAdaptation);
  const ParamVector grad = reinforce_gradient(policy, d_pre, theta, hyper.gamma);
  if (!grad.all_finite()) throw DivergedRun("non-finite inner gradient");
  return {adapt_step(theta, grad, hyper.alpha), std::move(d_pre)};
}

/// Adapts to `task`, then collects post-adaptation rollouts under the adapted parameters.
template <StochasticPolicy P>
TaskRollouts maml_rl_subroutine(const P& policy, const Environment& env, const ParamVector& theta,
                                const Task& task, const MetaHyper& hyper, Rng& rng) {
  AdaptResult a = inner_adapt(policy, env, theta, task, hyper, rng);
  TrajectoryBatch d_post = collect_rollouts(env, policy, task, a.adapted, hyper.outer_episodes, rng,
                                            BatchLabel::PostAdaptation);
  return {std::move(a.d_pre), std::move(d_post), std::move(a.adapted)};
}

/// Runs the subroutine for every task, each on its own rng stream.
template <StochasticPolicy P>
std::vector<TaskRollouts> adapt_all(const P& policy, const Environment& env, const ParamVector& theta,
                                    const std::vector<Task>& tasks, const std::vector<std::uint64_t>& seeds,
                                    const MetaHyper& hyper, Index workers = 1) {
  if (tasks.empty()) throw InvalidInput("at least one task required");
  if (seeds.size() != tasks.size()) throw InvalidInput("one rng seed per task required");
  std::vector<TaskRollouts> out(tasks.size());
  parallel_for(static_cast<Index>(tasks.size()), workers, [&](Index i) {
    Rng rng(seeds[static_cast<std::size_t>(i)]);
    out[static_cast<std::size_t>(i)] = maml_rl_subroutine(policy, env, theta, tasks[static_cast<std::size_t>(i)],
                                                          hyper, rng);
  });
  return out;
}

struct MetaLoss {
  double loss = 0.0;
  std::vector<TaskRollouts> rollouts;
};

/// Sum over tasks of the post-adaptation surrogate loss under each adapted policy.
template <StochasticPolicy P>
double post_adaptation_loss(const P& policy, const std::vector<TaskRollouts>& rollouts, double gamma) {
  double loss = 0.0;
  for (const TaskRollouts& r : rollouts)
    loss += surrogate_loss(policy, r.d_post, r.adapted, compute_advantages(r.d_post, gamma));
  return loss;
}

template <StochasticPolicy P>
MetaLoss meta_loss(const P& policy, const Environment& env, const ParamVector& theta, const std::vector<Task>& tasks,
                   const std::vector<std::uint64_t>& seeds, const MetaHyper& hyper, Index workers = 1) {
  MetaLoss m;
  m.rollouts = adapt_all(policy, env, theta, tasks, seeds, hyper, workers);
  m.loss = post_adaptation_loss(policy, m.rollouts, hyper.gamma);
  if (!std::isfinite(m.loss)) throw DivergedRun("non-finite meta-loss");
  return m;
}

struct MetaUpdateResult {
  ParamVector theta;
  ParamVector direction;  // sum of post-adaptation gradients
  double loss = 0.0;
  std::vector<TaskRollouts> rollouts;
};

/// First-order meta step: gradients taken at each adapted theta'_i, applied to theta.
template <StochasticPolicy P>
MetaUpdateResult first_order_step(const P& policy, const ParamVector& theta, std::vector<TaskRollouts> rollouts,
                                  const MetaHyper& hyper, Index workers = 1) {
  std::vector<ParamVector> grads(rollouts.size());
  parallel_for(static_cast<Index>(rollouts.size()), workers, [&](Index i) {
    const TaskRollouts& r = rollouts[static_cast<std::size_t>(i)];
    grads[static_cast<std::size_t>(i)] = reinforce_gradient(policy, r.d_post, r.adapted, hyper.gamma);
  });
  MetaUpdateResult out;
  out.direction = ParamVector(theta.spec);
  for (const ParamVector& g : grads) out.direction.values += g.values;
  if (!out.direction.all_finite()) throw DivergedRun("non-finite meta-gradient");
  out.theta = axpy_params(-hyper.beta, out.direction, theta);
  if (!out.theta.all_finite()) throw DivergedRun("non-finite meta-parameters");
  out.loss = post_adaptation_loss(policy, rollouts, hyper.gamma);
  if (!std::isfinite(out.loss)) throw DivergedRun("non-finite meta-loss");
  out.rollouts = std::move(rollouts);
  return out;
}

template <StochasticPolicy P>
MetaUpdateResult meta_update(const P& policy, const Environment& env, const ParamVector& theta,
                             const std::vector<Task>& tasks, const std::vector<std::uint64_t>& seeds,
                             const MetaHyper& hyper, Index workers = 1) {
  return first_order_step(policy, theta, adapt_all(policy, env, theta, tasks, seeds, hyper, workers), hyper,
                          workers);
}

}  // namespace metaadr
