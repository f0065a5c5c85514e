#pragma once

#include "metaadr/common.hpp"
#include "metaadr/env.hpp"
#include "metaadr/nn.hpp"

#include <Eigen/Core>

#include <concepts>
#include <iosfwd>
#include <numbers>
#include <vector>

namespace metaadr {

enum class BatchLabel { PreAdaptation, PostAdaptation };

inline const char* to_string(BatchLabel l) { return l == BatchLabel::PreAdaptation ? "pre" : "post"; }

/// One episode; column t of `states` and `actions` belongs to timestep t.
struct Episode {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;

  Index length() const { return rewards.size(); }
  double total_reward() const { return rewards.sum(); }
};

struct TrajectoryBatch {
  std::vector<Episode> episodes;
  Task task;
  BatchLabel label = BatchLabel::PreAdaptation;
  Index horizon = 0;

  Index total_steps() const;
  /// Mean undiscounted episode return.
  double mean_return() const;
  void validate() const;
};

/// One CSV row per timestep: episode,t,s_0..,a_0..,reward,label.
void write_batch_csv(std::ostream& out, const TrajectoryBatch& batch, bool header = true);

// ---------------------------------------------------------------------------
// Policies

/// A stochastic policy over a flat parameter vector. The gradient hook adds
/// sum_t weights[t] * d log pi(a_t | s_t) / d params into `grad`.
template <typename P>
concept StochasticPolicy = requires(const P& p, const ParamVector& params, const Eigen::VectorXd& state,
                                    const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                    const Eigen::VectorXd& weights, Eigen::VectorXd& grad, Rng& rng) {
  { p.sample_action(params, state, rng) } -> std::convertible_to<Eigen::VectorXd>;
  { p.log_probs(params, states, actions) } -> std::convertible_to<Eigen::VectorXd>;
  p.accumulate_log_prob_gradient(params, states, actions, weights, grad);
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct PolicySpec {
  MlpSpec mlp;  // state -> action mean; trailing holds one log-std per action dimension

  static PolicySpec make(Index observation_dim, const std::vector<Index>& hidden, Index action_dim);
  Index observation_dim() const { return mlp.input_size(); }
  Index action_dim() const { return mlp.output_size(); }
};

/// Diagonal Gaussian policy with an MLP mean and learnable, clamped log-std.
class GaussianPolicy {
 public:
  explicit GaussianPolicy(PolicySpec spec);

  const PolicySpec& spec() const { return spec_; }
  ParamVector initial_params(Rng& rng, double init_log_std = 0.0) const;

  Eigen::MatrixXd means(const ParamVector& params, const Eigen::MatrixXd& states) const;
  Eigen::VectorXd mean(const ParamVector& params, const Eigen::VectorXd& state) const;
  /// Log-std after clamping to [kLogStdMin, kLogStdMax].
  Eigen::VectorXd log_std(const ParamVector& params) const;

  double log_prob(const ParamVector& params, const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;
  Eigen::VectorXd log_probs(const ParamVector& params, const Eigen::MatrixXd& states,
                            const Eigen::MatrixXd& actions) const;
  void accumulate_log_prob_gradient(const ParamVector& params, const Eigen::MatrixXd& states,
                                    const Eigen::MatrixXd& actions, const Eigen::VectorXd& weights,
                                    Eigen::VectorXd& grad) const;
  Eigen::VectorXd sample_action(const ParamVector& params, const Eigen::VectorXd& state, Rng& rng) const;

 private:
  void check(const ParamVector& params) const;

  PolicySpec spec_;
};

static_assert(StochasticPolicy<GaussianPolicy>);

/// Log density of a diagonal Gaussian, summed over dimensions.
inline double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                   const Eigen::VectorXd& log_std) {
  const Eigen::ArrayXd z = (x - mean).array() / log_std.array().exp();
  return (-0.5 * z.square() - log_std.array() - 0.5 * std::log(2.0 * std::numbers::pi)).sum();
}

double gaussian_log_prob(const GaussianPolicy& policy, const ParamVector& params, const Eigen::VectorXd& state,
                         const Eigen::VectorXd& action);
Eigen::VectorXd sample_action(const GaussianPolicy& policy, const ParamVector& params,
                              const Eigen::VectorXd& state, Rng& rng);

// ---------------------------------------------------------------------------
// Rollouts

template <StochasticPolicy P>
Episode run_episode(const Environment& env, const P& policy, const Task& task, const ParamVector& params,
                    Rng& rng) {
  const Index horizon = env.horizon();
  Eigen::MatrixXd states(env.observation_dim(), horizon);
  Eigen::MatrixXd actions(env.action_dim(), horizon);
  Eigen::VectorXd rewards(horizon);
  EnvState s = env.reset(task);
  Index t = 0;
  while (!s.done) {
    states.col(t) = s.observation;
    Eigen::VectorXd a = policy.sample_action(params, s.observation, rng);
    StepResult r = env.step(s, a, task);
    actions.col(t) = a;
    rewards[t] = r.reward;
    s = std::move(r.state);
    ++t;
  }
  return {states.leftCols(t), actions.leftCols(t), rewards.head(t)};
}

template <StochasticPolicy P>
TrajectoryBatch collect_rollouts(const Environment& env, const P& policy, const Task& task,
                                 const ParamVector& params, Index n_episodes, Rng& rng,
                                 BatchLabel label = BatchLabel::PreAdaptation) {
  if (n_episodes < 1) throw InvalidInput("collect_rollouts needs at least one episode");
  TrajectoryBatch batch{{}, task, label, env.horizon()};
  batch.episodes.reserve(static_cast<std::size_t>(n_episodes));
  for (Index e = 0; e < n_episodes; ++e) batch.episodes.push_back(run_episode(env, policy, task, params, rng));
  return batch;
}

// ---------------------------------------------------------------------------
// Returns, baseline, advantages

/// R_t = sum_{k >= t} gamma^(k - t) r_k.
Eigen::VectorXd returns_to_go(const Eigen::VectorXd& rewards, double gamma);

inline constexpr double kBaselineRidge = 1e-5;

/// Least-squares fit of returns-to-go on (t/T, (t/T)^2, 1).
struct TimeBaseline {
  Eigen::Vector3d coef = Eigen::Vector3d::Zero();
  double horizon = 1.0;

  static Eigen::Vector3d features(Index t, double horizon);
  double predict(Index t) const { return features(t, horizon).dot(coef); }
};

TimeBaseline fit_time_baseline(const TrajectoryBatch& batch, double gamma);

inline constexpr double kStandardizeMinVariance = 1e-8;

struct AdvantageOptions {
  bool use_baseline = true;
  bool standardize = true;
};

/// Per-episode advantages R_t - b(t), standardized across the batch unless its
/// variance is below kStandardizeMinVariance.
std::vector<Eigen::VectorXd> compute_advantages(const TrajectoryBatch& batch, double gamma,
                                                const AdvantageOptions& options = {});

/// L(params) = -(1/E) sum_e sum_t log pi(a_t|s_t) * A_t, advantages held fixed.
template <StochasticPolicy P>
double surrogate_loss(const P& policy, const TrajectoryBatch& batch, const ParamVector& params,
                      const std::vector<Eigen::VectorXd>& advantages) {
  double total = 0.0;
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const Episode& ep = batch.episodes[e];
    total += policy.log_probs(params, ep.states, ep.actions).dot(advantages[e]);
  }
  return -total / static_cast<double>(batch.episodes.size());
}

/// Gradient of surrogate_loss with respect to params.
template <StochasticPolicy P>
ParamVector policy_gradient(const P& policy, const TrajectoryBatch& batch, const ParamVector& params,
                            const std::vector<Eigen::VectorXd>& advantages) {
  if (batch.episodes.empty()) throw InvalidInput("policy_gradient on an empty batch");
  if (advantages.size() != batch.episodes.size()) throw InvalidInput("one advantage vector per episode required");
  ParamVector grad(params.spec);
  const double scale = -1.0 / static_cast<double>(batch.episodes.size());
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const Episode& ep = batch.episodes[e];
    policy.accumulate_log_prob_gradient(params, ep.states, ep.actions, scale * advantages[e], grad.values);
  }
  return grad;
}

/// REINFORCE estimate of the task loss gradient with a fitted time baseline.
template <StochasticPolicy P>
ParamVector reinforce_gradient(const P& policy, const TrajectoryBatch& batch, const ParamVector& params,
                               double gamma, const AdvantageOptions& options = {}) {
  return policy_gradient(policy, batch, params, compute_advantages(batch, gamma, options));
}

}  // namespace metaadr
