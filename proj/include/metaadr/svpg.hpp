#pragma once

#include "metaadr/common.hpp"
#include "metaadr/env.hpp"
#include "metaadr/nn.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace metaadr {

inline constexpr double kBandwidthFloor = 1e-8;

/// Ensemble of task-proposal distributions. Each particle is a small MLP fed a
/// constant unit input; its output is the pre-squash Gaussian mean, and its
/// trailing parameters are the per-dimension log-std.
struct ParticleSet {
  std::vector<ParamVector> particles;
  // Values a particle is reset to when its update turns non-finite.
  std::vector<ParamVector> initial;
  double temperature = 10.0;
  std::optional<double> bandwidth;  // empty: median heuristic
  double learning_rate = 3e-3;
  TaskSpace task_space;
  Index reinitialized = 0;

  Index size() const { return static_cast<Index>(particles.size()); }
  void validate() const;
};

struct ParticleOptions {
  Index count = 10;
  std::vector<Index> hidden = {16};
  double temperature = 10.0;
  std::optional<double> bandwidth;
  double learning_rate = 3e-3;
  double init_log_std = 0.0;
};

MlpSpec particle_spec(Index task_dim, const std::vector<Index>& hidden);
ParticleSet make_particles(const TaskSpace& space, const ParticleOptions& options, Rng& rng);

struct TaskProposal {
  Task task;
  Index particle_index = 0;
  double log_prob = 0.0;
  Eigen::VectorXd pre_squash;
};

/// Pre-squash mean of one particle.
Eigen::VectorXd particle_mean(const ParamVector& particle);

/// Density of `task` under one particle, including the tanh and affine change of variables.
double proposal_log_prob(const ParamVector& particle, const TaskSpace& space, const Eigen::VectorXd& pre_squash);

/// Maps pre-squash samples into the open task box.
Task squash_to_space(const Eigen::VectorXd& pre_squash, const TaskSpace& space);

std::vector<TaskProposal> propose_tasks(const ParticleSet& set, Rng& rng);

double rbf_kernel(const ParamVector& x, const ParamVector& y, double h);

/// Median pairwise squared distance over log(N + 1), floored at kBandwidthFloor.
double median_bandwidth(const ParticleSet& set);

/// g_j = d log pi_j(proposal_j) / d phi_j * (r_j - mean r).
std::vector<Eigen::VectorXd> particle_policy_gradients(const ParticleSet& set,
                                                       const std::vector<TaskProposal>& proposals,
                                                       const std::vector<double>& rewards);

/// Stein update from per-particle ascent directions, computed on a snapshot of
/// every particle before any is moved.
ParticleSet svpg_apply(const ParticleSet& set, const std::vector<Eigen::VectorXd>& gradients);

ParticleSet svpg_step(const ParticleSet& set, const std::vector<TaskProposal>& proposals,
                      const std::vector<double>& rewards);

}  // namespace metaadr
