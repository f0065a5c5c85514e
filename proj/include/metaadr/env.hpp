#pragma once

#include "metaadr/common.hpp"

#include <Eigen/Core>

#include <string>

namespace metaadr {

/// A point in task space: a goal position or a target velocity.
struct Task {
  Eigen::VectorXd values;

  Index dim() const { return values.size(); }
  bool operator==(const Task& o) const { return values.size() == o.values.size() && values == o.values; }
};

/// Axis-aligned box of tasks.
struct TaskSpace {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Index dim() const { return lower.size(); }
  Eigen::VectorXd midpoint() const { return 0.5 * (lower + upper); }

  // Requires lower < upper unless `allow_degenerate`, which permits lower == upper.
  void validate(bool allow_degenerate = false) const;
  bool contains(const Task& task, double tol = 0.0) const;

  static TaskSpace box(Index dim, double lo, double hi);
};

Task sample_task_uniform(const TaskSpace& space, Rng& rng);

struct EnvState {
  Eigen::VectorXd observation;
  Index steps_elapsed = 0;
  bool done = false;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
};

// 2D point mass starting at the origin; observation is the position.
inline constexpr double kPointNavActionBound = 0.1;
inline constexpr double kPointNavGoalRadius = 0.01;
inline constexpr Index kPointNavHorizon = 100;

EnvState pointnav_reset(const Task& task);
StepResult pointnav_step(const EnvState& state, const Eigen::VectorXd& action, const Task& task);

// 1D velocity tracking; observation is the current velocity.
inline constexpr double kPointVelActionBound = 0.2;
inline constexpr double kPointVelControlCost = 0.01;
inline constexpr Index kPointVelHorizon = 100;

EnvState pointvel_reset(const Task& task);
StepResult pointvel_step(const EnvState& state, const Eigen::VectorXd& action, const Task& task);

enum class EnvKind { PointNav, PointVel };

/// Value-type handle over one of the desk-scale environments.
class Environment {
 public:
  static Environment point_nav();
  static Environment point_vel();
  static Environment from_name(const std::string& name);

  EnvKind kind() const { return kind_; }
  std::string name() const;
  Index observation_dim() const;
  Index action_dim() const;
  Index task_dim() const;
  Index horizon() const;
  // Tasks the environment accepts at all; training and evaluation boxes live inside it.
  const TaskSpace& support() const { return support_; }
  TaskSpace default_training_space() const;

  EnvState reset(const Task& task) const;
  StepResult step(const EnvState& state, const Eigen::VectorXd& action, const Task& task) const;

 private:
  Environment(EnvKind kind, TaskSpace support) : kind_(kind), support_(std::move(support)) {}

  EnvKind kind_;
  TaskSpace support_;
};

}  // namespace metaadr
