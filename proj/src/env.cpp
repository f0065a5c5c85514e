#include "metaadr/env.hpp"

#include <cmath>

namespace metaadr {

namespace {

constexpr double kSupportBound = 10.0;

const TaskSpace& pointnav_support() {
  static const TaskSpace s = TaskSpace::box(2, -kSupportBound, kSupportBound);
  return s;
}

const TaskSpace& pointvel_support() {
  static const TaskSpace s = TaskSpace::box(1, -kSupportBound, kSupportBound);
  return s;
}

void check_task(const Task& task, const TaskSpace& support, const char* env) {
  if (task.dim() != support.dim())
    throw InvalidTask(std::string(env) + ": task has dimension " + std::to_string(task.dim()) + ", expected " +
                      std::to_string(support.dim()));
  if (!task.values.allFinite() || !support.contains(task))
    throw InvalidTask(std::string(env) + ": task outside the environment's task space");
}

void check_step(const EnvState& state, const Eigen::VectorXd& action, Index action_dim) {
  if (state.done) throw ProtocolError("step called on a finished episode");
  if (action.size() != action_dim) throw InvalidInput("action has wrong dimension");
  if (!action.allFinite()) throw InvalidInput("action is not finite");
}

}  // namespace

void TaskSpace::validate(bool allow_degenerate) const {
  if (lower.size() == 0 || lower.size() != upper.size()) throw InvalidInput("task space bounds have mismatched dimension");
  if (!lower.allFinite() || !upper.allFinite()) throw InvalidInput("task space bounds must be finite");
  for (Index i = 0; i < lower.size(); ++i) {
    if (allow_degenerate ? lower[i] > upper[i] : lower[i] >= upper[i])
      throw InvalidInput("task space requires lower < upper in every dimension");
  }
}

bool TaskSpace::contains(const Task& task, double tol) const {
  if (task.dim() != dim()) return false;
  return ((task.values.array() >= lower.array() - tol) && (task.values.array() <= upper.array() + tol)).all();
}

TaskSpace TaskSpace::box(Index dim, double lo, double hi) {
  return {Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
}

Task sample_task_uniform(const TaskSpace& space, Rng& rng) {
  space.validate(/*allow_degenerate=*/true);
  Task t{Eigen::VectorXd(space.dim())};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < space.dim(); ++i) {
    const double w = space.upper[i] - space.lower[i];
    t.values[i] = w == 0.0 ? space.lower[i] : std::min(space.upper[i], space.lower[i] + w * u(rng));
  }
  return t;
}

EnvState pointnav_reset(const Task& task) {
  check_task(task, pointnav_support(), "pointnav");
  return {Eigen::VectorXd::Zero(2), 0, false};
}

StepResult pointnav_step(const EnvState& state, const Eigen::VectorXd& action, const Task& task) {
  check_step(state, action, 2);
  StepResult r{state, 0.0};
  r.state.observation += action.cwiseMax(-kPointNavActionBound).cwiseMin(kPointNavActionBound);
  r.state.steps_elapsed += 1;
  const double dist = (r.state.observation - task.values).norm();
  r.reward = -dist;
  r.state.done = dist < kPointNavGoalRadius || r.state.steps_elapsed >= kPointNavHorizon;
  return r;
}

EnvState pointvel_reset(const Task& task) {
  check_task(task, pointvel_support(), "pointvel");
  return {Eigen::VectorXd::Zero(1), 0, false};
}

StepResult pointvel_step(const EnvState& state, const Eigen::VectorXd& action, const Task& task) {
  check_step(state, action, 1);
  StepResult r{state, 0.0};
  const double a = std::clamp(action[0], -kPointVelActionBound, kPointVelActionBound);
  r.state.observation[0] += a;
  r.state.steps_elapsed += 1;
  r.reward = -std::abs(r.state.observation[0] - task.values[0]) - kPointVelControlCost * a * a;
  r.state.done = r.state.steps_elapsed >= kPointVelHorizon;
  return r;
}

Environment Environment::point_nav() { return {EnvKind::PointNav, pointnav_support()}; }
Environment Environment::point_vel() { return {EnvKind::PointVel, pointvel_support()}; }

Environment Environment::from_name(const std::string& name) {
  if (name == "pointnav") return point_nav();
  if (name == "pointvel") return point_vel();
  throw InvalidInput("unknown environment '" + name + "'");
}

std::string Environment::name() const { return kind_ == EnvKind::PointNav ? "pointnav" : "pointvel"; }
Index Environment::observation_dim() const { return kind_ == EnvKind::PointNav ? 2 : 1; }
Index Environment::action_dim() const { return kind_ == EnvKind::PointNav ? 2 : 1; }
Index Environment::task_dim() const { return kind_ == EnvKind::PointNav ? 2 : 1; }
Index Environment::horizon() const { return kind_ == EnvKind::PointNav ? kPointNavHorizon : kPointVelHorizon; }

TaskSpace Environment::default_training_space() const {
  return kind_ == EnvKind::PointNav ? TaskSpace::box(2, -0.5, 0.5) : TaskSpace::box(1, 0.0, 3.0);
}

EnvState Environment::reset(const Task& task) const {
  return kind_ == EnvKind::PointNav ? pointnav_reset(task) : pointvel_reset(task);
}

StepResult Environment::step(const EnvState& state, const Eigen::VectorXd& action, const Task& task) const {
  return kind_ == EnvKind::PointNav ? pointnav_step(state, action, task) : pointvel_step(state, action, task);
}

}  // namespace metaadr
