#pragma once

#include "metaadr/common.hpp"
#include "metaadr/env.hpp"
#include "metaadr/maml.hpp"
#include "metaadr/nn.hpp"
#include "metaadr/policy.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

namespace metaadr {

/// Regular lattice of evaluation tasks, inclusive of both ends.
struct GridSpec {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double step = 0.5;

  void validate() const;
  Index points_along(Index dim) const;
  Index cardinality() const;
  /// Cells in row-major order: the last task dimension varies fastest.
  std::vector<Task> tasks() const;
};

/// Pre/post-adaptation returns per grid cell (rows) and seed (columns).
struct EvalGrid {
  std::vector<Task> tasks;
  std::vector<std::uint64_t> seeds;
  Eigen::MatrixXd pre;
  Eigen::MatrixXd post;

  Index cells() const { return static_cast<Index>(tasks.size()); }
  Index seed_count() const { return static_cast<Index>(seeds.size()); }
  Eigen::MatrixXd delta() const { return post - pre; }
};

/// Concatenates single-seed grids over the same cells.
EvalGrid merge_seeds(const std::vector<EvalGrid>& grids);

/// Evaluates the final initial policy on every cell: pre-return under theta,
/// one inner step, post-return under the adapted parameters. theta is not modified.
template <StochasticPolicy P>
EvalGrid eval_grid(const P& policy, const Environment& env, const ParamVector& theta, const std::vector<Task>& tasks,
                   const MetaHyper& hyper, Index eval_episodes, std::uint64_t seed, Index workers = 1) {
  if (eval_episodes < 1) throw InvalidInput("eval_episodes must be positive");
  EvalGrid g{tasks, {seed}, Eigen::MatrixXd(static_cast<Index>(tasks.size()), 1),
             Eigen::MatrixXd(static_cast<Index>(tasks.size()), 1)};
  parallel_for(g.cells(), workers, [&](Index c) {
    const Task& task = tasks[static_cast<std::size_t>(c)];
    Rng rng(derive_seed(seed, Stream::Evaluation, {static_cast<std::uint64_t>(c)}));
    g.pre(c, 0) = collect_rollouts(env, policy, task, theta, eval_episodes, rng).mean_return();
    try {
      const AdaptResult a = inner_adapt(policy, env, theta, task, hyper, rng);
      g.post(c, 0) =
          collect_rollouts(env, policy, task, a.adapted, eval_episodes, rng, BatchLabel::PostAdaptation).mean_return();
    } catch (const DivergedRun&) {
      g.post(c, 0) = std::numeric_limits<double>::quiet_NaN();
    }
  });
  return g;
}

template <StochasticPolicy P>
EvalGrid eval_grid(const P& policy, const Environment& env, const ParamVector& theta, const GridSpec& grid,
                   const MetaHyper& hyper, Index eval_episodes, std::uint64_t seed, Index workers = 1) {
  grid.validate();
  return eval_grid(policy, env, theta, grid.tasks(), hyper, eval_episodes, seed, workers);
}

struct AdaptationDelta {
  Task task;
  std::uint64_t seed = 0;
  double delta = 0.0;
  bool negative = false;
};

/// post - pre for every finite cell and seed; negative deltas are flagged.
std::vector<AdaptationDelta> negative_adaptation(const EvalGrid& grid);
double fraction_negative(const std::vector<AdaptationDelta>& deltas);

/// Cells whose task lies in the training box (1e-9 tolerance).
std::vector<bool> in_distribution_mask(const EvalGrid& grid, const TaskSpace& training_space);

/// Mean post-return over in-distribution cells for each seed; NaN cells make the mean NaN.
Eigen::VectorXd in_distribution_means(const EvalGrid& grid, const TaskSpace& training_space);

/// Fraction of seeds whose value is >= threshold; NaN never qualifies.
double seed_stability(const Eigen::VectorXd& per_seed_values, double threshold);
double seed_stability(const EvalGrid& grid, const TaskSpace& training_space, double threshold);

struct CorrelationReport {
  std::vector<std::pair<double, double>> pairs;  // (post_return, delta)
  std::optional<double> pearson_r;               // empty when either variable has zero variance
};

std::optional<double> pearson(const std::vector<std::pair<double, double>>& pairs);
CorrelationReport correlation_report(const EvalGrid& grid);

struct CurvePoint {
  double target = 0.0;
  Index epoch = 0;
  double post_return = std::numeric_limits<double>::quiet_NaN();
  bool missing = false;
};

/// Post-adaptation return of every checkpoint on every target. A missing
/// checkpoint (empty optional) leaves a recorded gap.
template <StochasticPolicy P>
std::vector<CurvePoint> velocity_curves(const P& policy, const Environment& env,
                                        const std::vector<std::optional<ParamVector>>& checkpoints,
                                        const std::vector<Task>& targets, const MetaHyper& hyper,
                                        Index eval_episodes, std::uint64_t seed, Index workers = 1) {
  const Index epochs = static_cast<Index>(checkpoints.size());
  const Index n = epochs * static_cast<Index>(targets.size());
  std::vector<CurvePoint> out(static_cast<std::size_t>(n));
  parallel_for(n, workers, [&](Index k) {
    const Index e = k / static_cast<Index>(targets.size());
    const auto ti = static_cast<std::size_t>(k % static_cast<Index>(targets.size()));
    CurvePoint& pt = out[static_cast<std::size_t>(k)];
    pt.target = targets[ti].values[0];
    pt.epoch = e;
    const auto& ck = checkpoints[static_cast<std::size_t>(e)];
    if (!ck) {
      pt.missing = true;
      return;
    }
    // Same stream per target across epochs so curves differ only through the parameters.
    Rng rng(derive_seed(seed, Stream::Evaluation, {0xC0FFEEULL, static_cast<std::uint64_t>(ti)}));
    try {
      const AdaptResult a = inner_adapt(policy, env, *ck, targets[ti], hyper, rng);
      pt.post_return = collect_rollouts(env, policy, targets[ti], a.adapted, eval_episodes, rng,
                                        BatchLabel::PostAdaptation)
                           .mean_return();
    } catch (const DivergedRun&) {
      pt.post_return = std::numeric_limits<double>::quiet_NaN();
    }
  });
  return out;
}

/// Trailing moving average over `window` values; only full windows are emitted.
Eigen::VectorXd smooth(const Eigen::VectorXd& values, Index window);

/// Fraction of epoch-to-epoch steps of the smoothed curve that strictly increase.
double monotonicity(const Eigen::VectorXd& values, Index window = 10);

/// Values of one target's curve ordered by epoch.
Eigen::VectorXd curve_for_target(const std::vector<CurvePoint>& points, double target);

void write_grid_csv(std::ostream& out, const EvalGrid& grid);
EvalGrid read_grid_csv(std::istream& in);
void write_correlation_csv(std::ostream& out, const CorrelationReport& report);
void write_curves_csv(std::ostream& out, const std::vector<CurvePoint>& points);
std::vector<CurvePoint> read_curves_csv(std::istream& in);

}  // namespace metaadr
