#pragma once

#include "metaadr/common.hpp"
#include "metaadr/nn.hpp"
#include "metaadr/policy.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <vector>

namespace metaadr {

inline constexpr double kProbabilityFloor = 1e-12;
// Logits are clamped to this magnitude so predictions stay strictly inside (0, 1).
inline constexpr double kLogitClamp = 30.0;

/// Classifier over (state, action) steps; the network emits a logit and the
/// probability that a step comes from post-adaptation rollouts is its sigmoid.
struct DiscriminatorState {
  ParamVector psi;
  double learning_rate = 1e-3;
  Index minibatch_size = 64;

  Index input_size() const { return psi.spec.input_size(); }
};

struct DiscriminatorOptions {
  std::vector<Index> hidden = {32, 32};
  double learning_rate = 1e-3;
  Index minibatch_size = 64;
};

/// Random hidden layers, zero output layer: every prediction starts at exactly 0.5.
DiscriminatorState make_discriminator(Index state_dim, Index action_dim, const DiscriminatorOptions& options,
                                      Rng& rng);

struct StepFeature {
  Eigen::VectorXd vector;  // state then action
  int label = 0;           // 0 pre-adaptation, 1 post-adaptation
};

std::vector<StepFeature> featurize(const TrajectoryBatch& batch);

void write_features_csv(std::ostream& out, const std::vector<StepFeature>& features);
std::vector<StepFeature> read_features_csv(std::istream& in);

double disc_logit(const DiscriminatorState& state, const Eigen::VectorXd& feature);
double disc_predict(const DiscriminatorState& state, const StepFeature& feature);
Eigen::VectorXd disc_predict_all(const DiscriminatorState& state, const std::vector<StepFeature>& features);

/// Mean over post-adaptation steps of log max(p, kProbabilityFloor).
double disc_reward(const DiscriminatorState& state, const TrajectoryBatch& d_post);

/// Averages the post-as-post and pre-as-pre log-likelihoods; high when the two
/// batches are separable in both directions.
double disc_reward_symmetric(const DiscriminatorState& state, const TrajectoryBatch& d_pre,
                             const TrajectoryBatch& d_post);

/// Mean binary cross-entropy of the features under the current parameters.
double disc_loss(const DiscriminatorState& state, const std::vector<StepFeature>& features);

double disc_accuracy(const DiscriminatorState& state, const std::vector<StepFeature>& features);

/// Per-minibatch gradient of the mean cross-entropy.
ParamVector disc_loss_gradient(const DiscriminatorState& state, const std::vector<StepFeature>& features);

/// One SGD step on a single minibatch.
DiscriminatorState disc_sgd_step(const DiscriminatorState& state, const std::vector<StepFeature>& minibatch);

/// Class-balanced minibatches: the larger class is downsampled to the smaller
/// one, both are shuffled, and each minibatch takes equal halves.
std::vector<std::vector<StepFeature>> balanced_minibatches(std::vector<StepFeature> pre,
                                                           std::vector<StepFeature> post, Index minibatch_size,
                                                           Rng& rng);

/// One pass of minibatch SGD over the balanced union of the features.
DiscriminatorState disc_update_features(const DiscriminatorState& state, std::vector<StepFeature> pre,
                                        std::vector<StepFeature> post, Rng& rng);

DiscriminatorState disc_update(const DiscriminatorState& state, const std::vector<TrajectoryBatch>& d_pre,
                               const std::vector<TrajectoryBatch>& d_post, Rng& rng);

}  // namespace metaadr
