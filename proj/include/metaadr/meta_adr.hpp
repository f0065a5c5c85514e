#pragma once

#include "metaadr/config.hpp"
#include "metaadr/discriminator.hpp"
#include "metaadr/env.hpp"
#include "metaadr/maml.hpp"
#include "metaadr/policy.hpp"
#include "metaadr/svpg.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace metaadr {

struct TaskRecord {
  Task task;
  Index particle = -1;  // -1 under uniform sampling
  double pre_return = 0.0;
  double post_return = 0.0;
  double disc_reward = 0.0;  // NaN under uniform sampling
};

struct EpochRecord {
  Index epoch = 0;  // 1-based: number of meta-updates applied after this epoch
  std::vector<TaskRecord> tasks;
  double meta_loss = 0.0;
  Index env_steps = 0;
  Index episodes = 0;
  double disc_accuracy = 0.0;  // accuracy on this epoch's rollouts before the update; NaN for uniform
  std::uint64_t theta_digest = 0;
};

/// Builds the agent policy for an environment and hidden layer widths.
GaussianPolicy make_policy(const Environment& env, const std::vector<Index>& hidden);

/// Epoch-at-a-time driver for both samplers. Uniform sampling draws tasks from
/// the training box; meta_adr lets the particles propose them, scores D_post
/// with the discriminator, then steps the particles and the discriminator.
class Trainer {
 public:
  explicit Trainer(RunConfig config);

  EpochRecord run_epoch();
  bool done() const { return epoch_ >= config_.hyper.epochs; }
  Index epoch() const { return epoch_; }

  const RunConfig& config() const { return config_; }
  const Environment& env() const { return env_; }
  const GaussianPolicy& policy() const { return policy_; }
  const ParamVector& theta() const { return theta_; }
  const ParamVector& initial_theta() const { return initial_theta_; }
  const std::optional<ParticleSet>& particles() const { return particles_; }
  const std::optional<DiscriminatorState>& discriminator() const { return discriminator_; }
  // Mutable access exists for isolation tests that tamper with the teacher.
  std::optional<DiscriminatorState>& discriminator_mut() { return discriminator_; }

  Index total_env_steps() const { return total_steps_; }
  Index total_episodes() const { return total_episodes_; }

 private:
  std::vector<Task> sample_uniform_tasks();

  RunConfig config_;
  Environment env_;
  GaussianPolicy policy_;
  ParamVector theta_;
  ParamVector initial_theta_;
  std::optional<ParticleSet> particles_;
  std::optional<DiscriminatorState> discriminator_;
  Index epoch_ = 0;
  Index total_steps_ = 0;
  Index total_episodes_ = 0;
};

struct RunResult {
  std::filesystem::path run_dir;
  bool converged = true;  // false when training diverged
  std::string failure;
  Index epochs_completed = 0;
  Index total_env_steps = 0;
  Index total_episodes = 0;
  std::vector<EpochRecord> records;
  ParamVector theta;
};

// Run directory layout.
inline constexpr const char* kFinalMarker = "FINAL";
inline constexpr const char* kStatusFile = "status.json";

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, Index epoch);
std::filesystem::path initial_checkpoint_path(const std::filesystem::path& run_dir);

/// Trains according to config.sampler and, when output_dir is set, writes
/// config.json, epochs.csv, tasks.csv, particles.csv and discriminator.csv
/// (meta_adr), checkpoints/, status.json and the FINAL marker on completion.
RunResult run_training(const RunConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

RunResult run_meta_adr(const RunConfig& config);
RunResult run_uniform(const RunConfig& config);

}  // namespace metaadr
