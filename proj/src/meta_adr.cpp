#include "metaadr/meta_adr.hpp"

#include "metaadr/csv.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace metaadr {

namespace fs = std::filesystem;

GaussianPolicy make_policy(const Environment& env, const std::vector<Index>& hidden) {
  return GaussianPolicy(PolicySpec::make(env.observation_dim(), hidden, env.action_dim()));
}

Trainer::Trainer(RunConfig config)
    : config_(std::move(config)),
      env_(Environment::from_name(config_.env)),
      policy_(make_policy(env_, config_.policy.hidden)) {
  config_.hyper.validate();
  config_.task_space.validate();
  Rng init(derive_seed(config_.seed, Stream::PolicyInit));
  theta_ = policy_.initial_params(init, config_.policy.init_log_std);
  initial_theta_ = theta_;
  if (config_.sampler == Sampler::MetaAdr) {
    if (config_.particles.count != config_.hyper.meta_batch_size)
      throw InvalidInput("meta_adr ties meta_batch_size to the particle count");
    Rng prng(derive_seed(config_.seed, Stream::ParticleInit));
    particles_ = make_particles(config_.task_space, config_.particles, prng);
    Rng drng(derive_seed(config_.seed, Stream::DiscriminatorInit));
    discriminator_ = make_discriminator(env_.observation_dim(), env_.action_dim(), config_.discriminator, drng);
  }
}

std::vector<Task> Trainer::sample_uniform_tasks() {
  Rng rng(derive_seed(config_.seed, Stream::TaskSampling, {static_cast<std::uint64_t>(epoch_)}));
  std::vector<Task> tasks;
  for (Index i = 0; i < config_.hyper.meta_batch_size; ++i) tasks.push_back(sample_task_uniform(config_.task_space, rng));
  return tasks;
}

EpochRecord Trainer::run_epoch() {
  if (done()) throw InvalidInput("training already finished");
  const auto e = static_cast<std::uint64_t>(epoch_);

  std::vector<Task> tasks;
  std::vector<TaskProposal> proposals;
  if (particles_) {
    Rng rng(derive_seed(config_.seed, Stream::Proposals, {e}));
    proposals = propose_tasks(*particles_, rng);
    for (const auto& p : proposals) tasks.push_back(p.task);
  } else {
    tasks = sample_uniform_tasks();
  }
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < tasks.size(); ++i)
    seeds.push_back(derive_seed(config_.seed, Stream::TaskRollouts, {e, static_cast<std::uint64_t>(i)}));

  MetaUpdateResult up = meta_update(policy_, env_, theta_, tasks, seeds, config_.hyper, config_.workers);

  EpochRecord rec;
  rec.meta_loss = up.loss;
  rec.disc_accuracy = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskRollouts& r = up.rollouts[i];
    rec.tasks.push_back({tasks[i], particles_ ? static_cast<Index>(i) : -1, r.d_pre.mean_return(),
                         r.d_post.mean_return(), std::numeric_limits<double>::quiet_NaN()});
    rec.env_steps += r.d_pre.total_steps() + r.d_post.total_steps();
    rec.episodes += static_cast<Index>(r.d_pre.episodes.size() + r.d_post.episodes.size());
  }

  if (particles_) {
    std::vector<double> rewards;
    std::vector<TrajectoryBatch> pre, post;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const TaskRollouts& r = up.rollouts[i];
      const double reward = config_.curriculum_reward == CurriculumReward::Symmetric
                                ? disc_reward_symmetric(*discriminator_, r.d_pre, r.d_post)
                                : disc_reward(*discriminator_, r.d_post);
      rewards.push_back(reward);
      rec.tasks[i].disc_reward = reward;
      pre.push_back(r.d_pre);
      post.push_back(r.d_post);
    }
    std::vector<StepFeature> held_out;
    for (const auto& b : pre)
      for (auto& f : featurize(b)) held_out.push_back(std::move(f));
    for (const auto& b : post)
      for (auto& f : featurize(b)) held_out.push_back(std::move(f));
    rec.disc_accuracy = disc_accuracy(*discriminator_, held_out);

    particles_ = svpg_step(*particles_, proposals, rewards);
    Rng drng(derive_seed(config_.seed, Stream::DiscriminatorSgd, {e}));
    discriminator_ = disc_update(*discriminator_, pre, post, drng);
  }

  theta_ = std::move(up.theta);
  ++epoch_;
  total_steps_ += rec.env_steps;
  total_episodes_ += rec.episodes;
  rec.epoch = epoch_;
  rec.theta_digest = param_digest(theta_);
  return rec;
}

fs::path checkpoint_path(const fs::path& run_dir, Index epoch) {
  return run_dir / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".bin");
}

fs::path initial_checkpoint_path(const fs::path& run_dir) { return run_dir / "checkpoints" / "initial.bin"; }

namespace {

class RunWriter {
 public:
  RunWriter(const RunConfig& cfg, const Trainer& trainer) : cfg_(cfg), dir_(cfg.output_dir) {
    fs::create_directories(dir_ / "checkpoints");
    fs::remove(dir_ / kFinalMarker);
    std::ofstream(dir_ / "config.json") << config_to_json(cfg).dump(2) << '\n';
    const Index dims = cfg.task_space.dim();
    epochs_.open(dir_ / "epochs.csv");
    epochs_ << "epoch,meta_loss,mean_pre_return,mean_post_return,env_steps,episodes,total_env_steps,theta_digest\n";
    tasks_.open(dir_ / "tasks.csv");
    tasks_ << "epoch,task_index,particle";
    for (Index d = 0; d < dims; ++d) tasks_ << ",task_" << d;
    tasks_ << ",pre_return,post_return,disc_reward\n";
    if (cfg.sampler == Sampler::MetaAdr) {
      particles_.open(dir_ / "particles.csv");
      particles_ << "epoch,particle";
      for (Index d = 0; d < dims; ++d) particles_ << ",task_" << d;
      particles_ << ",reward\n";
      disc_.open(dir_ / "discriminator.csv");
      disc_ << "epoch,heldout_accuracy,mean_reward\n";
    }
    if (cfg.checkpoints) write_param_file(initial_checkpoint_path(dir_), trainer.theta(), metadata(0));
  }

  void record(const EpochRecord& rec, const Trainer& trainer) {
    double pre = 0.0, post = 0.0, reward = 0.0;
    for (const auto& t : rec.tasks) {
      pre += t.pre_return;
      post += t.post_return;
      reward += t.disc_reward;
    }
    const double n = static_cast<double>(rec.tasks.size());
    epochs_ << rec.epoch << ',' << csv::real(rec.meta_loss) << ',' << csv::real(pre / n) << ',' << csv::real(post / n)
            << ',' << rec.env_steps << ',' << rec.episodes << ',' << trainer.total_env_steps() << ','
            << to_hex(rec.theta_digest) << '\n';
    for (std::size_t i = 0; i < rec.tasks.size(); ++i) {
      const TaskRecord& t = rec.tasks[i];
      tasks_ << rec.epoch << ',' << i << ',' << t.particle;
      for (Index d = 0; d < t.task.dim(); ++d) tasks_ << ',' << csv::real(t.task.values[d]);
      tasks_ << ',' << csv::real(t.pre_return) << ',' << csv::real(t.post_return) << ',' << csv::real(t.disc_reward)
             << '\n';
      if (particles_.is_open()) {
        particles_ << rec.epoch << ',' << t.particle;
        for (Index d = 0; d < t.task.dim(); ++d) particles_ << ',' << csv::real(t.task.values[d]);
        particles_ << ',' << csv::real(t.disc_reward) << '\n';
      }
    }
    if (disc_.is_open())
      disc_ << rec.epoch << ',' << csv::real(rec.disc_accuracy) << ',' << csv::real(reward / n) << '\n';
    // The final checkpoint is always kept; FINAL points at it.
    if (cfg_.checkpoints || rec.epoch == cfg_.hyper.epochs)
      write_param_file(checkpoint_path(dir_, rec.epoch), trainer.theta(), metadata(rec.epoch));
  }

  void finish(const RunResult& result) {
    epochs_.close();
    tasks_.close();
    if (particles_.is_open()) particles_.close();
    if (disc_.is_open()) disc_.close();
    nlohmann::json status = {{"status", result.converged ? "complete" : "diverged"},
                             {"epochs_completed", result.epochs_completed},
                             {"total_env_steps", result.total_env_steps},
                             {"total_episodes", result.total_episodes},
                             {"failure", result.failure}};
    std::ofstream(dir_ / kStatusFile) << status.dump(2) << '\n';
    if (result.converged) {
      std::ofstream(dir_ / kFinalMarker) << checkpoint_path(fs::path{}, result.epochs_completed).generic_string()
                                         << '\n';
    }
  }

 private:
  nlohmann::json metadata(Index epoch) const {
    const nlohmann::json c = config_to_json(cfg_);
    return {{"epoch", epoch},     {"env", cfg_.env},       {"sampler", to_string(cfg_.sampler)},
            {"seed", cfg_.seed},  {"hyper", c.at("maml")}, {"task_space", c.at("task_space")}};
  }

  const RunConfig& cfg_;
  fs::path dir_;
  std::ofstream epochs_, tasks_, particles_, disc_;
};

}  // namespace

RunResult run_training(const RunConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  Trainer trainer(config);
  RunResult result;
  result.run_dir = config.output_dir;
  std::optional<RunWriter> writer;
  if (!config.output_dir.empty()) writer.emplace(config, trainer);
  while (!trainer.done()) {
    try {
      EpochRecord rec = trainer.run_epoch();
      if (writer) writer->record(rec, trainer);
      if (on_epoch) on_epoch(rec);
      result.records.push_back(std::move(rec));
    } catch (const DivergedRun& e) {
      result.converged = false;
      result.failure = "epoch " + std::to_string(trainer.epoch() + 1) + ": " + e.what();
      break;
    }
  }
  result.epochs_completed = trainer.epoch();
  result.total_env_steps = trainer.total_env_steps();
  result.total_episodes = trainer.total_episodes();
  result.theta = trainer.theta();
  if (writer) writer->finish(result);
  return result;
}

RunResult run_meta_adr(const RunConfig& config) {
  if (config.sampler != Sampler::MetaAdr) throw InvalidInput("run_meta_adr requires sampler = meta_adr");
  return run_training(config);
}

RunResult run_uniform(const RunConfig& config) {
  if (config.sampler != Sampler::Uniform) throw InvalidInput("run_uniform requires sampler = uniform");
  return run_training(config);
}

}  // namespace metaadr
