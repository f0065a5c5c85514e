#pragma once

#include "metaadr/common.hpp"
#include "metaadr/discriminator.hpp"
#include "metaadr/env.hpp"
#include "metaadr/eval.hpp"
#include "metaadr/maml.hpp"
#include "metaadr/svpg.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace metaadr {

inline constexpr int kConfigSchemaVersion = 1;

// Raised for unknown keys, wrong types and out-of-range values; carries the dotted key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& message)
      : std::runtime_error(key_path.empty() ? message : key_path + ": " + message), key_path_(std::move(key_path)) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

enum class Sampler { Uniform, MetaAdr };
enum class CurriculumReward { PostOnly, Symmetric };

std::string to_string(Sampler s);

struct PolicyOptions {
  std::vector<Index> hidden = {100, 100};
  double init_log_std = 0.0;
};

struct EvalOptions {
  GridSpec grid;
  Index episodes = 20;
  double threshold = -20.0;
  std::vector<double> curve_targets;
  Index curve_stride = 1;
};

struct RunConfig {
  std::string env = "pointnav";
  TaskSpace task_space;
  Sampler sampler = Sampler::Uniform;
  MetaHyper hyper;
  PolicyOptions policy;
  ParticleOptions particles;
  DiscriminatorOptions discriminator;
  CurriculumReward curriculum_reward = CurriculumReward::PostOnly;
  EvalOptions eval;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;
  Index workers = 1;
  bool replay = false;
  bool checkpoints = true;
};

/// Every key the config file may contain, with its default value. The schema
/// is closed: keys absent here are rejected.
nlohmann::json default_config_json();

/// Applies a dotted `key=value` override. The value is parsed as JSON when
/// possible and as a bare string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Validates against the schema and fills defaults, including env-dependent ones.
RunConfig config_from_json(const nlohmann::json& config);
nlohmann::json config_to_json(const RunConfig& config);

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace metaadr
