#include "metaadr/config.hpp"

#include <fstream>
#include <sstream>

namespace metaadr {

using nlohmann::json;

std::string to_string(Sampler s) { return s == Sampler::Uniform ? "uniform" : "meta_adr"; }

namespace {

// Leaf type descriptors. A trailing '?' admits null.
const json& schema() {
  static const json s = json::parse(R"({
    "schema_version": "uint",
    "env": "enum:pointnav|pointvel",
    "sampler": "enum:uniform|meta_adr",
    "seed": "uint",
    "output_dir": "string",
    "task_space": {"lower": "number[]?", "upper": "number[]?"},
    "policy": {"hidden": "uint[]", "init_log_std": "number"},
    "maml": {
      "alpha": "number", "beta": "number", "meta_batch_size": "uint", "inner_episodes": "uint",
      "outer_episodes": "uint", "epochs": "uint", "gamma": "number", "outer_optimizer": "enum:first_order"
    },
    "svpg": {
      "particles": "uint?", "temperature": "number", "learning_rate": "number",
      "bandwidth": "bandwidth", "hidden": "uint[]", "init_log_std": "number"
    },
    "discriminator": {
      "hidden": "uint[]", "learning_rate": "number", "minibatch_size": "uint", "reward": "enum:post_only|symmetric"
    },
    "eval": {
      "grid": {"lower": "number[]?", "upper": "number[]?", "step": "number?"},
      "episodes": "uint", "threshold": "number", "curve_targets": "number[]?", "curve_stride": "uint"
    },
    "runtime": {"workers": "uint", "replay": "bool", "checkpoints": "bool"}
  })");
  return s;
}

bool is_number(const json& v) { return v.is_number(); }
bool is_uint(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); }

void check_leaf(const json& value, std::string type, const std::string& path) {
  const bool nullable = !type.empty() && type.back() == '?';
  if (nullable) type.pop_back();
  if (value.is_null()) {
    if (nullable) return;
    throw ConfigError(path, "must not be null");
  }
  auto fail = [&](const std::string& what) { throw ConfigError(path, "expected " + what + ", got " + value.dump()); };
  if (type == "string") {
    if (!value.is_string()) fail("a string");
  } else if (type == "number") {
    if (!is_number(value)) fail("a number");
  } else if (type == "uint") {
    if (!is_uint(value)) fail("a non-negative integer");
  } else if (type == "bool") {
    if (!value.is_boolean()) fail("a boolean");
  } else if (type == "number[]" || type == "uint[]") {
    if (!value.is_array()) fail("an array");
    for (const auto& e : value)
      if (type == "number[]" ? !is_number(e) : !is_uint(e)) fail(type == "number[]" ? "numbers" : "non-negative integers");
  } else if (type == "bandwidth") {
    if (!(value.is_number() || (value.is_string() && value.get<std::string>() == "median")))
      fail("a positive number or \"median\"");
  } else if (type.rfind("enum:", 0) == 0) {
    if (!value.is_string()) fail("a string");
    std::stringstream ss(type.substr(5));
    std::string option;
    while (std::getline(ss, option, '|'))
      if (option == value.get<std::string>()) return;
    fail("one of " + type.substr(5));
  }
}

void validate(const json& value, const json& sch, const std::string& path) {
  if (sch.is_object()) {
    if (!value.is_object()) throw ConfigError(path, "expected an object");
    for (const auto& [key, v] : value.items()) {
      const std::string child = path.empty() ? key : path + "." + key;
      if (!sch.contains(key)) throw ConfigError(child, "unknown configuration key '" + key + "'");
      validate(v, sch.at(key), child);
    }
    return;
  }
  check_leaf(value, sch.get<std::string>(), path);
}

Eigen::VectorXd to_vector(const json& arr) {
  const auto v = arr.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

json from_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::vector<Index> to_index_vector(const json& arr) { return arr.get<std::vector<Index>>(); }

// Recursive merge that, unlike merge_patch, keeps explicit nulls.
void overlay(json& base, const json& patch) {
  for (const auto& [key, v] : patch.items()) {
    if (v.is_object() && base.contains(key) && base[key].is_object())
      overlay(base[key], v);
    else
      base[key] = v;
  }
}

}  // namespace

json default_config_json() {
  return json::parse(R"({
    "schema_version": 1,
    "env": "pointnav",
    "sampler": "uniform",
    "seed": 1,
    "output_dir": "runs/default",
    "task_space": {"lower": null, "upper": null},
    "policy": {"hidden": [100, 100], "init_log_std": 0.0},
    "maml": {
      "alpha": 0.02, "beta": 0.00025, "meta_batch_size": 20, "inner_episodes": 20, "outer_episodes": 20,
      "epochs": 200, "gamma": 0.99, "outer_optimizer": "first_order"
    },
    "svpg": {
      "particles": null, "temperature": 10.0, "learning_rate": 0.003, "bandwidth": "median",
      "hidden": [16], "init_log_std": 0.0
    },
    "discriminator": {"hidden": [32, 32], "learning_rate": 0.001, "minibatch_size": 64, "reward": "post_only"},
    "eval": {
      "grid": {"lower": null, "upper": null, "step": null},
      "episodes": 20, "threshold": -20.0, "curve_targets": null, "curve_stride": 1
    },
    "runtime": {"workers": 1, "replay": false, "checkpoints": true}
  })");
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("", "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  const json* sch = &schema();
  std::string path;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    path += (i ? "." : "") + parts[i];
    if (!sch->is_object() || !sch->contains(parts[i]))
      throw ConfigError(path, "unknown configuration key '" + parts[i] + "'");
    sch = &sch->at(parts[i]);
    if (!node->is_object()) *node = json::object();
    node = &(*node)[parts[i]];
  }
  if (sch->is_object()) throw ConfigError(path, "override must name a leaf key");
  check_leaf(value, sch->get<std::string>(), path);
  *node = std::move(value);
}

RunConfig config_from_json(const json& user) {
  validate(user, schema(), "");
  json cfg = default_config_json();
  overlay(cfg, user);

  if (cfg.at("schema_version").get<int>() != kConfigSchemaVersion)
    throw ConfigError("schema_version", "unsupported schema version " + cfg.at("schema_version").dump());

  RunConfig rc;
  rc.env = cfg.at("env").get<std::string>();
  const Environment env = Environment::from_name(rc.env);
  rc.sampler = cfg.at("sampler").get<std::string>() == "uniform" ? Sampler::Uniform : Sampler::MetaAdr;
  rc.seed = cfg.at("seed").get<std::uint64_t>();
  rc.output_dir = cfg.at("output_dir").get<std::string>();

  const json& ts = cfg.at("task_space");
  if (ts.at("lower").is_null() != ts.at("upper").is_null())
    throw ConfigError("task_space", "lower and upper must be given together");
  rc.task_space = ts.at("lower").is_null() ? env.default_training_space()
                                           : TaskSpace{to_vector(ts.at("lower")), to_vector(ts.at("upper"))};
  try {
    rc.task_space.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("task_space", e.what());
  }
  if (rc.task_space.dim() != env.task_dim())
    throw ConfigError("task_space", "dimension does not match environment " + rc.env);
  for (Index d = 0; d < rc.task_space.dim(); ++d)
    if (rc.task_space.lower[d] < env.support().lower[d] || rc.task_space.upper[d] > env.support().upper[d])
      throw ConfigError("task_space", "outside the environment's support");

  const json& pol = cfg.at("policy");
  rc.policy.hidden = to_index_vector(pol.at("hidden"));
  rc.policy.init_log_std = pol.at("init_log_std").get<double>();

  const json& m = cfg.at("maml");
  rc.hyper.alpha = m.at("alpha").get<double>();
  rc.hyper.beta = m.at("beta").get<double>();
  rc.hyper.meta_batch_size = m.at("meta_batch_size").get<Index>();
  rc.hyper.inner_episodes = m.at("inner_episodes").get<Index>();
  rc.hyper.outer_episodes = m.at("outer_episodes").get<Index>();
  rc.hyper.epochs = m.at("epochs").get<Index>();
  rc.hyper.gamma = m.at("gamma").get<double>();
  try {
    rc.hyper.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("maml", e.what());
  }
  if (!(rc.hyper.alpha > 0.0)) throw ConfigError("maml.alpha", "must be positive");
  if (!(rc.hyper.beta > 0.0)) throw ConfigError("maml.beta", "must be positive");

  const json& sv = cfg.at("svpg");
  rc.particles.count = sv.at("particles").is_null() ? rc.hyper.meta_batch_size : sv.at("particles").get<Index>();
  if (rc.sampler == Sampler::MetaAdr && rc.particles.count != rc.hyper.meta_batch_size)
    throw ConfigError("svpg.particles", "must equal maml.meta_batch_size under the meta_adr sampler");
  if (rc.particles.count < 1) throw ConfigError("svpg.particles", "must be positive");
  rc.particles.temperature = sv.at("temperature").get<double>();
  if (!(rc.particles.temperature > 0.0)) throw ConfigError("svpg.temperature", "must be positive");
  rc.particles.learning_rate = sv.at("learning_rate").get<double>();
  if (!(rc.particles.learning_rate > 0.0)) throw ConfigError("svpg.learning_rate", "must be positive");
  if (sv.at("bandwidth").is_number()) {
    rc.particles.bandwidth = sv.at("bandwidth").get<double>();
    if (!(*rc.particles.bandwidth > 0.0)) throw ConfigError("svpg.bandwidth", "must be positive");
  }
  rc.particles.hidden = to_index_vector(sv.at("hidden"));
  rc.particles.init_log_std = sv.at("init_log_std").get<double>();

  const json& dc = cfg.at("discriminator");
  rc.discriminator.hidden = to_index_vector(dc.at("hidden"));
  rc.discriminator.learning_rate = dc.at("learning_rate").get<double>();
  if (!(rc.discriminator.learning_rate > 0.0)) throw ConfigError("discriminator.learning_rate", "must be positive");
  rc.discriminator.minibatch_size = dc.at("minibatch_size").get<Index>();
  if (rc.discriminator.minibatch_size < 2) throw ConfigError("discriminator.minibatch_size", "must be at least 2");
  rc.curriculum_reward =
      dc.at("reward").get<std::string>() == "symmetric" ? CurriculumReward::Symmetric : CurriculumReward::PostOnly;

  for (const auto& [key, sizes] : {std::pair<const char*, const std::vector<Index>*>{"policy.hidden", &rc.policy.hidden},
                                   {"svpg.hidden", &rc.particles.hidden},
                                   {"discriminator.hidden", &rc.discriminator.hidden}})
    for (Index s : *sizes)
      if (s < 1) throw ConfigError(key, "layer widths must be positive");

  const json& ev = cfg.at("eval");
  const json& grid = ev.at("grid");
  if (env.kind() == EnvKind::PointNav) {
    rc.eval.grid = {Eigen::Vector2d(-2.0, -2.0), Eigen::Vector2d(2.0, 2.0), 0.5};
  } else {
    rc.eval.grid = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 5.0), 0.25};
  }
  if (!grid.at("lower").is_null()) rc.eval.grid.lower = to_vector(grid.at("lower"));
  if (!grid.at("upper").is_null()) rc.eval.grid.upper = to_vector(grid.at("upper"));
  if (!grid.at("step").is_null()) rc.eval.grid.step = grid.at("step").get<double>();
  try {
    rc.eval.grid.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("eval.grid", e.what());
  }
  if (rc.eval.grid.lower.size() != env.task_dim()) throw ConfigError("eval.grid", "dimension does not match environment");
  rc.eval.episodes = ev.at("episodes").get<Index>();
  if (rc.eval.episodes < 1) throw ConfigError("eval.episodes", "must be positive");
  rc.eval.threshold = ev.at("threshold").get<double>();
  if (!ev.at("curve_targets").is_null()) {
    rc.eval.curve_targets = ev.at("curve_targets").get<std::vector<double>>();
  } else if (env.kind() == EnvKind::PointVel) {
    rc.eval.curve_targets = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  }
  rc.eval.curve_stride = ev.at("curve_stride").get<Index>();
  if (rc.eval.curve_stride < 1) throw ConfigError("eval.curve_stride", "must be positive");

  const json& rt = cfg.at("runtime");
  rc.workers = std::max<Index>(1, rt.at("workers").get<Index>());
  rc.replay = rt.at("replay").get<bool>();
  rc.checkpoints = rt.at("checkpoints").get<bool>();
  if (rc.replay) rc.workers = 1;
  return rc;
}

json config_to_json(const RunConfig& rc) {
  json j = default_config_json();
  j["env"] = rc.env;
  j["sampler"] = to_string(rc.sampler);
  j["seed"] = rc.seed;
  j["output_dir"] = rc.output_dir.string();
  j["task_space"] = {{"lower", from_vector(rc.task_space.lower)}, {"upper", from_vector(rc.task_space.upper)}};
  j["policy"] = {{"hidden", rc.policy.hidden}, {"init_log_std", rc.policy.init_log_std}};
  j["maml"] = {{"alpha", rc.hyper.alpha},
               {"beta", rc.hyper.beta},
               {"meta_batch_size", rc.hyper.meta_batch_size},
               {"inner_episodes", rc.hyper.inner_episodes},
               {"outer_episodes", rc.hyper.outer_episodes},
               {"epochs", rc.hyper.epochs},
               {"gamma", rc.hyper.gamma},
               {"outer_optimizer", "first_order"}};
  j["svpg"] = {{"particles", rc.particles.count},
               {"temperature", rc.particles.temperature},
               {"learning_rate", rc.particles.learning_rate},
               {"bandwidth", rc.particles.bandwidth ? json(*rc.particles.bandwidth) : json("median")},
               {"hidden", rc.particles.hidden},
               {"init_log_std", rc.particles.init_log_std}};
  j["discriminator"] = {{"hidden", rc.discriminator.hidden},
                        {"learning_rate", rc.discriminator.learning_rate},
                        {"minibatch_size", rc.discriminator.minibatch_size},
                        {"reward", rc.curriculum_reward == CurriculumReward::Symmetric ? "symmetric" : "post_only"}};
  j["eval"] = {{"grid",
                {{"lower", from_vector(rc.eval.grid.lower)},
                 {"upper", from_vector(rc.eval.grid.upper)},
                 {"step", rc.eval.grid.step}}},
               {"episodes", rc.eval.episodes},
               {"threshold", rc.eval.threshold},
               {"curve_targets", rc.eval.curve_targets.empty() ? json(nullptr) : json(rc.eval.curve_targets)},
               {"curve_stride", rc.eval.curve_stride}};
  j["runtime"] = {{"workers", rc.workers}, {"replay", rc.replay}, {"checkpoints", rc.checkpoints}};
  return j;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json user = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path.string());
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
    }
  }
  validate(user, schema(), "");
  for (const auto& o : overrides) apply_override(user, o);
  return config_from_json(user);
}

}  // namespace metaadr
