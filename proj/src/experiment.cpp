#include "metaadr/experiment.hpp"

#include "metaadr/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

namespace metaadr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IncompleteRun("missing " + path.string());
  return json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double mean_over(const EvalGrid& g, const std::vector<bool>& mask, bool want) {
  double sum = 0.0;
  Index n = 0;
  for (Index s = 0; s < g.seed_count(); ++s)
    for (Index c = 0; c < g.cells(); ++c)
      if (mask[static_cast<std::size_t>(c)] == want) {
        sum += g.post(c, s);
        ++n;
      }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

}  // namespace

GridSpec default_grid(const RunConfig& config) { return config.eval.grid; }

RunConfig load_run_config(const fs::path& run_dir) {
  json j = read_json(run_dir / "config.json");
  return config_from_json(j);
}

ParamVector load_final_params(const fs::path& run_dir) {
  std::ifstream marker(run_dir / kFinalMarker);
  if (!marker) throw IncompleteRun("run " + run_dir.string() + " has no FINAL marker");
  std::string rel;
  std::getline(marker, rel);
  const fs::path bin = run_dir / rel;
  if (!fs::exists(bin)) throw IncompleteRun("FINAL names a missing checkpoint " + bin.string());
  return read_param_file(bin).params;
}

RunEvaluation evaluate_run(const fs::path& run_dir, const EvalOverrides& overrides) {
  const RunConfig cfg = load_run_config(run_dir);
  const ParamVector theta = load_final_params(run_dir);
  const Environment env = Environment::from_name(cfg.env);
  const GaussianPolicy policy = make_policy(env, cfg.policy.hidden);
  if (!(theta.spec == policy.spec().mlp)) throw IncompleteRun("FINAL checkpoint does not match the configured policy");

  const GridSpec grid = overrides.grid.value_or(default_grid(cfg));
  const Index episodes = overrides.episodes.value_or(cfg.eval.episodes);
  const double threshold = overrides.threshold.value_or(cfg.eval.threshold);
  const Index workers = cfg.replay ? 1 : overrides.workers.value_or(cfg.workers);

  RunEvaluation ev;
  ev.grid = eval_grid(policy, env, theta, grid, cfg.hyper, episodes, cfg.seed, workers);
  const auto mask = in_distribution_mask(ev.grid, cfg.task_space);
  ev.in_distribution_mean = mean_over(ev.grid, mask, true);
  ev.out_of_distribution_mean = mean_over(ev.grid, mask, false);
  const auto deltas = negative_adaptation(ev.grid);
  ev.fraction_negative = fraction_negative(deltas);
  const auto negative_cells = std::count_if(deltas.begin(), deltas.end(), [](const AdaptationDelta& d) { return d.negative; });
  ev.converged = ev.in_distribution_mean >= threshold;

  const fs::path out = run_dir / "eval";
  std::ostringstream grid_csv;
  write_grid_csv(grid_csv, ev.grid);
  write_text(out / "grid.csv", grid_csv.str());

  std::ostringstream corr_csv;
  try {
    const CorrelationReport r = correlation_report(ev.grid);
    ev.pearson_r = r.pearson_r;
    write_correlation_csv(corr_csv, r);
  } catch (const InvalidInput&) {
    write_correlation_csv(corr_csv, {});
  }
  write_text(out / "correlation.csv", corr_csv.str());

  const json stability = {{"seed", cfg.seed},
                          {"threshold", threshold},
                          {"in_distribution_mean", finite_or_null(ev.in_distribution_mean)},
                          {"out_of_distribution_mean", finite_or_null(ev.out_of_distribution_mean)},
                          {"converged", ev.converged},
                          {"fraction_negative", ev.fraction_negative},
                          {"negative_cells", negative_cells},
                          {"negative_adaptation", negative_cells > 0},
                          {"pearson_r", ev.pearson_r ? json(*ev.pearson_r) : json(nullptr)},
                          {"cells", ev.grid.cells()},
                          {"eval_episodes", episodes}};
  write_text(out / "stability.json", stability.dump(2) + "\n");

  if (env.kind() == EnvKind::PointVel && !cfg.eval.curve_targets.empty()) {
    std::vector<std::optional<ParamVector>> checkpoints;
    std::vector<Index> epochs;
    for (Index e = 0; e <= cfg.hyper.epochs; e += cfg.eval.curve_stride) {
      const fs::path p = e == 0 ? initial_checkpoint_path(run_dir) : checkpoint_path(run_dir, e);
      checkpoints.push_back(fs::exists(p) ? std::optional<ParamVector>(read_param_file(p).params) : std::nullopt);
      epochs.push_back(e);
    }
    std::vector<Task> targets;
    for (double v : cfg.eval.curve_targets) targets.push_back(Task{Eigen::VectorXd::Constant(1, v)});
    ev.curves = velocity_curves(policy, env, checkpoints, targets, cfg.hyper, episodes, cfg.seed, workers);
    for (auto& p : ev.curves) p.epoch = epochs[static_cast<std::size_t>(p.epoch)];
    std::ostringstream curves_csv;
    write_curves_csv(curves_csv, ev.curves);
    write_text(out / "curves.csv", curves_csv.str());
  }
  return ev;
}

SweepSpec sweep_from_json(const json& j) {
  static const std::vector<std::string> keys = {"base", "task_spaces", "samplers", "seeds",
                                                "output_dir", "workers", "evaluate"};
  if (!j.is_object()) throw ConfigError("", "sweep file must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError(k, "unknown sweep key '" + k + "'");
  SweepSpec s;
  if (j.contains("base")) s.base = j.at("base");
  const RunConfig probe = config_from_json(s.base);
  if (j.contains("task_spaces")) {
    for (std::size_t i = 0; i < j.at("task_spaces").size(); ++i) {
      const json& t = j.at("task_spaces")[i];
      const std::string path = "task_spaces[" + std::to_string(i) + "]";
      if (!t.is_object() || !t.contains("lower") || !t.contains("upper"))
        throw ConfigError(path, "expected {\"name\", \"lower\", \"upper\"}");
      TaskSpaceEntry e;
      const auto lo = t.at("lower").get<std::vector<double>>();
      const auto hi = t.at("upper").get<std::vector<double>>();
      e.space = {Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Index>(lo.size())),
                 Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Index>(hi.size()))};
      e.name = t.value("name", "space" + std::to_string(i));
      s.task_spaces.push_back(std::move(e));
    }
  } else {
    s.task_spaces.push_back({"default", probe.task_space});
  }
  if (j.contains("samplers")) {
    for (const auto& v : j.at("samplers")) {
      const auto name = v.get<std::string>();
      if (name != "uniform" && name != "meta_adr") throw ConfigError("samplers", "unknown sampler '" + name + "'");
      s.samplers.push_back(name == "uniform" ? Sampler::Uniform : Sampler::MetaAdr);
    }
  } else {
    s.samplers = {probe.sampler};
  }
  s.seeds = j.contains("seeds") ? j.at("seeds").get<std::vector<std::uint64_t>>()
                                : std::vector<std::uint64_t>{1, 2, 3, 4, 5};
  s.output_dir = j.value("output_dir", std::string("runs/sweep"));
  s.workers = std::max<Index>(1, j.value("workers", Index{1}));
  s.evaluate = j.value("evaluate", true);
  if (s.task_spaces.empty() || s.samplers.empty() || s.seeds.empty())
    throw ConfigError("", "sweep has no runs");
  return s;
}

SweepSpec load_sweep(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open sweep file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("sweep is not valid JSON: ") + e.what());
  }
  return sweep_from_json(j);
}

std::vector<SweepEntry> expand_sweep(const SweepSpec& spec) {
  std::vector<SweepEntry> out;
  for (const auto& ts : spec.task_spaces)
    for (Sampler sampler : spec.samplers)
      for (std::uint64_t seed : spec.seeds) {
        json j = spec.base;
        j["task_space"] = {{"lower", std::vector<double>(ts.space.lower.begin(), ts.space.lower.end())},
                           {"upper", std::vector<double>(ts.space.upper.begin(), ts.space.upper.end())}};
        j["sampler"] = to_string(sampler);
        j["seed"] = seed;
        j["output_dir"] = (spec.output_dir / ts.name / to_string(sampler) / ("seed_" + std::to_string(seed))).string();
        try {
          SweepEntry e{ts.name, sampler, seed, config_from_json(j), {}};
          const std::string text = config_to_json(e.config).dump();
          e.config_digest = to_hex(fnv1a64(text.data(), text.size()));
          out.push_back(std::move(e));
        } catch (const ConfigError& err) {
          throw ConfigError(err.key_path(), "sweep entry " + ts.name + "/" + to_string(sampler) + "/seed " +
                                                std::to_string(seed) + ": " + err.what());
        }
      }
  return out;
}

namespace {

bool entry_complete(const SweepEntry& e, const json& previous, bool evaluate) {
  const std::string dir = e.config.output_dir.string();
  if (!previous.contains(dir)) return false;
  const json& p = previous.at(dir);
  if (p.value("config_digest", "") != e.config_digest) return false;
  if (!fs::exists(e.config.output_dir / kStatusFile)) return false;
  if (p.value("status", "") == "diverged") return true;
  return !evaluate || fs::exists(e.config.output_dir / "eval" / "grid.csv");
}

}  // namespace

fs::path run_sweep(const SweepSpec& spec, bool quiet) {
  const auto entries = expand_sweep(spec);
  fs::create_directories(spec.output_dir);
  const fs::path manifest_path = spec.output_dir / "manifest.json";

  json previous = json::object();
  if (fs::exists(manifest_path)) {
    const json old = read_json(manifest_path);
    for (const auto& r : old.at("runs")) previous[r.at("run_dir").get<std::string>()] = r;
  }

  std::vector<json> rows(entries.size());
  std::mutex mu;
  auto save = [&] {
    json m = {{"schema_version", kConfigSchemaVersion}, {"runs", json::array()}};
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      json r = rows[i].is_null() ? json{{"status", "pending"}} : rows[i];
      r["run_dir"] = e.config.output_dir.string();
      r["space"] = e.space;
      r["sampler"] = to_string(e.sampler);
      r["seed"] = e.seed;
      r["config_digest"] = e.config_digest;
      m["runs"].push_back(r);
    }
    write_text(manifest_path, m.dump(2) + "\n");
  };

  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entry_complete(entries[i], previous, spec.evaluate)) rows[i] = previous.at(entries[i].config.output_dir.string());
  save();

  parallel_for(static_cast<Index>(entries.size()), spec.workers, [&](Index k) {
    const auto i = static_cast<std::size_t>(k);
    if (!rows[i].is_null()) return;
    const SweepEntry& e = entries[i];
    RunConfig cfg = e.config;
    if (spec.workers > 1) cfg.workers = 1;
    const RunResult r = run_training(cfg);
    json row = {{"status", r.converged ? "complete" : "diverged"},
                {"epochs_completed", r.epochs_completed},
                {"total_env_steps", r.total_env_steps}};
    if (r.converged && spec.evaluate) {
      const RunEvaluation ev = evaluate_run(cfg.output_dir);
      row["in_distribution_mean"] = finite_or_null(ev.in_distribution_mean);
      row["converged"] = ev.converged;
    }
    std::lock_guard lock(mu);
    rows[i] = row;
    save();
    if (!quiet)
      std::cerr << e.space << '/' << to_string(e.sampler) << "/seed_" << e.seed << ": " << row.at("status").get<std::string>()
                << '\n';
  });
  return manifest_path;
}

Report build_report(const fs::path& manifest_path) {
  const json manifest = read_json(manifest_path);
  const fs::path root = manifest_path.parent_path();

  struct Acc {
    Index seeds = 0, evaluated = 0, stable = 0;
    double in_sum = 0.0, out_sum = 0.0;
    Index in_n = 0, out_n = 0, neg = 0, deltas = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  std::vector<std::pair<std::string, std::string>> order;
  Report rep;

  for (const auto& r : manifest.at("runs")) {
    const auto key = std::make_pair(r.at("space").get<std::string>(), r.at("sampler").get<std::string>());
    if (!acc.contains(key)) order.push_back(key);
    Acc& a = acc[key];
    ++a.seeds;
    fs::path dir = r.at("run_dir").get<std::string>();
    if (dir.is_relative() && !fs::exists(dir)) dir = root / dir;
    const fs::path grid_path = dir / "eval" / "grid.csv";
    std::ifstream in(grid_path);
    if (!in) {
      rep.warnings.push_back("no grid.csv for " + dir.string() + " (status " + r.value("status", "unknown") + ")");
      continue;
    }
    const EvalGrid g = read_grid_csv(in);
    const RunConfig cfg = load_run_config(dir);
    ++a.evaluated;
    const auto mask = in_distribution_mask(g, cfg.task_space);
    const double in_mean = mean_over(g, mask, true);
    if (in_mean >= cfg.eval.threshold) ++a.stable;
    for (Index s = 0; s < g.seed_count(); ++s)
      for (Index c = 0; c < g.cells(); ++c) {
        const double post = g.post(c, s);
        if (mask[static_cast<std::size_t>(c)]) {
          a.in_sum += post;
          ++a.in_n;
        } else {
          a.out_sum += post;
          ++a.out_n;
        }
      }
    for (const auto& d : negative_adaptation(g)) {
      ++a.deltas;
      a.neg += d.negative;
    }
  }

  for (const auto& key : order) {
    const Acc& a = acc[key];
    if (a.evaluated < a.seeds)
      rep.warnings.push_back(key.first + "/" + key.second + ": " + std::to_string(a.evaluated) + " of " +
                             std::to_string(a.seeds) + " runs evaluated");
    SummaryRow row;
    row.space = key.first;
    row.sampler = key.second;
    row.seeds = a.seeds;
    row.evaluated = a.evaluated;
    row.in_distribution_mean = a.in_n ? a.in_sum / static_cast<double>(a.in_n) : std::nan("");
    row.out_of_distribution_mean = a.out_n ? a.out_sum / static_cast<double>(a.out_n) : std::nan("");
    row.seed_stability = static_cast<double>(a.stable) / static_cast<double>(a.seeds);
    row.fraction_negative = a.deltas ? static_cast<double>(a.neg) / static_cast<double>(a.deltas) : std::nan("");
    rep.rows.push_back(row);
  }
  return rep;
}

void write_report_csv(std::ostream& out, const Report& report) {
  out << "space,sampler,seeds,evaluated,in_distribution_mean,out_of_distribution_mean,seed_stability,fraction_negative\n";
  for (const auto& r : report.rows)
    out << r.space << ',' << r.sampler << ',' << r.seeds << ',' << r.evaluated << ',' << csv::real(r.in_distribution_mean)
        << ',' << csv::real(r.out_of_distribution_mean) << ',' << csv::real(r.seed_stability) << ','
        << csv::real(r.fraction_negative) << '\n';
}

}  // namespace metaadr
