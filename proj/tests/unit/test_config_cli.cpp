#include "metaadr/config.hpp"
#include "metaadr/experiment.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

using namespace metaadr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metaadr_test_" + name + "_" + std::to_string(std::random_device{}()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json tiny_base() {
  return json{{"policy", {{"hidden", {4}}}},
              {"maml", {{"meta_batch_size", 2}, {"inner_episodes", 1}, {"outer_episodes", 1}, {"epochs", 1}}},
              {"svpg", {{"hidden", {4}}}},
              {"discriminator", {{"hidden", {4}}}},
              {"eval", {{"episodes", 1}, {"grid", {{"step", 2.0}}}}},
              {"runtime", {{"checkpoints", false}}}};
}

SweepSpec tiny_sweep(const fs::path& out) {
  json j = {{"base", tiny_base()}, {"samplers", {"uniform", "meta_adr"}}, {"output_dir", out.string()}};
  j["task_spaces"] = json::array();
  for (double h : {0.3, 0.5, 1.0, 2.0})
    j["task_spaces"].push_back({{"name", "pm" + std::to_string(h).substr(0, 3)}, {"lower", {-h, -h}}, {"upper", {h, h}}});
  return sweep_from_json(j);
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(METAADR_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("defaults are filled per environment") {
  const RunConfig nav = config_from_json(json::object());
  CHECK(nav.env == "pointnav");
  CHECK(nav.sampler == Sampler::Uniform);
  CHECK(nav.hyper.epochs == 200);
  CHECK(nav.policy.hidden == std::vector<Index>{100, 100});
  CHECK(nav.eval.episodes == 20);
  CHECK(nav.eval.grid.cardinality() == 81);
  CHECK(nav.task_space.lower.size() == 2);

  const RunConfig vel = config_from_json(json{{"env", "pointvel"}});
  CHECK(vel.eval.grid.cardinality() == 21);
  CHECK(vel.task_space.lower.size() == 1);
  CHECK(vel.eval.curve_targets.front() == 0.0);

  const RunConfig adr = config_from_json(json{{"sampler", "meta_adr"}, {"maml", {{"meta_batch_size", 4}}}});
  CHECK(adr.particles.count == 4);
}

TEST_CASE("unknown keys are rejected by name") {
  try {
    config_from_json(json{{"smapler", "uniform"}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("smapler") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(json{{"maml", {{"alpah", 0.1}}}}), ConfigError);
}

TEST_CASE("overrides are type-checked") {
  json j = json::object();
  apply_override(j, "maml.alpha=0.05");
  apply_override(j, "sampler=meta_adr");
  const RunConfig c = config_from_json(j);
  CHECK(c.hyper.alpha == 0.05);
  CHECK(c.sampler == Sampler::MetaAdr);

  json bad = json::object();
  CHECK_THROWS_AS(apply_override(bad, "maml.epochs=ten"), ConfigError);
  json neg = json::object();
  CHECK_THROWS_AS(apply_override(neg, "maml.meta_batch_size=-3"), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"maml", {{"epochs", -3}}}}), ConfigError);
  json e = json::object();
  CHECK_THROWS_AS(apply_override(e, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"sampler", "meta_adr"}, {"svpg", {{"particles", 3}}}}), ConfigError);
}

TEST_CASE("config JSON round-trips") {
  const RunConfig a = config_from_json(json{{"env", "pointvel"}, {"seed", 42}, {"maml", {{"alpha", 0.2}}}});
  const RunConfig b = config_from_json(config_to_json(a));
  CHECK(config_to_json(a) == config_to_json(b));
}

TEST_CASE("sweep expands to space x sampler x seed") {
  const SweepSpec s = tiny_sweep("/nonexistent/sweep");
  const auto entries = expand_sweep(s);
  CHECK(entries.size() == 40);
  std::set<std::string> dirs, digests;
  for (const auto& e : entries) {
    dirs.insert(e.config.output_dir.string());
    digests.insert(e.config_digest);
  }
  CHECK(dirs.size() == 40);
  CHECK(digests.size() == 40);
  CHECK_THROWS_AS(sweep_from_json(json{{"sampelrs", json::array()}}), ConfigError);
}

TEST_CASE("sweep runs, resumes and reports") {
  const fs::path out = scratch("sweep");
  const SweepSpec spec = tiny_sweep(out);
  const fs::path manifest = run_sweep(spec, true);
  json m;
  std::ifstream(manifest) >> m;
  CHECK(m.at("runs").size() == 40);
  for (const auto& r : m.at("runs")) CHECK(r.at("status") != "pending");

  const auto stamp = fs::last_write_time(out / "pm0.3" / "uniform" / "seed_1" / "epochs.csv");
  run_sweep(spec, true);
  CHECK(fs::last_write_time(out / "pm0.3" / "uniform" / "seed_1" / "epochs.csv") == stamp);

  Report rep = build_report(manifest);
  CHECK(rep.rows.size() == 8);
  CHECK(rep.warnings.empty());
  for (const auto& row : rep.rows) {
    CHECK(row.seeds == 5);
    CHECK(row.evaluated == 5);
  }

  fs::remove(out / "pm2.0" / "meta_adr" / "seed_3" / "eval" / "grid.csv");
  rep = build_report(manifest);
  CHECK(rep.rows.size() == 8);
  CHECK(rep.warnings.size() == 2);
  for (const auto& row : rep.rows)
    if (row.space == "pm2.0" && row.sampler == "meta_adr") CHECK(row.evaluated == 4);
  CHECK(run_cli("report " + manifest.string()) == 4);
  fs::remove_all(out);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("cli");
  const std::string base = "-q -s output_dir=" + dir.string() +
                           " -s maml.epochs=1 -s maml.meta_batch_size=2 -s maml.inner_episodes=1"
                           " -s maml.outer_episodes=1 -s policy.hidden=[4]";
  CHECK(run_cli("train " + base) == 0);
  CHECK(fs::exists(dir / "FINAL"));
  CHECK(run_cli("train -s smapler=uniform") == 2);
  CHECK(run_cli("train " + base + " -s maml.alpha=1e308 -s maml.beta=1e308") == 3);
  CHECK_FALSE(fs::exists(dir / "FINAL"));
  CHECK(run_cli("eval " + dir.string()) == 4);
  CHECK(run_cli("eval " + (dir / "missing").string()) == 4);
  fs::remove_all(dir);
}
