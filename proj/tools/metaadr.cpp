#include "metaadr/experiment.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNotConverged = 3;
constexpr int kIncomplete = 4;

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace metaadr;
  CLI::App app{"Meta-RL training with learned task curricula"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Run meta-training from a config file");
  train->add_option("-c,--config", config_path, "JSON config (defaults apply when omitted)");
  train->add_option("-s,--set", overrides, "Override a config key, e.g. -s maml.epochs=50");
  train->add_flag("-q,--quiet", quiet, "No per-epoch progress");

  std::string run_dir;
  std::string grid_lower, grid_upper;
  double grid_step = 0.0;
  Index eval_episodes = 0;
  Index eval_workers = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate the FINAL checkpoint of a run");
  eval->add_option("run_dir", run_dir, "Run directory")->required();
  eval->add_option("--grid-lower", grid_lower, "Comma-separated grid lower corner");
  eval->add_option("--grid-upper", grid_upper, "Comma-separated grid upper corner");
  eval->add_option("--grid-step", grid_step, "Grid spacing");
  eval->add_option("--episodes", eval_episodes, "Episodes per cell");
  eval->add_option("--workers", eval_workers, "Concurrent cells");

  std::string sweep_path;
  auto* sweep = app.add_subcommand("sweep", "Run every space x sampler x seed in a sweep file");
  sweep->add_option("sweep_file", sweep_path, "Sweep JSON")->required();
  sweep->add_flag("-q,--quiet", quiet, "No per-run progress");

  std::string manifest_path, report_out;
  auto* report = app.add_subcommand("report", "Summarize a sweep manifest");
  report->add_option("manifest", manifest_path, "manifest.json of a sweep")->required();
  report->add_option("-o,--output", report_out, "Also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) {
      const RunConfig cfg = load_config(config_path, overrides);
      const RunResult r = run_training(cfg, [&](const EpochRecord& rec) {
        if (quiet) return;
        double post = 0.0;
        for (const auto& t : rec.tasks) post += t.post_return;
        std::cerr << "epoch " << rec.epoch << "/" << cfg.hyper.epochs << " loss " << rec.meta_loss << " post "
                  << post / static_cast<double>(rec.tasks.size()) << '\n';
      });
      std::cout << r.run_dir.string() << '\n' << (r.converged ? "converged" : "non-converged") << '\n';
      if (!r.converged) {
        std::cerr << r.failure << '\n';
        return kNotConverged;
      }
      return kOk;
    }
    if (*eval) {
      EvalOverrides ov;
      if (!grid_lower.empty() || !grid_upper.empty() || grid_step > 0.0) {
        GridSpec g = default_grid(load_run_config(run_dir));
        if (!grid_lower.empty()) {
          const auto v = parse_list(grid_lower);
          g.lower = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
        }
        if (!grid_upper.empty()) {
          const auto v = parse_list(grid_upper);
          g.upper = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
        }
        if (grid_step > 0.0) g.step = grid_step;
        try {
          g.validate();
        } catch (const InvalidInput& e) {
          throw ConfigError("eval.grid", e.what());
        }
        ov.grid = g;
      }
      if (eval_episodes > 0) ov.episodes = eval_episodes;
      if (eval_workers > 0) ov.workers = eval_workers;
      const RunEvaluation ev = evaluate_run(run_dir, ov);
      std::cout << "cells " << ev.grid.cells() << "\nin_distribution_mean " << ev.in_distribution_mean
                << "\nout_of_distribution_mean " << ev.out_of_distribution_mean << "\nfraction_negative "
                << ev.fraction_negative << "\nconverged " << (ev.converged ? "yes" : "no") << '\n';
      return kOk;
    }
    if (*sweep) {
      const std::filesystem::path m = run_sweep(load_sweep(sweep_path), quiet);
      std::cout << m.string() << '\n';
      return kOk;
    }
    if (*report) {
      const Report rep = build_report(manifest_path);
      write_report_csv(std::cout, rep);
      if (!report_out.empty()) {
        std::ofstream out(report_out);
        write_report_csv(out, rep);
      }
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
      return rep.warnings.empty() ? kOk : kIncomplete;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IncompleteRun& e) {
    std::cerr << "incomplete: " << e.what() << '\n';
    return kIncomplete;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
