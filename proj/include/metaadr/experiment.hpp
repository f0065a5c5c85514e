#pragma once

#include "metaadr/config.hpp"
#include "metaadr/eval.hpp"
#include "metaadr/meta_adr.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace metaadr {

// A run or sweep lacks artifacts a command needs (FINAL, status.json, grid.csv).
class IncompleteRun : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalOverrides {
  std::optional<GridSpec> grid;
  std::optional<Index> episodes;
  std::optional<double> threshold;
  std::optional<Index> workers;
};

struct RunEvaluation {
  EvalGrid grid;
  double in_distribution_mean = 0.0;
  double out_of_distribution_mean = 0.0;  // NaN when every cell is in distribution
  double fraction_negative = 0.0;
  bool converged = false;  // in-distribution mean >= threshold
  std::optional<double> pearson_r;
  std::vector<CurvePoint> curves;  // PointVel only
};

/// The grid the eval command uses for a config: eval.grid when set, else the
/// environment default ([-2,2]^2 step 0.5 for PointNav, [0,5] step 0.25 for PointVel).
GridSpec default_grid(const RunConfig& config);

RunConfig load_run_config(const std::filesystem::path& run_dir);

/// Parameters named by the FINAL marker; throws IncompleteRun when absent.
ParamVector load_final_params(const std::filesystem::path& run_dir);

/// Evaluates the FINAL checkpoint and writes eval/grid.csv, eval/correlation.csv,
/// eval/stability.json and, for PointVel, eval/curves.csv.
RunEvaluation evaluate_run(const std::filesystem::path& run_dir, const EvalOverrides& overrides = {});

struct TaskSpaceEntry {
  std::string name;
  TaskSpace space;
};

struct SweepSpec {
  nlohmann::json base = nlohmann::json::object();
  std::vector<TaskSpaceEntry> task_spaces;
  std::vector<Sampler> samplers;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;
  Index workers = 1;  // concurrent runs
  bool evaluate = true;
};

struct SweepEntry {
  std::string space;
  Sampler sampler = Sampler::Uniform;
  std::uint64_t seed = 0;
  RunConfig config;
  std::string config_digest;
};

/// Sweep file: {"base": {...config...}, "task_spaces": [{"name", "lower", "upper"}],
/// "samplers": [...], "seeds": [...], "output_dir": "...", "workers": n, "evaluate": bool}.
SweepSpec sweep_from_json(const nlohmann::json& j);
SweepSpec load_sweep(const std::filesystem::path& path);

/// One run per space x sampler x seed, under output_dir/<space>/<sampler>/seed_<s>.
std::vector<SweepEntry> expand_sweep(const SweepSpec& spec);

/// Runs every entry not already completed with the same config digest and
/// maintains output_dir/manifest.json. Returns the manifest path.
std::filesystem::path run_sweep(const SweepSpec& spec, bool quiet = false);

struct SummaryRow {
  std::string space;
  std::string sampler;
  Index seeds = 0;      // runs listed in the manifest
  Index evaluated = 0;  // runs with a grid.csv
  double in_distribution_mean = 0.0;
  double out_of_distribution_mean = 0.0;
  double seed_stability = 0.0;  // non-converged and missing runs count as failures
  double fraction_negative = 0.0;
};

struct Report {
  std::vector<SummaryRow> rows;
  std::vector<std::string> warnings;
};

/// Recomputes the per-space, per-sampler summary from the runs' grid.csv files.
Report build_report(const std::filesystem::path& manifest_path);
void write_report_csv(std::ostream& out, const Report& report);

}  // namespace metaadr
