#include "metaadr/eval.hpp"

#include "metaadr/csv.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

namespace metaadr {

void GridSpec::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size()) throw InvalidInput("grid bounds have mismatched dimension");
  if (!(step > 0.0)) throw InvalidInput("grid step must be positive");
  for (Index d = 0; d < lower.size(); ++d) {
    if (!(upper[d] > lower[d])) throw InvalidInput("grid requires upper > lower");
    const double n = (upper[d] - lower[d]) / step;
    if (std::abs(n - std::round(n)) > 1e-9) throw InvalidInput("grid step does not divide the span");
  }
}

Index GridSpec::points_along(Index dim) const {
  return static_cast<Index>(std::llround((upper[dim] - lower[dim]) / step)) + 1;
}

Index GridSpec::cardinality() const {
  Index n = 1;
  for (Index d = 0; d < lower.size(); ++d) n *= points_along(d);
  return n;
}

std::vector<Task> GridSpec::tasks() const {
  validate();
  const Index dims = lower.size();
  std::vector<Task> out;
  out.reserve(static_cast<std::size_t>(cardinality()));
  std::vector<Index> idx(static_cast<std::size_t>(dims), 0);
  for (Index c = 0; c < cardinality(); ++c) {
    Task t{Eigen::VectorXd(dims)};
    for (Index d = 0; d < dims; ++d) t.values[d] = lower[d] + step * static_cast<double>(idx[static_cast<std::size_t>(d)]);
    out.push_back(std::move(t));
    for (Index d = dims - 1; d >= 0; --d) {
      auto& i = idx[static_cast<std::size_t>(d)];
      if (++i < points_along(d)) break;
      i = 0;
    }
  }
  return out;
}

EvalGrid merge_seeds(const std::vector<EvalGrid>& grids) {
  if (grids.empty()) throw InvalidInput("merge_seeds needs at least one grid");
  EvalGrid out;
  out.tasks = grids.front().tasks;
  Index cols = 0;
  for (const auto& g : grids) {
    if (g.cells() != out.cells()) throw InvalidInput("merge_seeds: grids have different cells");
    for (Index c = 0; c < g.cells(); ++c)
      if (!(g.tasks[static_cast<std::size_t>(c)] == out.tasks[static_cast<std::size_t>(c)]))
        throw InvalidInput("merge_seeds: grids have different cells");
    cols += g.seed_count();
  }
  out.pre.resize(out.cells(), cols);
  out.post.resize(out.cells(), cols);
  Index col = 0;
  for (const auto& g : grids) {
    out.pre.middleCols(col, g.seed_count()) = g.pre;
    out.post.middleCols(col, g.seed_count()) = g.post;
    out.seeds.insert(out.seeds.end(), g.seeds.begin(), g.seeds.end());
    col += g.seed_count();
  }
  return out;
}

std::vector<AdaptationDelta> negative_adaptation(const EvalGrid& grid) {
  std::vector<AdaptationDelta> out;
  for (Index s = 0; s < grid.seed_count(); ++s) {
    for (Index c = 0; c < grid.cells(); ++c) {
      const double d = grid.post(c, s) - grid.pre(c, s);
      if (!std::isfinite(d)) continue;
      out.push_back({grid.tasks[static_cast<std::size_t>(c)], grid.seeds[static_cast<std::size_t>(s)], d, d < 0.0});
    }
  }
  return out;
}

double fraction_negative(const std::vector<AdaptationDelta>& deltas) {
  if (deltas.empty()) return 0.0;
  Index n = 0;
  for (const auto& d : deltas) n += d.negative;
  return static_cast<double>(n) / static_cast<double>(deltas.size());
}

std::vector<bool> in_distribution_mask(const EvalGrid& grid, const TaskSpace& training_space) {
  std::vector<bool> mask(grid.tasks.size());
  for (std::size_t c = 0; c < grid.tasks.size(); ++c) mask[c] = training_space.contains(grid.tasks[c], 1e-9);
  return mask;
}

Eigen::VectorXd in_distribution_means(const EvalGrid& grid, const TaskSpace& training_space) {
  const auto mask = in_distribution_mask(grid, training_space);
  Eigen::VectorXd means = Eigen::VectorXd::Constant(grid.seed_count(), std::nan(""));
  for (Index s = 0; s < grid.seed_count(); ++s) {
    double sum = 0.0;
    Index n = 0;
    for (Index c = 0; c < grid.cells(); ++c) {
      if (!mask[static_cast<std::size_t>(c)]) continue;
      sum += grid.post(c, s);
      ++n;
    }
    if (n > 0) means[s] = sum / static_cast<double>(n);
  }
  return means;
}

double seed_stability(const Eigen::VectorXd& per_seed_values, double threshold) {
  if (per_seed_values.size() < 2) throw InvalidInput("seed_stability needs at least two seeds");
  Index ok = 0;
  for (Index s = 0; s < per_seed_values.size(); ++s) ok += per_seed_values[s] >= threshold;
  return static_cast<double>(ok) / static_cast<double>(per_seed_values.size());
}

double seed_stability(const EvalGrid& grid, const TaskSpace& training_space, double threshold) {
  return seed_stability(in_distribution_means(grid, training_space), threshold);
}

std::optional<double> pearson(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2) return std::nullopt;
  const double n = static_cast<double>(pairs.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pairs) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& [x, y] : pairs) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

CorrelationReport correlation_report(const EvalGrid& grid) {
  CorrelationReport r;
  for (Index s = 0; s < grid.seed_count(); ++s)
    for (Index c = 0; c < grid.cells(); ++c) {
      const double post = grid.post(c, s);
      const double d = post - grid.pre(c, s);
      if (std::isfinite(post) && std::isfinite(d)) r.pairs.emplace_back(post, d);
    }
  if (r.pairs.size() < 3) throw InvalidInput("correlation_report needs at least three finite cells");
  r.pearson_r = pearson(r.pairs);
  return r;
}

Eigen::VectorXd smooth(const Eigen::VectorXd& values, Index window) {
  if (window < 1) throw InvalidInput("smoothing window must be positive");
  if (values.size() < window) return {};
  Eigen::VectorXd out(values.size() - window + 1);
  for (Index i = 0; i < out.size(); ++i) out[i] = values.segment(i, window).mean();
  return out;
}

double monotonicity(const Eigen::VectorXd& values, Index window) {
  const Eigen::VectorXd s = smooth(values, window);
  if (s.size() < 2) return 0.0;
  Index up = 0;
  for (Index i = 1; i < s.size(); ++i) up += s[i] > s[i - 1];
  return static_cast<double>(up) / static_cast<double>(s.size() - 1);
}

Eigen::VectorXd curve_for_target(const std::vector<CurvePoint>& points, double target) {
  std::map<Index, double> by_epoch;
  for (const auto& p : points)
    if (p.target == target) by_epoch[p.epoch] = p.post_return;
  Eigen::VectorXd v(static_cast<Index>(by_epoch.size()));
  Index i = 0;
  for (const auto& [e, r] : by_epoch) v[i++] = r;
  return v;
}

void write_grid_csv(std::ostream& out, const EvalGrid& grid) {
  const Index dims = grid.tasks.empty() ? 0 : grid.tasks.front().dim();
  for (Index d = 0; d < dims; ++d) out << "task_" << d << ',';
  out << "seed,pre,post,delta\n";
  for (Index s = 0; s < grid.seed_count(); ++s)
    for (Index c = 0; c < grid.cells(); ++c) {
      for (Index d = 0; d < dims; ++d) out << csv::real(grid.tasks[static_cast<std::size_t>(c)].values[d]) << ',';
      out << grid.seeds[static_cast<std::size_t>(s)] << ',' << csv::real(grid.pre(c, s)) << ','
          << csv::real(grid.post(c, s)) << ',' << csv::real(grid.post(c, s) - grid.pre(c, s)) << '\n';
    }
}

EvalGrid read_grid_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("empty grid.csv");
  const auto header = csv::split(line);
  const Index dims = static_cast<Index>(header.size()) - 4;
  if (dims < 1) throw InvalidInput("grid.csv header is malformed");

  struct Row {
    Task task;
    std::uint64_t seed;
    double pre, post;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split(line);
    if (static_cast<Index>(cells.size()) != dims + 4) throw InvalidInput("grid.csv row has the wrong width");
    Row r{Task{Eigen::VectorXd(dims)}, std::stoull(cells[static_cast<std::size_t>(dims)]), 0, 0};
    for (Index d = 0; d < dims; ++d) r.task.values[d] = csv::parse_real(cells[static_cast<std::size_t>(d)]);
    r.pre = csv::parse_real(cells[static_cast<std::size_t>(dims + 1)]);
    r.post = csv::parse_real(cells[static_cast<std::size_t>(dims + 2)]);
    rows.push_back(std::move(r));
  }
  EvalGrid g;
  for (const Row& r : rows) {
    if (g.seeds.empty() || g.seeds.back() != r.seed) {
      if (std::find(g.seeds.begin(), g.seeds.end(), r.seed) != g.seeds.end())
        throw InvalidInput("grid.csv rows for one seed must be contiguous");
      g.seeds.push_back(r.seed);
    }
    if (g.seeds.size() == 1) g.tasks.push_back(r.task);
  }
  const Index cells = g.cells();
  if (cells == 0 || static_cast<Index>(rows.size()) != cells * g.seed_count())
    throw InvalidInput("grid.csv does not hold a full grid per seed");
  g.pre.resize(cells, g.seed_count());
  g.post.resize(cells, g.seed_count());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index c = static_cast<Index>(k) % cells;
    const Index s = static_cast<Index>(k) / cells;
    if (!(rows[k].task == g.tasks[static_cast<std::size_t>(c)]))
      throw InvalidInput("grid.csv seeds disagree on the cell order");
    g.pre(c, s) = rows[k].pre;
    g.post(c, s) = rows[k].post;
  }
  return g;
}

void write_correlation_csv(std::ostream& out, const CorrelationReport& report) {
  out << "post_return,delta\n";
  for (const auto& [p, d] : report.pairs) out << csv::real(p) << ',' << csv::real(d) << '\n';
}

void write_curves_csv(std::ostream& out, const std::vector<CurvePoint>& points) {
  out << "target,epoch,post_return,missing\n";
  for (const auto& p : points)
    out << csv::real(p.target) << ',' << p.epoch << ',' << csv::real(p.post_return) << ',' << (p.missing ? 1 : 0)
        << '\n';
}

std::vector<CurvePoint> read_curves_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = csv::split(line);
    if (c.size() != 4) throw InvalidInput("curves.csv row has the wrong width");
    out.push_back({csv::parse_real(c[0]), std::stoll(c[1]), csv::parse_real(c[2]), c[3] == "1"});
  }
  return out;
}

}  // namespace metaadr
