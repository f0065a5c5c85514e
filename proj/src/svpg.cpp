#include "metaadr/svpg.hpp"

#include "metaadr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace metaadr {

void ParticleSet::validate() const {
  if (particles.empty()) throw InvalidInput("particle set is empty");
  for (const auto& p : particles)
    if (!(p.spec == particles.front().spec)) throw InvalidInput("particles must share one MlpSpec");
  if (!(temperature > 0.0)) throw InvalidInput("temperature must be positive");
  if (!(learning_rate > 0.0)) throw InvalidInput("particle learning rate must be positive");
  if (bandwidth && !(*bandwidth > 0.0)) throw InvalidInput("kernel bandwidth must be positive");
  task_space.validate();
  if (particles.front().spec.output_size() != task_space.dim() || particles.front().spec.trailing != task_space.dim())
    throw InvalidInput("particle output dimension must match the task space");
}

MlpSpec particle_spec(Index task_dim, const std::vector<Index>& hidden) {
  MlpSpec spec;
  spec.layer_sizes.push_back(1);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(task_dim);
  spec.trailing = task_dim;
  spec.validate();
  return spec;
}

ParticleSet make_particles(const TaskSpace& space, const ParticleOptions& options, Rng& rng) {
  if (options.count < 1) throw InvalidInput("at least one particle required");
  ParticleSet set;
  const MlpSpec spec = particle_spec(space.dim(), options.hidden);
  for (Index i = 0; i < options.count; ++i) {
    ParamVector p = init_params(spec, rng);
    p.trailing().setConstant(options.init_log_std);
    set.particles.push_back(p);
  }
  set.initial = set.particles;
  set.temperature = options.temperature;
  set.bandwidth = options.bandwidth;
  set.learning_rate = options.learning_rate;
  set.task_space = space;
  set.validate();
  return set;
}

namespace {

const Eigen::MatrixXd& unit_input() {
  static const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  return one;
}

Eigen::VectorXd clamped_log_std(const ParamVector& p) {
  return p.trailing().cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

}  // namespace

Eigen::VectorXd particle_mean(const ParamVector& particle) { return mlp_forward(particle, unit_input()).col(0); }

Task squash_to_space(const Eigen::VectorXd& pre_squash, const TaskSpace& space) {
  const Eigen::ArrayXd half = 0.5 * (space.upper - space.lower).array();
  const Eigen::ArrayXd mid = 0.5 * (space.upper + space.lower).array();
  Task t{(mid + half * pre_squash.array().tanh()).matrix()};
  // tanh saturates to +-1 in floating point for large inputs; keep the task inside the box.
  t.values = t.values.cwiseMax(space.lower).cwiseMin(space.upper);
  return t;
}

double proposal_log_prob(const ParamVector& particle, const TaskSpace& space, const Eigen::VectorXd& pre_squash) {
  const double base = gaussian_log_density(pre_squash, particle_mean(particle), clamped_log_std(particle));
  const Eigen::ArrayXd half = 0.5 * (space.upper - space.lower).array();
  // log |d task / d u| = log(half) + log(1 - tanh(u)^2), computed stably as
  // log(4) - 2 |u| - 2 log(1 + exp(-2 |u|)).
  const Eigen::ArrayXd au = pre_squash.array().abs();
  const Eigen::ArrayXd log_jac = std::log(4.0) - 2.0 * au - 2.0 * (-2.0 * au).exp().log1p();
  return base - (half.log() + log_jac).sum();
}

std::vector<TaskProposal> propose_tasks(const ParticleSet& set, Rng& rng) {
  set.validate();
  std::vector<TaskProposal> out;
  out.reserve(set.particles.size());
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Index i = 0; i < set.size(); ++i) {
    const ParamVector& p = set.particles[static_cast<std::size_t>(i)];
    const Eigen::VectorXd mu = particle_mean(p);
    const Eigen::VectorXd sigma = clamped_log_std(p).array().exp();
    Eigen::VectorXd u(mu.size());
    for (Index d = 0; d < u.size(); ++d) u[d] = mu[d] + sigma[d] * n01(rng);
    out.push_back({squash_to_space(u, set.task_space), i, proposal_log_prob(p, set.task_space, u), u});
  }
  return out;
}

double rbf_kernel(const ParamVector& x, const ParamVector& y, double h) {
  if (!(h > 0.0)) throw InvalidInput("rbf_kernel bandwidth must be positive");
  if (x.values.size() != y.values.size()) throw InvalidInput("rbf_kernel: parameter vectors differ in length");
  return std::exp(-(x.values - y.values).squaredNorm() / h);
}

double median_bandwidth(const ParticleSet& set) {
  const Index n = set.size();
  if (n < 2) return kBandwidthFloor;
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      d2.push_back((set.particles[static_cast<std::size_t>(i)].values -
                    set.particles[static_cast<std::size_t>(j)].values)
                       .squaredNorm());
  std::sort(d2.begin(), d2.end());
  const std::size_t m = d2.size();
  const double median = m % 2 == 1 ? d2[m / 2] : 0.5 * (d2[m / 2 - 1] + d2[m / 2]);
  return std::max(median / std::log(static_cast<double>(n) + 1.0), kBandwidthFloor);
}

std::vector<Eigen::VectorXd> particle_policy_gradients(const ParticleSet& set,
                                                       const std::vector<TaskProposal>& proposals,
                                                       const std::vector<double>& rewards) {
  if (proposals.size() != set.particles.size() || rewards.size() != proposals.size())
    throw InvalidInput("svpg needs exactly one proposal and one reward per particle");
  for (double r : rewards)
    if (!std::isfinite(r)) throw InvalidInput("svpg rewards must be finite");
  double mean_r = 0.0;
  for (double r : rewards) mean_r += r;
  mean_r /= static_cast<double>(rewards.size());

  std::vector<Eigen::VectorXd> grads(set.particles.size());
  for (const TaskProposal& prop : proposals) {
    const auto j = static_cast<std::size_t>(prop.particle_index);
    if (j >= set.particles.size()) throw InvalidInput("proposal references an unknown particle");
    const ParamVector& p = set.particles[j];
    const Eigen::VectorXd mu = particle_mean(p);
    const Eigen::ArrayXd ls = clamped_log_std(p).array();
    const Eigen::ArrayXd inv_var = (-2.0 * ls).exp();
    const Eigen::ArrayXd diff = (prop.pre_squash - mu).array();
    const double adv = rewards[j] - mean_r;

    Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
    const Eigen::MatrixXd cot = (adv * diff * inv_var).matrix();
    g.head(p.spec.network_param_count()) = mlp_backward(p, unit_input(), cot).values.head(p.spec.network_param_count());
    const Eigen::ArrayXd dls = adv * (diff.square() * inv_var - 1.0);
    for (Index d = 0; d < p.spec.trailing; ++d) {
      const double raw = p.trailing()[d];
      if (raw >= kLogStdMin && raw <= kLogStdMax) g[p.spec.network_param_count() + d] = dls[d];
    }
    grads[j] = std::move(g);
  }
  for (const auto& g : grads)
    if (g.size() == 0) throw InvalidInput("every particle needs exactly one proposal");
  return grads;
}

ParticleSet svpg_apply(const ParticleSet& set, const std::vector<Eigen::VectorXd>& gradients) {
  set.validate();
  if (gradients.size() != set.particles.size()) throw InvalidInput("one gradient per particle required");
  const Index n = set.size();
  const double h = set.bandwidth ? *set.bandwidth : median_bandwidth(set);

  ParticleSet next = set;
  for (Index i = 0; i < n; ++i) {
    const ParamVector& pi = set.particles[static_cast<std::size_t>(i)];
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(pi.size());
    for (Index j = 0; j < n; ++j) {
      const ParamVector& pj = set.particles[static_cast<std::size_t>(j)];
      const double k = rbf_kernel(pj, pi, h);
      // grad_{phi_j} k(phi_j, phi_i) = -2 k (phi_j - phi_i) / h
      delta += k * gradients[static_cast<std::size_t>(j)] / set.temperature +
               (2.0 * k / h) * (pi.values - pj.values);
    }
    delta /= static_cast<double>(n);
    ParamVector& out = next.particles[static_cast<std::size_t>(i)];
    out.values = pi.values + set.learning_rate * delta;
    if (!out.all_finite()) {
      std::clog << "svpg: particle " << i << " produced a non-finite update; reinitializing\n";
      out = set.initial.empty() ? pi : set.initial[static_cast<std::size_t>(i)];
      ++next.reinitialized;
    }
  }
  return next;
}

ParticleSet svpg_step(const ParticleSet& set, const std::vector<TaskProposal>& proposals,
                      const std::vector<double>& rewards) {
  return svpg_apply(set, particle_policy_gradients(set, proposals, rewards));
}

}  // namespace metaadr
