#include "metaadr/policy.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <ostream>

namespace metaadr {

Index TrajectoryBatch::total_steps() const {
  Index n = 0;
  for (const Episode& e : episodes) n += e.length();
  return n;
}

double TrajectoryBatch::mean_return() const {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const Episode& e : episodes) s += e.total_reward();
  return s / static_cast<double>(episodes.size());
}

void TrajectoryBatch::validate() const {
  for (const Episode& e : episodes) {
    if (e.states.cols() != e.length() || e.actions.cols() != e.length())
      throw InvalidInput("episode states, actions and rewards differ in length");
    if (!e.rewards.allFinite()) throw InvalidInput("episode rewards must be finite");
  }
}

void write_batch_csv(std::ostream& out, const TrajectoryBatch& batch, bool header) {
  if (batch.episodes.empty()) return;
  const Index sd = batch.episodes.front().states.rows();
  const Index ad = batch.episodes.front().actions.rows();
  if (header) {
    out << "episode,t";
    for (Index i = 0; i < sd; ++i) out << ",s" << i;
    for (Index i = 0; i < ad; ++i) out << ",a" << i;
    out << ",reward,label\n";
  }
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const Episode& ep = batch.episodes[e];
    for (Index t = 0; t < ep.length(); ++t) {
      out << e << ',' << t;
      for (Index i = 0; i < sd; ++i) num(ep.states(i, t));
      for (Index i = 0; i < ad; ++i) num(ep.actions(i, t));
      num(ep.rewards[t]);
      out << ',' << to_string(batch.label) << '\n';
    }
  }
}

PolicySpec PolicySpec::make(Index observation_dim, const std::vector<Index>& hidden, Index action_dim) {
  PolicySpec spec;
  spec.mlp.layer_sizes.push_back(observation_dim);
  spec.mlp.layer_sizes.insert(spec.mlp.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.mlp.layer_sizes.push_back(action_dim);
  spec.mlp.hidden_activation = Activation::Tanh;
  spec.mlp.output_activation = Activation::Identity;
  spec.mlp.trailing = action_dim;
  spec.mlp.validate();
  return spec;
}

GaussianPolicy::GaussianPolicy(PolicySpec spec) : spec_(std::move(spec)) {
  spec_.mlp.validate();
  if (spec_.mlp.trailing != spec_.action_dim())
    throw InvalidInput("Gaussian policy needs one trailing log-std per action dimension");
}

void GaussianPolicy::check(const ParamVector& params) const {
  if (!(params.spec == spec_.mlp)) throw InvalidInput("parameters do not belong to this policy");
}

ParamVector GaussianPolicy::initial_params(Rng& rng, double init_log_std) const {
  ParamVector p = init_params(spec_.mlp, rng);
  p.trailing().setConstant(init_log_std);
  return p;
}

Eigen::MatrixXd GaussianPolicy::means(const ParamVector& params, const Eigen::MatrixXd& states) const {
  check(params);
  return mlp_forward(params, states);
}

Eigen::VectorXd GaussianPolicy::mean(const ParamVector& params, const Eigen::VectorXd& state) const {
  check(params);
  return mlp_forward(params, state);
}

Eigen::VectorXd GaussianPolicy::log_std(const ParamVector& params) const {
  return params.trailing().cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

double GaussianPolicy::log_prob(const ParamVector& params, const Eigen::VectorXd& state,
                                const Eigen::VectorXd& action) const {
  if (!state.allFinite() || !action.allFinite() || !params.all_finite())
    throw InvalidInput("gaussian_log_prob: non-finite input");
  if (action.size() != spec_.action_dim()) throw InvalidInput("gaussian_log_prob: action dimension mismatch");
  return gaussian_log_density(action, mean(params, state), log_std(params));
}

Eigen::VectorXd GaussianPolicy::log_probs(const ParamVector& params, const Eigen::MatrixXd& states,
                                          const Eigen::MatrixXd& actions) const {
  const Eigen::MatrixXd mu = means(params, states);
  if (actions.rows() != mu.rows() || actions.cols() != mu.cols())
    throw InvalidInput("log_probs: actions do not match states");
  const Eigen::ArrayXd ls = log_std(params).array();
  const Eigen::ArrayXXd z = (actions - mu).array().colwise() / ls.exp();
  const double norm = ls.sum() + 0.5 * static_cast<double>(ls.size()) * std::log(2.0 * std::numbers::pi);
  return (-0.5 * z.square().colwise().sum() - norm).transpose().matrix();
}

void GaussianPolicy::accumulate_log_prob_gradient(const ParamVector& params, const Eigen::MatrixXd& states,
                                                  const Eigen::MatrixXd& actions, const Eigen::VectorXd& weights,
                                                  Eigen::VectorXd& grad) const {
  const Eigen::MatrixXd mu = means(params, states);
  if (weights.size() != states.cols() || grad.size() != params.size())
    throw InvalidInput("accumulate_log_prob_gradient: shape mismatch");
  const Eigen::VectorXd raw = params.trailing();
  const Eigen::ArrayXd ls = log_std(params).array();
  const Eigen::ArrayXd inv_var = (-2.0 * ls).exp();
  const Eigen::ArrayXXd diff = (actions - mu).array();

  // d log pi / d mu = (a - mu) / sigma^2
  const Eigen::MatrixXd cot = ((diff.colwise() * inv_var).rowwise() * weights.transpose().array()).matrix();
  grad.head(spec_.mlp.network_param_count()) +=
      mlp_backward(params, states, cot).values.head(spec_.mlp.network_param_count());

  // d log pi / d log_std = (a - mu)^2 / sigma^2 - 1, zero where the clamp is active
  const Eigen::ArrayXd per_dim =
      ((diff.square().colwise() * inv_var - 1.0).rowwise() * weights.transpose().array()).rowwise().sum();
  for (Index d = 0; d < raw.size(); ++d) {
    if (raw[d] >= kLogStdMin && raw[d] <= kLogStdMax)
      grad[spec_.mlp.network_param_count() + d] += per_dim[d];
  }
}

Eigen::VectorXd GaussianPolicy::sample_action(const ParamVector& params, const Eigen::VectorXd& state,
                                              Rng& rng) const {
  Eigen::VectorXd a = mean(params, state);
  const Eigen::VectorXd sigma = log_std(params).array().exp();
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Index d = 0; d < a.size(); ++d) a[d] += sigma[d] * n01(rng);
  return a;
}

double gaussian_log_prob(const GaussianPolicy& policy, const ParamVector& params, const Eigen::VectorXd& state,
                         const Eigen::VectorXd& action) {
  return policy.log_prob(params, state, action);
}

Eigen::VectorXd sample_action(const GaussianPolicy& policy, const ParamVector& params,
                              const Eigen::VectorXd& state, Rng& rng) {
  return policy.sample_action(params, state, rng);
}

Eigen::VectorXd returns_to_go(const Eigen::VectorXd& rewards, double gamma) {
  Eigen::VectorXd out(rewards.size());
  double acc = 0.0;
  for (Index t = rewards.size() - 1; t >= 0; --t) {
    acc = rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

Eigen::Vector3d TimeBaseline::features(Index t, double horizon) {
  const double x = static_cast<double>(t) / horizon;
  return {x, x * x, 1.0};
}

TimeBaseline fit_time_baseline(const TrajectoryBatch& batch, double gamma) {
  if (batch.episodes.empty()) throw InvalidInput("fit_time_baseline on an empty batch");
  TimeBaseline b;
  b.horizon = static_cast<double>(std::max<Index>(batch.horizon, 1));
  Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (const Episode& ep : batch.episodes) {
    const Eigen::VectorXd ret = returns_to_go(ep.rewards, gamma);
    for (Index t = 0; t < ep.length(); ++t) {
      const Eigen::Vector3d f = TimeBaseline::features(t, b.horizon);
      gram.noalias() += f * f.transpose();
      rhs += ret[t] * f;
    }
  }
  // Ridge-damped solve followed by iterated refinement: the damping keeps the
  // system solvable when time features are collinear, and the refinement
  // removes its bias whenever the undamped problem is well posed.
  const Eigen::Matrix3d damped = gram + kBaselineRidge * Eigen::Matrix3d::Identity();
  const Eigen::LDLT<Eigen::Matrix3d> ldlt(damped);
  b.coef = ldlt.solve(rhs);
  for (int it = 0; it < 8; ++it) b.coef += ldlt.solve(rhs - gram * b.coef);
  return b;
}

std::vector<Eigen::VectorXd> compute_advantages(const TrajectoryBatch& batch, double gamma,
                                                const AdvantageOptions& options) {
  if (batch.episodes.empty()) throw InvalidInput("compute_advantages on an empty batch");
  TimeBaseline baseline;
  if (options.use_baseline) baseline = fit_time_baseline(batch, gamma);
  std::vector<Eigen::VectorXd> adv;
  adv.reserve(batch.episodes.size());
  double sum = 0.0;
  Index count = 0;
  for (const Episode& ep : batch.episodes) {
    Eigen::VectorXd a = returns_to_go(ep.rewards, gamma);
    if (options.use_baseline)
      for (Index t = 0; t < a.size(); ++t) a[t] -= baseline.predict(t);
    sum += a.sum();
    count += a.size();
    adv.push_back(std::move(a));
  }
  if (!options.standardize || count == 0) return adv;
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (const auto& a : adv) var += (a.array() - mean).square().sum();
  var /= static_cast<double>(count);
  if (var < kStandardizeMinVariance) return adv;
  const double inv_std = 1.0 / std::sqrt(var);
  for (auto& a : adv) a = (a.array() - mean) * inv_std;
  return adv;
}

}  // namespace metaadr
