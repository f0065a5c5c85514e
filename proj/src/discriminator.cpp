#include "metaadr/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace metaadr {

DiscriminatorState make_discriminator(Index state_dim, Index action_dim, const DiscriminatorOptions& options,
                                      Rng& rng) {
  MlpSpec spec;
  spec.layer_sizes.push_back(state_dim + action_dim);
  spec.layer_sizes.insert(spec.layer_sizes.end(), options.hidden.begin(), options.hidden.end());
  spec.layer_sizes.push_back(1);
  spec.hidden_activation = Activation::Tanh;
  spec.output_activation = Activation::Identity;
  if (!(options.learning_rate > 0.0) || options.minibatch_size < 1)
    throw InvalidInput("discriminator learning rate and minibatch size must be positive");
  DiscriminatorState s{init_params(spec, rng), options.learning_rate, options.minibatch_size};
  zero_output_layer(s.psi);
  return s;
}

std::vector<StepFeature> featurize(const TrajectoryBatch& batch) {
  if (batch.episodes.empty()) throw InvalidInput("featurize on an empty batch");
  const int label = batch.label == BatchLabel::PostAdaptation ? 1 : 0;
  std::vector<StepFeature> out;
  out.reserve(static_cast<std::size_t>(batch.total_steps()));
  for (const Episode& ep : batch.episodes) {
    for (Index t = 0; t < ep.length(); ++t) {
      Eigen::VectorXd v(ep.states.rows() + ep.actions.rows());
      v << ep.states.col(t), ep.actions.col(t);
      out.push_back({std::move(v), label});
    }
  }
  return out;
}

void write_features_csv(std::ostream& out, const std::vector<StepFeature>& features) {
  if (features.empty()) return;
  const Index n = features.front().vector.size();
  for (Index i = 0; i < n; ++i) out << 'x' << i << ',';
  out << "label\n";
  char buf[32];
  for (const StepFeature& f : features) {
    for (Index i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", f.vector[i]);
      out << buf << ',';
    }
    out << f.label << '\n';
  }
}

std::vector<StepFeature> read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto columns = static_cast<Index>(std::count(line.begin(), line.end(), ','));
  std::vector<StepFeature> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    StepFeature f{Eigen::VectorXd(columns), 0};
    for (Index i = 0; i < columns; ++i) {
      std::getline(ss, cell, ',');
      f.vector[i] = std::strtod(cell.c_str(), nullptr);
    }
    std::getline(ss, cell, ',');
    f.label = std::stoi(cell);
    out.push_back(std::move(f));
  }
  return out;
}

namespace {

double sigmoid(double logit) {
  const double z = std::clamp(logit, -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(-z));
}

Eigen::MatrixXd stack(const std::vector<StepFeature>& features, Index rows) {
  Eigen::MatrixXd x(rows, static_cast<Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].vector.size() != rows) throw InvalidInput("discriminator feature has the wrong dimension");
    x.col(static_cast<Index>(i)) = features[i].vector;
  }
  return x;
}

double mean_log_prob(const DiscriminatorState& state, const TrajectoryBatch& batch, bool as_post) {
  const Eigen::VectorXd p = disc_predict_all(state, featurize(batch));
  double s = 0.0;
  for (Index i = 0; i < p.size(); ++i) s += std::log(std::max(as_post ? p[i] : 1.0 - p[i], kProbabilityFloor));
  return s / static_cast<double>(p.size());
}

}  // namespace

double disc_logit(const DiscriminatorState& state, const Eigen::VectorXd& feature) {
  if (feature.size() != state.input_size()) throw InvalidInput("discriminator feature has the wrong dimension");
  return mlp_forward(state.psi, feature)[0];
}

double disc_predict(const DiscriminatorState& state, const StepFeature& feature) {
  return sigmoid(disc_logit(state, feature.vector));
}

Eigen::VectorXd disc_predict_all(const DiscriminatorState& state, const std::vector<StepFeature>& features) {
  if (features.empty()) return {};
  const Eigen::RowVectorXd logits = mlp_forward(state.psi, stack(features, state.input_size())).row(0);
  Eigen::VectorXd p(logits.size());
  for (Index i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

double disc_reward(const DiscriminatorState& state, const TrajectoryBatch& d_post) {
  if (d_post.label != BatchLabel::PostAdaptation) throw InvalidInput("disc_reward expects a post-adaptation batch");
  return mean_log_prob(state, d_post, true);
}

double disc_reward_symmetric(const DiscriminatorState& state, const TrajectoryBatch& d_pre,
                             const TrajectoryBatch& d_post) {
  return 0.5 * (mean_log_prob(state, d_post, true) + mean_log_prob(state, d_pre, false));
}

double disc_loss(const DiscriminatorState& state, const std::vector<StepFeature>& features) {
  if (features.empty()) return 0.0;
  const Eigen::VectorXd p = disc_predict_all(state, features);
  double s = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double q = features[i].label == 1 ? p[static_cast<Index>(i)] : 1.0 - p[static_cast<Index>(i)];
    s -= std::log(std::max(q, kProbabilityFloor));
  }
  return s / static_cast<double>(features.size());
}

double disc_accuracy(const DiscriminatorState& state, const std::vector<StepFeature>& features) {
  if (features.empty()) return 0.0;
  const Eigen::VectorXd p = disc_predict_all(state, features);
  Index correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i)
    correct += (p[static_cast<Index>(i)] > 0.5 ? 1 : 0) == features[i].label;
  return static_cast<double>(correct) / static_cast<double>(features.size());
}

ParamVector disc_loss_gradient(const DiscriminatorState& state, const std::vector<StepFeature>& features) {
  if (features.empty()) return ParamVector(state.psi.spec);
  const Eigen::MatrixXd x = stack(features, state.input_size());
  const Eigen::RowVectorXd logits = mlp_forward(state.psi, x).row(0);
  Eigen::MatrixXd cot(1, x.cols());
  // d BCE / d logit = sigmoid(logit) - y
  for (Index i = 0; i < x.cols(); ++i)
    cot(0, i) = (sigmoid(logits[i]) - features[static_cast<std::size_t>(i)].label) / static_cast<double>(x.cols());
  return mlp_backward(state.psi, x, cot);
}

DiscriminatorState disc_sgd_step(const DiscriminatorState& state, const std::vector<StepFeature>& minibatch) {
  DiscriminatorState next = state;
  next.psi = axpy_params(-state.learning_rate, disc_loss_gradient(state, minibatch), state.psi);
  return next;
}

std::vector<std::vector<StepFeature>> balanced_minibatches(std::vector<StepFeature> pre,
                                                           std::vector<StepFeature> post, Index minibatch_size,
                                                           Rng& rng) {
  if (pre.empty() || post.empty()) throw InvalidInput("discriminator update needs both pre and post features");
  std::shuffle(pre.begin(), pre.end(), rng);
  std::shuffle(post.begin(), post.end(), rng);
  const std::size_t n = std::min(pre.size(), post.size());
  pre.resize(n);
  post.resize(n);
  const auto half = static_cast<std::size_t>(std::max<Index>(minibatch_size / 2, 1));
  std::vector<std::vector<StepFeature>> batches;
  for (std::size_t start = 0; start < n; start += half) {
    const std::size_t end = std::min(n, start + half);
    std::vector<StepFeature> mb;
    mb.reserve(2 * (end - start));
    for (std::size_t i = start; i < end; ++i) {
      mb.push_back(std::move(pre[i]));
      mb.push_back(std::move(post[i]));
    }
    batches.push_back(std::move(mb));
  }
  return batches;
}

DiscriminatorState disc_update_features(const DiscriminatorState& state, std::vector<StepFeature> pre,
                                        std::vector<StepFeature> post, Rng& rng) {
  DiscriminatorState s = state;
  for (const auto& mb : balanced_minibatches(std::move(pre), std::move(post), state.minibatch_size, rng))
    s = disc_sgd_step(s, mb);
  return s;
}

DiscriminatorState disc_update(const DiscriminatorState& state, const std::vector<TrajectoryBatch>& d_pre,
                               const std::vector<TrajectoryBatch>& d_post, Rng& rng) {
  std::vector<StepFeature> pre, post;
  for (const auto& b : d_pre) {
    auto f = featurize(b);
    pre.insert(pre.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
  }
  for (const auto& b : d_post) {
    auto f = featurize(b);
    post.insert(post.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
  }
  return disc_update_features(state, std::move(pre), std::move(post), rng);
}

}  // namespace metaadr
