#pragma once

#include "metaadr/common.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace metaadr {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Activation { Identity, Tanh, Sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Layer layout of a fully connected network.
///
/// `trailing` reserves free parameters after the network weights (the policy's
/// log-std lives there) so a single flat vector carries everything a gradient
/// step touches.
struct MlpSpec {
  std::vector<Index> layer_sizes;
  Activation hidden_activation = Activation::Tanh;
  Activation output_activation = Activation::Identity;
  Index trailing = 0;

  Index input_size() const { return layer_sizes.front(); }
  Index output_size() const { return layer_sizes.back(); }
  Index layer_count() const { return static_cast<Index>(layer_sizes.size()) - 1; }

  Index network_param_count() const {
    Index n = 0;
    for (Index l = 0; l < layer_count(); ++l) n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return n;
  }
  Index param_count() const { return network_param_count() + trailing; }

  void validate() const {
    if (layer_sizes.size() < 2) throw InvalidInput("MlpSpec needs at least 2 layer sizes");
    for (Index s : layer_sizes)
      if (s < 1) throw InvalidInput("MlpSpec layer sizes must be >= 1");
    if (trailing < 0) throw InvalidInput("MlpSpec trailing count must be >= 0");
  }

  bool operator==(const MlpSpec&) const = default;
};

nlohmann::json to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

/// Flat parameter storage for one network plus its trailing free parameters.
template <typename Scalar>
struct BasicParamVector {
  MlpSpec spec;
  Vector<Scalar> values;

  BasicParamVector() = default;
  explicit BasicParamVector(MlpSpec s) : spec(std::move(s)), values(Vector<Scalar>::Zero(spec.param_count())) {
    spec.validate();
  }
  BasicParamVector(MlpSpec s, Vector<Scalar> v) : spec(std::move(s)), values(std::move(v)) {
    spec.validate();
    if (values.size() != spec.param_count())
      throw InvalidInput("parameter vector length does not match its MlpSpec");
  }

  Index size() const { return values.size(); }
  bool all_finite() const { return values.allFinite(); }

  auto trailing() { return values.tail(spec.trailing); }
  auto trailing() const { return values.tail(spec.trailing); }

  bool operator==(const BasicParamVector& o) const {
    return spec == o.spec && values.size() == o.values.size() && values == o.values;
  }
};

using ParamVector = BasicParamVector<double>;

/// Digest of the raw parameter bytes; equal digests mean bit-identical values.
template <typename Scalar>
std::uint64_t param_digest(const BasicParamVector<Scalar>& p) {
  return fnv1a64(p.values.data(), static_cast<std::size_t>(p.values.size()) * sizeof(Scalar));
}

/// Owned weight matrix (fan_out x fan_in) and bias of one affine layer.
template <typename Scalar>
struct Layer {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;
};

namespace detail {

template <typename Scalar>
Eigen::Map<const Matrix<Scalar>> weight_map(const BasicParamVector<Scalar>& p, Index offset, Index l) {
  return {p.values.data() + offset, p.spec.layer_sizes[l + 1], p.spec.layer_sizes[l]};
}

template <typename Scalar>
Eigen::Map<const Vector<Scalar>> bias_map(const BasicParamVector<Scalar>& p, Index offset, Index l) {
  const Index fan_out = p.spec.layer_sizes[l + 1];
  return {p.values.data() + offset + fan_out * p.spec.layer_sizes[l], fan_out};
}

template <typename Scalar>
void activate(Activation a, Matrix<Scalar>& z) {
  switch (a) {
    case Activation::Identity:
      break;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::Sigmoid:
      z = (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
      break;
  }
}

// Derivative expressed through the activated value y = act(z).
template <typename Scalar>
Matrix<Scalar> activation_slope(Activation a, const Matrix<Scalar>& y) {
  switch (a) {
    case Activation::Tanh:
      return (Scalar(1) - y.array().square()).matrix();
    case Activation::Sigmoid:
      return (y.array() * (Scalar(1) - y.array())).matrix();
    case Activation::Identity:
      break;
  }
  return Matrix<Scalar>::Ones(y.rows(), y.cols());
}

template <typename Scalar, typename Derived>
void check_input(const BasicParamVector<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  if (p.values.size() != p.spec.param_count())
    throw InvalidInput("parameter vector length does not match its MlpSpec");
  if (x.rows() != p.spec.input_size())
    throw InvalidInput("mlp input has " + std::to_string(x.rows()) + " rows, expected " +
                       std::to_string(p.spec.input_size()));
}

}  // namespace detail

/// Splits the flat vector into per-layer weights and biases.
template <typename Scalar>
std::vector<Layer<Scalar>> unflatten(const BasicParamVector<Scalar>& p) {
  std::vector<Layer<Scalar>> layers;
  Index offset = 0;
  for (Index l = 0; l < p.spec.layer_count(); ++l) {
    layers.push_back({detail::weight_map(p, offset, l), detail::bias_map(p, offset, l)});
    offset += (p.spec.layer_sizes[l] + 1) * p.spec.layer_sizes[l + 1];
  }
  return layers;
}

/// Inverse of unflatten; trailing parameters are copied from `trailing`.
template <typename Scalar>
BasicParamVector<Scalar> flatten(const MlpSpec& spec, const std::vector<Layer<Scalar>>& layers,
                                 const Vector<Scalar>& trailing = {}) {
  BasicParamVector<Scalar> p(spec);
  if (static_cast<Index>(layers.size()) != spec.layer_count())
    throw InvalidInput("layer count does not match MlpSpec");
  Index offset = 0;
  for (Index l = 0; l < spec.layer_count(); ++l) {
    const Index in = spec.layer_sizes[l];
    const Index out = spec.layer_sizes[l + 1];
    if (layers[l].weight.rows() != out || layers[l].weight.cols() != in || layers[l].bias.size() != out)
      throw InvalidInput("layer shape does not match MlpSpec");
    Eigen::Map<Matrix<Scalar>>(p.values.data() + offset, out, in) = layers[l].weight;
    Eigen::Map<Vector<Scalar>>(p.values.data() + offset + out * in, out) = layers[l].bias;
    offset += (in + 1) * out;
  }
  if (spec.trailing > 0) {
    if (trailing.size() != spec.trailing) throw InvalidInput("trailing parameter count mismatch");
    p.values.tail(spec.trailing) = trailing;
  }
  return p;
}

/// Forward pass over a batch of column inputs (input_size x batch).
template <typename Scalar, typename Derived>
Matrix<Scalar> mlp_forward(const BasicParamVector<Scalar>& p, const Eigen::MatrixBase<Derived>& inputs) {
  detail::check_input(p, inputs);
  const MlpSpec& spec = p.spec;
  Matrix<Scalar> a = inputs.template cast<Scalar>();
  Index offset = 0;
  for (Index l = 0; l < spec.layer_count(); ++l) {
    Matrix<Scalar> z = detail::weight_map(p, offset, l) * a;
    z.colwise() += detail::bias_map(p, offset, l);
    detail::activate(l + 1 == spec.layer_count() ? spec.output_activation : spec.hidden_activation, z);
    a = std::move(z);
    offset += (spec.layer_sizes[l] + 1) * spec.layer_sizes[l + 1];
  }
  return a;
}

/// Single-input convenience overload.
template <typename Scalar>
Vector<Scalar> mlp_forward(const BasicParamVector<Scalar>& p, const Vector<Scalar>& input) {
  return mlp_forward(p, static_cast<const Eigen::MatrixBase<Vector<Scalar>>&>(input)).col(0);
}

/// Gradient of sum_columns <output, cotangent> with respect to every parameter.
/// Trailing parameters receive zero.
template <typename Scalar, typename DerivedX, typename DerivedC>
BasicParamVector<Scalar> mlp_backward(const BasicParamVector<Scalar>& p, const Eigen::MatrixBase<DerivedX>& inputs,
                                      const Eigen::MatrixBase<DerivedC>& cotangents) {
  detail::check_input(p, inputs);
  const MlpSpec& spec = p.spec;
  if (cotangents.rows() != spec.output_size() || cotangents.cols() != inputs.cols())
    throw InvalidInput("mlp cotangent shape does not match output shape");

  const Index layers = spec.layer_count();
  std::vector<Matrix<Scalar>> acts;
  std::vector<Index> offsets;
  acts.reserve(static_cast<std::size_t>(layers + 1));
  acts.emplace_back(inputs.template cast<Scalar>());
  Index offset = 0;
  for (Index l = 0; l < layers; ++l) {
    offsets.push_back(offset);
    Matrix<Scalar> z = detail::weight_map(p, offset, l) * acts.back();
    z.colwise() += detail::bias_map(p, offset, l);
    detail::activate(l + 1 == layers ? spec.output_activation : spec.hidden_activation, z);
    acts.push_back(std::move(z));
    offset += (spec.layer_sizes[l] + 1) * spec.layer_sizes[l + 1];
  }

  BasicParamVector<Scalar> grad(spec);
  Matrix<Scalar> delta = cotangents.template cast<Scalar>().cwiseProduct(
      detail::activation_slope(spec.output_activation, acts.back()));
  for (Index l = layers - 1; l >= 0; --l) {
    const Index in = spec.layer_sizes[l];
    const Index out = spec.layer_sizes[l + 1];
    Scalar* base = grad.values.data() + offsets[l];
    Eigen::Map<Matrix<Scalar>>(base, out, in).noalias() = delta * acts[l].transpose();
    Eigen::Map<Vector<Scalar>>(base + out * in, out) = delta.rowwise().sum();
    if (l > 0) {
      Matrix<Scalar> back = detail::weight_map(p, offsets[l], l).transpose() * delta;
      delta = back.cwiseProduct(detail::activation_slope(spec.hidden_activation, acts[l]));
    }
  }
  return grad;
}

/// a * x + y.
template <typename Scalar>
BasicParamVector<Scalar> axpy_params(Scalar a, const BasicParamVector<Scalar>& x, const BasicParamVector<Scalar>& y) {
  if (!(x.spec == y.spec) || x.values.size() != y.values.size())
    throw InvalidInput("axpy_params: parameter specs differ");
  BasicParamVector<Scalar> out = y;
  out.values += a * x.values;
  return out;
}

/// Weights uniform in +-1/sqrt(fan_in), biases and trailing parameters zero.
template <typename Scalar = double>
BasicParamVector<Scalar> init_params(const MlpSpec& spec, Rng& rng) {
  BasicParamVector<Scalar> p(spec);
  Index offset = 0;
  for (Index l = 0; l < spec.layer_count(); ++l) {
    const Index in = spec.layer_sizes[l];
    const Index out = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index k = 0; k < in * out; ++k) p.values[offset + k] = static_cast<Scalar>(u(rng));
    offset += (in + 1) * out;
  }
  return p;
}

/// Zeroes the weights and bias of the last layer.
template <typename Scalar>
void zero_output_layer(BasicParamVector<Scalar>& p) {
  const Index l = p.spec.layer_count() - 1;
  const Index n = (p.spec.layer_sizes[l] + 1) * p.spec.layer_sizes[l + 1];
  p.values.segment(p.spec.network_param_count() - n, n).setZero();
}

// Binary parameter files: uint64 little-endian length, then little-endian IEEE doubles.
// A JSON sidecar with the same stem holds the MlpSpec under "spec" plus caller metadata.
void write_param_file(const std::filesystem::path& bin_path, const ParamVector& params,
                      const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedParams {
  ParamVector params;
  nlohmann::json metadata;
};

LoadedParams read_param_file(const std::filesystem::path& bin_path);

}  // namespace metaadr
