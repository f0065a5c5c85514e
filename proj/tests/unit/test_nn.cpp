#include "metaadr/nn.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace metaadr;

namespace {

// Scalar-templated forward in long double gives the reference for finite differences.
long double inner_product_ld(const BasicParamVector<long double>& p, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& cot) {
  const Matrix<long double> y = mlp_forward(p, x);
  return (y.array() * cot.cast<long double>().array()).sum();
}

MlpSpec random_spec(Rng& rng) {
  std::uniform_int_distribution<Index> layers(1, 3);
  std::uniform_int_distribution<Index> width(1, 8);
  MlpSpec s;
  const Index n = layers(rng);
  for (Index i = 0; i <= n; ++i) s.layer_sizes.push_back(width(rng));
  s.output_activation = rng() % 2 ? Activation::Identity : Activation::Sigmoid;
  return s;
}

}  // namespace

TEST_CASE("mlp_forward zero parameters give zero output") {
  MlpSpec s{{3, 5, 2}};
  ParamVector p(s);
  Eigen::Vector3d x(0.3, -1.0, 2.0);
  CHECK(mlp_forward(p, Eigen::VectorXd(x)).isZero(0.0));
}

TEST_CASE("single identity layer reproduces the input") {
  MlpSpec s{{3, 3}};
  std::vector<Layer<double>> layers{{Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()}};
  ParamVector p = flatten(s, layers);
  Eigen::VectorXd x(3);
  x << 0.1, -2.0, 7.5;
  CHECK(mlp_forward(p, x) == x);
}

TEST_CASE("2-3-1 network matches hand evaluation") {
  MlpSpec s{{2, 3, 1}};
  Eigen::Matrix<double, 3, 2> w1;
  w1 << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6;
  Eigen::Vector3d b1(0.01, -0.02, 0.03);
  Eigen::Matrix<double, 1, 3> w2;
  w2 << 0.7, -0.8, 0.9;
  Eigen::Matrix<double, 1, 1> b2;
  b2 << -0.1;
  ParamVector p = flatten(s, std::vector<Layer<double>>{{w1, b1}, {w2, b2}});
  const double x0 = 0.5, x1 = -0.5;
  const double h0 = std::tanh(0.1 * x0 - 0.2 * x1 + 0.01);
  const double h1 = std::tanh(0.3 * x0 + 0.4 * x1 - 0.02);
  const double h2 = std::tanh(-0.5 * x0 + 0.6 * x1 + 0.03);
  const double expected = 0.7 * h0 - 0.8 * h1 + 0.9 * h2 - 0.1;
  CHECK(mlp_forward(p, Eigen::VectorXd(Eigen::Vector2d(x0, x1)))[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("forward rejects a wrong input size") {
  ParamVector p(MlpSpec{{3, 2}});
  CHECK_THROWS_AS(mlp_forward(p, Eigen::VectorXd(Eigen::Vector2d(1, 2))), InvalidInput);
}

TEST_CASE("parameter length and flatten/unflatten round trip") {
  Rng rng(7);
  MlpSpec s{{4, 6, 5, 2}};
  s.trailing = 2;
  CHECK(s.param_count() == (4 + 1) * 6 + (6 + 1) * 5 + (5 + 1) * 2 + 2);
  ParamVector p = init_params(s, rng);
  p.trailing().setRandom();
  const ParamVector q = flatten(s, unflatten(p), Eigen::VectorXd(p.trailing()));
  CHECK(q.values == p.values);
  CHECK_THROWS_AS(ParamVector(s, Eigen::VectorXd::Zero(3)), InvalidInput);
}

TEST_CASE("init_params draws weights in the fan-in bound and zero biases") {
  Rng rng(3);
  MlpSpec s{{16, 4}};
  const ParamVector p = init_params(s, rng);
  const auto layers = unflatten(p);
  CHECK(layers[0].weight.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(layers[0].bias.isZero(0.0));
}

TEST_CASE("mlp_backward zero cotangent gives zero gradient") {
  Rng rng(1);
  ParamVector p = init_params(MlpSpec{{3, 4, 2}}, rng);
  CHECK(mlp_backward(p, Eigen::MatrixXd::Random(3, 5), Eigen::MatrixXd::Zero(2, 5)).values.isZero(0.0));
}

TEST_CASE("single affine layer gradient of row k is (input, 1)") {
  Rng rng(2);
  MlpSpec s{{3, 2}};
  ParamVector p = init_params(s, rng);
  Eigen::VectorXd x(3);
  x << 0.5, -1.5, 2.0;
  Eigen::VectorXd cot = Eigen::VectorXd::Zero(2);
  cot[1] = 1.0;
  const auto g = unflatten(mlp_backward(p, x, cot));
  CHECK(g[0].weight.row(1).transpose() == x);
  CHECK(g[0].bias[1] == 1.0);
  CHECK(g[0].weight.row(0).isZero(0.0));
  CHECK(g[0].bias[0] == 0.0);
}

TEST_CASE("mlp_backward matches central finite differences on random nets") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const MlpSpec s = random_spec(rng);
    const ParamVector p = init_params(s, rng);
    const Index cols = 1 + static_cast<Index>(rng() % 3);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(s.input_size(), cols);
    const Eigen::MatrixXd cot = Eigen::MatrixXd::Random(s.output_size(), cols);
    const ParamVector g = mlp_backward(p, x, cot);
    BasicParamVector<long double> q(s, p.values.cast<long double>());
    const long double h = 1e-6L;
    for (Index k = 0; k < p.size(); ++k) {
      const long double v = q.values[k];
      q.values[k] = v + h;
      const long double up = inner_product_ld(q, x, cot);
      q.values[k] = v - h;
      const long double down = inner_product_ld(q, x, cot);
      q.values[k] = v;
      const double fd = static_cast<double>((up - down) / (2 * h));
      const double err = std::abs(fd - g.values[k]) / std::max(1.0, std::abs(fd));
      REQUIRE(err < 1e-5);
    }
  }
}

TEST_CASE("axpy_params arithmetic") {
  MlpSpec s{{1, 1}};
  ParamVector x(s, Eigen::Vector2d(1, 2));
  ParamVector y(s, Eigen::Vector2d(3, 4));
  CHECK(axpy_params(0.0, x, y).values == y.values);
  ParamVector neg(s, -y.values);
  CHECK(axpy_params(1.0, neg, y).values.isZero(0.0));
  const ParamVector r = axpy_params(-0.1, x, y);
  CHECK(r.values[0] == doctest::Approx(2.9).epsilon(1e-15));
  CHECK(r.values[1] == doctest::Approx(3.8).epsilon(1e-15));
  CHECK_THROWS_AS(axpy_params(1.0, ParamVector(MlpSpec{{2, 1}}), y), InvalidInput);
}

TEST_CASE("zero_output_layer makes output equal zero") {
  Rng rng(5);
  ParamVector p = init_params(MlpSpec{{2, 8, 8, 1}}, rng);
  zero_output_layer(p);
  CHECK(mlp_forward(p, Eigen::MatrixXd::Random(2, 10)).isZero(0.0));
}

TEST_CASE("parameter files round trip bit-exactly with a spec sidecar") {
  Rng rng(11);
  MlpSpec s{{2, 3, 1}, Activation::Tanh, Activation::Sigmoid, 1};
  ParamVector p = init_params(s, rng);
  p.values[p.size() - 1] = -0.123456789012345;
  const auto path = std::filesystem::temp_directory_path() / "metaadr_nn_test" / "p.bin";
  std::filesystem::create_directories(path.parent_path());
  write_param_file(path, p, {{"epoch", 3}});
  const LoadedParams l = read_param_file(path);
  CHECK(l.params.spec == s);
  CHECK(l.params.values == p.values);
  CHECK(l.metadata.at("epoch") == 3);
  CHECK(param_digest(l.params) == param_digest(p));
}
