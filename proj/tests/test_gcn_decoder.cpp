#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dyad/error.hpp"
#include "dyad/gcn_decoder.hpp"
#include "dyad/trajectory_codec.hpp"
#include "support/gradcheck.hpp"
#include "support/random.hpp"

#include <cmath>

using namespace dyad;
using namespace dyad::gcn;
using testing::max_abs;

namespace {

Matrix gcn_oracle(const Matrix& x, const GraphConvLayer<double>& layer) {
  const Matrix& a = layer.adjacency->value;
  const Matrix& w = layer.weight->value;
  Matrix out(layer.nodes, layer.out_features);
  for (int i = 0; i < layer.nodes; ++i)
    for (int o = 0; o < layer.out_features; ++o) {
      double s = layer.bias->value(0, o);
      for (int j = 0; j < layer.nodes; ++j)
        for (int f = 0; f < layer.in_features; ++f) s += a(i, j) * x(j, f) * w(f, o);
      out(i, o) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("graph convolution") {
  ad::ParameterSet<double> params;
  std::mt19937_64 rng(1);
  auto layer = GraphConvLayer<double>::create(params, "g", 57, 80, 256, rng);
  SUBCASE("zero features and bias give zero") {
    layer.bias->value.setZero();
    CHECK(gcn_forward(Matrix::Zero(57, 80), layer).isZero(0));
  }
  SUBCASE("identity adjacency and weight return the input") {
    auto sq = GraphConvLayer<double>::create(params, "s", 57, 40, 40, rng);
    sq.adjacency->value.setIdentity();
    sq.weight->value.setIdentity();
    sq.bias->value.setZero();
    const Matrix x = testing::random_matrix(57, 40, rng);
    CHECK(max_abs(gcn_forward(x, sq) - x) < 1e-15);
  }
  SUBCASE("default shape") {
    CHECK(gcn_forward(testing::random_matrix(57, 80, rng), layer).rows() == 57);
    CHECK(gcn_forward(testing::random_matrix(57, 80, rng), layer).cols() == 256);
  }
  SUBCASE("summation oracle on a small graph") {
    auto small = GraphConvLayer<double>::create(params, "k4", 4, 3, 3, rng);
    for (int i = 0; i < 20; ++i) {
      const Matrix x = testing::random_matrix(4, 3, rng);
      CHECK(max_abs(gcn_forward(x, small) - gcn_oracle(x, small)) < 1e-12);
    }
    const Matrix x = testing::random_matrix(57, 80, rng);
    CHECK(max_abs(gcn_forward(x, layer) - gcn_oracle(x, layer)) < 1e-10);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(gcn_forward(Matrix::Zero(56, 80), layer), ShapeError);
    CHECK_THROWS_AS(gcn_forward(Matrix::Zero(57, 79), layer), ShapeError);
    layer.weight->value(0, 0) = std::nan("");
    CHECK_THROWS_AS(gcn_forward(Matrix::Zero(57, 80), layer), NumericalError);
  }
}

TEST_CASE("decoder") {
  ad::ParameterSet<double> params;
  std::mt19937_64 rng(2);
  SUBCASE("zero-initialised output layer returns the last-window coefficients") {
    auto dec = GcnDecoder<double>::create(params, "d", DecoderShape{}, rng, true);
    const Matrix u = testing::random_matrix(57, 40, rng), d = testing::random_matrix(57, 40, rng);
    const Matrix out = decode(u, d, dec);
    CHECK(out.rows() == 57);
    CHECK(out.cols() == 40);
    CHECK(max_abs(out - d) == 0.0);
  }
  SUBCASE("random decoder shape and reference forward") {
    const DecoderShape shape{6, 8, 10, 2, 4};
    auto dec = GcnDecoder<double>::create(params, "r", shape, rng, false);
    CHECK(params.scalar_count() == shape.parameter_count());
    const Matrix u = testing::random_matrix(6, 4, rng), d = testing::random_matrix(6, 4, rng);
    Matrix features(6, 8);
    features << d, u;
    Matrix y = gcn_oracle(features, dec.input).array().tanh();
    for (const auto& block : dec.blocks) {
      Matrix h = gcn_oracle(y, block[0]).array().tanh();
      h = gcn_oracle(h, block[1]).array().tanh();
      y += h;
    }
    CHECK(max_abs(decode(u, d, dec) - (d + gcn_oracle(y, dec.output))) < 1e-12);
  }
  SUBCASE("default parameter count") {
    const DecoderShape shape;
    const std::size_t layer = 57 * 57;
    CHECK(shape.parameter_count() ==
          (layer + 80 * 256 + 256) + 24 * (layer + 256 * 256 + 256) + (layer + 256 * 40 + 40));
  }
  SUBCASE("shape errors") {
    auto dec = GcnDecoder<double>::create(params, "e", DecoderShape{6, 8, 10, 1, 4}, rng, false);
    CHECK_THROWS_AS(decode(Matrix::Zero(6, 4), Matrix::Zero(6, 5), dec), ShapeError);
    CHECK_THROWS_AS(decode(Matrix::Zero(5, 4), Matrix::Zero(5, 4), dec), ShapeError);
    CHECK_THROWS_AS(GcnDecoder<double>::create(params, "bad", DecoderShape{6, 9, 10, 1, 4}, rng, false), ShapeError);
  }
}

TEST_CASE("decoder gradients match central differences") {
  ad::ParameterSet<double> params;
  std::mt19937_64 rng(3);
  auto dec = GcnDecoder<double>::create(params, "g", DecoderShape{6, 8, 7, 2, 4}, rng, false);
  const Matrix u = testing::random_matrix(6, 4, rng), d = testing::random_matrix(6, 4, rng);
  const Matrix target = testing::random_matrix(6, 4, rng);
  auto loss = [&](ad::Tape<double>& tape) {
    ad::Var out = dec.decode(tape, tape.constant(u), tape.constant(d));
    return tape.position_loss(out, target, true);
  };
  const auto result = testing::grad_check(params, loss);
  INFO(result.worst);
  CHECK(result.checked == params.scalar_count());
  CHECK(result.max_relative_error < 1e-4);
}

TEST_CASE("project_predictions") {
  ad::ParameterSet<double> params;
  auto merge = attention::MergeBlock<double>::create(params, "m", 2, 40, attention::MergeBlock<double>::Init::Average);
  std::mt19937_64 rng(4);
  SUBCASE("equal streams invert to the original trajectory") {
    const Matrix traj = testing::random_matrix(57, 40, rng);
    const Matrix coeffs = codec::dct_forward(traj);
    const Matrix out = project_predictions(coeffs, coeffs, merge, 30);
    CHECK(out.rows() == 30);
    CHECK(out.cols() == 57);
    CHECK(max_abs(out - traj.rightCols(30).transpose()) < 1e-10);
  }
  SUBCASE("constant coefficients give a constant trajectory") {
    Matrix coeffs = Matrix::Zero(57, 40);
    coeffs.col(0).setConstant(std::sqrt(40.0) * 7.0);
    const Matrix out = project_predictions(coeffs, coeffs, merge, 30);
    CHECK(max_abs(out.array() - 7.0) < 1e-10);
  }
  SUBCASE("invalid horizon") {
    CHECK_THROWS_AS(project_predictions(Matrix::Zero(57, 40), Matrix::Zero(57, 40), merge, 41), ShapeError);
  }
}

TEST_CASE("single and float decoders agree") {
  ad::ParameterSet<double> pd;
  ad::ParameterSet<float> pf;
  std::mt19937_64 r1(5), r2(5);
  const DecoderShape shape{6, 8, 10, 2, 4};
  auto dd = GcnDecoder<double>::create(pd, "x", shape, r1, false);
  auto df = GcnDecoder<float>::create(pf, "x", shape, r2, false);
  std::mt19937_64 rng(6);
  const Matrix u = testing::random_matrix(6, 4, rng), d = testing::random_matrix(6, 4, rng);
  ad::Tape<float> tape(false);
  const Matrix outf =
      tape.value(df.decode(tape, tape.constant(u.cast<float>()), tape.constant(d.cast<float>()))).cast<double>();
  CHECK(max_abs(outf - decode(u, d, dd)) < 1e-4);
}
