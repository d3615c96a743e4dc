#include "dyad/gcn_decoder.hpp"

#include "dyad/error.hpp"
#include "dyad/trajectory_codec.hpp"

#include <cmath>

namespace dyad::gcn {
namespace {

template <typename S>
Mat<S> uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat<S> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<S>(dist(rng));
  return m;
}

}  // namespace

template <typename S>
GraphConvLayer<S> GraphConvLayer<S>::create(ad::ParameterSet<S>& params, const std::string& prefix,
                                            int nodes, int in_features, int out_features,
                                            std::mt19937_64& rng, bool zero_weight) {
  if (nodes < 1 || in_features < 1 || out_features < 1) throw ShapeError("graph conv dimensions must be positive");
  GraphConvLayer layer;
  layer.nodes = nodes;
  layer.in_features = in_features;
  layer.out_features = out_features;
  const double stdv = 1.0 / std::sqrt(double(out_features));
  layer.adjacency = &params.add(prefix + ".adjacency", uniform<S>(nodes, nodes, stdv, rng));
  if (zero_weight) {
    layer.weight = &params.add(prefix + ".weight", Mat<S>::Zero(in_features, out_features));
    layer.bias = &params.add(prefix + ".bias", Mat<S>::Zero(1, out_features));
  } else {
    layer.weight = &params.add(prefix + ".weight", uniform<S>(in_features, out_features, stdv, rng));
    layer.bias = &params.add(prefix + ".bias", uniform<S>(1, out_features, stdv, rng));
  }
  return layer;
}

template <typename S>
ad::Var GraphConvLayer<S>::apply(ad::Tape<S>& tape, ad::Var x) const {
  const Mat<S>& xv = tape.value(x);
  if (xv.rows() != nodes || xv.cols() != in_features)
    throw ShapeError("graph conv expects " + std::to_string(nodes) + " x " + std::to_string(in_features) +
                     " features, got " + std::to_string(xv.rows()) + " x " + std::to_string(xv.cols()));
  ad::Var a = tape.parameter(*adjacency);
  ad::Var w = tape.parameter(*weight);
  // Multiply through the narrower feature width first.
  ad::Var y = in_features > out_features ? tape.matmul(a, tape.matmul(x, w))
                                         : tape.matmul(tape.matmul(a, x), w);
  return tape.add_row_bias(y, tape.parameter(*bias));
}

std::size_t DecoderShape::parameter_count() const {
  auto layer = [this](std::size_t in, std::size_t out) {
    return std::size_t(nodes) * nodes + in * out + out;
  };
  return layer(input_features, hidden) + 2 * std::size_t(blocks) * layer(hidden, hidden) +
         layer(hidden, output_features);
}

template <typename S>
GcnDecoder<S> GcnDecoder<S>::create(ad::ParameterSet<S>& params, const std::string& prefix,
                                    const DecoderShape& shape, std::mt19937_64& rng, bool zero_output) {
  if (shape.input_features != 2 * shape.output_features)
    throw ShapeError("decoder input must be the concatenation of two coefficient blocks");
  GcnDecoder dec;
  dec.shape = shape;
  dec.input = GraphConvLayer<S>::create(params, prefix + ".input", shape.nodes, shape.input_features,
                                        shape.hidden, rng);
  for (int b = 0; b < shape.blocks; ++b) {
    const std::string p = prefix + ".block" + (b < 10 ? "0" : "") + std::to_string(b);
    dec.blocks.push_back({GraphConvLayer<S>::create(params, p + ".gc1", shape.nodes, shape.hidden, shape.hidden, rng),
                          GraphConvLayer<S>::create(params, p + ".gc2", shape.nodes, shape.hidden, shape.hidden, rng)});
  }
  dec.output = GraphConvLayer<S>::create(params, prefix + ".output", shape.nodes, shape.hidden,
                                         shape.output_features, rng, zero_output);
  return dec;
}

template <typename S>
ad::Var GcnDecoder<S>::residual(ad::Tape<S>& tape, ad::Var features) const {
  ad::Var y = tape.tanh(input.apply(tape, features));
  for (const auto& block : blocks) {
    ad::Var h = tape.tanh(block[0].apply(tape, y));
    h = tape.tanh(block[1].apply(tape, h));
    y = tape.add(h, y);
  }
  return output.apply(tape, y);
}

template <typename S>
ad::Var GcnDecoder<S>::decode(ad::Tape<S>& tape, ad::Var aggregate, ad::Var dct_last) const {
  const Mat<S>& u = tape.value(aggregate);
  const Mat<S>& d = tape.value(dct_last);
  if (u.rows() != d.rows() || u.cols() != d.cols() || d.cols() != shape.output_features)
    throw ShapeError("decode: aggregate and dct_last must both be K x " +
                     std::to_string(shape.output_features));
  ad::Var features = tape.concat_cols({dct_last, aggregate});
  return tape.add(dct_last, residual(tape, features));
}

Matrix gcn_forward(const Matrix& features, const GraphConvLayer<double>& layer) {
  if (!layer.adjacency->value.allFinite() || !layer.weight->value.allFinite() ||
      !layer.bias->value.allFinite())
    throw NumericalError("gcn_forward: non-finite parameters");
  ad::Tape<double> tape;
  return tape.value(layer.apply(tape, tape.constant(features)));
}

Matrix decode(const Matrix& aggregate, const Matrix& dct_last, const GcnDecoder<double>& decoder) {
  ad::Tape<double> tape;
  return tape.value(decoder.decode(tape, tape.constant(aggregate), tape.constant(dct_last)));
}

Matrix project_predictions(const Matrix& stream_a, const Matrix& stream_b,
                           const attention::MergeBlock<double>& merge, int future) {
  const Matrix coeffs = attention::merge({stream_a, stream_b}, merge);
  if (future < 1 || future > coeffs.cols()) throw ShapeError("project_predictions: invalid horizon");
  const Matrix time = codec::dct_inverse(coeffs);  // K x L
  return time.rightCols(future).transpose();
}

template struct GraphConvLayer<float>;
template struct GraphConvLayer<double>;
template struct GcnDecoder<float>;
template struct GcnDecoder<double>;

}  // namespace dyad::gcn
