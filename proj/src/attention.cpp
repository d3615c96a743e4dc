#include "dyad/attention.hpp"

#include "dyad/error.hpp"
#include "dyad/trajectory_codec.hpp"

#include <cmath>

namespace dyad::attention {
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

std::size_t EncoderShape::parameter_count() const {
  const std::size_t c = channels, d = latent;
  return kernel1 * c * d + d + kernel2 * d * d + d;
}

template <typename S>
SequenceEncoder<S> SequenceEncoder<S>::create(ad::ParameterSet<S>& params, const std::string& prefix,
                                              const EncoderShape& shape, std::mt19937_64& rng) {
  if (shape.channels < 1 || shape.latent < 1 || shape.kernel1 < 1 || shape.kernel2 < 1)
    throw ShapeError("encoder dimensions must be positive");
  SequenceEncoder enc;
  enc.shape = shape;
  const double b1 = 1.0 / std::sqrt(double(shape.kernel1 * shape.channels));
  const double b2 = 1.0 / std::sqrt(double(shape.kernel2 * shape.latent));
  enc.conv1_weight =
      &params.add(prefix + ".conv1.weight", uniform<S>(shape.kernel1 * shape.channels, shape.latent, b1, rng));
  enc.conv1_bias = &params.add(prefix + ".conv1.bias", uniform<S>(1, shape.latent, b1, rng));
  enc.conv2_weight =
      &params.add(prefix + ".conv2.weight", uniform<S>(shape.kernel2 * shape.latent, shape.latent, b2, rng));
  enc.conv2_bias = &params.add(prefix + ".conv2.bias", uniform<S>(1, shape.latent, b2, rng));
  return enc;
}

template <typename S>
ad::Var SequenceEncoder<S>::encode(ad::Tape<S>& tape, const Mat<S>& history,
                                   std::span<const int> starts) const {
  const int C = shape.channels, k1 = shape.kernel1;
  const int positions = shape.window() - k1 + 1;  // == kernel2
  if (history.cols() != C)
    throw ShapeError("encoder expects " + std::to_string(C) + " channels, got " +
                     std::to_string(history.cols()));
  if (starts.empty()) throw ShapeError("encoder: no windows");
  for (int s : starts)
    if (s < 0 || s + shape.window() > history.rows()) throw ShapeError("encoder: window out of range");

  // im2col: one row per (window, output position) of the first convolution.
  const Eigen::Index n = static_cast<Eigen::Index>(starts.size());
  Mat<S> cols(n * positions, k1 * C);
  for (Eigen::Index w = 0; w < n; ++w)
    for (int p = 0; p < positions; ++p)
      for (int j = 0; j < k1; ++j)
        cols.block(w * positions + p, j * C, 1, C) = history.row(starts[w] + p + j);

  ad::Var x = tape.constant(std::move(cols));
  ad::Var h1 = tape.relu(tape.add_row_bias(tape.matmul(x, tape.parameter(*conv1_weight)),
                                           tape.parameter(*conv1_bias)));
  ad::Var grouped = tape.group_rows(h1, positions);
  return tape.relu(tape.add_row_bias(tape.matmul(grouped, tape.parameter(*conv2_weight)),
                                     tape.parameter(*conv2_bias)));
}

template <typename S>
MergeBlock<S> MergeBlock<S>::create(ad::ParameterSet<S>& params, const std::string& prefix,
                                    int inputs, int width, Init init) {
  if (inputs < 2) throw ShapeError("merge needs at least two inputs");
  if (width < 1) throw ShapeError("merge width must be positive");
  MergeBlock block;
  block.inputs = inputs;
  block.width = width;
  Mat<S> w = Mat<S>::Zero(inputs * width, width);
  if (init == Init::Average) {
    for (int i = 0; i < inputs; ++i)
      w.block(i * width, 0, width, width).diagonal().setConstant(S(1) / S(inputs));
  } else {
    w.topRows(width).diagonal().setOnes();
  }
  block.weight = &params.add(prefix + ".weight", std::move(w));
  block.bias = &params.add(prefix + ".bias", Mat<S>::Zero(1, width));
  return block;
}

template <typename S>
ad::Var MergeBlock<S>::apply(ad::Tape<S>& tape, std::span<const ad::Var> xs) const {
  if (static_cast<int>(xs.size()) != inputs)
    throw ShapeError("merge expects " + std::to_string(inputs) + " inputs, got " +
                     std::to_string(xs.size()));
  for (ad::Var v : xs)
    if (tape.value(v).cols() != width || tape.value(v).rows() != tape.value(xs[0]).rows())
      throw ShapeError("merge inputs must share shape K x " + std::to_string(width));
  ad::Var cat = tape.concat_cols(xs);
  return tape.add_row_bias(tape.matmul(cat, tape.parameter(*weight)), tape.parameter(*bias));
}

std::vector<int> subsequence_starts(int past, int window, int future) {
  if (window < 1 || future < 0) throw ShapeError("invalid window/future lengths");
  const int n = past - window - future + 1;
  if (n < 1)
    throw ShapeError("history of " + std::to_string(past) + " frames is shorter than window + future = " +
                     std::to_string(window + future));
  std::vector<int> starts(n);
  for (int t = 0; t < n; ++t) starts[t] = t;
  return starts;
}

template <typename S>
ValueList<S> subsequence_values(const Mat<S>& history, int window, int future) {
  const int length = window + future;
  const auto starts = subsequence_starts(static_cast<int>(history.rows()), window, future);
  const Mat<S> basis_t = codec::dct_basis(length).transpose().template cast<S>();
  auto values = std::make_shared<std::vector<Mat<S>>>();
  values->reserve(starts.size());
  for (int s : starts) values->push_back(history.middleRows(s, length).transpose() * basis_t);
  return values;
}

template <typename S>
AttendedVars<S> attend_on_tape(ad::Tape<S>& tape, ad::Var query, ad::Var keys,
                               const ValueList<S>& values, S eps) {
  AttendedVars<S> out;
  ad::Var scores = tape.matmul(keys, tape.transpose(query));
  out.weights = tape.ratio_normalize(scores, eps, &out.degenerate);
  out.aggregate = tape.weighted_sum(out.weights, values);
  return out;
}

std::vector<Subsequence> enumerate_subsequences(const Matrix& history, int window, int future) {
  std::vector<Subsequence> out;
  for (int s : subsequence_starts(static_cast<int>(history.rows()), window, future))
    out.push_back({s, history.middleRows(s, window), history.middleRows(s, window + future)});
  return out;
}

Vector encode_window(const Matrix& window, const SequenceEncoder<double>& encoder) {
  if (window.rows() != encoder.shape.window())
    throw ShapeError("encoder window must have " + std::to_string(encoder.shape.window()) +
                     " frames, got " + std::to_string(window.rows()));
  ad::Tape<double> tape;
  const int start = 0;
  ad::Var out = encoder.encode(tape, window, std::span<const int>(&start, 1));
  return tape.value(out).row(0).transpose();
}

AttentionWeights attention_weights(const Vector& query, const Matrix& keys, double eps) {
  if (keys.rows() < 1) throw ShapeError("attention_weights: no keys");
  if (keys.cols() != query.size()) throw ShapeError("attention_weights: key/query dimension mismatch");
  ad::Tape<double> tape;
  ad::Var scores = tape.constant(keys * query);
  AttentionWeights out;
  out.weights = tape.value(tape.ratio_normalize(scores, eps, &out.degenerate));
  return out;
}

Matrix attend(const Vector& weights, const std::vector<Matrix>& values) {
  if (static_cast<std::size_t>(weights.size()) != values.size() || values.empty())
    throw ShapeError("attend: weight count differs from value count");
  ad::Tape<double> tape;
  auto list = std::make_shared<const std::vector<Matrix>>(values);
  for (const Matrix& v : values)
    if (v.rows() != values[0].rows() || v.cols() != values[0].cols())
      throw ShapeError("attend: values differ in shape");
  return tape.value(tape.weighted_sum(tape.constant(weights), list));
}

Matrix relative_motion(const Matrix& primary, const Matrix& auxiliary) {
  if (primary.rows() != auxiliary.rows() || primary.cols() != auxiliary.cols())
    throw ShapeError("relative_motion: shape mismatch");
  return primary - auxiliary;
}

PairwiseAttention pairwise_attend(const Matrix& primary_history, const Matrix& auxiliary_history,
                                  const EncoderSet& enc, int future, double eps) {
  if (!enc.self_query || !enc.self_key || !enc.pair_query || !enc.pair_key)
    throw ShapeError("pairwise_attend: missing encoder");
  const Matrix relative = relative_motion(primary_history, auxiliary_history);
  const int window = enc.self_key->shape.window();
  const int past = static_cast<int>(primary_history.rows());
  const auto starts = subsequence_starts(past, window, future);
  const int last = past - window;

  ad::Tape<double> tape;
  ad::Var k1 = enc.self_key->encode(tape, primary_history, starts);
  ad::Var q1 = enc.self_query->encode(tape, primary_history, std::span<const int>(&last, 1));
  ad::Var k2 = enc.pair_key->encode(tape, relative, starts);
  ad::Var q2 = enc.pair_query->encode(tape, relative, std::span<const int>(&last, 1));
  auto v1 = subsequence_values<double>(primary_history, window, future);
  auto v2 = subsequence_values<double>(relative, window, future);

  auto a12 = attend_on_tape<double>(tape, q2, k1, v1, eps);
  auto a21 = attend_on_tape<double>(tape, q1, k2, v2, eps);
  PairwiseAttention out;
  out.u12 = tape.value(a12.aggregate);
  out.u21 = tape.value(a21.aggregate);
  out.c12 = {tape.value(a12.weights), a12.degenerate};
  out.c21 = {tape.value(a21.weights), a21.degenerate};
  return out;
}

Matrix merge(const std::vector<Matrix>& inputs, const MergeBlock<double>& block) {
  ad::Tape<double> tape;
  std::vector<ad::Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.constant(m));
  return tape.value(block.apply(tape, vars));
}

template struct SequenceEncoder<float>;
template struct SequenceEncoder<double>;
template struct MergeBlock<float>;
template struct MergeBlock<double>;
template ValueList<float> subsequence_values<float>(const Mat<float>&, int, int);
template ValueList<double> subsequence_values<double>(const Mat<double>&, int, int);
template AttendedVars<float> attend_on_tape<float>(ad::Tape<float>&, ad::Var, ad::Var,
                                                   const ValueList<float>&, float);
template AttendedVars<double> attend_on_tape<double>(ad::Tape<double>&, ad::Var, ad::Var,
                                                     const ValueList<double>&, double);

}  // namespace dyad::attention
