#pragma once

#include "dyad/autodiff.hpp"
#include "dyad/skeleton.hpp"

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dyad::attention {

template <typename S>
using Mat = ad::Mat<S>;

template <typename S>
using ValueList = std::shared_ptr<const std::vector<Mat<S>>>;

// Two valid 1D convolutions over time, each followed by a ReLU. The input
// window must collapse to a single latent vector, so window = kernel1 + kernel2 - 1.
struct EncoderShape {
  int channels = 57;
  int latent = 256;
  int kernel1 = 6;
  int kernel2 = 5;

  int window() const { return kernel1 + kernel2 - 1; }
  std::size_t parameter_count() const;
};

template <typename S>
struct SequenceEncoder {
  EncoderShape shape;
  ad::Parameter<S>* conv1_weight = nullptr;  // (kernel1 * channels) x latent, row = tap * channels + channel
  ad::Parameter<S>* conv1_bias = nullptr;    // 1 x latent
  ad::Parameter<S>* conv2_weight = nullptr;  // (kernel2 * latent) x latent
  ad::Parameter<S>* conv2_bias = nullptr;    // 1 x latent

  static SequenceEncoder create(ad::ParameterSet<S>& params, const std::string& prefix,
                                const EncoderShape& shape, std::mt19937_64& rng);

  // history: T x channels. Encodes the windows starting at each entry of
  // `starts` and returns an N x latent matrix, one row per window.
  ad::Var encode(ad::Tape<S>& tape, const Mat<S>& history, std::span<const int> starts) const;
};

// Concatenates inputs along the coefficient axis and applies a learned
// per-row linear map back to `width` coefficients (a kernel-1 convolution
// with the coefficients as channels).
template <typename S>
struct MergeBlock {
  enum class Init { Average, First };

  int inputs = 2;
  int width = 40;
  ad::Parameter<S>* weight = nullptr;  // (inputs * width) x width
  ad::Parameter<S>* bias = nullptr;    // 1 x width

  // Average starts as the mean of the inputs, First as a pass-through of input 0.
  static MergeBlock create(ad::ParameterSet<S>& params, const std::string& prefix, int inputs,
                           int width, Init init);

  ad::Var apply(ad::Tape<S>& tape, std::span<const ad::Var> xs) const;
};

// Window start offsets (0-based): 0 .. past - window - future.
std::vector<int> subsequence_starts(int past, int window, int future);

// DCT coefficient values V_t (K x (window + future)) of every sub-sequence.
template <typename S>
ValueList<S> subsequence_values(const Mat<S>& history, int window, int future);

template <typename S>
struct AttendedVars {
  ad::Var weights;    // N x 1
  ad::Var aggregate;  // K x (window + future)
  bool degenerate = false;
};

// query: 1 x d, keys: N x d. Ratio-normalized scores q.k_t / sum_j q.k_j.
template <typename S>
AttendedVars<S> attend_on_tape(ad::Tape<S>& tape, ad::Var query, ad::Var keys,
                               const ValueList<S>& values, S eps);

// ---- double-precision operation API ------------------------------------

struct Subsequence {
  int start = 0;
  Matrix key_window;    // window x K
  Matrix value_window;  // (window + future) x K
};

std::vector<Subsequence> enumerate_subsequences(const Matrix& history, int window, int future);

Vector encode_window(const Matrix& window, const SequenceEncoder<double>& encoder);
inline Vector encode_query(const Matrix& window, const SequenceEncoder<double>& f_q) {
  return encode_window(window, f_q);
}
inline Vector encode_key(const Matrix& window, const SequenceEncoder<double>& f_k) {
  return encode_window(window, f_k);
}

struct AttentionWeights {
  Vector weights;
  bool degenerate = false;  // denominator below eps; weights are uniform
};

inline constexpr double kDefaultEps = 1e-8;

// keys: N x d.
AttentionWeights attention_weights(const Vector& query, const Matrix& keys, double eps = kDefaultEps);
Matrix attend(const Vector& weights, const std::vector<Matrix>& values);

Matrix relative_motion(const Matrix& primary, const Matrix& auxiliary);

struct EncoderSet {
  const SequenceEncoder<double>* self_query = nullptr;
  const SequenceEncoder<double>* self_key = nullptr;
  const SequenceEncoder<double>* pair_query = nullptr;
  const SequenceEncoder<double>* pair_key = nullptr;
};

struct PairwiseAttention {
  Matrix u12;  // relative query over primary keys and values
  Matrix u21;  // primary query over relative keys and values
  AttentionWeights c12;
  AttentionWeights c21;
};

PairwiseAttention pairwise_attend(const Matrix& primary_history, const Matrix& auxiliary_history,
                                  const EncoderSet& encoders, int future, double eps = kDefaultEps);

Matrix merge(const std::vector<Matrix>& inputs, const MergeBlock<double>& block);

}  // namespace dyad::attention
