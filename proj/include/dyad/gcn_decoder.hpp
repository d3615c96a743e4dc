#pragma once

#include "dyad/attention.hpp"
#include "dyad/autodiff.hpp"
#include "dyad/skeleton.hpp"

#include <array>
#include <random>
#include <string>
#include <vector>

namespace dyad::gcn {

template <typename S>
using Mat = ad::Mat<S>;

// out = adjacency * x * weight + bias, with a fully learned (directed)
// K x K adjacency over the coordinate nodes.
template <typename S>
struct GraphConvLayer {
  int nodes = 0;
  int in_features = 0;
  int out_features = 0;
  ad::Parameter<S>* adjacency = nullptr;  // nodes x nodes
  ad::Parameter<S>* weight = nullptr;     // in x out
  ad::Parameter<S>* bias = nullptr;       // 1 x out

  static GraphConvLayer create(ad::ParameterSet<S>& params, const std::string& prefix, int nodes,
                               int in_features, int out_features, std::mt19937_64& rng,
                               bool zero_weight = false);

  ad::Var apply(ad::Tape<S>& tape, ad::Var x) const;
};

struct DecoderShape {
  int nodes = 57;
  int input_features = 80;   // 2 (T_l + T_f)
  int hidden = 256;
  int blocks = 12;
  int output_features = 40;  // T_l + T_f

  std::size_t parameter_count() const;
};

// Input graph conv + tanh, `blocks` residual blocks of two graph convs with
// tanh, and a linear output graph conv.
template <typename S>
struct GcnDecoder {
  DecoderShape shape;
  GraphConvLayer<S> input;
  std::vector<std::array<GraphConvLayer<S>, 2>> blocks;
  GraphConvLayer<S> output;

  static GcnDecoder create(ad::ParameterSet<S>& params, const std::string& prefix,
                           const DecoderShape& shape, std::mt19937_64& rng, bool zero_output);

  ad::Var residual(ad::Tape<S>& tape, ad::Var features) const;

  // dct_last + residual([dct_last | aggregate]).
  ad::Var decode(ad::Tape<S>& tape, ad::Var aggregate, ad::Var dct_last) const;
};

Matrix gcn_forward(const Matrix& features, const GraphConvLayer<double>& layer);
Matrix decode(const Matrix& aggregate, const Matrix& dct_last, const GcnDecoder<double>& decoder);

// Merges two decoded coefficient streams, returns to the time domain and keeps
// the last `future` frames as a future x K pose block.
Matrix project_predictions(const Matrix& stream_a, const Matrix& stream_b,
                           const attention::MergeBlock<double>& merge, int future);

}  // namespace dyad::gcn
