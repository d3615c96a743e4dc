#pragma once

#include "dyad/attention.hpp"
#include "dyad/autodiff.hpp"
#include "dyad/gcn_decoder.hpp"
#include "dyad/skeleton.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>

namespace dyad::model {

enum class Variant {
  Full,
  HRIConcat,
  SumPooling,
  AvgPooling,
  MaxPooling,
  NoPairwiseAtt,
  NoDeltaPose,
  EarlyMerge,
  WithSelfAttAux,
  PairwiseAttU12Only,
  SinglePersonHRI,
};

inline constexpr std::array<Variant, 11> kAllVariants = {
    Variant::Full,          Variant::HRIConcat,   Variant::SumPooling,     Variant::AvgPooling,
    Variant::MaxPooling,    Variant::NoPairwiseAtt, Variant::NoDeltaPose,  Variant::EarlyMerge,
    Variant::WithSelfAttAux, Variant::PairwiseAttU12Only, Variant::SinglePersonHRI};

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

struct ModelConfig {
  int joints = 19;
  int past = 60;    // T_p
  int window = 10;  // T_l
  int future = 30;  // T_f
  int latent = 256;
  int hidden = 256;
  int residual_blocks = 12;
  int kernel1 = 6;
  int kernel2 = 5;
  Variant variant = Variant::Full;
  bool share_qk_across_paths = false;
  bool zero_init_output = false;
  // Inputs are divided by this (mm per model unit) before encoding and the
  // decoded trajectory is scaled back to mm.
  double coordinate_scale = 1000.0;
  double attention_eps = 1e-8;

  int dim() const { return 3 * joints; }
  int length() const { return window + future; }
  int subsequences() const { return past - window - future + 1; }

  // Throws ShapeError on inconsistent horizons or kernel sizes.
  void validate() const;

  // Parameter count of the assembled model, without building it.
  std::size_t parameter_count() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct AttentionDiagnostics {
  Vector self_weights;  // a_t, empty when the variant has no primary self-attention
  Vector pair12;        // c12_t
  Vector pair21;        // c21_t
  bool self_degenerate = false;
  bool pair12_degenerate = false;
  bool pair21_degenerate = false;
};

struct Prediction {
  Matrix future;      // T_f x K
  Matrix trajectory;  // (T_l + T_f) x K: reconstructed last window followed by the future
  AttentionDiagnostics diagnostics;
};

template <typename S>
class DyadModel {
 public:
  using Mat = ad::Mat<S>;

  DyadModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ad::ParameterSet<S>& parameters() { return params_; }
  const ad::ParameterSet<S>& parameters() const { return params_; }

  // primary_past / auxiliary_past: T_p x K in mm. Returns the K x (T_l + T_f)
  // time-domain trajectory (mm) of the primary subject.
  ad::Var forward(ad::Tape<S>& tape, const Mat& primary_past, const Mat& auxiliary_past,
                  AttentionDiagnostics* diagnostics = nullptr) const;

  Prediction predict(const Matrix& primary_past, const Matrix& auxiliary_past) const;

  // Subject 1 as primary, then the roles swapped with the same parameters.
  std::pair<Prediction, Prediction> predict_both(const DyadSample& sample) const;

  // Copies values by name; every parameter of this model must be present with
  // a matching shape.
  template <typename T>
  void load_parameters(const ad::ParameterSet<T>& source) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& dst = params_[i];
      const auto* src = source.find(dst.name);
      if (!src) throw ShapeError("missing parameter " + dst.name);
      if (src->value.rows() != dst.value.rows() || src->value.cols() != dst.value.cols())
        throw ShapeError("shape mismatch for parameter " + dst.name);
      dst.value = src->value.template cast<S>();
    }
  }

 private:
  struct SelfPath {
    ad::Var keys;
    ad::Var query;
    attention::ValueList<S> values;
    attention::AttendedVars<S> attended;
  };

  SelfPath self_attention(ad::Tape<S>& tape, const Mat& history) const;
  ad::Var dct_last(ad::Tape<S>& tape, const Mat& history) const;
  ad::Var decode(ad::Tape<S>& tape, ad::Var aggregate, ad::Var last) const;

  ModelConfig config_;
  ad::ParameterSet<S> params_;
  std::optional<attention::SequenceEncoder<S>> self_query_;
  std::optional<attention::SequenceEncoder<S>> self_key_;
  std::optional<attention::SequenceEncoder<S>> pair_query_;
  std::optional<attention::SequenceEncoder<S>> pair_key_;
  std::optional<gcn::GcnDecoder<S>> decoder_;
  std::optional<attention::MergeBlock<S>> merge_pair_;
  std::optional<attention::MergeBlock<S>> merge_out_;
};

}  // namespace dyad::model
