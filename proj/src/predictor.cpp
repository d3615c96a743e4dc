#include "dyad/predictor.hpp"

#include "dyad/error.hpp"
#include "dyad/trajectory_codec.hpp"

#include <random>

namespace dyad::model {
namespace {

constexpr std::array<std::string_view, 11> kVariantNames = {
    "Full",          "HRIConcat",   "SumPooling",     "AvgPooling",
    "MaxPooling",    "NoPairwiseAtt", "NoDeltaPose",  "EarlyMerge",
    "WithSelfAttAux", "PairwiseAttU12Only", "SinglePersonHRI"};

bool uses_pairwise(Variant v) {
  switch (v) {
    case Variant::Full:
    case Variant::NoDeltaPose:
    case Variant::EarlyMerge:
    case Variant::WithSelfAttAux:
    case Variant::PairwiseAttU12Only:
      return true;
    default:
      return false;
  }
}

int pair_merge_inputs(Variant v) {
  switch (v) {
    case Variant::Full:
    case Variant::NoDeltaPose:
      return 2;
    case Variant::EarlyMerge:
    case Variant::WithSelfAttAux:
      return 3;
    default:
      return 0;
  }
}

bool uses_output_merge(Variant v) {
  switch (v) {
    case Variant::Full:
    case Variant::NoDeltaPose:
    case Variant::WithSelfAttAux:
    case Variant::PairwiseAttU12Only:
    case Variant::NoPairwiseAtt:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::string_view variant_name(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

std::optional<Variant> parse_variant(std::string_view name) {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i)
    if (kVariantNames[i] == name) return kAllVariants[i];
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (joints < 1 || latent < 1 || hidden < 1 || residual_blocks < 0)
    throw ShapeError("model dimensions must be positive");
  if (window < 1 || future < 1) throw ShapeError("window and future must be positive");
  if (past < window + future)
    throw ShapeError("past (" + std::to_string(past) + ") must be at least window + future (" +
                     std::to_string(window + future) + ")");
  if (kernel1 < 1 || kernel2 < 1 || window != kernel1 + kernel2 - 1)
    throw ShapeError("window " + std::to_string(window) + " is incompatible with encoder kernels " +
                     std::to_string(kernel1) + " and " + std::to_string(kernel2) +
                     " (needs kernel1 + kernel2 - 1)");
  if (!(coordinate_scale > 0)) throw ShapeError("coordinate_scale must be positive");
  if (!(attention_eps > 0)) throw ShapeError("attention_eps must be positive");
}

std::size_t ModelConfig::parameter_count() const {
  const int nodes = variant == Variant::HRIConcat ? 2 * dim() : dim();
  const attention::EncoderShape enc{nodes, latent, kernel1, kernel2};
  std::size_t encoders = 2;
  if (uses_pairwise(variant) && !share_qk_across_paths)
    encoders += variant == Variant::PairwiseAttU12Only ? 1 : 2;
  const std::size_t L = length();
  auto merge = [L](int inputs) { return inputs * L * L + L; };
  std::size_t total = encoders * enc.parameter_count();
  total += gcn::DecoderShape{nodes, 2 * length(), hidden, residual_blocks, length()}.parameter_count();
  if (int m = pair_merge_inputs(variant)) total += merge(m);
  if (uses_output_merge(variant)) total += merge(2);
  return total;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"joints", c.joints},
                     {"past", c.past},
                     {"window", c.window},
                     {"future", c.future},
                     {"latent", c.latent},
                     {"hidden", c.hidden},
                     {"residual_blocks", c.residual_blocks},
                     {"kernel1", c.kernel1},
                     {"kernel2", c.kernel2},
                     {"variant", std::string(variant_name(c.variant))},
                     {"share_qk_across_paths", c.share_qk_across_paths},
                     {"zero_init_output", c.zero_init_output},
                     {"coordinate_scale", c.coordinate_scale},
                     {"attention_eps", c.attention_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.joints = j.value("joints", d.joints);
  c.past = j.value("past", d.past);
  c.window = j.value("window", d.window);
  c.future = j.value("future", d.future);
  c.latent = j.value("latent", d.latent);
  c.hidden = j.value("hidden", d.hidden);
  c.residual_blocks = j.value("residual_blocks", d.residual_blocks);
  c.kernel1 = j.value("kernel1", d.kernel1);
  c.kernel2 = j.value("kernel2", d.kernel2);
  const std::string name = j.value("variant", std::string(variant_name(d.variant)));
  auto v = parse_variant(name);
  if (!v) throw DataError("unknown variant '" + name + "'");
  c.variant = *v;
  c.share_qk_across_paths = j.value("share_qk_across_paths", d.share_qk_across_paths);
  c.zero_init_output = j.value("zero_init_output", d.zero_init_output);
  c.coordinate_scale = j.value("coordinate_scale", d.coordinate_scale);
  c.attention_eps = j.value("attention_eps", d.attention_eps);
}

template <typename S>
DyadModel<S>::DyadModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const Variant v = config_.variant;
  const int nodes = v == Variant::HRIConcat ? 2 * config_.dim() : config_.dim();
  const attention::EncoderShape enc{nodes, config_.latent, config_.kernel1, config_.kernel2};
  const int L = config_.length();

  self_query_ = attention::SequenceEncoder<S>::create(params_, "self_query", enc, rng);
  self_key_ = attention::SequenceEncoder<S>::create(params_, "self_key", enc, rng);
  if (uses_pairwise(v)) {
    if (config_.share_qk_across_paths) {
      pair_query_ = self_query_;
      pair_key_ = self_key_;
    } else {
      pair_query_ = attention::SequenceEncoder<S>::create(params_, "pair_query", enc, rng);
      if (v != Variant::PairwiseAttU12Only)
        pair_key_ = attention::SequenceEncoder<S>::create(params_, "pair_key", enc, rng);
    }
  }
  decoder_ = gcn::GcnDecoder<S>::create(params_, "gcn", {nodes, 2 * L, config_.hidden, config_.residual_blocks, L},
                                        rng, config_.zero_init_output);
  if (int m = pair_merge_inputs(v))
    merge_pair_ = attention::MergeBlock<S>::create(params_, "merge_pair", m, L,
                                                   attention::MergeBlock<S>::Init::Average);
  if (uses_output_merge(v)) {
    // Without pairwise attention the second stream decodes the partner, so the
    // output merge starts as a pass-through of the primary stream.
    const auto init = v == Variant::NoPairwiseAtt ? attention::MergeBlock<S>::Init::First
                                                  : attention::MergeBlock<S>::Init::Average;
    merge_out_ = attention::MergeBlock<S>::create(params_, "merge_out", 2, L, init);
  }
}

template <typename S>
typename DyadModel<S>::SelfPath DyadModel<S>::self_attention(ad::Tape<S>& tape, const Mat& history) const {
  const int last = config_.past - config_.window;
  const auto starts = attention::subsequence_starts(config_.past, config_.window, config_.future);
  SelfPath p;
  p.keys = self_key_->encode(tape, history, starts);
  p.query = self_query_->encode(tape, history, std::span<const int>(&last, 1));
  p.values = attention::subsequence_values<S>(history, config_.window, config_.future);
  p.attended = attention::attend_on_tape<S>(tape, p.query, p.keys, p.values, S(config_.attention_eps));
  return p;
}

template <typename S>
ad::Var DyadModel<S>::dct_last(ad::Tape<S>& tape, const Mat& history) const {
  const int L = config_.length();
  Mat padded(history.cols(), L);  // K x L, rows are coordinates
  const auto window = history.bottomRows(config_.window);
  padded.leftCols(config_.window) = window.transpose();
  padded.rightCols(config_.future).colwise() = window.row(config_.window - 1).transpose();
  return tape.constant(padded * codec::dct_basis(L).transpose().template cast<S>());
}

template <typename S>
ad::Var DyadModel<S>::decode(ad::Tape<S>& tape, ad::Var aggregate, ad::Var last) const {
  return decoder_->decode(tape, aggregate, last);
}

template <typename S>
ad::Var DyadModel<S>::forward(ad::Tape<S>& tape, const Mat& primary_past, const Mat& auxiliary_past,
                              AttentionDiagnostics* diag) const {
  const int K = config_.dim();
  for (const Mat* m : {&primary_past, &auxiliary_past})
    if (m->rows() != config_.past || m->cols() != K)
      throw ShapeError("forward expects " + std::to_string(config_.past) + " x " + std::to_string(K) +
                       " histories, got " + std::to_string(m->rows()) + " x " + std::to_string(m->cols()));
  if (!primary_past.allFinite() || !auxiliary_past.allFinite())
    throw NumericalError("forward: non-finite input");

  const S inv_scale = S(1.0 / config_.coordinate_scale);
  const Mat x1 = primary_past * inv_scale;
  const Mat x2 = auxiliary_past * inv_scale;
  const int last = config_.past - config_.window;
  const auto starts = attention::subsequence_starts(config_.past, config_.window, config_.future);
  const Variant v = config_.variant;
  AttentionDiagnostics d;
  ad::Var coeffs;

  auto record_self = [&](const SelfPath& p) {
    d.self_weights = tape.value(p.attended.weights).col(0).template cast<double>();
    d.self_degenerate = p.attended.degenerate;
  };

  switch (v) {
    case Variant::HRIConcat: {
      Mat joint(config_.past, 2 * K);
      joint << x1, x2;
      SelfPath p = self_attention(tape, joint);
      record_self(p);
      ad::Var both = decode(tape, p.attended.aggregate, dct_last(tape, joint));
      coeffs = tape.slice_rows(both, 0, K);
      break;
    }
    case Variant::SinglePersonHRI: {
      SelfPath p = self_attention(tape, x1);
      record_self(p);
      coeffs = decode(tape, p.attended.aggregate, dct_last(tape, x1));
      break;
    }
    case Variant::SumPooling:
    case Variant::AvgPooling:
    case Variant::MaxPooling: {
      SelfPath p1 = self_attention(tape, x1);
      SelfPath p2 = self_attention(tape, x2);
      record_self(p1);
      ad::Var u1 = p1.attended.aggregate, u2 = p2.attended.aggregate;
      ad::Var pooled = v == Variant::MaxPooling ? tape.maximum(u1, u2) : tape.add(u1, u2);
      if (v == Variant::AvgPooling) pooled = tape.scale(pooled, S(0.5));
      coeffs = decode(tape, pooled, dct_last(tape, x1));
      break;
    }
    case Variant::NoPairwiseAtt: {
      SelfPath p1 = self_attention(tape, x1);
      SelfPath p2 = self_attention(tape, x2);
      record_self(p1);
      ad::Var a = decode(tape, p1.attended.aggregate, dct_last(tape, x1));
      ad::Var b = decode(tape, p2.attended.aggregate, dct_last(tape, x2));
      coeffs = merge_out_->apply(tape, std::array{a, b});
      break;
    }
    default: {
      // Full and the pairwise ablations.
      SelfPath p1 = self_attention(tape, x1);
      record_self(p1);
      const Mat relative = v == Variant::NoDeltaPose ? x2 : Mat(x1 - x2);
      ad::Var q2 = pair_query_->encode(tape, relative, std::span<const int>(&last, 1));
      auto a12 = attention::attend_on_tape<S>(tape, q2, p1.keys, p1.values, S(config_.attention_eps));
      d.pair12 = tape.value(a12.weights).col(0).template cast<double>();
      d.pair12_degenerate = a12.degenerate;
      ad::Var d1 = dct_last(tape, x1);

      if (v == Variant::PairwiseAttU12Only) {
        ad::Var a = decode(tape, p1.attended.aggregate, d1);
        ad::Var b = decode(tape, a12.aggregate, d1);
        coeffs = merge_out_->apply(tape, std::array{a, b});
        break;
      }

      ad::Var k2 = pair_key_->encode(tape, relative, starts);
      auto v2 = attention::subsequence_values<S>(relative, config_.window, config_.future);
      auto a21 = attention::attend_on_tape<S>(tape, p1.query, k2, v2, S(config_.attention_eps));
      d.pair21 = tape.value(a21.weights).col(0).template cast<double>();
      d.pair21_degenerate = a21.degenerate;

      if (v == Variant::EarlyMerge) {
        ad::Var e = merge_pair_->apply(tape, std::array{a12.aggregate, a21.aggregate, p1.attended.aggregate});
        coeffs = decode(tape, e, d1);
        break;
      }
      ad::Var pair;
      if (v == Variant::WithSelfAttAux) {
        SelfPath p2 = self_attention(tape, x2);
        pair = merge_pair_->apply(tape, std::array{a12.aggregate, a21.aggregate, p2.attended.aggregate});
      } else {
        pair = merge_pair_->apply(tape, std::array{a12.aggregate, a21.aggregate});
      }
      ad::Var a = decode(tape, p1.attended.aggregate, d1);
      ad::Var b = decode(tape, pair, d1);
      coeffs = merge_out_->apply(tape, std::array{a, b});
      break;
    }
  }

  if (diag) *diag = std::move(d);
  const int L = config_.length();
  ad::Var time = tape.matmul(coeffs, tape.constant(codec::dct_basis(L).template cast<S>()));
  return tape.scale(time, S(config_.coordinate_scale));
}

template <typename S>
Prediction DyadModel<S>::predict(const Matrix& primary_past, const Matrix& auxiliary_past) const {
  ad::Tape<S> tape(false);
  Prediction out;
  ad::Var time = forward(tape, primary_past.template cast<S>(), auxiliary_past.template cast<S>(),
                         &out.diagnostics);
  out.trajectory = tape.value(time).transpose().template cast<double>();
  out.future = out.trajectory.bottomRows(config_.future);
  return out;
}

template <typename S>
std::pair<Prediction, Prediction> DyadModel<S>::predict_both(const DyadSample& sample) const {
  return {predict(sample.subject1_past, sample.subject2_past),
          predict(sample.subject2_past, sample.subject1_past)};
}

template class DyadModel<float>;
template class DyadModel<double>;

}  // namespace dyad::model
