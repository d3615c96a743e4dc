#include "dyad/training.hpp"

#include "dyad/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace dyad::train {
namespace {

void check_shapes(const Matrix& pred, const Matrix& target, const char* what) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError(std::string(what) + ": prediction and target shapes differ");
  if (pred.cols() % 3 != 0) throw ShapeError(std::string(what) + ": columns must be a multiple of 3");
}

std::vector<double> per_frame_mpjpe(const Matrix& pred, const Matrix& target) {
  check_shapes(pred, target, "mpjpe");
  const Eigen::Index joints = pred.cols() / 3;
  std::vector<double> out(pred.rows(), 0.0);
  for (Eigen::Index t = 0; t < pred.rows(); ++t) {
    double sum = 0;
    for (Eigen::Index j = 0; j < joints; ++j) sum += (pred.block(t, 3 * j, 1, 3) - target.block(t, 3 * j, 1, 3)).norm();
    out[t] = sum / joints;
  }
  return out;
}

struct RowAccumulator {
  std::vector<double> sum;
  std::size_t count = 0;

  void add(const std::vector<double>& frames) {
    if (sum.empty()) sum.assign(frames.size(), 0.0);
    for (std::size_t i = 0; i < frames.size(); ++i) sum[i] += frames[i];
    ++count;
  }

  EvalRow finish() const {
    EvalRow row;
    if (count == 0) return row;
    const int frames = static_cast<int>(sum.size());
    for (std::size_t h = 0; h < kHorizonMs.size(); ++h) {
      const int f = horizon_frame(kHorizonMs[h]);
      row.horizons[h] = f <= frames ? sum[f - 1] / count : std::numeric_limits<double>::quiet_NaN();
    }
    row.average = std::accumulate(sum.begin(), sum.end(), 0.0) / (count * sum.size());
    return row;
  }
};

}  // namespace

int horizon_frame(int ms, double frame_rate) { return static_cast<int>(std::lround(ms * frame_rate / 1000.0)); }

double loss(const Matrix& pred, const Matrix& target, bool squared) {
  check_shapes(pred, target, "loss");
  const Eigen::Index joints = pred.cols() / 3;
  double total = 0;
  for (Eigen::Index t = 0; t < pred.rows(); ++t)
    for (Eigen::Index j = 0; j < joints; ++j) {
      const double sq = (pred.block(t, 3 * j, 1, 3) - target.block(t, 3 * j, 1, 3)).squaredNorm();
      total += squared ? sq : std::sqrt(sq);
    }
  return total / double(joints * pred.rows());
}

double mpjpe_metric(const Matrix& pred, const Matrix& target, int frame) {
  check_shapes(pred, target, "mpjpe");
  if (frame < 1 || frame > pred.rows())
    throw ShapeError("mpjpe: frame " + std::to_string(frame) + " outside 1.." + std::to_string(pred.rows()));
  const Eigen::Index joints = pred.cols() / 3;
  double sum = 0;
  for (Eigen::Index j = 0; j < joints; ++j)
    sum += (pred.block(frame - 1, 3 * j, 1, 3) - target.block(frame - 1, 3 * j, 1, 3)).norm();
  return sum / joints;
}

std::string eval_header() {
  std::ostringstream os;
  os << "milliseconds";
  for (int ms : kHorizonMs) os << ',' << ms;
  os << ",Average";
  return os.str();
}

std::string format_eval_row(std::string_view label, const EvalRow& row) {
  std::ostringstream os;
  os << label << std::fixed << std::setprecision(2);
  for (double v : row.horizons) os << ',' << v;
  os << ',' << row.average;
  return os.str();
}

void write_eval_table(const std::filesystem::path& path, std::string_view label, const EvalTable& table) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << eval_header() << '\n'
     << format_eval_row(label, table.overall) << '\n'
     << format_eval_row(std::string(label) + "/subject1", table.subject1) << '\n'
     << format_eval_row(std::string(label) + "/subject2", table.subject2) << '\n';
}

PredictFn zero_velocity_predictor() {
  return [](const DyadSample& s, Subject primary) {
    const Matrix& past = s.past(primary);
    Matrix out(s.future(primary).rows(), past.cols());
    out.rowwise() = past.row(past.rows() - 1);
    return out;
  };
}

PredictFn oracle_predictor() {
  return [](const DyadSample& s, Subject primary) { return s.future(primary); };
}

EvalTable evaluate(std::span<const DyadSample> samples, const PredictFn& predict) {
  if (samples.empty()) throw DataError("evaluate: empty test set");
  RowAccumulator overall, first, second;
  for (const DyadSample& s : samples) {
    for (Subject who : {Subject::First, Subject::Second}) {
      const auto frames = per_frame_mpjpe(predict(s, who), s.future(who));
      overall.add(frames);
      (who == Subject::First ? first : second).add(frames);
    }
  }
  EvalTable table;
  table.overall = overall.finish();
  table.subject1 = first.finish();
  table.subject2 = second.finish();
  table.windows = samples.size();
  return table;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || batch_size < 1 || epochs < 1 || max_steps < 0)
    throw ShapeError("training hyperparameters must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_epsilon > 0))
    throw ShapeError("invalid optimizer moments");
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = nlohmann::json{{"epoch", r.epoch},
                     {"steps", r.steps},
                     {"train_loss", r.train_loss},
                     {"validation_mpjpe", r.validation_mpjpe}};
}

Adam::Adam(ad::ParameterSet<float>& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_.push_back(ad::Mat<float>::Zero(params_[i].value.rows(), params_[i].value.cols()));
    v_.push_back(m_.back());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  const float step = static_cast<float>(lr_ * std::sqrt(c2) / c1);
  const float b1 = float(beta1_), b2 = float(beta2_), eps = float(eps_ * std::sqrt(c2));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    m_[i] = b1 * m_[i] + (1 - b1) * p.grad;
    v_[i] = b2 * v_[i].array() + (1 - b2) * p.grad.array().square();
    p.value.array() -= step * m_[i].array() / (v_[i].array().sqrt() + eps);
  }
}

void Adam::save(model::Checkpoint& ck) const {
  ck.metadata["adam_steps"] = t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ck.tensors.push_back(model::to_tensor<float>("adam.m/" + params_[i].name, m_[i]));
    ck.tensors.push_back(model::to_tensor<float>("adam.v/" + params_[i].name, v_[i]));
  }
}

void Adam::restore(const model::Checkpoint& ck) {
  t_ = ck.metadata.value("adam_steps", 0L);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto* m = ck.find("adam.m/" + params_[i].name);
    const auto* v = ck.find("adam.v/" + params_[i].name);
    if (!m || !v) throw DataError("checkpoint lacks optimizer state for " + params_[i].name);
    m_[i] = model::from_tensor<float>(*m);
    v_[i] = model::from_tensor<float>(*v);
    if (m_[i].rows() != params_[i].value.rows() || m_[i].cols() != params_[i].value.cols())
      throw DataError("optimizer state shape mismatch for " + params_[i].name);
  }
}

Trainer::Trainer(model::DyadModel<float>& model, TrainConfig config)
    : model_(model),
      config_(config),
      adam_(model.parameters(), config.learning_rate, config.beta1, config.beta2, config.adam_epsilon) {
  config_.validate();
}

void Trainer::restore_state(const model::Checkpoint& ck) {
  model::load_checkpoint_into(model_, ck);
  adam_.restore(ck);
  completed_epochs_ = ck.metadata.value("epoch", 0);
  best_validation_ = ck.metadata.value("best_validation", std::numeric_limits<double>::infinity());
  best_epoch_ = ck.metadata.value("best_epoch", 0);
}

model::Checkpoint Trainer::save_state() const {
  nlohmann::json meta{{"epoch", completed_epochs_}, {"best_epoch", best_epoch_}};
  if (std::isfinite(best_validation_)) meta["best_validation"] = best_validation_;
  auto ck = model::make_checkpoint(model_, meta);
  adam_.save(ck);
  return ck;
}

TrainResult Trainer::run(std::span<const DyadSample> train_set, std::span<const DyadSample> validation,
                         const EpochCallback& on_epoch) {
  if (train_set.empty()) throw DataError("training set is empty");
  if (validation.empty()) throw DataError("validation set is empty");
  const auto& cfg = model_.config();
  for (const auto& s : train_set)
    if (s.subject1_past.rows() != cfg.past || s.subject1_future.rows() != cfg.future ||
        s.subject1_past.cols() != cfg.dim())
      throw ShapeError("training sample does not match the model horizons");

  struct Example {
    std::size_t sample;
    Subject primary;
  };
  std::vector<Example> examples;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    examples.push_back({i, Subject::First});
    examples.push_back({i, Subject::Second});
  }

  auto& params = model_.parameters();
  std::vector<ad::Mat<float>> best;
  auto snapshot = [&] {
    best.clear();
    for (std::size_t i = 0; i < params.size(); ++i) best.push_back(params[i].value);
  };

  TrainResult result;
  result.best_validation = best_validation_;
  result.best_epoch = best_epoch_;
  bool capped = false;
  for (int epoch = completed_epochs_ + 1; epoch <= config_.epochs && !capped; ++epoch) {
    // The order depends only on (seed, epoch) so resumed runs replay it.
    std::vector<Example> order = examples;
    std::mt19937_64 rng(config_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < examples.size(); begin += config_.batch_size) {
      if (config_.max_steps > 0 && adam_.steps() >= config_.max_steps) {
        capped = true;
        break;
      }
      const std::size_t end = std::min(examples.size(), begin + config_.batch_size);
      params.zero_grad();
      double batch_loss = 0;
      for (std::size_t e = begin; e < end; ++e) {
        const DyadSample& s = train_set[order[e].sample];
        const Subject who = order[e].primary;
        const Matrix& past = s.past(who);
        Matrix target(cfg.length(), cfg.dim());
        target << past.bottomRows(cfg.window), s.future(who);

        ad::Tape<float> tape;
        ad::Var out = model_.forward(tape, past.cast<float>(), s.partner_past(who).cast<float>());
        ad::Var l = tape.position_loss(out, ad::Mat<float>(target.transpose().cast<float>()), config_.squared_loss);
        const double value = tape.value(l)(0, 0);
        if (!std::isfinite(value)) {
          std::ostringstream os;
          os << "non-finite training loss at epoch " << epoch << ", step " << adam_.steps() + 1
             << ", window " << order[e].sample;
          throw NumericalError(os.str());
        }
        batch_loss += value;
        tape.backward(l);
      }
      const float inv = 1.0f / float(end - begin);
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].grad *= inv;
        if (!params[i].grad.allFinite())
          throw NumericalError("non-finite gradient for " + params[i].name + " at epoch " + std::to_string(epoch));
      }
      adam_.step();
      loss_sum += batch_loss;
      seen += end - begin;
    }
    if (seen == 0) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = adam_.steps();
    rec.train_loss = loss_sum / seen;
    rec.validation_mpjpe = evaluate(validation, model_predictor(model_)).overall.average;
    if (!std::isfinite(rec.validation_mpjpe))
      throw NumericalError("non-finite validation MPJPE at epoch " + std::to_string(epoch));
    completed_epochs_ = epoch;
    const bool improved = rec.validation_mpjpe < best_validation_;
    if (improved) {
      best_validation_ = rec.validation_mpjpe;
      best_epoch_ = epoch;
      snapshot();
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec, improved);
  }

  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best[i];
  result.best_validation = best_validation_;
  result.best_epoch = best_epoch_;
  result.steps = adam_.steps();
  return result;
}

TrainResult train(std::span<const DyadSample> train_set, std::span<const DyadSample> validation,
                  model::DyadModel<float>& model, const TrainConfig& config) {
  Trainer trainer(model, config);
  return trainer.run(train_set, validation);
}

}  // namespace dyad::train
