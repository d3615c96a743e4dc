#pragma once

#include "dyad/checkpoint.hpp"
#include "dyad/predictor.hpp"
#include "dyad/skeleton.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dyad::train {

inline constexpr std::array<int, 10> kHorizonMs = {100, 200, 300, 400, 500, 600, 700, 800, 900, 1000};

// Nearest frame (1-based) for a horizon in milliseconds.
int horizon_frame(int ms, double frame_rate = 30.0);

// Mean over frames and joints of the squared (default) or plain joint
// distance. pred and target are frames x K.
double loss(const Matrix& pred, const Matrix& target, bool squared = true);

// Mean joint distance (mm) at a 1-based frame of a frames x K prediction.
double mpjpe_metric(const Matrix& pred, const Matrix& target, int frame);

struct EvalRow {
  std::array<double, 10> horizons{};
  double average = 0.0;  // mean over every predicted frame
};

struct EvalTable {
  EvalRow overall;
  EvalRow subject1;  // subject 1 scored as primary
  EvalRow subject2;
  std::size_t windows = 0;
};

std::string eval_header();
std::string format_eval_row(std::string_view label, const EvalRow& row);
// Header, then `label`, `label/subject1` and `label/subject2` rows.
void write_eval_table(const std::filesystem::path& path, std::string_view label, const EvalTable& table);

// Returns the T_f x K future of the chosen primary subject.
using PredictFn = std::function<Matrix(const DyadSample&, Subject)>;

template <typename S>
PredictFn model_predictor(const model::DyadModel<S>& model) {
  return [&model](const DyadSample& s, Subject primary) {
    return model.predict(s.past(primary), s.partner_past(primary)).future;
  };
}
PredictFn zero_velocity_predictor();
PredictFn oracle_predictor();

// Every window is scored twice, once per subject as primary.
EvalTable evaluate(std::span<const DyadSample> samples, const PredictFn& predict);

struct TrainConfig {
  double learning_rate = 0.0005;
  int batch_size = 32;
  int epochs = 500;
  long max_steps = 0;  // 0: no cap
  std::uint64_t seed = 0;
  bool squared_loss = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  long steps = 0;
  double train_loss = 0.0;
  double validation_mpjpe = 0.0;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_validation = std::numeric_limits<double>::infinity();
  long steps = 0;
};

// Adaptive-moment gradient descent over a ParameterSet.
class Adam {
 public:
  Adam(ad::ParameterSet<float>& params, double lr, double beta1, double beta2, double eps);
  void step();
  long steps() const { return t_; }

  void save(model::Checkpoint& ck) const;
  void restore(const model::Checkpoint& ck);

 private:
  ad::ParameterSet<float>& params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<ad::Mat<float>> m_, v_;
};

class Trainer {
 public:
  // Called after every epoch; `improved` marks a new best validation score.
  using EpochCallback = std::function<void(const EpochRecord&, bool improved)>;

  Trainer(model::DyadModel<float>& model, TrainConfig config);

  // Continue from a checkpoint written by save_state: epoch numbering,
  // step count and optimizer moments carry over.
  void restore_state(const model::Checkpoint& ck);
  model::Checkpoint save_state() const;

  // Leaves the model holding the parameters with the lowest validation MPJPE.
  TrainResult run(std::span<const DyadSample> train, std::span<const DyadSample> validation,
                  const EpochCallback& on_epoch = {});

 private:
  model::DyadModel<float>& model_;
  TrainConfig config_;
  Adam adam_;
  int completed_epochs_ = 0;
  double best_validation_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
};

TrainResult train(std::span<const DyadSample> train, std::span<const DyadSample> validation,
                  model::DyadModel<float>& model, const TrainConfig& config);

}  // namespace dyad::train
