#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dyad/dataset.hpp"
#include "dyad/error.hpp"
#include "dyad/training.hpp"
#include "support/random.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dyad;
using namespace dyad::train;

namespace {

model::ModelConfig small_model() {
  model::ModelConfig c;
  c.latent = 16;
  c.hidden = 16;
  c.residual_blocks = 1;
  return c;
}

std::vector<DyadSample> fixture(int sequences, int length, int stride, std::uint64_t seed, bool slow = false) {
  data::SyntheticDyadConfig cfg;
  if (slow) cfg.group_frequencies = {0.2, 0.4, 0.35, 0.3, 0.3};
  return data::window_samples(data::generate_synthetic(cfg, sequences, length, seed), 60, 30, stride);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("horizon frames") {
  const std::array<int, 10> expected{3, 6, 9, 12, 15, 18, 21, 24, 27, 30};
  for (std::size_t i = 0; i < kHorizonMs.size(); ++i) CHECK(horizon_frame(kHorizonMs[i]) == expected[i]);
  CHECK(horizon_frame(50) == 2);
  CHECK(horizon_frame(1000, 60.0) == 60);
}

TEST_CASE("training loss") {
  const Matrix target = Matrix::Random(40, 57) * 500;
  CHECK(loss(target, target) == 0.0);
  Matrix pred = target;
  pred(17, 3 * 5) += 3.0;
  CHECK(loss(pred, target) == doctest::Approx(9.0 / 760.0).epsilon(1e-12));
  CHECK(loss(pred, target, false) == doctest::Approx(3.0 / 760.0).epsilon(1e-12));

  std::mt19937_64 rng(1);
  const Matrix p2 = target + testing::random_matrix(40, 57, rng, 10);
  CHECK(loss(target + 2 * (p2 - target), target) == doctest::Approx(4 * loss(p2, target)).epsilon(1e-12));
  CHECK(loss(p2, target) > 0);
  CHECK_THROWS_AS(loss(Matrix::Zero(40, 57), Matrix::Zero(39, 57)), ShapeError);
  CHECK_THROWS_AS(loss(Matrix::Zero(40, 56), Matrix::Zero(40, 56)), ShapeError);
}

TEST_CASE("mpjpe metric") {
  const Matrix target = Matrix::Random(30, 57) * 500;
  Matrix pred = target;
  for (int j = 0; j < 19; ++j) {
    pred(9, 3 * j) += 3.0;
    pred(9, 3 * j + 1) += 4.0;
  }
  CHECK(mpjpe_metric(pred, target, 10) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(mpjpe_metric(pred, target, 9) == 0.0);
  CHECK_THROWS_AS(mpjpe_metric(pred, target, 0), ShapeError);
  CHECK_THROWS_AS(mpjpe_metric(pred, target, 31), ShapeError);
  CHECK_THROWS_AS(mpjpe_metric(pred, target.leftCols(54), 1), ShapeError);
}

TEST_CASE("evaluation table format") {
  CHECK(eval_header() == "milliseconds,100,200,300,400,500,600,700,800,900,1000,Average");
  EvalRow row;
  row.horizons = {1.31, 4.31, 9.49, 17.33, 27.42, 39.85, 54.22, 70.20, 86.23, 100.09};
  row.average = 37.57;
  CHECK(format_eval_row("Ours", row) == "Ours,1.31,4.31,9.49,17.33,27.42,39.85,54.22,70.20,86.23,100.09,37.57");
  row.horizons[0] = 1.3149;
  CHECK(format_eval_row("x", row).rfind("x,1.31,", 0) == 0);

  const auto path = std::filesystem::temp_directory_path() / "dyad_eval_table.csv";
  EvalTable table;
  table.overall = row;
  write_eval_table(path, "model", table);
  const std::string text = read_file(path);
  std::istringstream lines(text);
  std::string line;
  std::vector<std::string> all;
  while (std::getline(lines, line)) all.push_back(line);
  REQUIRE(all.size() == 4);
  CHECK(all[0] == eval_header());
  CHECK(all[1].rfind("model,", 0) == 0);
  CHECK(all[2].rfind("model/subject1,", 0) == 0);
  CHECK(all[3].rfind("model/subject2,", 0) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("evaluate") {
  const auto samples = fixture(3, 160, 5, 2, true);
  REQUIRE(samples.size() > 10);
  SUBCASE("perfect predictor scores zero everywhere") {
    const EvalTable t = evaluate(samples, oracle_predictor());
    for (double h : t.overall.horizons) CHECK(h == 0.0);
    CHECK(t.overall.average == 0.0);
    CHECK(t.windows == samples.size());
  }
  SUBCASE("constant-pose predictor error grows with the horizon") {
    const EvalTable t = evaluate(samples, zero_velocity_predictor());
    for (std::size_t i = 1; i < t.overall.horizons.size(); ++i)
      CHECK(t.overall.horizons[i] >= t.overall.horizons[i - 1]);
    CHECK(t.overall.horizons[0] > 0);
  }
  SUBCASE("overall row is the mean of the per-subject rows and the average spans every frame") {
    const PredictFn shifted = [](const DyadSample& s, Subject who) {
      Matrix out = s.future(who);
      for (int t = 0; t < out.rows(); ++t)
        for (int j = 0; j < 19; ++j) out(t, 3 * j) += (who == Subject::First ? 1.0 : 3.0) * (t + 1);
      return out;
    };
    const EvalTable t = evaluate(samples, shifted);
    CHECK(t.subject1.horizons[0] == doctest::Approx(3.0));
    CHECK(t.subject2.horizons[9] == doctest::Approx(90.0));
    CHECK(t.overall.horizons[4] == doctest::Approx(30.0));
    CHECK(t.subject1.average == doctest::Approx(15.5));
    CHECK(t.overall.average == doctest::Approx(31.0));
  }
  SUBCASE("deterministic") {
    const model::DyadModel<float> m(small_model(), 3);
    const EvalTable a = evaluate(std::span(samples).first(4), model_predictor(m));
    const EvalTable b = evaluate(std::span(samples).first(4), model_predictor(m));
    CHECK(a.overall.horizons == b.overall.horizons);
    CHECK(a.overall.average == b.overall.average);
  }
  SUBCASE("empty set") { CHECK_THROWS_AS(evaluate({}, oracle_predictor()), DataError); }
}

TEST_CASE("adam matches the textbook update") {
  ad::ParameterSet<float> params;
  auto& p = params.add("w", ad::Mat<float>::Constant(1, 2, 1.0f));
  Adam adam(params, 0.01, 0.9, 0.999, 1e-8);
  double w[2] = {1.0, 1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 50; ++t) {
    for (int i = 0; i < 2; ++i) {
      const double g = (i + 1) * 2.0 * (w[i] - 0.3);
      p.grad(0, i) = static_cast<float>(g);
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam.step();
    CHECK(p.value(0, 0) == doctest::Approx(w[0]).epsilon(1e-5));
    CHECK(p.value(0, 1) == doctest::Approx(w[1]).epsilon(1e-5));
    p.value(0, 0) = static_cast<float>(w[0]);
    p.value(0, 1) = static_cast<float>(w[1]);
  }
  CHECK(adam.steps() == 50);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.learning_rate == 0.0005);
  CHECK(c.batch_size == 32);
  CHECK(c.epochs == 500);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = {};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = {};
  c.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
}

TEST_CASE("training runs") {
  const auto train_set = fixture(2, 110, 10, 4);
  const auto val_set = fixture(1, 100, 10, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 11;

  SUBCASE("empty splits are rejected") {
    model::DyadModel<float> m(small_model(), 1);
    CHECK_THROWS_AS(train::train({}, val_set, m, cfg), DataError);
    CHECK_THROWS_AS(train::train(train_set, {}, m, cfg), DataError);
  }
  SUBCASE("fixed seeds give identical loss curves") {
    model::DyadModel<float> a(small_model(), 1), b(small_model(), 1);
    const TrainResult ra = train::train(train_set, val_set, a, cfg);
    const TrainResult rb = train::train(train_set, val_set, b, cfg);
    REQUIRE(ra.history.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
      CHECK(ra.history[i].validation_mpjpe == rb.history[i].validation_mpjpe);
      CHECK(ra.history[i].epoch == int(i + 1));
    }
    CHECK(ra.steps == 3 * ((2 * long(train_set.size()) + 3) / 4));
  }
  SUBCASE("best validation parameters are restored") {
    model::DyadModel<float> m(small_model(), 2);
    const TrainResult r = train::train(train_set, val_set, m, cfg);
    double best = 1e300;
    int best_epoch = 0;
    for (const auto& rec : r.history)
      if (rec.validation_mpjpe < best) best = rec.validation_mpjpe, best_epoch = rec.epoch;
    CHECK(r.best_epoch == best_epoch);
    CHECK(r.best_validation == best);
    CHECK(evaluate(val_set, model_predictor(m)).overall.average == doctest::Approx(best).epsilon(1e-12));
  }
  SUBCASE("step cap") {
    model::DyadModel<float> m(small_model(), 3);
    cfg.max_steps = 5;
    cfg.epochs = 100;
    const TrainResult r = train::train(train_set, val_set, m, cfg);
    CHECK(r.steps == 5);
  }
  SUBCASE("resuming reproduces an uninterrupted run") {
    cfg.epochs = 4;
    model::DyadModel<float> whole(small_model(), 4);
    const TrainResult full = train::train(train_set, val_set, whole, cfg);

    model::DyadModel<float> first(small_model(), 4);
    TrainConfig half = cfg;
    half.epochs = 2;
    Trainer t1(first, half);
    model::Checkpoint state;
    t1.run(train_set, val_set, [&](const EpochRecord&, bool) { state = t1.save_state(); });
    write_checkpoint(std::filesystem::temp_directory_path() / "dyad_resume.ckpt", state);
    state = model::read_checkpoint(std::filesystem::temp_directory_path() / "dyad_resume.ckpt");
    std::filesystem::remove(std::filesystem::temp_directory_path() / "dyad_resume.ckpt");

    model::DyadModel<float> second(small_model(), 99);
    Trainer t2(second, cfg);
    t2.restore_state(state);
    const TrainResult rest = t2.run(train_set, val_set);
    REQUIRE(rest.history.size() == 2);
    CHECK(rest.history[0].epoch == 3);
    CHECK(rest.history[1].train_loss == full.history[3].train_loss);
    CHECK(rest.history[1].validation_mpjpe == full.history[3].validation_mpjpe);
    CHECK(rest.steps == full.steps);
  }
  SUBCASE("non-finite data aborts with a numerical error") {
    auto bad = train_set;
    bad[0].subject1_future(3, 3) = std::numeric_limits<double>::infinity();
    model::DyadModel<float> m(small_model(), 5);
    CHECK_THROWS_AS(train::train(bad, val_set, m, cfg), NumericalError);
  }
  SUBCASE("metrics records serialise") {
    nlohmann::json j = EpochRecord{2, 10, 1.5, 20.25};
    CHECK(j["epoch"] == 2);
    CHECK(j["steps"] == 10);
    CHECK(j["train_loss"] == 1.5);
    CHECK(j["validation_mpjpe"] == 20.25);
  }
}

TEST_CASE("training loss decreases on a small synthetic set") {
  const auto train_set = fixture(4, 100, 5, 6);
  const auto val_set = fixture(1, 100, 10, 7);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  model::DyadModel<float> m(small_model(), 8);
  const TrainResult r = train::train(train_set, val_set, m, cfg);
  // Two-epoch moving average.
  std::vector<double> smooth;
  for (std::size_t i = 1; i < r.history.size(); ++i)
    smooth.push_back(0.5 * (r.history[i].train_loss + r.history[i - 1].train_loss));
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] < smooth[i - 1]);
}
