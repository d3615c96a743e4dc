#include "dyad/dataset.hpp"
#include "dyad/error.hpp"
#include "dyad/plot.hpp"
#include "dyad/pose_io.hpp"
#include "dyad/predictor.hpp"
#include "dyad/refine.hpp"
#include "dyad/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dyad;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::string env_name(const std::string& sub, const std::string& opt) {
  std::string s = "DYAD_" + sub + "_" + opt;
  for (char& c : s) c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// Every option of `sub` also reads DYAD_<SUB>_<NAME> when absent from the
// command line and the config file.
void attach_env(CLI::App& sub) {
  for (CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    opt->envname(env_name(sub.get_name(), name));
  }
}

// Resolved options of the active subcommand, loadable again with --config.
void echo_config(const CLI::App& app, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (const CLI::App* sub : app.get_subcommands())
    os << app.get_config_formatter()->to_config(sub, true, false, sub->get_name() + ".");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  std::ofstream(probe).put('x');
  if (!fs::exists(probe)) throw DataError("output directory " + dir.string() + " is not writable");
  fs::remove(probe);
}

// ---- synth ----------------------------------------------------------------

struct SynthOptions {
  fs::path out;
  int sequences = 6;
  int length = 300;
  std::string mode = "lag";
  std::uint64_t seed = 0;
  int lag = 8;
  double noise = 2.0;
  double burst_rate = 0.0;
  int validation = -1;
  int test = -1;
  std::string format = "csv";
};

int run_synth(const SynthOptions& o, const CLI::App& app) {
  ensure_dir(o.out);
  data::SyntheticDyadConfig cfg;
  cfg.coupling = o.mode == "mirror" ? data::Coupling::Mirror
                 : o.mode == "offset" ? data::Coupling::OffsetFollow
                                      : data::Coupling::PhaseLag;
  cfg.phase_lag = o.lag;
  cfg.burst_lag = o.lag;
  cfg.noise = o.noise;
  cfg.burst_rate = o.burst_rate;
  if (o.sequences < 0 || o.length < 1) throw ShapeError("--sequences must be >= 0 and --length >= 1");
  const auto seqs = data::generate_synthetic(cfg, o.sequences, o.length, o.seed);

  const int held = o.sequences >= 3 ? std::max(1, o.sequences / 5) : 0;
  const int n_test = o.test >= 0 ? o.test : held;
  const int n_val = o.validation >= 0 ? o.validation : held;
  if (n_test + n_val > o.sequences) throw ShapeError("more held-out sequences than generated");
  std::vector<io::SequenceManifest> manifest;
  for (int i = 0; i < o.sequences; ++i) {
    io::SequenceManifest m;
    m.id = seqs[i].id;
    m.couple = "synthetic-" + o.mode;
    m.frames = o.length;
    m.frame_rate = cfg.frame_rate;
    m.cameras = 0;
    m.split = i >= o.sequences - n_test              ? io::Split::Test
              : i >= o.sequences - n_test - n_val ? io::Split::Validation
                                                     : io::Split::Train;
    m.role1 = seqs[i].role1;
    m.role2 = seqs[i].role2;
    manifest.push_back(m);
  }
  io::write_dataset(o.out, manifest, seqs, o.format == "bin" ? io::PoseFormat::Binary : io::PoseFormat::Csv);
  echo_config(app, o.out / "config.toml");
  std::cout << nlohmann::json{{"event", "synth"}, {"sequences", o.sequences}, {"out", o.out.string()}} << '\n';
  return 0;
}

// ---- shared data preparation -------------------------------------------

struct DataOptions {
  fs::path data;
  std::string centering = "per-subject";
  double frame_rate = 30.0;
};

std::vector<data::DyadSequence> prepare(const io::Dataset& ds, io::Split split, const DataOptions& o) {
  std::vector<data::DyadSequence> out;
  for (auto seq : ds.select(split)) {
    if (seq.subject1.frame_rate != o.frame_rate) {
      seq.subject1 = data::downsample(seq.subject1, o.frame_rate);
      seq.subject2 = data::downsample(seq.subject2, o.frame_rate);
    }
    if (o.centering != "none") {
      const auto& sk = Skeleton::dance19();
      if (seq.subject1.poses.cols() != sk.dim())
        throw DataError("sequence " + seq.id + " does not use the 19-joint skeleton");
      seq = data::canonicalize(seq, sk,
                               o.centering == "leader" ? data::Centering::Leader : data::Centering::PerSubject);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<DyadSample> windows(const std::vector<data::DyadSequence>& seqs, const model::ModelConfig& cfg,
                                int stride, const char* what) {
  auto samples = data::window_samples(seqs, cfg.past, cfg.future, stride);
  if (samples.empty())
    throw DataError(std::string("no ") + what + " windows of " + std::to_string(cfg.past + cfg.future) + " frames");
  for (const auto& s : samples)
    if (s.subject1_past.cols() != cfg.dim())
      throw DataError("pose width " + std::to_string(s.subject1_past.cols()) + " does not match the model (" +
                      std::to_string(cfg.dim()) + ")");
  return samples;
}

// ---- train ----------------------------------------------------------------

struct TrainOptions {
  DataOptions data;
  fs::path out;
  std::string variant = "Full";
  int epochs = 500;
  long max_steps = 0;
  double lr = 0.0005;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int stride = 1;
  int eval_stride = 1;
  bool unsquared = false;
  int latent = 256;
  int hidden = 256;
  int blocks = 12;
  int past = 60;
  int future = 30;
  bool share_qk = false;
  bool zero_init = false;
  fs::path resume;
};

int run_train(const TrainOptions& o, const CLI::App& app) {
  ensure_dir(o.out);
  model::ModelConfig mc;
  mc.variant = *model::parse_variant(o.variant);
  mc.latent = o.latent;
  mc.hidden = o.hidden;
  mc.residual_blocks = o.blocks;
  mc.past = o.past;
  mc.future = o.future;
  mc.share_qk_across_paths = o.share_qk;
  mc.zero_init_output = o.zero_init;

  std::optional<model::Checkpoint> resume;
  if (!o.resume.empty()) {
    resume = model::read_checkpoint(o.resume);
    mc = resume->config;
  }
  mc.validate();

  train::TrainConfig tc;
  tc.learning_rate = o.lr;
  tc.batch_size = o.batch_size;
  tc.epochs = o.epochs;
  tc.max_steps = o.max_steps;
  tc.seed = o.seed;
  tc.squared_loss = !o.unsquared;

  const auto ds = io::load_dataset(o.data.data);
  const auto train_set = windows(prepare(ds, io::Split::Train, o.data), mc, o.stride, "training");
  const auto val_set = windows(prepare(ds, io::Split::Validation, o.data), mc, o.eval_stride, "validation");

  model::DyadModel<float> net(mc, o.seed);
  train::Trainer trainer(net, tc);
  if (resume) trainer.restore_state(*resume);
  echo_config(app, o.out / "config.toml");
  {
    std::ofstream os(o.out / "model.json");
    os << nlohmann::json(mc).dump(2) << '\n';
  }

  std::ofstream metrics(o.out / "metrics.jsonl", resume ? std::ios::app : std::ios::trunc);
  const auto start = std::chrono::steady_clock::now();
  auto on_epoch = [&](const train::EpochRecord& rec, bool improved) {
    nlohmann::json j = rec;
    j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    j["improved"] = improved;
    metrics << j.dump() << '\n';
    metrics.flush();
    std::cout << j.dump() << '\n';
    const auto state = trainer.save_state();
    model::write_checkpoint(o.out / "last.ckpt", state);
    if (improved) model::write_checkpoint(o.out / "best.ckpt", model::make_checkpoint(net, state.metadata));
  };
  const auto result = trainer.run(train_set, val_set, on_epoch);
  std::cout << nlohmann::json{{"event", "done"},
                              {"best_epoch", result.best_epoch},
                              {"best_validation_mpjpe", result.best_validation},
                              {"steps", result.steps}}
                   .dump()
            << '\n';
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalOptions {
  DataOptions data;
  fs::path checkpoint;
  fs::path out;
  std::string split = "test";
  std::string baseline;
  int stride = 1;
  int past = 60;
  int future = 30;
};

int run_eval(const EvalOptions& o, const CLI::App& app) {
  if (o.baseline.empty() && o.checkpoint.empty()) throw ShapeError("eval needs --checkpoint or --baseline");
  if (!o.checkpoint.empty() && !fs::exists(o.checkpoint))
    throw DataError("checkpoint " + o.checkpoint.string() + " does not exist");
  ensure_dir(o.out);
  const auto ds = io::load_dataset(o.data.data);
  const auto split = io::parse_split(o.split);
  const auto seqs = prepare(ds, split, o.data);

  train::EvalTable table;
  std::string label;
  if (!o.baseline.empty()) {
    model::ModelConfig mc;
    mc.past = o.past;
    mc.future = o.future;
    if (!seqs.empty()) mc.joints = static_cast<int>(seqs[0].subject1.poses.cols() / 3);
    const auto samples = windows(seqs, mc, o.stride, "evaluation");
    table = train::evaluate(samples, o.baseline == "oracle" ? train::oracle_predictor()
                                                            : train::zero_velocity_predictor());
    label = o.baseline;
  } else {
    const auto ck = model::read_checkpoint(o.checkpoint);
    model::DyadModel<float> net(ck.config, 0);
    model::load_checkpoint_into(net, ck);
    const auto samples = windows(seqs, ck.config, o.stride, "evaluation");
    table = train::evaluate(samples, train::model_predictor(net));
    label = std::string(model::variant_name(ck.config.variant));
  }
  train::write_eval_table(o.out / "eval.csv", label, table);
  echo_config(app, o.out / "config.toml");
  std::cout << train::eval_header() << '\n' << train::format_eval_row(label, table.overall) << '\n';
  return 0;
}

// ---- predict ----------------------------------------------------------------

struct PredictOptions {
  DataOptions data;
  fs::path checkpoint;
  fs::path out;
  std::string sequence;
  int start = 0;
};

int run_predict(const PredictOptions& o, const CLI::App& app) {
  ensure_dir(o.out);
  const auto ck = model::read_checkpoint(o.checkpoint);
  model::DyadModel<float> net(ck.config, 0);
  model::load_checkpoint_into(net, ck);
  const auto ds = io::load_dataset(o.data.data);
  std::optional<data::DyadSequence> found;
  for (auto split : {io::Split::Train, io::Split::Validation, io::Split::Test})
    for (auto& s : prepare(ds, split, o.data))
      if (s.id == o.sequence) found = std::move(s);
  if (!found) throw DataError("sequence '" + o.sequence + "' not in the dataset");
  const int need = ck.config.past + ck.config.future;
  if (o.start < 0 || o.start + need > found->subject1.frames())
    throw DataError("window at frame " + std::to_string(o.start) + " runs past the sequence end");
  data::DyadSequence cut = *found;
  cut.subject1.poses = found->subject1.poses.middleRows(o.start, need);
  cut.subject2.poses = found->subject2.poses.middleRows(o.start, need);
  const auto sample = data::window_samples(cut, ck.config.past, ck.config.future).front();
  const auto pred = net.predict(sample.subject1_past, sample.subject2_past);
  io::write_pose_csv(o.out / "truth.csv", {sample.subject1_future, found->subject1.frame_rate});
  io::write_pose_csv(o.out / "prediction.csv", {pred.future, found->subject1.frame_rate});
  echo_config(app, o.out / "config.toml");
  return 0;
}

// ---- refine ---------------------------------------------------------------

struct RefineOptions {
  fs::path cameras;
  fs::path detections;
  fs::path out;
  refine::RefineConfig cfg;
};

int run_refine(const RefineOptions& o, const CLI::App& app) {
  if (!fs::exists(o.cameras)) throw DataError("camera file " + o.cameras.string() + " does not exist");
  const auto rig = refine::read_cameras(o.cameras);
  const auto views = refine::read_detections(o.detections, rig.views());
  ensure_dir(o.out);
  const auto result = refine::run_pipeline(views, rig, Skeleton::dance19(), o.cfg);
  io::write_pose_csv(o.out / "poses.csv", {result.poses, 30.0});
  io::write_pose_csv(o.out / "triangulated.csv", {result.triangulated, 30.0});
  const auto& r = result.report;
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json report{{"frames", r.frames},
                        {"repaired_2d", r.repaired_2d},
                        {"missing_3d", r.missing_3d},
                        {"mean_reprojection_residual_px", r.mean_residual},
                        {"max_reprojection_residual_px", r.max_residual},
                        {"limb_std_before_mm", vec(r.limb_std_before)},
                        {"limb_std_after_mm", vec(r.limb_std_after)},
                        {"mean_limb_std_before_mm", r.limb_std_before.mean()},
                        {"mean_limb_std_after_mm", r.limb_std_after.mean()},
                        {"objective_first", r.objective_trace.front()},
                        {"objective_last", r.objective_trace.back()},
                        {"iterations", r.objective_trace.size()},
                        {"converged", r.converged}};
  if (!r.warning.empty()) {
    report["warning"] = r.warning;
    std::cerr << "warning: " << r.warning << '\n';
  }
  std::ofstream(o.out / "report.json") << report.dump(2) << '\n';
  echo_config(app, o.out / "config.toml");
  std::cout << report.dump() << '\n';
  return 0;
}

// ---- plot -----------------------------------------------------------------

struct PlotOptions {
  fs::path sample;
  fs::path prediction;
  fs::path out;
};

int run_plot(const PlotOptions& o, const CLI::App& app) {
  const auto truth = io::read_poses(o.sample);
  const auto pred = io::read_poses(o.prediction);
  const auto img = plot::render_strip(truth.poses, pred.poses, Skeleton::dance19());
  if (o.out.has_parent_path()) ensure_dir(o.out.parent_path());
  plot::write_ppm(o.out, img);
  echo_config(app, fs::path(o.out.string() + ".config.toml"));
  return 0;
}

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--data", d.data, "Dataset directory (manifest.csv + pose files)")->required();
  sub->add_option("--centering", d.centering, "per-subject | leader | none")
      ->check(CLI::IsMember({"per-subject", "leader", "none"}));
  sub->add_option("--frame-rate", d.frame_rate, "Target frame rate after downsampling");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-person motion prediction: data, training, evaluation and 3D refinement"};
  app.set_config("--config", "", "TOML file with option defaults; command-line flags take precedence");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::vector<std::string> variants;
  for (auto v : model::kAllVariants) variants.emplace_back(model::variant_name(v));

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic two-person dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--sequences", synth.sequences, "Number of sequences");
  s->add_option("--length", synth.length, "Frames per sequence");
  s->add_option("--mode", synth.mode, "Coupling: mirror | lag | offset")
      ->check(CLI::IsMember({"mirror", "lag", "offset"}));
  s->add_option("--seed", synth.seed);
  s->add_option("--lag", synth.lag, "Follower delay in frames");
  s->add_option("--noise", synth.noise, "Per-subject noise (mm)");
  s->add_option("--burst-rate", synth.burst_rate, "Expected arm-opening bursts per 90-frame window");
  s->add_option("--validation", synth.validation, "Validation sequences (default: a fifth, at least one)");
  s->add_option("--test", synth.test, "Test sequences (default: a fifth, at least one)");
  s->add_option("--format", synth.format, "csv | bin")->check(CLI::IsMember({"csv", "bin"}));
  attach_env(*s);

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a predictor");
  add_data_options(t, tr.data);
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--variant", tr.variant)->check(CLI::IsMember(variants));
  t->add_option("--epochs", tr.epochs);
  t->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps (0: no cap)");
  t->add_option("--lr", tr.lr);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--seed", tr.seed);
  t->add_option("--stride", tr.stride, "Training window stride (frames)");
  t->add_option("--eval-stride", tr.eval_stride, "Validation window stride (frames)");
  t->add_flag("--unsquared-loss", tr.unsquared, "Train on plain instead of squared joint distances");
  t->add_option("--latent", tr.latent);
  t->add_option("--hidden", tr.hidden);
  t->add_option("--blocks", tr.blocks, "Residual graph-convolution blocks");
  t->add_option("--past", tr.past);
  t->add_option("--future", tr.future);
  t->add_flag("--share-qk", tr.share_qk, "Share query/key encoders between the self and pairwise paths");
  t->add_flag("--zero-init", tr.zero_init, "Zero-initialize the decoder output layer");
  t->add_option("--resume", tr.resume, "Continue from a last.ckpt")->check(CLI::ExistingFile);
  attach_env(*t);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint or a baseline on a split");
  add_data_options(e, ev.data);
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_option("--out", ev.out)->required();
  e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "validation", "test"}));
  e->add_option("--baseline", ev.baseline, "zero-velocity | oracle")
      ->check(CLI::IsMember({"zero-velocity", "oracle"}));
  e->add_option("--stride", ev.stride, "Evaluation window stride (frames)");
  e->add_option("--past", ev.past, "Observed frames for baselines");
  e->add_option("--future", ev.future, "Predicted frames for baselines");
  attach_env(*e);

  PredictOptions pr;
  auto* p = app.add_subcommand("predict", "Write truth and prediction files for one window");
  add_data_options(p, pr.data);
  p->add_option("--checkpoint", pr.checkpoint)->required()->check(CLI::ExistingFile);
  p->add_option("--out", pr.out)->required();
  p->add_option("--sequence", pr.sequence)->required();
  p->add_option("--start", pr.start, "First frame of the observed window");
  attach_env(*p);

  RefineOptions rf;
  auto* r = app.add_subcommand("refine", "Build 3D poses from multi-view 2D detections");
  r->add_option("--cameras", rf.cameras, "Camera file")->required();
  r->add_option("--detections", rf.detections, "Directory of view<i>.csv files")->required();
  r->add_option("--out", rf.out)->required();
  r->add_option("--tau", rf.cfg.tau, "Confidence threshold");
  r->add_option("--window", rf.cfg.spline_window, "Spline knot spacing (frames)");
  r->add_option("--w-limb", rf.cfg.w_limb);
  r->add_option("--w-foot", rf.cfg.w_foot);
  r->add_option("--w-shape", rf.cfg.w_shape);
  r->add_option("--w-anchor", rf.cfg.w_anchor);
  r->add_option("--max-iterations", rf.cfg.max_iterations);
  r->add_option("--tolerance", rf.cfg.tolerance);
  attach_env(*r);

  PlotOptions pl;
  auto* g = app.add_subcommand("plot", "Render ground truth and prediction as a PPM strip");
  g->add_option("--sample", pl.sample, "Ground-truth future pose file")->required();
  g->add_option("--prediction", pl.prediction, "Predicted future pose file")->required();
  g->add_option("--out", pl.out, "Output image (.ppm)")->required();
  attach_env(*g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    if (*s) return run_synth(synth, app);
    if (*t) return run_train(tr, app);
    if (*e) return run_eval(ev, app);
    if (*p) return run_predict(pr, app);
    if (*r) return run_refine(rf, app);
    if (*g) return run_plot(pl, app);
  } catch (const ShapeError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
