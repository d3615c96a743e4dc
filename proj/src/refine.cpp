#include "dyad/refine.hpp"

#include "dyad/error.hpp"

#include <ceres/ceres.h>
#include <unsupported/Eigen/Splines>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dyad::refine {
namespace fs = std::filesystem;
namespace {

struct Reprojection {
  Reprojection(const Projection& p, double u, double v, double weight) : p_(p), u_(u), v_(v), w_(weight) {}

  template <typename T>
  bool operator()(const T* x, T* residual) const {
    T h[3];
    for (int r = 0; r < 3; ++r) h[r] = p_(r, 0) * x[0] + p_(r, 1) * x[1] + p_(r, 2) * x[2] + p_(r, 3);
    residual[0] = T(w_) * (h[0] / h[2] - T(u_));
    residual[1] = T(w_) * (h[1] / h[2] - T(v_));
    return true;
  }

  Projection p_;
  double u_, v_, w_;
};

class ObjectiveFunction final : public ceres::FirstOrderFunction {
 public:
  ObjectiveFunction(const LimbObjective& obj, Eigen::Index rows, Eigen::Index cols)
      : obj_(obj), rows_(rows), cols_(cols) {}

  bool Evaluate(const double* x, double* cost, double* gradient) const override {
    const Matrix poses = Eigen::Map<const Matrix>(x, rows_, cols_);
    Matrix grad;
    cost[0] = obj_.value(poses, gradient ? &grad : nullptr);
    if (gradient) Eigen::Map<Matrix>(gradient, rows_, cols_) = grad;
    return std::isfinite(cost[0]);
  }
  int NumParameters() const override { return static_cast<int>(rows_ * cols_); }

 private:
  const LimbObjective& obj_;
  Eigen::Index rows_, cols_;
};

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  return m;
}

double distance(const Matrix& poses, Eigen::Index t, int a, int b) {
  return (poses.block(t, 3 * a, 1, 3) - poses.block(t, 3 * b, 1, 3)).norm();
}

// Adds d/dp of w * (|a - b| - target)^2 for frame t.
double length_term(const Matrix& poses, Eigen::Index t, int a, int b, double target, double w, Matrix* grad) {
  const Eigen::RowVector3d d = poses.block(t, 3 * a, 1, 3) - poses.block(t, 3 * b, 1, 3);
  const double len = d.norm();
  const double e = len - target;
  if (grad && len > 0) {
    const Eigen::RowVector3d g = 2.0 * w * e / len * d;
    grad->block(t, 3 * a, 1, 3) += g;
    grad->block(t, 3 * b, 1, 3) -= g;
  }
  return w * e * e;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string f;
  while (std::getline(is, f, ',')) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    out.push_back(f);
  }
  return out;
}

double to_double(const std::string& s, const fs::path& path) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError(path.string() + ": bad number '" + s + "'");
  return v;
}

}  // namespace

Detection2DSequence::Detection2DSequence(int frames, int joints)
    : u(Matrix::Zero(frames, joints)),
      v(Matrix::Zero(frames, joints)),
      confidence(Matrix::Zero(frames, joints)),
      repaired(BoolArray::Constant(frames, joints, false)) {}

void Detection2DSequence::validate() const {
  if (v.rows() != u.rows() || v.cols() != u.cols() || confidence.rows() != u.rows() ||
      confidence.cols() != u.cols() || repaired.rows() != u.rows() || repaired.cols() != u.cols())
    throw ShapeError("detection arrays differ in shape");
  if ((confidence.array() < 0).any() || (confidence.array() > 1).any() || !confidence.allFinite())
    throw DataError("detection confidence outside [0, 1]");
}

void CameraRig::validate() const {
  for (std::size_t i = 0; i < projections.size(); ++i) {
    Eigen::FullPivLU<Projection> lu(projections[i]);
    if (!projections[i].allFinite() || lu.rank() != 3)
      throw DataError("camera " + std::to_string(i) + " projection matrix is not rank 3");
  }
}

Eigen::Vector2d project(const Projection& p, const Eigen::Vector3d& x) {
  const Eigen::Vector3d h = p * x.homogeneous();
  return h.hnormalized();
}

void RefineConfig::validate() const {
  if (!(w_limb > 0 && w_foot > 0 && w_shape > 0 && w_anchor > 0)) throw ShapeError("loss weights must be positive");
  if (spline_window < 4) throw ShapeError("spline window must be at least 4 frames");
  if (!(tau >= 0 && tau <= 1)) throw ShapeError("confidence threshold must lie in [0, 1]");
  if (max_iterations < 1 || outer_rounds < 1 || !(tolerance > 0)) throw ShapeError("invalid solver limits");
  if (up_axis < 0 || up_axis > 2) throw ShapeError("up axis must be 0, 1 or 2");
  if (!(floor_quantile >= 0 && floor_quantile <= 1) || !(contact_margin >= 0))
    throw ShapeError("invalid ground-contact settings");
}

Detection2DSequence repair_2d(const Detection2DSequence& seq, double tau) {
  seq.validate();
  Detection2DSequence out = seq;
  for (int j = 0; j < seq.joints(); ++j) {
    std::vector<int> good;
    for (int t = 0; t < seq.frames(); ++t)
      if (seq.confidence(t, j) >= tau) good.push_back(t);
    if (good.empty() && seq.frames() > 0)
      throw DataError("joint " + std::to_string(j) + " has no detection with confidence >= " + std::to_string(tau));
    std::size_t next = 0;  // first confident frame after t
    for (int t = 0; t < seq.frames(); ++t) {
      while (next < good.size() && good[next] <= t) ++next;
      if (seq.confidence(t, j) >= tau) continue;
      double wu, wv;
      if (next == 0) {
        wu = seq.u(good.front(), j);
        wv = seq.v(good.front(), j);
      } else if (next == good.size()) {
        wu = seq.u(good.back(), j);
        wv = seq.v(good.back(), j);
      } else {
        const int a = good[next - 1], b = good[next];
        const double s = double(t - a) / double(b - a);
        wu = (1 - s) * seq.u(a, j) + s * seq.u(b, j);
        wv = (1 - s) * seq.v(a, j) + s * seq.v(b, j);
      }
      out.u(t, j) = wu;
      out.v(t, j) = wv;
      out.confidence(t, j) = tau;
      out.repaired(t, j) = true;
    }
  }
  return out;
}

TriangulatedPoint triangulate(std::span<const Observation> obs, const CameraRig& rig, double tau, bool refine) {
  if (obs.size() != rig.projections.size()) throw ShapeError("one observation per camera is required");
  std::vector<int> used;
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (obs[i].confidence >= tau && obs[i].confidence > 0 && std::isfinite(obs[i].u) && std::isfinite(obs[i].v))
      used.push_back(static_cast<int>(i));
  TriangulatedPoint out;
  out.views = static_cast<int>(used.size());
  if (used.size() < 2) return out;

  Eigen::Matrix<double, Eigen::Dynamic, 4> a(2 * used.size(), 4);
  for (std::size_t n = 0; n < used.size(); ++n) {
    const Projection& p = rig.projections[used[n]];
    const Observation& o = obs[used[n]];
    Eigen::RowVector4d r1 = o.u * p.row(2) - p.row(0);
    Eigen::RowVector4d r2 = o.v * p.row(2) - p.row(1);
    a.row(2 * n) = o.confidence * r1 / std::max(r1.norm(), 1e-300);
    a.row(2 * n + 1) = o.confidence * r2 / std::max(r2.norm(), 1e-300);
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 4>> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-300 || !h.allFinite()) return out;
  Eigen::Vector3d x = h.hnormalized();

  if (refine) {
    ceres::Problem problem;
    for (int i : used)
      problem.AddResidualBlock(new ceres::AutoDiffCostFunction<Reprojection, 2, 3>(new Reprojection(
                                   rig.projections[i], obs[i].u, obs[i].v, std::sqrt(obs[i].confidence))),
                               nullptr, x.data());
    ceres::Solver::Options options;
    options.linear_solver_type = ceres::DENSE_QR;
    options.max_num_iterations = 20;
    options.logging_type = ceres::SILENT;
    ceres::Solver::Summary summary;
    ceres::Solve(options, &problem, &summary);
  }

  double res = 0;
  for (int i : used) res += (project(rig.projections[i], x) - Eigen::Vector2d(obs[i].u, obs[i].v)).norm();
  out.position = x;
  out.residual = res / used.size();
  out.missing = false;
  return out;
}

Track3D triangulate_sequence(const std::vector<Detection2DSequence>& views, const CameraRig& rig,
                             const RefineConfig& config) {
  if (views.empty()) throw DataError("no detection views");
  if (static_cast<int>(views.size()) != rig.views())
    throw DataError("detections cover " + std::to_string(views.size()) + " views but the rig has " +
                    std::to_string(rig.views()));
  const int frames = views[0].frames(), joints = views[0].joints();
  for (const auto& v : views) {
    v.validate();
    if (v.frames() != frames || v.joints() != joints) throw DataError("detection views are not frame-aligned");
  }
  Track3D track;
  track.poses = Matrix::Zero(frames, 3 * joints);
  track.missing = BoolArray::Constant(frames, joints, true);
  track.residuals = Matrix::Zero(frames, joints);
  std::vector<Observation> obs(views.size());
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < joints; ++j) {
      for (std::size_t i = 0; i < views.size(); ++i)
        obs[i] = {views[i].u(t, j), views[i].v(t, j), views[i].confidence(t, j)};
      const auto p = triangulate(obs, rig, config.tau, config.refine_reprojection);
      if (p.missing) continue;
      track.poses.block(t, 3 * j, 1, 3) = p.position.transpose();
      track.missing(t, j) = false;
      track.residuals(t, j) = p.residual;
    }
  return track;
}

Vector spline_smooth(const Vector& track, int window, const std::vector<bool>& missing) {
  using Spline = Eigen::Spline<double, 1, 3>;
  constexpr int degree = 3;
  const Eigen::Index n = track.size();
  if (n < 4) throw ShapeError("spline smoothing needs at least 4 frames");
  if (window < 4) throw ShapeError("spline window must be at least 4 frames");
  if (!missing.empty() && static_cast<Eigen::Index>(missing.size()) != n)
    throw ShapeError("missing mask length differs from the track");
  auto is_missing = [&](Eigen::Index t) { return !missing.empty() && missing[t]; };

  std::vector<Eigen::Index> observed;
  for (Eigen::Index t = 0; t < n; ++t)
    if (!is_missing(t)) {
      if (!std::isfinite(track(t))) throw NumericalError("non-finite value in observed track entry");
      observed.push_back(t);
    }
  if (observed.empty()) throw DataError("spline smoothing: every frame is missing");

  // Gaps get a linear guess at a small weight so every basis stays constrained.
  Vector guess = track;
  {
    std::size_t next = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
      while (next < observed.size() && observed[next] <= t) ++next;
      if (!is_missing(t)) continue;
      if (next == 0)
        guess(t) = track(observed.front());
      else if (next == observed.size())
        guess(t) = track(observed.back());
      else {
        const auto a = observed[next - 1], b = observed[next];
        const double s = double(t - a) / double(b - a);
        guess(t) = (1 - s) * track(a) + s * track(b);
      }
    }
  }

  const double span = double(n - 1);
  std::vector<double> knots(degree + 1, 0.0);
  for (int k = window; k < n - 1; k += window) knots.push_back(k / span);
  knots.insert(knots.end(), degree + 1, 1.0);
  const Spline::KnotVectorType kv = Eigen::Map<const Eigen::RowVectorXd>(knots.data(), Eigen::Index(knots.size()));
  const Eigen::Index bases = static_cast<Eigen::Index>(knots.size()) - degree - 1;

  Matrix design = Matrix::Zero(n, bases);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double u = t / span;
    const auto first = Spline::Span(u, degree, kv) - degree;
    const auto values = Spline::BasisFunctions(u, degree, kv);
    for (int i = 0; i <= degree; ++i) design(t, first + i) = values(i);
  }
  Vector w = Vector::Ones(n);
  for (Eigen::Index t = 0; t < n; ++t)
    if (is_missing(t)) w(t) = 1e-3;
  const Vector coeffs =
      (w.asDiagonal() * design).completeOrthogonalDecomposition().solve(w.asDiagonal() * guess);
  return design * coeffs;
}

Matrix spline_smooth_poses(const Matrix& poses, const BoolArray& missing, int window) {
  if (missing.rows() != poses.rows() || 3 * missing.cols() != poses.cols())
    throw ShapeError("missing mask does not match the poses");
  Matrix out(poses.rows(), poses.cols());
  std::vector<bool> mask(poses.rows());
  for (Eigen::Index c = 0; c < poses.cols(); ++c) {
    for (Eigen::Index t = 0; t < poses.rows(); ++t) mask[t] = missing(t, c / 3);
    out.col(c) = spline_smooth(poses.col(c), window, mask);
  }
  return out;
}

Vector limb_lengths(const Vector& pose, const Skeleton& skeleton) {
  if (pose.size() != skeleton.dim()) throw ShapeError("pose does not match the skeleton");
  Vector out(skeleton.limbs().size());
  for (std::size_t c = 0; c < skeleton.limbs().size(); ++c) {
    const auto& l = skeleton.limbs()[c];
    out(c) = (joint_position(pose, l.parent) - joint_position(pose, l.child)).norm();
  }
  return out;
}

Vector limb_length_std(const Matrix& poses, const Skeleton& skeleton) {
  if (poses.cols() != skeleton.dim()) throw ShapeError("poses do not match the skeleton");
  const Eigen::Index limbs = static_cast<Eigen::Index>(skeleton.limbs().size());
  Matrix lengths(poses.rows(), limbs);
  for (Eigen::Index t = 0; t < poses.rows(); ++t) lengths.row(t) = limb_lengths(poses.row(t).transpose(), skeleton);
  const Eigen::RowVectorXd mean = lengths.colwise().mean();
  return ((lengths.rowwise() - mean).array().square().colwise().sum() / std::max<Eigen::Index>(poses.rows(), 1))
      .sqrt()
      .transpose();
}

LimbObjective::LimbObjective(const Matrix& initial, const Skeleton& skeleton, const RefineConfig& config)
    : skeleton_(skeleton), config_(config), initial_(initial) {
  config_.validate();
  if (initial.cols() != skeleton.dim()) throw ShapeError("poses do not match the skeleton");
  if (initial.rows() < 1) throw ShapeError("limb optimization needs at least one frame");
  if (!initial.allFinite()) throw NumericalError("initial poses contain non-finite values");
  update_mean_lengths(initial);

  const auto& lm = skeleton.landmarks();
  std::vector<double> hips, shoulders, heights;
  for (Eigen::Index t = 0; t < initial.rows(); ++t) {
    hips.push_back(distance(initial, t, lm.left_hip, lm.right_hip));
    shoulders.push_back(distance(initial, t, lm.left_shoulder, lm.right_shoulder));
    heights.push_back(initial(t, 3 * lm.left_foot + config_.up_axis));
    heights.push_back(initial(t, 3 * lm.right_foot + config_.up_axis));
  }
  hip_width_ = median(hips);
  shoulder_width_ = median(shoulders);
  std::sort(heights.begin(), heights.end());
  const double floor = heights[static_cast<std::size_t>(std::floor(config_.floor_quantile * (heights.size() - 1)))];
  contact_.resize(initial.rows(), 2);
  for (Eigen::Index t = 0; t < initial.rows(); ++t) {
    contact_(t, 0) = initial(t, 3 * lm.left_foot + config_.up_axis) <= floor + config_.contact_margin;
    contact_(t, 1) = initial(t, 3 * lm.right_foot + config_.up_axis) <= floor + config_.contact_margin;
  }
}

void LimbObjective::update_mean_lengths(const Matrix& poses) {
  const auto& limbs = skeleton_.limbs();
  mean_lengths_ = Vector::Zero(limbs.size());
  for (Eigen::Index t = 0; t < poses.rows(); ++t)
    for (std::size_t c = 0; c < limbs.size(); ++c) mean_lengths_(c) += distance(poses, t, limbs[c].parent, limbs[c].child);
  mean_lengths_ /= double(poses.rows());
}

double LimbObjective::value(const Matrix& poses, Matrix* grad) const {
  if (poses.rows() != initial_.rows() || poses.cols() != initial_.cols())
    throw ShapeError("poses differ in shape from the initial estimate");
  if (grad) grad->setZero(poses.rows(), poses.cols());
  const auto& limbs = skeleton_.limbs();
  const auto& lm = skeleton_.landmarks();
  double e = 0;
  for (Eigen::Index t = 0; t < poses.rows(); ++t) {
    for (std::size_t c = 0; c < limbs.size(); ++c)
      e += length_term(poses, t, limbs[c].parent, limbs[c].child, mean_lengths_(c), config_.w_limb, grad);
    e += length_term(poses, t, lm.left_hip, lm.right_hip, hip_width_, config_.w_shape, grad);
    e += length_term(poses, t, lm.left_shoulder, lm.right_shoulder, shoulder_width_, config_.w_shape, grad);
    if (t > 0) {
      const int feet[2] = {lm.left_foot, lm.right_foot};
      for (int f = 0; f < 2; ++f) {
        if (!contact_(t, f) || !contact_(t - 1, f)) continue;
        const Eigen::RowVector3d d = poses.block(t, 3 * feet[f], 1, 3) - poses.block(t - 1, 3 * feet[f], 1, 3);
        e += config_.w_foot * d.squaredNorm();
        if (grad) {
          grad->block(t, 3 * feet[f], 1, 3) += 2 * config_.w_foot * d;
          grad->block(t - 1, 3 * feet[f], 1, 3) -= 2 * config_.w_foot * d;
        }
      }
    }
  }
  const Matrix diff = poses - initial_;
  e += config_.w_anchor * diff.squaredNorm();
  if (grad) *grad += 2 * config_.w_anchor * diff;
  return e;
}

LimbOptimizeResult limb_optimize(const Matrix& poses, const Skeleton& skeleton, const RefineConfig& config) {
  LimbObjective objective(poses, skeleton, config);
  LimbOptimizeResult result;
  result.poses = poses;
  Matrix grad;
  result.objective_trace.push_back(objective.value(result.poses));

  int remaining = config.max_iterations;
  for (int round = 0; round < config.outer_rounds && remaining > 0; ++round) {
    if (round > 0) {
      // The mean is the minimizer of the limb term over targets, so this never raises E.
      objective.update_mean_lengths(result.poses);
      result.objective_trace.push_back(objective.value(result.poses));
    }
    ceres::GradientProblem problem(new ObjectiveFunction(objective, poses.rows(), poses.cols()));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = remaining;
    options.gradient_tolerance = config.tolerance;
    options.function_tolerance = 1e-15;
    options.parameter_tolerance = 1e-15;
    options.logging_type = ceres::SILENT;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, result.poses.data(), &summary);
    for (std::size_t i = 1; i < summary.iterations.size(); ++i) {
      if (summary.iterations[i].step_is_successful) result.objective_trace.push_back(summary.iterations[i].cost);
    }
    const int used = std::max<int>(1, static_cast<int>(summary.iterations.size()) - 1);
    result.iterations += used;
    remaining -= used;

    objective.value(result.poses, &grad);
    result.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    LimbObjective refreshed = objective;
    refreshed.update_mean_lengths(result.poses);
    const double shift = (refreshed.mean_lengths() - objective.mean_lengths()).lpNorm<Eigen::Infinity>();
    if (result.gradient_norm <= config.tolerance && shift <= config.tolerance) {
      result.converged = true;
      break;
    }
  }
  // Report against the final mean lengths.
  objective.update_mean_lengths(result.poses);
  const double final_value = objective.value(result.poses, &grad);
  if (final_value < result.objective_trace.back()) result.objective_trace.push_back(final_value);
  result.gradient_norm = grad.lpNorm<Eigen::Infinity>();
  if (!result.poses.allFinite()) throw NumericalError("limb optimization produced non-finite poses");
  if (!result.converged)
    result.warning = "limb optimization stopped after " + std::to_string(result.iterations) +
                     " iterations with gradient max-norm " + std::to_string(result.gradient_norm) +
                     " above the tolerance " + std::to_string(config.tolerance) +
                     "; returning the last accepted iterate";
  return result;
}

RefineResult run_pipeline(const std::vector<Detection2DSequence>& views, const CameraRig& rig,
                          const Skeleton& skeleton, const RefineConfig& config) {
  config.validate();
  rig.validate();
  if (views.empty()) throw DataError("no detection views");
  if (views[0].joints() != skeleton.joint_count())
    throw DataError("detections have " + std::to_string(views[0].joints()) + " joints, skeleton has " +
                    std::to_string(skeleton.joint_count()));

  RefineResult out;
  std::vector<Detection2DSequence> repaired;
  for (const auto& v : views) {
    repaired.push_back(repair_2d(v, config.tau));
    out.report.repaired_2d += static_cast<int>(repaired.back().repaired.count());
  }
  const Track3D track = triangulate_sequence(repaired, rig, config);
  out.report.frames = static_cast<int>(track.poses.rows());
  out.report.missing_3d = static_cast<int>(track.missing.count());
  const int found = static_cast<int>(track.missing.size()) - out.report.missing_3d;
  out.report.mean_residual = found > 0 ? track.residuals.sum() / found : 0.0;
  out.report.max_residual = track.residuals.size() ? track.residuals.maxCoeff() : 0.0;

  out.smoothed = spline_smooth_poses(track.poses, track.missing, config.spline_window);
  out.triangulated = track.poses;
  for (Eigen::Index t = 0; t < track.missing.rows(); ++t)
    for (Eigen::Index j = 0; j < track.missing.cols(); ++j)
      if (track.missing(t, j)) out.triangulated.block(t, 3 * j, 1, 3) = out.smoothed.block(t, 3 * j, 1, 3);

  auto optimized = limb_optimize(out.smoothed, skeleton, config);
  out.poses = std::move(optimized.poses);
  out.report.limb_std_before = limb_length_std(out.triangulated, skeleton);
  out.report.limb_std_after = limb_length_std(out.poses, skeleton);
  out.report.objective_trace = std::move(optimized.objective_trace);
  out.report.converged = optimized.converged;
  out.report.warning = std::move(optimized.warning);
  return out;
}

CameraRig read_cameras(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open camera file " + path.string());
  CameraRig rig;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> values;
    double x;
    while (ls >> x) values.push_back(x);
    if (!ls.eof()) throw DataError(path.string() + ": non-numeric camera entry");
    if (values.empty()) continue;
    if (values.size() != 12) throw DataError(path.string() + ": each camera needs 12 numbers");
    Projection p;
    for (int i = 0; i < 12; ++i) p(i / 4, i % 4) = values[i];
    rig.projections.push_back(p);
  }
  if (rig.projections.empty()) throw DataError(path.string() + " lists no cameras");
  rig.validate();
  return rig;
}

void write_cameras(const fs::path& path, const CameraRig& rig) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << std::setprecision(17);
  for (const auto& p : rig.projections) {
    for (int i = 0; i < 12; ++i) os << (i ? " " : "") << p(i / 4, i % 4);
    os << '\n';
  }
}

std::vector<Detection2DSequence> read_detections(const fs::path& dir, int views) {
  struct Record {
    int frame, joint;
    double u, v, c;
  };
  std::vector<std::vector<Record>> records(views);
  int frames = 0, joints = 0;
  for (int i = 0; i < views; ++i) {
    const fs::path path = dir / ("view" + std::to_string(i) + ".csv");
    std::ifstream is(path);
    if (!is) throw DataError("cannot open detections " + path.string());
    std::string line;
    std::getline(is, line);
    if (fields(line) != std::vector<std::string>{"frame", "joint", "u", "v", "confidence"})
      throw DataError(path.string() + ": header must be frame,joint,u,v,confidence");
    while (std::getline(is, line)) {
      if (line.empty() || line == "\r") continue;
      const auto f = fields(line);
      if (f.size() != 5) throw DataError(path.string() + ": expected 5 fields");
      const double fr = to_double(f[0], path), jt = to_double(f[1], path);
      if (fr < 0 || jt < 0 || fr != std::floor(fr) || jt != std::floor(jt))
        throw DataError(path.string() + ": frame and joint must be nonnegative integers");
      Record r{int(fr), int(jt), to_double(f[2], path), to_double(f[3], path), to_double(f[4], path)};
      frames = std::max(frames, r.frame + 1);
      joints = std::max(joints, r.joint + 1);
      records[i].push_back(r);
    }
  }
  std::vector<Detection2DSequence> out;
  for (int i = 0; i < views; ++i) {
    Detection2DSequence seq(frames, joints);
    for (const auto& r : records[i]) {
      seq.u(r.frame, r.joint) = r.u;
      seq.v(r.frame, r.joint) = r.v;
      seq.confidence(r.frame, r.joint) = r.c;
    }
    seq.validate();
    out.push_back(std::move(seq));
  }
  return out;
}

void write_detections(const fs::path& dir, const std::vector<Detection2DSequence>& views) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const fs::path path = dir / ("view" + std::to_string(i) + ".csv");
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << "frame,joint,u,v,confidence\n" << std::setprecision(17);
    const auto& s = views[i];
    for (int t = 0; t < s.frames(); ++t)
      for (int j = 0; j < s.joints(); ++j)
        os << t << ',' << j << ',' << s.u(t, j) << ',' << s.v(t, j) << ',' << s.confidence(t, j) << '\n';
  }
}

}  // namespace dyad::refine
