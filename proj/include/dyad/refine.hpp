#pragma once

#include "dyad/skeleton.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dyad::refine {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// One camera view: frames x joints arrays of pixel coordinates and confidences.
struct Detection2DSequence {
  Matrix u;
  Matrix v;
  Matrix confidence;  // in [0, 1]
  BoolArray repaired;

  Detection2DSequence() = default;
  Detection2DSequence(int frames, int joints);
  int frames() const { return static_cast<int>(u.rows()); }
  int joints() const { return static_cast<int>(u.cols()); }
  void validate() const;
};

using Projection = Eigen::Matrix<double, 3, 4>;

struct CameraRig {
  std::vector<Projection> projections;  // world mm -> homogeneous pixels

  int views() const { return static_cast<int>(projections.size()); }
  void validate() const;  // every matrix has rank 3
};

Eigen::Vector2d project(const Projection& p, const Eigen::Vector3d& x);

struct RefineConfig {
  double tau = 0.3;
  int spline_window = 30;
  double w_limb = 1.0;
  double w_foot = 0.1;
  double w_shape = 0.1;
  double w_anchor = 0.01;
  int max_iterations = 2000;  // summed over outer rounds
  int outer_rounds = 10;      // mean limb lengths are refreshed between rounds
  double tolerance = 1e-4;    // gradient max-norm
  double contact_margin = 20.0;  // mm above the floor estimate
  double floor_quantile = 0.05;
  int up_axis = 2;
  bool refine_reprojection = true;

  void validate() const;
};

// Entries below tau are replaced by linear interpolation between the nearest
// confident frames of the same joint (held constant past either end), get
// confidence tau and are flagged. Throws DataError for a joint with no
// confident frame.
Detection2DSequence repair_2d(const Detection2DSequence& seq, double tau);

struct Observation {
  double u = 0;
  double v = 0;
  double confidence = 0;
};

struct TriangulatedPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double residual = 0;  // mean reprojection error over used views, px
  int views = 0;
  bool missing = true;
};

// observations[i] pairs with rig.projections[i]. Fewer than two views at or
// above tau yield a missing point.
TriangulatedPoint triangulate(std::span<const Observation> observations, const CameraRig& rig, double tau,
                              bool refine = true);

struct Track3D {
  Matrix poses;       // T x K
  BoolArray missing;  // T x J
  Matrix residuals;   // T x J, px; zero where missing
};

Track3D triangulate_sequence(const std::vector<Detection2DSequence>& views, const CameraRig& rig,
                             const RefineConfig& config);

// Least-squares clamped cubic B-spline with a knot every `window` frames,
// fitted to the observed entries and evaluated at every frame.
Vector spline_smooth(const Vector& track, int window, const std::vector<bool>& missing = {});
Matrix spline_smooth_poses(const Matrix& poses, const BoolArray& missing, int window);

Vector limb_lengths(const Vector& pose, const Skeleton& skeleton);
// Per-limb standard deviation of the length over frames.
Vector limb_length_std(const Matrix& poses, const Skeleton& skeleton);

// E = w_limb * sum (len - mean_len)^2 + w_foot * sum |foot_t - foot_{t-1}|^2 [contact]
//   + w_shape * sum (width - median_width)^2 + w_anchor * sum |p - p_init|^2.
// Width medians, the floor and the contact mask come from the initial poses.
class LimbObjective {
 public:
  LimbObjective(const Matrix& initial, const Skeleton& skeleton, const RefineConfig& config);

  void update_mean_lengths(const Matrix& poses);
  const Vector& mean_lengths() const { return mean_lengths_; }
  const BoolArray& contact() const { return contact_; }  // T x 2: left, right foot

  // grad, when given, is resized to the shape of poses.
  double value(const Matrix& poses, Matrix* grad = nullptr) const;

 private:
  const Skeleton& skeleton_;
  RefineConfig config_;
  Matrix initial_;
  Vector mean_lengths_;
  double hip_width_ = 0;
  double shoulder_width_ = 0;
  BoolArray contact_;
};

struct LimbOptimizeResult {
  Matrix poses;
  std::vector<double> objective_trace;  // accepted iterates in order
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0;
  std::string warning;
};

LimbOptimizeResult limb_optimize(const Matrix& poses, const Skeleton& skeleton, const RefineConfig& config);

struct RefineReport {
  int frames = 0;
  int repaired_2d = 0;
  int missing_3d = 0;
  double mean_residual = 0;  // px over triangulated points
  double max_residual = 0;
  Vector limb_std_before;  // triangulation only
  Vector limb_std_after;
  std::vector<double> objective_trace;
  bool converged = false;
  std::string warning;
};

struct RefineResult {
  Matrix triangulated;  // raw triangulation, missing entries filled by the spline
  Matrix smoothed;
  Matrix poses;  // final output
  RefineReport report;
};

RefineResult run_pipeline(const std::vector<Detection2DSequence>& views, const CameraRig& rig,
                          const Skeleton& skeleton, const RefineConfig& config);

// Text: one view per non-comment line, 12 numbers in row-major order.
CameraRig read_cameras(const std::filesystem::path& path);
void write_cameras(const std::filesystem::path& path, const CameraRig& rig);

// Directory of view<i>.csv files with header frame,joint,u,v,confidence.
// Absent records read as confidence 0.
std::vector<Detection2DSequence> read_detections(const std::filesystem::path& dir, int views);
void write_detections(const std::filesystem::path& dir, const std::vector<Detection2DSequence>& views);

}  // namespace dyad::refine
