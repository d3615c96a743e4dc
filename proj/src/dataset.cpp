#include "dyad/dataset.hpp"

#include "dyad/error.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace dyad::data {
namespace {

constexpr int kJoints = 19;

// Group index and distal weight of each dance19 joint.
constexpr std::array<int, kJoints> kGroup = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4, 3, 3, 4, 4};
constexpr std::array<double, kJoints> kReach = {0.3, 0.5, 0.6, 0.3, 0.65, 1.0, 0.3, 0.65, 1.0, 0.2,
                                                0.6, 1.0, 0.2, 0.6, 1.0, 1.0, 1.0, 1.0, 1.0};

Matrix rotate_rows(const Matrix& poses, const Eigen::Matrix3d& r) {
  Matrix out(poses.rows(), poses.cols());
  for (Eigen::Index j = 0; j < poses.cols() / 3; ++j)
    out.middleCols(3 * j, 3) = poses.middleCols(3 * j, 3) * r.transpose();
  return out;
}

Matrix subtract_joint(const Matrix& poses, const Matrix& origin) {
  Matrix out = poses;
  for (Eigen::Index j = 0; j < poses.cols() / 3; ++j) out.middleCols(3 * j, 3) -= origin;
  return out;
}

void check_pair(const MotionSequence& a, const MotionSequence& b) {
  if (a.frames() != b.frames()) throw ShapeError("subjects differ in frame count");
  if (a.poses.cols() != b.poses.cols()) throw ShapeError("subjects differ in joint count");
}

}  // namespace

MotionSequence downsample(const MotionSequence& seq, double target_rate) {
  if (!(target_rate > 0)) throw ShapeError("target frame rate must be positive");
  const double ratio = seq.frame_rate / target_rate;
  const long factor = std::lround(ratio);
  if (factor < 1 || std::abs(ratio - double(factor)) > 1e-9)
    throw ShapeError("cannot downsample " + std::to_string(seq.frame_rate) + " fps to " +
                     std::to_string(target_rate) + " fps by an integer factor");
  MotionSequence out;
  out.frame_rate = target_rate;
  out.poses.resize(seq.frames() / factor, seq.poses.cols());
  for (Eigen::Index i = 0; i < out.poses.rows(); ++i) out.poses.row(i) = seq.poses.row(i * factor);
  return out;
}

Eigen::Matrix3d canonical_rotation(const Vector& pose, const Skeleton& skeleton) {
  if (pose.size() != skeleton.dim()) throw ShapeError("pose does not match the skeleton");
  const auto& lm = skeleton.landmarks();
  const Eigen::Vector3d across = joint_position(pose, lm.right_shoulder) - joint_position(pose, lm.left_shoulder);
  const Eigen::Vector3d up = joint_position(pose, lm.neck) - joint_position(pose, lm.hip_center);
  const double scale = std::max(across.norm(), up.norm());
  if (!(across.norm() > 1e-6 * std::max(scale, 1.0)))
    throw NumericalError("degenerate first pose: shoulders coincide");
  const Eigen::Vector3d x = across.normalized();
  const Eigen::Vector3d z_raw = up - up.dot(x) * x;
  if (!(z_raw.norm() > 1e-6 * std::max(scale, 1.0)))
    throw NumericalError("degenerate first pose: hip-to-neck direction parallel to the shoulders");
  const Eigen::Vector3d z = z_raw.normalized();
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = z.cross(x).transpose();
  r.row(2) = z.transpose();
  return r;
}

MotionSequence canonicalize_sequence(const MotionSequence& seq, const Skeleton& skeleton) {
  if (seq.poses.cols() != skeleton.dim()) throw ShapeError("sequence does not match the skeleton");
  if (seq.frames() < 1) throw ShapeError("cannot canonicalize an empty sequence");
  const int hip = skeleton.landmarks().hip_center;
  MotionSequence out;
  out.frame_rate = seq.frame_rate;
  out.poses = subtract_joint(seq.poses, seq.poses.middleCols(3 * hip, 3));
  out.poses = rotate_rows(out.poses, canonical_rotation(out.poses.row(0).transpose(), skeleton));
  // Rotation round-off must not move the root off the origin.
  out.poses.middleCols(3 * hip, 3).setZero();
  return out;
}

std::pair<MotionSequence, MotionSequence> canonicalize(const MotionSequence& first, const MotionSequence& second,
                                                       const Skeleton& skeleton, Centering centering) {
  check_pair(first, second);
  if (centering == Centering::PerSubject)
    return {canonicalize_sequence(first, skeleton), canonicalize_sequence(second, skeleton)};

  if (first.poses.cols() != skeleton.dim()) throw ShapeError("sequence does not match the skeleton");
  if (first.frames() < 1) throw ShapeError("cannot canonicalize an empty sequence");
  const int hip = skeleton.landmarks().hip_center;
  const Matrix origin = first.poses.middleCols(3 * hip, 3);
  Matrix a = subtract_joint(first.poses, origin);
  Matrix b = subtract_joint(second.poses, origin);
  const Eigen::Matrix3d r = canonical_rotation(a.row(0).transpose(), skeleton);
  MotionSequence out1{rotate_rows(a, r), first.frame_rate};
  MotionSequence out2{rotate_rows(b, r), second.frame_rate};
  out1.poses.middleCols(3 * hip, 3).setZero();
  return {std::move(out1), std::move(out2)};
}

DyadSequence canonicalize(const DyadSequence& seq, const Skeleton& skeleton, Centering centering) {
  DyadSequence out = seq;
  std::tie(out.subject1, out.subject2) = canonicalize(seq.subject1, seq.subject2, skeleton, centering);
  return out;
}

std::vector<DyadSample> window_samples(const DyadSequence& seq, int past, int future, int stride) {
  if (past < 1 || future < 1 || stride < 1) throw ShapeError("window lengths and stride must be positive");
  check_pair(seq.subject1, seq.subject2);
  std::vector<DyadSample> out;
  const int total = past + future;
  for (int s = 0; s + total <= seq.subject1.frames(); s += stride) {
    DyadSample d;
    d.subject1_past = seq.subject1.poses.middleRows(s, past);
    d.subject2_past = seq.subject2.poses.middleRows(s, past);
    d.subject1_future = seq.subject1.poses.middleRows(s + past, future);
    d.subject2_future = seq.subject2.poses.middleRows(s + past, future);
    d.role1 = seq.role1;
    d.role2 = seq.role2;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<DyadSample> window_samples(const std::vector<DyadSequence>& seqs, int past, int future, int stride) {
  std::vector<DyadSample> out;
  for (const auto& s : seqs) {
    auto w = window_samples(s, past, future, stride);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

std::string_view coupling_name(Coupling c) {
  switch (c) {
    case Coupling::Mirror: return "mirror";
    case Coupling::PhaseLag: return "phase-lag";
    case Coupling::OffsetFollow: return "offset-follow";
  }
  return "unknown";
}

Coupling parse_coupling(std::string_view name) {
  for (Coupling c : {Coupling::Mirror, Coupling::PhaseLag, Coupling::OffsetFollow})
    if (coupling_name(c) == name) return c;
  throw ShapeError("unknown coupling mode '" + std::string(name) + "'");
}

void SyntheticDyadConfig::validate() const {
  for (double f : group_frequencies)
    if (!(f > 0)) throw ShapeError("synthetic frequencies must be positive");
  if (!(amplitude >= 0) || !(noise >= 0) || !(burst_rate >= 0) || !(burst_amplitude >= 0))
    throw ShapeError("synthetic amplitudes, noise and burst rate must be nonnegative");
  if (phase_lag < 0 || phase_lag >= past) throw ShapeError("phase lag must lie in [0, past)");
  if (burst_lag < 0 || burst_lag >= past) throw ShapeError("burst lag must lie in [0, past)");
  if (burst_duration < 1 || window_frames < 1) throw ShapeError("burst duration and window must be positive");
  if (!(frame_rate > 0)) throw ShapeError("frame rate must be positive");
  if (!offset.allFinite()) throw ShapeError("offset must be finite");
}

Vector rest_pose() {
  static const double joints[kJoints][3] = {
      {0, 0, 0},        {0, 0, 500},      {0, 60, 650},     {180, 0, 480},    {200, 0, 200},
      {210, 20, -50},   {-180, 0, 480},   {-200, 0, 200},   {-210, 20, -50},  {100, 0, 0},
      {110, 20, -430},  {110, 0, -850},   {-100, 0, 0},     {-110, 20, -430}, {-110, 0, -850},
      {120, 150, -900}, {110, -50, -900}, {-120, 150, -900}, {-110, -50, -900}};
  Vector v(3 * kJoints);
  for (int j = 0; j < kJoints; ++j)
    for (int c = 0; c < 3; ++c) v(3 * j + c) = joints[j][c];
  return v;
}

std::vector<DyadSequence> generate_synthetic(const SyntheticDyadConfig& cfg, int sequences, int length,
                                             std::uint64_t seed) {
  cfg.validate();
  if (sequences < 0 || length < 1) throw ShapeError("sequence count and length must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vector rest = rest_pose();
  const int lead = cfg.coupling == Coupling::PhaseLag ? cfg.phase_lag : cfg.burst_lag;
  const int ext = length + lead;  // pre-roll so delayed copies exist from frame 0
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<DyadSequence> out;
  for (int n = 0; n < sequences; ++n) {
    std::array<double, 5> phase{};
    for (double& p : phase) p = two_pi * unit(rng);
    Matrix dir(kJoints, 3);
    for (int j = 0; j < kJoints; ++j) {
      Eigen::Vector3d u(gauss(rng), gauss(rng), gauss(rng));
      dir.row(j) = u.normalized().transpose() * cfg.amplitude * kReach[j];
    }

    Matrix base(ext, 3 * kJoints), burst = Matrix::Zero(ext, 3 * kJoints);
    for (int t = 0; t < ext; ++t) {
      const double time = t / cfg.frame_rate;
      for (int j = 0; j < kJoints; ++j) {
        const int g = kGroup[j];
        const double s = std::sin(two_pi * cfg.group_frequencies[g] * time + phase[g] + 0.4 * kReach[j]);
        base.block(t, 3 * j, 1, 3) = rest.segment<3>(3 * j).transpose() + s * dir.row(j);
      }
    }
    const double p_start = cfg.burst_rate / cfg.window_frames;
    for (int t = 0; t < ext; ++t) {
      if (unit(rng) >= p_start) continue;
      for (int s = 0; s < cfg.burst_duration && t + s < ext; ++s) {
        const double bump = std::pow(std::sin(std::numbers::pi * (s + 0.5) / cfg.burst_duration), 2);
        for (int j : {4, 5, 7, 8}) {
          const double side = j < 6 ? 1.0 : -1.0;
          const double w = cfg.burst_amplitude * kReach[j] * bump;
          burst(t + s, 3 * j) += side * w;
          burst(t + s, 3 * j + 2) += 0.8 * w;
        }
      }
      t += cfg.burst_duration - 1;
    }

    const Matrix s1_ext = base + burst;
    Matrix s1 = s1_ext.bottomRows(length);
    Matrix s2;
    switch (cfg.coupling) {
      case Coupling::PhaseLag:
        s2 = s1_ext.topRows(length);
        break;
      case Coupling::Mirror:
      case Coupling::OffsetFollow: {
        s2 = base.bottomRows(length) + burst.topRows(length);
        for (int j = 0; j < kJoints; ++j) {
          if (cfg.coupling == Coupling::Mirror)
            s2.col(3 * j) *= -1.0;
          else
            s2.middleCols(3 * j, 3).rowwise() += cfg.offset.transpose();
        }
        break;
      }
    }
    if (cfg.noise > 0) {
      for (Eigen::Index i = 0; i < s1.size(); ++i) s1.data()[i] += cfg.noise * gauss(rng);
      for (Eigen::Index i = 0; i < s2.size(); ++i) s2.data()[i] += cfg.noise * gauss(rng);
    }

    DyadSequence seq;
    seq.id = "synth" + std::to_string(n);
    seq.subject1 = {std::move(s1), cfg.frame_rate};
    seq.subject2 = {std::move(s2), cfg.frame_rate};
    seq.role1 = Role::Leader;
    seq.role2 = Role::Follower;
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace dyad::data
