#pragma once

#include "dyad/skeleton.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dyad::data {

struct DyadSequence {
  std::string id;
  MotionSequence subject1;
  MotionSequence subject2;
  Role role1 = Role::Unlabeled;
  Role role2 = Role::Unlabeled;
};

// Keeps frames 0, f, 2f, ... (floor(T / f) of them) with f = source / target rate.
MotionSequence downsample(const MotionSequence& seq, double target_rate);

enum class Centering {
  PerSubject,  // each subject loses its own hip trajectory and is rotated by its own first pose
  Leader,      // both subjects expressed in subject 1's per-frame hip frame, keeping their offset
};

// Rotation taking the first pose's shoulder axis (left to right) onto +x and
// its hip-to-neck direction, orthogonalized against it, onto +z.
Eigen::Matrix3d canonical_rotation(const Vector& pose, const Skeleton& skeleton);

MotionSequence canonicalize_sequence(const MotionSequence& seq, const Skeleton& skeleton);
std::pair<MotionSequence, MotionSequence> canonicalize(const MotionSequence& first, const MotionSequence& second,
                                                       const Skeleton& skeleton,
                                                       Centering centering = Centering::PerSubject);
DyadSequence canonicalize(const DyadSequence& seq, const Skeleton& skeleton,
                          Centering centering = Centering::PerSubject);

// Windows of past + future frames starting every `stride` frames. Sequences
// shorter than one window yield no samples.
std::vector<DyadSample> window_samples(const DyadSequence& seq, int past, int future, int stride = 1);
std::vector<DyadSample> window_samples(const std::vector<DyadSequence>& seqs, int past, int future,
                                       int stride = 1);

enum class Coupling { Mirror, PhaseLag, OffsetFollow };

std::string_view coupling_name(Coupling c);
Coupling parse_coupling(std::string_view name);

// Joint groups: torso, right arm, left arm, right leg, left leg.
struct SyntheticDyadConfig {
  std::array<double, 5> group_frequencies{0.35, 0.8, 0.7, 0.55, 0.6};  // Hz
  double amplitude = 120.0;                                           // mm at the distal joint
  Coupling coupling = Coupling::PhaseLag;
  int phase_lag = 8;  // frames
  Eigen::Vector3d offset{900.0, 0.0, 0.0};
  double noise = 2.0;         // mm, independent per subject
  double burst_rate = 0.0;    // expected bursts per window of `window_frames`
  int burst_duration = 20;    // frames
  double burst_amplitude = 300.0;
  // Subject 2 replays subject 1's bursts this many frames later (mirror and
  // offset modes; the phase-lag mode delays everything by phase_lag).
  int burst_lag = 8;
  int window_frames = 90;
  int past = 60;  // lags must stay below this
  double frame_rate = 30.0;

  void validate() const;
};

// Subject 1 leads. Identical seeds produce identical output.
std::vector<DyadSequence> generate_synthetic(const SyntheticDyadConfig& config, int sequences, int length,
                                             std::uint64_t seed);

// Standing pose of the dance skeleton in mm, hip at the origin, facing +y.
Vector rest_pose();

}  // namespace dyad::data
