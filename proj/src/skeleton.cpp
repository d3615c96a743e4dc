#include "dyad/skeleton.hpp"

#include "dyad/error.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dyad {
namespace {

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

Skeleton::Skeleton(std::vector<std::string> joint_names, std::vector<Limb> limbs,
                   Landmarks landmarks)
    : names_(std::move(joint_names)), limbs_(std::move(limbs)), landmarks_(landmarks) {
  const int n = joint_count();
  if (n < 1) throw ShapeError("skeleton needs at least one joint");
  if (static_cast<int>(limbs_.size()) != n - 1)
    throw ShapeError("limb graph must be a tree: expected " + std::to_string(n - 1) +
                     " limbs, got " + std::to_string(limbs_.size()));

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (const Limb& limb : limbs_) {
    if (limb.parent < 0 || limb.parent >= n || limb.child < 0 || limb.child >= n)
      throw ShapeError("limb references a joint out of range");
    int a = find_root(parent, limb.parent);
    int b = find_root(parent, limb.child);
    if (a == b) throw ShapeError("limb graph contains a cycle");
    parent[a] = b;
  }
  // n - 1 edges without a cycle implies connectivity.

  for (int idx : {landmarks_.hip_center, landmarks_.left_shoulder, landmarks_.right_shoulder,
                  landmarks_.neck, landmarks_.left_foot, landmarks_.right_foot, landmarks_.left_hip,
                  landmarks_.right_hip}) {
    if (idx < 0 || idx >= n) throw ShapeError("landmark index out of range");
  }
}

const Skeleton& Skeleton::dance19() {
  // Source order is BODY_25; the eyes, ears and small toes are dropped and the
  // mid hip is moved to index 0 so the canonical root comes first.
  static const Skeleton skeleton(
      {"mid_hip", "neck", "nose", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow",
       "l_wrist", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "r_big_toe",
       "r_heel", "l_big_toe", "l_heel"},
      {{0, 1},
       {1, 2},
       {1, 3},
       {3, 4},
       {4, 5},
       {1, 6},
       {6, 7},
       {7, 8},
       {0, 9},
       {9, 10},
       {10, 11},
       {0, 12},
       {12, 13},
       {13, 14},
       {11, 15},
       {11, 16},
       {14, 17},
       {14, 18}},
      Landmarks{.hip_center = 0,
                .left_shoulder = 6,
                .right_shoulder = 3,
                .neck = 1,
                .left_foot = 18,
                .right_foot = 16,
                .left_hip = 12,
                .right_hip = 9});
  return skeleton;
}

std::optional<int> Skeleton::find_joint(std::string_view name) const {
  for (int i = 0; i < joint_count(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

Vector flatten(const Eigen::MatrixX3d& pose_3d) {
  Vector out(pose_3d.rows() * 3);
  for (Eigen::Index j = 0; j < pose_3d.rows(); ++j) out.segment<3>(3 * j) = pose_3d.row(j).transpose();
  return out;
}

Eigen::MatrixX3d unflatten(const Vector& pose, int joint_count) {
  if (pose.size() != 3 * joint_count)
    throw ShapeError("pose has " + std::to_string(pose.size()) + " entries, expected " +
                     std::to_string(3 * joint_count));
  Eigen::MatrixX3d out(joint_count, 3);
  for (int j = 0; j < joint_count; ++j) out.row(j) = pose.segment<3>(3 * j).transpose();
  return out;
}

Eigen::Vector3d joint_position(const Eigen::Ref<const Vector>& pose, int joint) {
  return pose.segment<3>(3 * joint);
}

std::string_view role_name(Role role) {
  switch (role) {
    case Role::Leader: return "leader";
    case Role::Follower: return "follower";
    case Role::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

namespace {

std::optional<ValidationError> check_block(const Matrix& m, std::string_view what, int dim) {
  if (m.rows() < 1) return ValidationError{std::string(what) + " is empty"};
  if (m.cols() != dim) {
    std::ostringstream os;
    os << what << " has " << m.cols() << " columns, expected " << dim;
    return ValidationError{os.str()};
  }
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(t, c))) {
        std::ostringstream os;
        os << what << ": non-finite value at frame " << t << ", joint " << c / 3;
        return ValidationError{os.str(), static_cast<int>(t), static_cast<int>(c / 3)};
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<ValidationError> validate_dyad(const DyadSample& sample, const Skeleton& skeleton,
                                             int expected_past, int expected_future) {
  const int dim = skeleton.dim();
  if (auto e = check_block(sample.subject1_past, "subject1_past", dim)) return e;
  if (auto e = check_block(sample.subject2_past, "subject2_past", dim)) return e;
  if (auto e = check_block(sample.subject1_future, "subject1_future", dim)) return e;
  if (auto e = check_block(sample.subject2_future, "subject2_future", dim)) return e;
  if (sample.subject1_past.rows() != sample.subject2_past.rows())
    return ValidationError{"past lengths differ between subjects (" +
                           std::to_string(sample.subject1_past.rows()) + " vs " +
                           std::to_string(sample.subject2_past.rows()) + ")"};
  if (sample.subject1_future.rows() != sample.subject2_future.rows())
    return ValidationError{"future lengths differ between subjects (" +
                           std::to_string(sample.subject1_future.rows()) + " vs " +
                           std::to_string(sample.subject2_future.rows()) + ")"};
  if (expected_past > 0 && sample.subject1_past.rows() != expected_past)
    return ValidationError{"past length " + std::to_string(sample.subject1_past.rows()) +
                           " != " + std::to_string(expected_past)};
  if (expected_future > 0 && sample.subject1_future.rows() != expected_future)
    return ValidationError{"future length " + std::to_string(sample.subject1_future.rows()) +
                           " != " + std::to_string(expected_future)};
  return std::nullopt;
}

void validate_sequence(const MotionSequence& sequence, const Skeleton& skeleton) {
  if (!(sequence.frame_rate > 0)) throw DataError("frame rate must be positive");
  if (auto e = check_block(sequence.poses, "sequence", skeleton.dim())) throw DataError(e->message);
}

}  // namespace dyad
