#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyad {

// Poses are stored one frame per row, K = 3 * joints columns laid out as
// (x, y, z) per joint in skeleton order. Units are millimeters.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Limb {
  int parent = 0;
  int child = 0;
};

struct Landmarks {
  int hip_center = 0;
  int left_shoulder = 0;
  int right_shoulder = 0;
  int neck = 0;
  int left_foot = 0;
  int right_foot = 0;
  int left_hip = 0;
  int right_hip = 0;
};

class Skeleton {
 public:
  // Throws ShapeError unless the limbs form a spanning tree over the joints
  // and every landmark indexes an existing joint.
  Skeleton(std::vector<std::string> joint_names, std::vector<Limb> limbs, Landmarks landmarks);

  // The 19-joint dance skeleton: BODY_25 minus eyes, ears and small toes.
  static const Skeleton& dance19();

  int joint_count() const { return static_cast<int>(names_.size()); }
  int dim() const { return 3 * joint_count(); }
  const std::vector<std::string>& joint_names() const { return names_; }
  const std::vector<Limb>& limbs() const { return limbs_; }
  const Landmarks& landmarks() const { return landmarks_; }
  std::optional<int> find_joint(std::string_view name) const;

 private:
  std::vector<std::string> names_;
  std::vector<Limb> limbs_;
  Landmarks landmarks_;
};

// joint_count x 3 <-> K-vector, joint-major.
Vector flatten(const Eigen::MatrixX3d& pose_3d);
Eigen::MatrixX3d unflatten(const Vector& pose, int joint_count);

Eigen::Vector3d joint_position(const Eigen::Ref<const Vector>& pose, int joint);

struct MotionSequence {
  Matrix poses;  // T x K
  double frame_rate = 30.0;

  int frames() const { return static_cast<int>(poses.rows()); }
  double timestamp(int frame) const { return frame / frame_rate; }
};

enum class Role { Leader, Follower, Unlabeled };

std::string_view role_name(Role role);

enum class Subject { First, Second };

struct DyadSample {
  Matrix subject1_past;    // T_p x K
  Matrix subject2_past;    // T_p x K
  Matrix subject1_future;  // T_f x K
  Matrix subject2_future;  // T_f x K
  Role role1 = Role::Unlabeled;
  Role role2 = Role::Unlabeled;

  const Matrix& past(Subject s) const { return s == Subject::First ? subject1_past : subject2_past; }
  const Matrix& future(Subject s) const {
    return s == Subject::First ? subject1_future : subject2_future;
  }
  const Matrix& partner_past(Subject s) const {
    return s == Subject::First ? subject2_past : subject1_past;
  }
};

struct ValidationError {
  std::string message;
  int frame = -1;
  int joint = -1;
};

// Reports the first violated invariant. Frame and joint indices are 0-based.
// Non-positive expected lengths skip the corresponding horizon check.
std::optional<ValidationError> validate_dyad(const DyadSample& sample, const Skeleton& skeleton,
                                             int expected_past = 0, int expected_future = 0);

void validate_sequence(const MotionSequence& sequence, const Skeleton& skeleton);

}  // namespace dyad
