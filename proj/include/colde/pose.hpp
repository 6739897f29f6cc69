#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace colde {

using Vector6d = Eigen::Matrix<double, 6, 1>;

// Rigid transform: x -> R x + t. Tangent parametrization is [omega; v] with
// the full SE(3) exponential (rotation axis-angle, translation through V(omega)).
struct PoseSE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }
  static PoseSE3 exp(const Vector6d& tangent);
  Vector6d log() const;

  PoseSE3 inverse() const {
    PoseSE3 out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  PoseSE3 operator*(const PoseSE3& rhs) const {
    PoseSE3 out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  // Max deviation of R^T R from identity plus |det(R) - 1|.
  double orthonormality_error() const;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& w);

}  // namespace colde
