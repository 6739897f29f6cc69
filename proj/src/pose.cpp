#include "colde/pose.hpp"

#include <cmath>

namespace colde {

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

PoseSE3 PoseSE3::exp(const Vector6d& tangent) {
  const Eigen::Vector3d omega = tangent.head<3>();
  const Eigen::Vector3d v = tangent.tail<3>();
  const double theta = omega.norm();
  const Eigen::Matrix3d w = skew(omega);
  const Eigen::Matrix3d w2 = w * w;

  double a, b, c;  // sin(t)/t, (1-cos(t))/t^2, (t-sin(t))/t^3
  if (theta < 1e-8) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
    c = 1.0 / 6.0 - t2 / 120.0;
  } else {
    const double t2 = theta * theta;
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / t2;
    c = (theta - std::sin(theta)) / (t2 * theta);
  }

  PoseSE3 out;
  out.rotation = Eigen::Matrix3d::Identity() + a * w + b * w2;
  const Eigen::Matrix3d v_mat = Eigen::Matrix3d::Identity() + b * w + c * w2;
  out.translation = v_mat * v;
  return out;
}

Vector6d PoseSE3::log() const {
  const double trace = rotation.trace();
  const double cos_theta = std::clamp((trace - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);

  Eigen::Vector3d omega;
  if (theta < 1e-8) {
    omega << (rotation(2, 1) - rotation(1, 2)) * 0.5,
        (rotation(0, 2) - rotation(2, 0)) * 0.5,
        (rotation(1, 0) - rotation(0, 1)) * 0.5;
  } else if (theta > M_PI - 1e-6) {
    // Near pi: extract axis from the symmetric part.
    Eigen::Matrix3d s = (rotation + Eigen::Matrix3d::Identity()) * 0.5;
    Eigen::Vector3d axis(std::sqrt(std::max(0.0, s(0, 0))),
                         std::sqrt(std::max(0.0, s(1, 1))),
                         std::sqrt(std::max(0.0, s(2, 2))));
    int k = 0;
    if (axis.y() > axis.x()) k = 1;
    if (axis.z() > axis[k]) k = 2;
    if (axis[k] > 0) {
      for (int i = 0; i < 3; ++i) {
        if (i == k) continue;
        if (s(k, i) < 0) axis[i] = -axis[i];
      }
    }
    // Fix the overall sign from the skew part.
    Eigen::Vector3d anti((rotation(2, 1) - rotation(1, 2)),
                         (rotation(0, 2) - rotation(2, 0)),
                         (rotation(1, 0) - rotation(0, 1)));
    if (anti.dot(axis) < 0) axis = -axis;
    omega = theta * axis.normalized();
  } else {
    const double scale = theta / (2.0 * std::sin(theta));
    omega << scale * (rotation(2, 1) - rotation(1, 2)),
        scale * (rotation(0, 2) - rotation(2, 0)),
        scale * (rotation(1, 0) - rotation(0, 1));
  }

  const Eigen::Matrix3d w = skew(omega);
  const Eigen::Matrix3d w2 = w * w;
  double b;  // coefficient of w2 in V^-1
  if (theta < 1e-8) {
    b = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    b = (1.0 - theta * std::cos(theta * 0.5) / (2.0 * std::sin(theta * 0.5))) / (theta * theta);
  }
  const Eigen::Matrix3d v_inv = Eigen::Matrix3d::Identity() - 0.5 * w + b * w2;

  Vector6d out;
  out.head<3>() = omega;
  out.tail<3>() = v_inv * translation;
  return out;
}

double PoseSE3::orthonormality_error() const {
  const Eigen::Matrix3d e = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  return e.cwiseAbs().maxCoeff() + std::abs(rotation.determinant() - 1.0);
}

}  // namespace colde
