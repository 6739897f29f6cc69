#pragma once

#include <functional>

#include "colde/objectives.hpp"

namespace colde {

enum class Wrt { depth, normals, pose, all };

// Gradients of the total-loss scalar. Source-field gradients are carried too so
// joint sequence refinement can use exact gradients; the finite-difference
// oracle checks all of them.
struct GradientBundle {
  DepthField d_depth;          // w.r.t. target depth
  DepthField d_source_depth;   // w.r.t. source depth
  NormalField d_normals;       // w.r.t. target normals (raw Euclidean, not tangent-projected)
  NormalField d_source_normals;
  Vector6d d_pose = Vector6d::Zero();  // w.r.t. left-multiplied tangent of pose_t_to_s
  double loss_value = 0.0;
};

// Masks and the feature channel are frozen: when frozen_mask is null the
// combined mask is computed once from the unperturbed pair and treated as a
// constant. Throws non-finite-gradient naming the offending term.
GradientBundle grad_total_loss(const FramePair& pair, const LossWeights& w, Wrt wrt,
                               const Mask* frozen_mask = nullptr);

// Central finite differences of an arbitrary scalar functional of the pair.
// Step per coordinate is step * max(1, |x|); pose uses step directly.
GradientBundle fd_gradient_of(const FramePair& pair,
                              const std::function<double(const FramePair&)>& f, Wrt wrt,
                              double step);

// FD oracle for the frozen-mask total loss; O(n) loss evaluations, intended
// for instances up to ~32x32.
GradientBundle fd_gradient(const FramePair& pair, const LossWeights& w, Wrt wrt, double step,
                           const Mask* frozen_mask = nullptr);

// Per-term worst relative error between analytic and FD gradients, with the
// error of coordinate pairs (a, f) measured as |a - f| / max(|a|, |f|, 1e-6).
struct GradCheckReport {
  double depth = 0.0;
  double source_depth = 0.0;
  double normals = 0.0;
  double source_normals = 0.0;
  double pose = 0.0;
  double worst() const;
};

GradCheckReport check_gradients(const FramePair& pair, const LossWeights& w, double step);

// True when some masked pixel projects within tol of a sampling-cell boundary
// (image or feature lattice), where bilinear warping is not differentiable.
bool near_cell_boundary(const FramePair& pair, const LossWeights& w, double tol);

// Tangent-space projection used before descent on the unit sphere.
inline Eigen::Vector3d project_to_tangent(const Eigen::Vector3d& n, const Eigen::Vector3d& g) {
  return g - g.dot(n) * n;
}

}  // namespace colde
