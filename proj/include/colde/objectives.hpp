#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "colde/camera.hpp"
#include "colde/geometry.hpp"
#include "colde/grid.hpp"
#include "colde/pose.hpp"

namespace colde {

// Loss weights. Defaults are the fine-tuning values.
struct LossWeights {
  double alpha = 0.85;
  double lambda1 = 0.1;    // feature similarity
  double lambda2 = 0.1;    // depth consistency
  double lambda3 = 0.005;  // normal consistency
  double lambda4 = 0.001;  // orthogonality
  double lambda5 = 0.01;   // smoothness
  double ssim_c1 = 0.0001;  // (0.01)^2
  double ssim_c2 = 0.0009;  // (0.03)^2
  double spec_threshold = 0.95;
  int spec_dilate = 2;

  void validate() const;
};

// The unit every loss consumes: target/source images, fields, relative pose.
struct FramePair {
  Image target, source;
  DepthField target_depth, source_depth;
  NormalField target_normals, source_normals;
  PoseSE3 pose_t_to_s;
  Intrinsics intrinsics;
  Image target_features, source_features;  // 64-channel, half resolution
  int feature_channel = 0;

  void validate() const;
};

struct LossBreakdown {
  double photo = 0.0;
  double feat = 0.0;
  double depth = 0.0;
  double norm = 0.0;
  double orth = 0.0;
  double smooth = 0.0;
  double total = 0.0;
  long masked_pixel_count = 0;
  bool empty_mask = false;
};

// Per-pixel projection/warp cache shared by the loss terms. Invalid pixels
// carry zero sentinels in every warped map.
struct WarpContext {
  int height = 0, width = 0;
  std::vector<double> qx, qy, dproj;
  std::vector<Eigen::Vector3d> cam_point;  // transformed point Y, valid pixels only meaningful
  Mask valid;
  Image warped_image;           // source channels
  Image warped_feature;         // selected source feature channel, upsampled to image grid
  Image target_feature_up;      // selected target feature channel, upsampled to image grid
  Image warped_source_depth;    // 1 channel
  Image warped_source_normals;  // 3 channels
};

WarpContext make_warp_context(const FramePair& pair);

// --- per-pixel loss maps (all 1-channel, zero outside validity) ---

Image ssim(const Image& a, const Image& b, const LossWeights& w);

Image photometric_map(const FramePair& pair, const WarpContext& ctx, const LossWeights& w);
Image feature_map(const FramePair& pair, const WarpContext& ctx, const LossWeights& w);
Image depth_consistency_map(const FramePair& pair, const WarpContext& ctx);
Image normal_consistency_map(const FramePair& pair, const WarpContext& ctx);

Image photometric_loss(const FramePair& pair, const LossWeights& w);
Image feature_loss(const FramePair& pair, const LossWeights& w);
Image depth_consistency_loss(const FramePair& pair, const LossWeights& w);
Image normal_consistency_loss(const FramePair& pair, const LossWeights& w);

// Symmetric normalized depth ratio.
inline double depth_ratio(double a, double b) { return std::abs(a - b) / (a + b); }

// Diagonal surface vectors around interior pixel (i,j); empty on the border.
std::vector<Eigen::Vector3d> surface_vectors(const DepthField& d, const Intrinsics& k,
                                             int i, int j);

// Mean |N . V_hat| over interior pixels and both diagonals.
double orthogonality_loss(const DepthField& d, const NormalField& n, const Intrinsics& k);

// Edge-aware smoothness on mean-normalized inverse depth.
double smoothness_loss(const DepthField& d, const Image& img);

// --- masks (true means keep) ---

Mask valid_mask(const FramePair& pair, const WarpContext& ctx);
Mask auto_mask(const FramePair& pair, const WarpContext& ctx, const LossWeights& w);
Mask auto_mask(const FramePair& pair, const LossWeights& w);
Mask specular_mask(const Image& img, const LossWeights& w);
Mask combined_mask(const FramePair& pair, const WarpContext& ctx, const LossWeights& w);
Mask combined_mask(const FramePair& pair, const LossWeights& w);

// --- total loss ---

LossBreakdown total_loss(const FramePair& pair, const LossWeights& w);
LossBreakdown total_loss_masked(const FramePair& pair, const LossWeights& w, const Mask& m);
LossBreakdown total_loss_with(const FramePair& pair, const LossWeights& w,
                              const WarpContext& ctx, const Mask& m);

// Gradient helpers for the differentiation module. Each accumulates
// coeff * d(loss)/d(field) into the given buffers.
void add_smoothness_grad(const DepthField& d, const Image& img, double coeff,
                         DepthField& grad_depth);
void add_orthogonality_grad(const DepthField& d, const NormalField& n, const Intrinsics& k,
                            double coeff, DepthField* grad_depth, NormalField* grad_normals);

// Convenience constructor: computes features and validates shapes.
FramePair make_frame_pair(Image target, Image source, DepthField target_depth,
                          DepthField source_depth, NormalField target_normals,
                          NormalField source_normals, PoseSE3 pose_t_to_s,
                          const Intrinsics& k, int feature_channel = 0);

}  // namespace colde
