#pragma once

#include <cstdint>
#include <vector>

#include "colde/camera.hpp"
#include "colde/grid.hpp"
#include "colde/pose.hpp"

namespace colde {

// Procedural colon-like tube: implicit surface F(x,y,z) = x^2 + y^2 - r(z)^2
// with r(z) = base_radius + fold_amplitude * sin(2 pi z / fold_period).
struct SceneConfig {
  double base_radius = 1.0;
  double fold_amplitude = 0.15;
  double fold_period = 0.8;

  enum class Texture { none, sinusoidal_vessel };
  Texture texture = Texture::sinusoidal_vessel;
  double texture_contrast = 0.3;

  bool specular_on = false;
  double specular_exponent = 32.0;
  double specular_strength = 0.5;

  bool light_falloff = true;  // inverse-square, light co-located with camera
  double light_gain = 1.2;
  double far_plane = 20.0;

  int width = 288;
  int height = 224;
  double focal_scale = 0.55;  // fx = fy = focal_scale * width

  std::vector<PoseSE3> camera_path;
  std::uint64_t seed = 0;

  void validate() const {
    require(base_radius > fold_amplitude && fold_amplitude >= 0.0, "invalid-config",
            "need radius > fold_amplitude >= 0");
    require(!camera_path.empty(), "invalid-config", "camera_path needs at least one pose");
  }

  Intrinsics make_intrinsics() const {
    return Intrinsics::centered(width, height, focal_scale * width);
  }

  double radius_at(double z) const;
  double surface_value(const Eigen::Vector3d& p) const;       // F(p)
  Eigen::Vector3d surface_gradient(const Eigen::Vector3d& p) const;  // grad F
  double albedo(const Eigen::Vector3d& p) const;
  // Phong specular intensity at a surface point (0 when disabled).
  double specular_term(const Eigen::Vector3d& p, const Eigen::Vector3d& n_world,
                       const Eigen::Vector3d& to_camera) const;
};

struct RenderedFrame {
  Image image;
  DepthField gt_depth;
  NormalField gt_normals;
  Mask valid;  // false on far-plane background pixels
  PoseSE3 pose_world;  // camera-to-world
};

// Ray march + bisection against the implicit surface; analytic normals;
// Lambertian shading with camera-co-located light, optional Phong specular.
// Throws invalid-config if the camera is not inside the tube.
RenderedFrame render_frame(const SceneConfig& cfg, const PoseSE3& pose_world);

struct RenderedSequence {
  std::vector<RenderedFrame> frames;
  Intrinsics intrinsics;
  // pose mapping target-camera coords into source-camera coords
  PoseSE3 relative_pose(int target, int source) const {
    return frames[source].pose_world.inverse() * frames[target].pose_world;
  }
};

RenderedSequence render_sequence(const SceneConfig& cfg);

// Straight pull-back along -z looking down +z; step in scene units per frame.
std::vector<PoseSE3> pullback_path(int n_frames, double z_step);

}  // namespace colde
