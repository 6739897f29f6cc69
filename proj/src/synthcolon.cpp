#include "colde/synthcolon.hpp"

#include <cmath>

#include "colde/parallel.hpp"

namespace colde {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kMarchStep = 0.02;
constexpr double kBisectTol = 1e-9;

}  // namespace

double SceneConfig::radius_at(double z) const {
  return base_radius + fold_amplitude * std::sin(kTwoPi * z / fold_period);
}

double SceneConfig::surface_value(const Eigen::Vector3d& p) const {
  const double r = radius_at(p.z());
  return p.x() * p.x() + p.y() * p.y() - r * r;
}

Eigen::Vector3d SceneConfig::surface_gradient(const Eigen::Vector3d& p) const {
  const double r = radius_at(p.z());
  const double dr = fold_amplitude * (kTwoPi / fold_period) * std::cos(kTwoPi * p.z() / fold_period);
  return {2.0 * p.x(), 2.0 * p.y(), -2.0 * r * dr};
}

double SceneConfig::albedo(const Eigen::Vector3d& p) const {
  if (texture == Texture::none) return 1.0;
  // Deterministic sinusoidal vessel pattern over (angle, axial position).
  const double theta = std::atan2(p.y(), p.x());
  const double axial = std::sin(kTwoPi * p.z() / (0.41 * fold_period + 0.13));
  const double pattern = 0.5 * (1.0 + std::sin(5.0 * theta) * axial);
  return 1.0 - texture_contrast * pattern;
}

double SceneConfig::specular_term(const Eigen::Vector3d& /*p*/, const Eigen::Vector3d& n_world,
                                  const Eigen::Vector3d& to_camera) const {
  if (!specular_on) return 0.0;
  // Light at the camera: reflect(l) . v = 2 (n.l)^2 - 1 with l = v.
  const double nl = n_world.dot(to_camera);
  const double rv = 2.0 * nl * nl - 1.0;
  return rv > 0.0 ? specular_strength * std::pow(rv, specular_exponent) : 0.0;
}

RenderedFrame render_frame(const SceneConfig& cfg, const PoseSE3& pose_world) {
  const Intrinsics k = cfg.make_intrinsics();
  const Eigen::Vector3d origin = pose_world.translation;
  require(cfg.surface_value(origin) < 0.0, "invalid-config", "camera must be inside the tube");

  RenderedFrame frame;
  frame.pose_world = pose_world;
  frame.image = Image(cfg.height, cfg.width, 3, 0.0);
  frame.gt_depth = DepthField(cfg.height, cfg.width, cfg.far_plane);
  frame.gt_normals = NormalField(cfg.height, cfg.width);
  frame.valid = Mask(cfg.height, cfg.width, false);

  parallel_rows(cfg.height, [&](int row_begin, int row_end) {
    for (int i = row_begin; i < row_end; ++i) {
      for (int j = 0; j < cfg.width; ++j) {
        const Eigen::Vector3d dir_cam = k.ray(j, i).normalized();
        const Eigen::Vector3d dir = pose_world.rotation * dir_cam;

        // Background once the camera-frame depth passes the far plane.
        const double t_cap = dir_cam.z() > 1e-12 ? cfg.far_plane / dir_cam.z() : 4.0 * cfg.far_plane;
        const double t_max = std::min(t_cap, 4.0 * cfg.far_plane);

        double t_prev = 0.0;
        double f_prev = cfg.surface_value(origin);
        double t_hit = -1.0;
        for (double t = kMarchStep; t <= t_max + kMarchStep; t += kMarchStep) {
          const double tt = std::min(t, t_max);
          const double f = cfg.surface_value(origin + tt * dir);
          if (f >= 0.0) {
            // Bisection refine inside [t_prev, tt].
            double lo = t_prev, hi = tt;
            for (int it = 0; it < 64 && hi - lo > kBisectTol; ++it) {
              const double mid = 0.5 * (lo + hi);
              if (cfg.surface_value(origin + mid * dir) >= 0.0)
                hi = mid;
              else
                lo = mid;
            }
            t_hit = 0.5 * (lo + hi);
            break;
          }
          t_prev = tt;
          f_prev = f;
          if (tt >= t_max) break;
        }
        (void)f_prev;

        const double depth = t_hit > 0.0 ? t_hit * dir_cam.z() : cfg.far_plane;
        if (t_hit < 0.0 || depth >= cfg.far_plane) {
          frame.gt_depth.at(i, j) = cfg.far_plane;
          frame.gt_normals.set(i, j, Eigen::Vector3d(0.0, 0.0, -1.0));
          continue;
        }

        const Eigen::Vector3d hit = origin + t_hit * dir;
        Eigen::Vector3d n_world = cfg.surface_gradient(hit).normalized();
        Eigen::Vector3d n_cam = pose_world.rotation.transpose() * n_world;
        if (n_cam.dot(dir_cam) > 0.0) {
          n_cam = -n_cam;
          n_world = -n_world;
        }

        const Eigen::Vector3d to_camera = -dir;  // unit, light co-located with camera
        const double diffuse = std::max(0.0, n_world.dot(to_camera));
        double shade = cfg.albedo(hit) * diffuse + cfg.specular_term(hit, n_world, to_camera);
        shade *= cfg.light_gain;
        if (cfg.light_falloff) shade /= t_hit * t_hit;
        shade = std::clamp(shade, 0.0, 1.0);

        frame.gt_depth.at(i, j) = depth;
        frame.gt_normals.set(i, j, n_cam);
        frame.valid.set(i, j, true);
        for (int c = 0; c < 3; ++c) frame.image.at(i, j, c) = shade;
      }
    }
  });
  return frame;
}

RenderedSequence render_sequence(const SceneConfig& cfg) {
  cfg.validate();
  RenderedSequence seq;
  seq.intrinsics = cfg.make_intrinsics();
  seq.frames.reserve(cfg.camera_path.size());
  for (const PoseSE3& pose : cfg.camera_path) seq.frames.push_back(render_frame(cfg, pose));
  return seq;
}

std::vector<PoseSE3> pullback_path(int n_frames, double z_step) {
  std::vector<PoseSE3> path(n_frames);
  for (int f = 0; f < n_frames; ++f) path[f].translation = Eigen::Vector3d(0.0, 0.0, -z_step * f);
  return path;
}

}  // namespace colde
