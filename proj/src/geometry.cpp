#include "colde/geometry.hpp"

#include <cmath>

#include "colde/parallel.hpp"

namespace colde {

Eigen::Vector3d backproject(double x, double y, double d, const Intrinsics& k) {
  require(d > 0.0 && std::isfinite(d), "invalid-input", "backproject requires positive depth");
  return d * k.ray(x, y);
}

Projection project_point(const Eigen::Vector3d& p, const Intrinsics& k) {
  Projection out;
  out.depth = p.z();
  out.in_front = p.z() > kDepthEpsilon;
  if (!out.in_front) return out;
  out.x = k.fx * (p.x() / p.z()) + k.cx;
  out.y = k.fy * (p.y() / p.z()) + k.cy;
  out.in_bounds = out.x >= 0.0 && out.x <= k.width - 1 && out.y >= 0.0 && out.y <= k.height - 1;
  return out;
}

Projection project_pixel(double x, double y, double d, const PoseSE3& t_to_s,
                         const Intrinsics& k) {
  return project_point(t_to_s.apply(backproject(x, y, d, k)), k);
}

namespace {

inline double snap_lattice(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) < 1e-9 * (1.0 + std::abs(x))) return r;
  return x;
}

}  // namespace

BilinearTap make_tap(int height, int width, double x, double y) {
  BilinearTap t;
  x = snap_lattice(x);
  y = snap_lattice(y);
  t.in_bounds = x >= 0.0 && x <= width - 1 && y >= 0.0 && y <= height - 1;
  if (!t.in_bounds) return t;
  t.j0 = static_cast<int>(std::floor(x));
  t.i0 = static_cast<int>(std::floor(y));
  if (t.j0 >= width - 1) t.j0 = width - 2;
  if (t.i0 >= height - 1) t.i0 = height - 2;
  if (width == 1) t.j0 = 0;
  if (height == 1) t.i0 = 0;
  t.j1 = std::min(t.j0 + 1, width - 1);
  t.i1 = std::min(t.i0 + 1, height - 1);
  t.wx = x - t.j0;
  t.wy = y - t.i0;
  return t;
}

Sample bilinear_sample(const Image& img, double x, double y) {
  Sample s;
  s.value.assign(img.channels, 0.0);
  const BilinearTap t = make_tap(img.height, img.width, x, y);
  s.in_bounds = t.in_bounds;
  if (!t.in_bounds) return s;
  for (int c = 0; c < img.channels; ++c) s.value[c] = tap_value(t, img, c);
  return s;
}

WarpResult warp_image(const Image& source, const DepthField& target_depth,
                      const PoseSE3& t_to_s, const Intrinsics& k) {
  require(source.height == k.height && source.width == k.width, "shape-mismatch",
          "source image does not match intrinsics");
  require(target_depth.height == k.height && target_depth.width == k.width, "shape-mismatch",
          "target depth does not match intrinsics");

  WarpResult out;
  out.image = Image(k.height, k.width, source.channels, 0.0);
  out.valid = Mask(k.height, k.width, false);

  parallel_rows(k.height, [&](int row_begin, int row_end) {
    for (int i = row_begin; i < row_end; ++i) {
      for (int j = 0; j < k.width; ++j) {
        const Projection p = project_pixel(j, i, target_depth.at(i, j), t_to_s, k);
        if (!p.valid()) continue;
        const BilinearTap t = make_tap(source.height, source.width, p.x, p.y);
        if (!t.in_bounds) continue;
        out.valid.set(i, j, true);
        for (int c = 0; c < source.channels; ++c) out.image.at(i, j, c) = tap_value(t, source, c);
      }
    }
  });
  return out;
}

NormalField normals_from_depth(const DepthField& depth, const Intrinsics& k) {
  NormalField out(depth.height, depth.width);
  const auto point = [&](int i, int j) -> Eigen::Vector3d {
    i = std::clamp(i, 0, depth.height - 1);
    j = std::clamp(j, 0, depth.width - 1);
    return depth.at(i, j) * k.ray(j, i);
  };
  for (int i = 0; i < depth.height; ++i) {
    for (int j = 0; j < depth.width; ++j) {
      const Eigen::Vector3d v1 = point(i - 1, j - 1) - point(i + 1, j + 1);
      const Eigen::Vector3d v2 = point(i - 1, j + 1) - point(i + 1, j - 1);
      Eigen::Vector3d n = v1.cross(v2);
      const double norm = n.norm();
      if (norm < 1e-15) {
        out.set(i, j, Eigen::Vector3d(0.0, 0.0, -1.0));
        continue;
      }
      n /= norm;
      if (n.dot(k.ray(j, i)) > 0.0) n = -n;
      out.set(i, j, n);
    }
  }
  return out;
}

}  // namespace colde
