#pragma once

#include <vector>

#include <Eigen/Core>

#include "colde/camera.hpp"
#include "colde/grid.hpp"
#include "colde/pose.hpp"

namespace colde {

// Projected depths at or below this threshold count as behind the camera.
inline constexpr double kDepthEpsilon = 1e-6;

// Lifts pixel coordinate (x,y) with depth d into the camera frame.
// Throws invalid-input on non-positive depth.
Eigen::Vector3d backproject(double x, double y, double d, const Intrinsics& k);

struct Projection {
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;   // z after transform
  bool in_front = false;
  bool in_bounds = false;
  bool valid() const { return in_front && in_bounds; }
};

// Pinhole projection of a camera-frame point. Out-of-bounds coordinates are
// flagged, never clamped.
Projection project_point(const Eigen::Vector3d& p, const Intrinsics& k);

// Eq-1 style pixel transfer: backproject (x,y,d), apply t_to_s, project.
Projection project_pixel(double x, double y, double d, const PoseSE3& t_to_s,
                         const Intrinsics& k);

// Bilinear interpolation footprint. Coordinates within 1e-9 of a lattice point
// snap to it so identity warps stay bit-exact.
struct BilinearTap {
  int i0 = 0, j0 = 0;     // top-left corner (i0+1, j0+1 are clamped inside)
  int i1 = 0, j1 = 0;
  double wx = 0.0, wy = 0.0;
  bool in_bounds = false;
};

BilinearTap make_tap(int height, int width, double x, double y);

inline double tap_value(const BilinearTap& t, const Image& img, int c) {
  const double v00 = img.at(t.i0, t.j0, c);
  const double v01 = img.at(t.i0, t.j1, c);
  const double v10 = img.at(t.i1, t.j0, c);
  const double v11 = img.at(t.i1, t.j1, c);
  return (1.0 - t.wy) * ((1.0 - t.wx) * v00 + t.wx * v01) +
         t.wy * ((1.0 - t.wx) * v10 + t.wx * v11);
}

// d(value)/d(x), d(value)/d(y) of the tap on a single channel.
inline void tap_coord_grad(const BilinearTap& t, const Image& img, int c,
                           double* dvdx, double* dvdy) {
  const double v00 = img.at(t.i0, t.j0, c);
  const double v01 = img.at(t.i0, t.j1, c);
  const double v10 = img.at(t.i1, t.j0, c);
  const double v11 = img.at(t.i1, t.j1, c);
  *dvdx = (1.0 - t.wy) * (v01 - v00) + t.wy * (v11 - v10);
  *dvdy = (1.0 - t.wx) * (v10 - v00) + t.wx * (v11 - v01);
}

struct Sample {
  std::vector<double> value;  // one per channel; zero sentinel when out of bounds
  bool in_bounds = false;
};

Sample bilinear_sample(const Image& img, double x, double y);

struct WarpResult {
  Image image;
  Mask valid;
};

// Inverse warp of the source image into the target view.
WarpResult warp_image(const Image& source, const DepthField& target_depth,
                      const PoseSE3& t_to_s, const Intrinsics& k);

// Cross-product-of-diagonals baseline; camera-facing orientation, degenerate
// pixels fall back to (0,0,-1).
NormalField normals_from_depth(const DepthField& depth, const Intrinsics& k);

}  // namespace colde
