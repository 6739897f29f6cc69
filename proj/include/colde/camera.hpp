#pragma once

#include <Eigen/Core>

#include "colde/error.hpp"

namespace colde {

// Pinhole camera matrix K. Pixel (i,j) has continuous coordinate (x,y) = (j, i).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    require(fx > 0.0 && fy > 0.0, "invalid-intrinsics", "focal lengths must be positive");
    require(cx >= 0.0 && cx < width, "invalid-intrinsics", "principal point x out of range");
    require(cy >= 0.0 && cy < height, "invalid-intrinsics", "principal point y out of range");
  }

  // K^-1 * (x, y, 1).
  Eigen::Vector3d ray(double x, double y) const {
    return {(x - cx) / fx, (y - cy) / fy, 1.0};
  }

  static Intrinsics centered(int width, int height, double focal) {
    Intrinsics k;
    k.width = width;
    k.height = height;
    k.fx = k.fy = focal;
    k.cx = (width - 1) * 0.5;
    k.cy = (height - 1) * 0.5;
    return k;
  }
};

}  // namespace colde
