#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "colde/error.hpp"

namespace colde {

// Row-major, channel-interleaved raster of samples in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int i, int j, int c = 0) {
    return data[(static_cast<std::size_t>(i) * width + j) * channels + c];
  }
  double at(int i, int j, int c = 0) const {
    return data[(static_cast<std::size_t>(i) * width + j) * channels + c];
  }
  const double* plane_stride_row(int i) const {
    return data.data() + static_cast<std::size_t>(i) * width * channels;
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Per-pixel positive depth in scene units.
struct DepthField {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  DepthField() = default;
  DepthField(int h, int w, double fill = 1.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * width + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * width + j]; }
  std::size_t size() const { return data.size(); }
};

// Per-pixel 3-vector in camera coordinates, unit length, camera-facing (z <= 0).
struct NormalField {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // 3 per pixel

  NormalField() = default;
  NormalField(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0) {
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) data[p * 3 + 2] = -1.0;
  }

  Eigen::Vector3d at(int i, int j) const {
    const std::size_t p = (static_cast<std::size_t>(i) * width + j) * 3;
    return {data[p], data[p + 1], data[p + 2]};
  }
  void set(int i, int j, const Eigen::Vector3d& n) {
    const std::size_t p = (static_cast<std::size_t>(i) * width + j) * 3;
    data[p] = n.x();
    data[p + 1] = n.y();
    data[p + 2] = n.z();
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
};

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, bool fill = false)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  bool at(int i, int j) const { return data[static_cast<std::size_t>(i) * width + j] != 0; }
  void set(int i, int j, bool v) { data[static_cast<std::size_t>(i) * width + j] = v ? 1 : 0; }

  long count() const {
    long n = 0;
    for (auto v : data) n += (v != 0);
    return n;
  }
};

inline Mask mask_and(const Mask& a, const Mask& b) {
  require(a.height == b.height && a.width == b.width, "shape-mismatch", "mask shapes differ");
  Mask out(a.height, a.width);
  for (std::size_t p = 0; p < a.data.size(); ++p) out.data[p] = a.data[p] & b.data[p];
  return out;
}

}  // namespace colde
