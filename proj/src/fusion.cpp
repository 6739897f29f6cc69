#include "colde/fusion.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <tuple>

#include "colde/geometry.hpp"

namespace colde {

PointCloud fuse_pointcloud(const std::vector<FusionFrame>& frames, const Intrinsics& k,
                           double voxel) {
  PointCloud cloud;
  for (const FusionFrame& f : frames) {
    require(f.depth.height == k.height && f.depth.width == k.width, "shape-mismatch",
            "fusion depth does not match intrinsics");
    const bool has_mask = !f.valid.data.empty();
    const bool has_image = !f.image.data.empty();
    for (int i = 0; i < k.height; ++i) {
      for (int j = 0; j < k.width; ++j) {
        if (has_mask && !f.valid.at(i, j)) continue;
        const Eigen::Vector3d p = f.pose_world.apply(backproject(j, i, f.depth.at(i, j), k));
        cloud.points.push_back(p);
        std::array<std::uint8_t, 3> rgb{128, 128, 128};
        if (has_image) {
          for (int c = 0; c < 3; ++c) {
            const double v = f.image.at(i, j, std::min(c, f.image.channels - 1));
            rgb[c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
          }
        }
        cloud.colors.push_back(rgb);
      }
    }
  }
  if (voxel <= 0.0 || cloud.points.empty()) return cloud;

  // Average per voxel cell, output in first-seen order.
  std::map<std::tuple<long, long, long>, std::size_t> cells;
  std::vector<Eigen::Vector3d> sums;
  std::vector<Eigen::Vector3d> color_sums;
  std::vector<long> counts;
  std::vector<std::tuple<long, long, long>> order;
  for (std::size_t p = 0; p < cloud.points.size(); ++p) {
    const Eigen::Vector3d& pt = cloud.points[p];
    const auto key = std::make_tuple(static_cast<long>(std::floor(pt.x() / voxel)),
                                     static_cast<long>(std::floor(pt.y() / voxel)),
                                     static_cast<long>(std::floor(pt.z() / voxel)));
    auto [it, inserted] = cells.try_emplace(key, sums.size());
    if (inserted) {
      sums.push_back(Eigen::Vector3d::Zero());
      color_sums.push_back(Eigen::Vector3d::Zero());
      counts.push_back(0);
      order.push_back(key);
    }
    const std::size_t idx = it->second;
    sums[idx] += pt;
    color_sums[idx] += Eigen::Vector3d(cloud.colors[p][0], cloud.colors[p][1], cloud.colors[p][2]);
    counts[idx] += 1;
  }
  PointCloud down;
  down.points.reserve(sums.size());
  down.colors.reserve(sums.size());
  for (std::size_t c = 0; c < sums.size(); ++c) {
    down.points.push_back(sums[c] / counts[c]);
    const Eigen::Vector3d avg = color_sums[c] / counts[c];
    down.colors.push_back({static_cast<std::uint8_t>(std::clamp(avg.x(), 0.0, 255.0)),
                           static_cast<std::uint8_t>(std::clamp(avg.y(), 0.0, 255.0)),
                           static_cast<std::uint8_t>(std::clamp(avg.z(), 0.0, 255.0))});
  }
  return down;
}

std::vector<DepthField> windowed_depth_average(const std::vector<DepthField>& depths,
                                               const std::vector<PoseSE3>& poses_world,
                                               const Intrinsics& k, int window) {
  require(window >= 1 && window % 2 == 1, "invalid-input", "window must be odd and >= 1");
  require(window <= static_cast<int>(depths.size()), "invalid-input",
          "window exceeds sequence length");
  require(depths.size() == poses_world.size(), "shape-mismatch",
          "depths/poses length mismatch");
  const int n = static_cast<int>(depths.size());
  const int half = window / 2;

  std::vector<DepthField> out;
  out.reserve(n);
  for (int c = 0; c < n; ++c) {
    DepthField avg = depths[c];
    if (window == 1) {
      out.push_back(std::move(avg));
      continue;
    }
    std::vector<double> sum(depths[c].size());
    std::vector<long> cnt(depths[c].size(), 1);
    for (std::size_t p = 0; p < sum.size(); ++p) sum[p] = depths[c].data[p];

    for (int nb = c - half; nb <= c + half; ++nb) {
      if (nb == c || nb < 0 || nb >= n) continue;
      const PoseSE3 c_to_nb = poses_world[nb].inverse() * poses_world[c];
      const PoseSE3 nb_to_c = c_to_nb.inverse();
      for (int i = 0; i < k.height; ++i) {
        for (int j = 0; j < k.width; ++j) {
          const Projection proj = project_pixel(j, i, depths[c].at(i, j), c_to_nb, k);
          if (!proj.valid()) continue;
          const BilinearTap t = make_tap(k.height, k.width, proj.x, proj.y);
          if (!t.in_bounds) continue;
          const double v00 = depths[nb].at(t.i0, t.j0);
          const double v01 = depths[nb].at(t.i0, t.j1);
          const double v10 = depths[nb].at(t.i1, t.j0);
          const double v11 = depths[nb].at(t.i1, t.j1);
          const double nb_depth = (1.0 - t.wy) * ((1.0 - t.wx) * v00 + t.wx * v01) +
                                  t.wy * ((1.0 - t.wx) * v10 + t.wx * v11);
          // Neighbor's surface estimate carried back into the center view.
          const Eigen::Vector3d est = nb_to_c.apply(backproject(proj.x, proj.y, nb_depth, k));
          if (est.z() <= kDepthEpsilon) continue;
          const std::size_t p = static_cast<std::size_t>(i) * k.width + j;
          sum[p] += est.z();
          cnt[p] += 1;
        }
      }
    }
    for (std::size_t p = 0; p < sum.size(); ++p) avg.data[p] = sum[p] / cnt[p];
    out.push_back(std::move(avg));
  }
  return out;
}

void write_ply(const std::string& path, const PointCloud& cloud) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "io-error", "cannot open " + path + " for writing");
  f << "ply\nformat binary_little_endian 1.0\n"
    << "element vertex " << cloud.points.size() << "\n"
    << "property float x\nproperty float y\nproperty float z\n"
    << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
    << "end_header\n";
  for (std::size_t p = 0; p < cloud.points.size(); ++p) {
    const float xyz[3] = {static_cast<float>(cloud.points[p].x()),
                          static_cast<float>(cloud.points[p].y()),
                          static_cast<float>(cloud.points[p].z())};
    f.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    f.write(reinterpret_cast<const char*>(cloud.colors[p].data()), 3);
  }
  require(f.good(), "io-error", "failed writing " + path);
}

}  // namespace colde
