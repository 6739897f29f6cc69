#pragma once

#include <array>
#include <string>
#include <vector>

#include "colde/camera.hpp"
#include "colde/grid.hpp"
#include "colde/pose.hpp"

namespace colde {

struct FusionFrame {
  DepthField depth;
  Image image;
  PoseSE3 pose_world;  // camera-to-world
  Mask valid;          // empty mask means all pixels valid
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;  // world frame
  std::vector<std::array<std::uint8_t, 3>> colors;
};

// Backprojects every valid pixel to the world frame and concatenates in frame
// order, row-major within a frame. voxel <= 0 disables downsampling.
PointCloud fuse_pointcloud(const std::vector<FusionFrame>& frames, const Intrinsics& k,
                           double voxel = 0.0);

// Averages each center frame's depth with its window neighbors' depths
// projected into the center view. Window must be odd and <= sequence length.
std::vector<DepthField> windowed_depth_average(const std::vector<DepthField>& depths,
                                               const std::vector<PoseSE3>& poses_world,
                                               const Intrinsics& k, int window);

// Binary little-endian PLY, xyz float + rgb uchar.
void write_ply(const std::string& path, const PointCloud& cloud);

}  // namespace colde
