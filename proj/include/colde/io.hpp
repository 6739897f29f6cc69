#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "colde/camera.hpp"
#include "colde/grid.hpp"
#include "colde/objectives.hpp"
#include "colde/pose.hpp"

namespace colde {

// Authoritative raster format: 16-byte header (magic "CDF1", uint32 height,
// width, channels, little-endian) + float32 row-major channel-interleaved.
void write_float_image(const std::string& path, const Image& img);
Image read_float_image(const std::string& path);

void write_depth(const std::string& path, const DepthField& d);
DepthField read_depth(const std::string& path);

void write_normals(const std::string& path, const NormalField& n);
NormalField read_normals(const std::string& path);

// Advisory 8-bit PNG for humans (grayscale or RGB).
void write_png(const std::string& path, const Image& img);

// --- sequence manifest (one JSON per directory, version 1) ---

struct FrameEntry {
  std::string image;      // float binary, relative to the manifest directory
  std::string image_png;  // optional
  std::string depth;
  std::string normals;
  PoseSE3 pose_world;
};

struct SequenceManifest {
  int version = 1;
  Intrinsics intrinsics;
  double far_plane = 20.0;
  std::vector<FrameEntry> frames;
  std::string scene_json;  // optional serialized scene configuration
};

void save_manifest(const std::string& dir, const SequenceManifest& m);
// Rejects unknown versions; warns (stderr) on unknown optional keys.
SequenceManifest load_manifest(const std::string& dir);

struct LoadedFrame {
  Image image;
  DepthField depth;
  NormalField normals;
  PoseSE3 pose_world;
};

LoadedFrame load_frame(const std::string& dir, const FrameEntry& entry);

// --- weights config ---

nlohmann::json weights_to_json(const LossWeights& w);
LossWeights weights_from_json(const nlohmann::json& j);
void save_weights(const std::string& path, const LossWeights& w);
LossWeights load_weights(const std::string& path);

// Seeded multiplicative log-normal noise and/or global scale, for building
// refinement initializations from ground truth.
DepthField perturb_depth(const DepthField& d, double scale, double noise_sigma,
                         std::uint64_t seed);

nlohmann::json pose_to_json(const PoseSE3& p);
PoseSE3 pose_from_json(const nlohmann::json& j);

}  // namespace colde
