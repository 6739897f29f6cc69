#include "colde/io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include <zlib.h>

namespace colde {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'D', 'F', '1'};

void write_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_raster(const std::string& path, int h, int w, int c, const double* data) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "io-error", "cannot open " + path + " for writing");
  f.write(kMagic, 4);
  write_u32(f, static_cast<std::uint32_t>(h));
  write_u32(f, static_cast<std::uint32_t>(w));
  write_u32(f, static_cast<std::uint32_t>(c));
  std::vector<float> buf(static_cast<std::size_t>(h) * w * c);
  for (std::size_t p = 0; p < buf.size(); ++p) buf[p] = static_cast<float>(data[p]);
  f.write(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(float));
  require(f.good(), "io-error", "failed writing " + path);
}

void read_raster(const std::string& path, int* h, int* w, int* c, std::vector<double>* data) {
  require(fs::exists(path), "missing-file", path);
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "io-error", "cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  require(f.good() && std::memcmp(magic, kMagic, 4) == 0, "bad-format",
          path + " is not a CDF1 raster");
  *h = static_cast<int>(read_u32(f));
  *w = static_cast<int>(read_u32(f));
  *c = static_cast<int>(read_u32(f));
  require(*h > 0 && *w > 0 && *c > 0 && *c <= 64, "bad-format", path + " has bad dimensions");
  std::vector<float> buf(static_cast<std::size_t>(*h) * *w * *c);
  f.read(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(float));
  require(f.good(), "bad-format", path + " is truncated");
  data->resize(buf.size());
  for (std::size_t p = 0; p < buf.size(); ++p) (*data)[p] = buf[p];
}

}  // namespace

void write_float_image(const std::string& path, const Image& img) {
  write_raster(path, img.height, img.width, img.channels, img.data.data());
}

Image read_float_image(const std::string& path) {
  Image img;
  read_raster(path, &img.height, &img.width, &img.channels, &img.data);
  return img;
}

void write_depth(const std::string& path, const DepthField& d) {
  write_raster(path, d.height, d.width, 1, d.data.data());
}

DepthField read_depth(const std::string& path) {
  DepthField d;
  int c = 1;
  read_raster(path, &d.height, &d.width, &c, &d.data);
  require(c == 1, "bad-format", path + " is not single-channel");
  return d;
}

void write_normals(const std::string& path, const NormalField& n) {
  write_raster(path, n.height, n.width, 3, n.data.data());
}

NormalField read_normals(const std::string& path) {
  NormalField n;
  int c = 3;
  read_raster(path, &n.height, &n.width, &c, &n.data);
  require(c == 3, "bad-format", path + " is not 3-channel");
  return n;
}

namespace {

void png_chunk(std::ofstream& f, const char type[4], const std::vector<unsigned char>& data) {
  const auto be32 = [](std::uint32_t v) {
    return std::array<unsigned char, 4>{static_cast<unsigned char>(v >> 24),
                                        static_cast<unsigned char>(v >> 16),
                                        static_cast<unsigned char>(v >> 8),
                                        static_cast<unsigned char>(v)};
  };
  auto len = be32(static_cast<std::uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(len.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), data.size());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  auto crc_be = be32(static_cast<std::uint32_t>(crc));
  f.write(reinterpret_cast<const char*>(crc_be.data()), 4);
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  require(img.channels == 1 || img.channels == 3, "invalid-input",
          "png writer supports 1 or 3 channels");
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "io-error", "cannot open " + path + " for writing");
  static const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<unsigned char> ihdr(13);
  const auto put_be = [&](int off, std::uint32_t v) {
    ihdr[off] = static_cast<unsigned char>(v >> 24);
    ihdr[off + 1] = static_cast<unsigned char>(v >> 16);
    ihdr[off + 2] = static_cast<unsigned char>(v >> 8);
    ihdr[off + 3] = static_cast<unsigned char>(v);
  };
  put_be(0, static_cast<std::uint32_t>(img.width));
  put_be(4, static_cast<std::uint32_t>(img.height));
  ihdr[8] = 8;                                   // bit depth
  ihdr[9] = img.channels == 3 ? 2 : 0;           // color type
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  png_chunk(f, "IHDR", ihdr);

  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (1 + img.width * img.channels));
  for (int i = 0; i < img.height; ++i) {
    raw.push_back(0);  // filter none
    for (int j = 0; j < img.width; ++j)
      for (int c = 0; c < img.channels; ++c)
        raw.push_back(static_cast<unsigned char>(
            std::clamp(img.at(i, j, c), 0.0, 1.0) * 255.0 + 0.5));
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_len);
  require(compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) ==
              Z_OK,
          "io-error", "zlib compression failed");
  comp.resize(comp_len);
  png_chunk(f, "IDAT", comp);
  png_chunk(f, "IEND", {});
  require(f.good(), "io-error", "failed writing " + path);
}

json pose_to_json(const PoseSE3& p) {
  json j;
  j["rotation"] = std::vector<double>(p.rotation.data(), p.rotation.data() + 9);  // column-major
  j["translation"] = std::vector<double>{p.translation.x(), p.translation.y(), p.translation.z()};
  return j;
}

PoseSE3 pose_from_json(const json& j) {
  PoseSE3 p;
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  require(r.size() == 9 && t.size() == 3, "bad-manifest", "pose needs 9+3 numbers");
  for (int c = 0; c < 9; ++c) p.rotation.data()[c] = r[c];
  p.translation = Eigen::Vector3d(t[0], t[1], t[2]);
  require(p.orthonormality_error() < 1e-6, "bad-manifest", "pose rotation is not orthonormal");
  return p;
}

void save_manifest(const std::string& dir, const SequenceManifest& m) {
  json j;
  j["version"] = m.version;
  j["intrinsics"] = {{"fx", m.intrinsics.fx}, {"fy", m.intrinsics.fy}, {"cx", m.intrinsics.cx},
                     {"cy", m.intrinsics.cy}, {"width", m.intrinsics.width},
                     {"height", m.intrinsics.height}};
  j["far_plane"] = m.far_plane;
  if (!m.scene_json.empty()) j["scene"] = json::parse(m.scene_json);
  j["frames"] = json::array();
  for (const auto& fr : m.frames) {
    json e;
    e["image"] = fr.image;
    if (!fr.image_png.empty()) e["image_png"] = fr.image_png;
    e["depth"] = fr.depth;
    e["normals"] = fr.normals;
    e["pose_world"] = pose_to_json(fr.pose_world);
    j["frames"].push_back(std::move(e));
  }
  std::ofstream f(fs::path(dir) / "manifest.json");
  require(f.good(), "io-error", "cannot write manifest in " + dir);
  f << j.dump(2) << "\n";
}

SequenceManifest load_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  require(fs::exists(path), "missing-file", path.string());
  std::ifstream f(path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail("bad-manifest", std::string("parse error: ") + e.what());
  }
  require(j.contains("version"), "bad-manifest", "manifest missing version");
  SequenceManifest m;
  m.version = j["version"].get<int>();
  require(m.version == 1, "bad-version",
          "unsupported manifest version " + std::to_string(m.version));

  static const std::set<std::string> known = {"version", "intrinsics", "far_plane", "frames",
                                              "scene"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      std::cerr << "warning: ignoring unknown manifest key '" << it.key() << "'\n";

  require(j.contains("intrinsics") && j.contains("frames"), "bad-manifest",
          "manifest missing intrinsics or frames");
  const json& ji = j["intrinsics"];
  m.intrinsics.fx = ji.at("fx").get<double>();
  m.intrinsics.fy = ji.at("fy").get<double>();
  m.intrinsics.cx = ji.at("cx").get<double>();
  m.intrinsics.cy = ji.at("cy").get<double>();
  m.intrinsics.width = ji.at("width").get<int>();
  m.intrinsics.height = ji.at("height").get<int>();
  m.intrinsics.validate();
  if (j.contains("far_plane")) m.far_plane = j["far_plane"].get<double>();
  if (j.contains("scene")) m.scene_json = j["scene"].dump();
  for (const json& e : j["frames"]) {
    FrameEntry fr;
    fr.image = e.at("image").get<std::string>();
    if (e.contains("image_png")) fr.image_png = e["image_png"].get<std::string>();
    fr.depth = e.at("depth").get<std::string>();
    fr.normals = e.at("normals").get<std::string>();
    fr.pose_world = pose_from_json(e.at("pose_world"));
    m.frames.push_back(std::move(fr));
  }
  return m;
}

LoadedFrame load_frame(const std::string& dir, const FrameEntry& entry) {
  const fs::path base(dir);
  LoadedFrame out;
  out.image = read_float_image((base / entry.image).string());
  out.depth = read_depth((base / entry.depth).string());
  out.normals = read_normals((base / entry.normals).string());
  out.pose_world = entry.pose_world;
  return out;
}

json weights_to_json(const LossWeights& w) {
  return json{{"alpha", w.alpha},       {"lambda1", w.lambda1},
              {"lambda2", w.lambda2},   {"lambda3", w.lambda3},
              {"lambda4", w.lambda4},   {"lambda5", w.lambda5},
              {"ssim_c1", w.ssim_c1},   {"ssim_c2", w.ssim_c2},
              {"spec_threshold", w.spec_threshold}, {"spec_dilate", w.spec_dilate}};
}

LossWeights weights_from_json(const json& j) {
  LossWeights w;
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("alpha", w.alpha);
  get("lambda1", w.lambda1);
  get("lambda2", w.lambda2);
  get("lambda3", w.lambda3);
  get("lambda4", w.lambda4);
  get("lambda5", w.lambda5);
  get("ssim_c1", w.ssim_c1);
  get("ssim_c2", w.ssim_c2);
  get("spec_threshold", w.spec_threshold);
  get("spec_dilate", w.spec_dilate);
  w.validate();
  return w;
}

void save_weights(const std::string& path, const LossWeights& w) {
  std::ofstream f(path);
  require(f.good(), "io-error", "cannot write " + path);
  f << weights_to_json(w).dump(2) << "\n";
}

LossWeights load_weights(const std::string& path) {
  require(fs::exists(path), "missing-file", path);
  std::ifstream f(path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail("bad-config", std::string("parse error in ") + path + ": " + e.what());
  }
  return weights_from_json(j);
}

DepthField perturb_depth(const DepthField& d, double scale, double noise_sigma,
                         std::uint64_t seed) {
  require(scale > 0.0 && noise_sigma >= 0.0, "invalid-input",
          "perturb needs positive scale and non-negative noise");
  DepthField out = d;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : out.data) {
    const double xi = noise_sigma > 0.0 ? gauss(rng) : 0.0;
    v = scale * v * std::exp(noise_sigma * xi);
  }
  return out;
}

}  // namespace colde
