#include "colde/instance.hpp"

#include <array>
#include <cmath>
#include <random>

#include "colde/features.hpp"

namespace colde {

namespace {

// Sum of a few random low-frequency sinusoids, mapped to [lo, hi].
class SmoothField {
 public:
  SmoothField(std::mt19937_64& rng, double lo, double hi) : lo_(lo), hi_(hi) {
    std::uniform_real_distribution<double> freq(0.5, 2.5);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    for (auto& m : modes_) m = {freq(rng), freq(rng), phase(rng)};
  }

  double operator()(double u, double v) const {
    double s = 0.0;
    for (const auto& m : modes_) s += std::sin(m[0] * 6.28 * u + m[1] * 6.28 * v + m[2]);
    const double t = 0.5 * (1.0 + s / static_cast<double>(modes_.size()));
    return lo_ + (hi_ - lo_) * t;
  }

 private:
  double lo_, hi_;
  std::array<std::array<double, 3>, 4> modes_;
};

}  // namespace

FramePair make_random_pair(std::uint64_t seed, int height, int width) {
  require(height >= 8 && width >= 8, "invalid-input", "random pair needs at least 8x8");
  std::mt19937_64 rng(seed);

  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 0.8 * width;
  k.fy = 0.8 * width;
  k.cx = (width - 1) / 2.0;
  k.cy = (height - 1) / 2.0;

  const auto fill_image = [&](Image& img) {
    for (int c = 0; c < img.channels; ++c) {
      SmoothField f(rng, 0.1, 0.9);
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j)
          img.at(i, j, c) = f(static_cast<double>(j) / width, static_cast<double>(i) / height);
    }
  };
  const auto fill_depth = [&](DepthField& d) {
    SmoothField f(rng, 1.0, 3.0);
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j)
        d.at(i, j) = f(static_cast<double>(j) / width, static_cast<double>(i) / height);
  };
  const auto fill_normals = [&](NormalField& n) {
    SmoothField fx(rng, -0.3, 0.3);
    SmoothField fy(rng, -0.3, 0.3);
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        const double u = static_cast<double>(j) / width;
        const double v = static_cast<double>(i) / height;
        n.set(i, j, Eigen::Vector3d(fx(u, v), fy(u, v), -1.0).normalized());
      }
  };

  Image target(height, width, 3), source(height, width, 3);
  DepthField td(height, width), sd(height, width);
  NormalField tn(height, width), sn(height, width);
  fill_image(target);
  fill_image(source);
  fill_depth(td);
  fill_depth(sd);
  fill_normals(tn);
  fill_normals(sn);

  std::uniform_real_distribution<double> small(-1.0, 1.0);
  Eigen::Matrix<double, 6, 1> xi;
  for (int c = 0; c < 3; ++c) xi[c] = 0.035 * small(rng);  // ~2 degrees
  for (int c = 3; c < 6; ++c) xi[c] = 0.02 * small(rng);
  const PoseSE3 pose = PoseSE3::exp(xi);

  std::uniform_int_distribution<int> channel(0, kFeatureChannels - 1);
  return make_frame_pair(std::move(target), std::move(source), std::move(td), std::move(sd),
                         std::move(tn), std::move(sn), pose, k, channel(rng));
}

}  // namespace colde
