#include <cmath>
#include <random>

#include "doctest.h"

#include "colde/features.hpp"

using namespace colde;

namespace {

int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Brute-force reflect-padded stride-2 correlation + per-channel min-max
// normalization, written independently of the library loop structure.
Image feature_oracle(const Image& img) {
  const int h = img.height, w = img.width;
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Image out(oh, ow, kFeatureChannels);
  for (int c = 0; c < kFeatureChannels; ++c) {
    std::vector<double> raw(static_cast<std::size_t>(oh) * ow);
    for (int oi = 0; oi < oh; ++oi)
      for (int oj = 0; oj < ow; ++oj) {
        double acc = 0.0;
        for (int dy = 0; dy < kFeatureKernelSize; ++dy)
          for (int dx = 0; dx < kFeatureKernelSize; ++dx) {
            const int i = reflect101(2 * oi + dy - kFeatureKernelSize / 2, h);
            const int j = reflect101(2 * oj + dx - kFeatureKernelSize / 2, w);
            for (int ic = 0; ic < 3; ++ic) {
              const double px = img.at(i, j, std::min(ic, img.channels - 1));
              acc += px * feature_kernel_at(c, dy, dx, ic);
            }
          }
        raw[static_cast<std::size_t>(oi) * ow + oj] = acc;
      }
    double lo = raw[0], hi = raw[0];
    for (double v : raw) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double range = hi - lo;
    for (int oi = 0; oi < oh; ++oi)
      for (int oj = 0; oj < ow; ++oj) {
        const double v = raw[static_cast<std::size_t>(oi) * ow + oj];
        out.at(oi, oj, c) = range < 1e-12 ? 0.0 : (v - lo) / range;
      }
  }
  return out;
}

}  // namespace

TEST_CASE("kernel bank is frozen and finite") {
  const auto& k1 = feature_kernels();
  const auto& k2 = feature_kernels();
  CHECK(&k1 == &k2);
  CHECK(k1.size() == static_cast<std::size_t>(kFeatureChannels) * 7 * 7 * 3);
  for (double v : k1) CHECK(std::isfinite(v));
}

TEST_CASE("constant image yields constant channels") {
  const Image img(16, 18, 3, 0.6);
  const Image f = feature_extract(img);
  CHECK(f.height == 8);
  CHECK(f.width == 9);
  CHECK(f.channels == kFeatureChannels);
  for (int c = 0; c < kFeatureChannels; ++c)
    for (int i = 0; i < f.height; ++i)
      for (int j = 0; j < f.width; ++j) CHECK(f.at(i, j, c) == f.at(0, 0, c));
}

TEST_CASE("feature extraction is deterministic") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(14, 14, 3);
  for (auto& v : img.data) v = u(rng);
  const Image a = feature_extract(img);
  const Image b = feature_extract(img);
  CHECK(a.data == b.data);
}

TEST_CASE("impulse and random images match the brute-force convolution oracle") {
  SUBCASE("impulse image") {
    Image img(20, 20, 3, 0.0);
    img.at(10, 10, 0) = 1.0;
    img.at(10, 10, 1) = 1.0;
    img.at(10, 10, 2) = 1.0;
    const Image got = feature_extract(img);
    const Image ref = feature_oracle(img);
    REQUIRE(got.data.size() == ref.data.size());
    for (std::size_t p = 0; p < got.data.size(); ++p)
      CHECK(got.data[p] == doctest::Approx(ref.data[p]).epsilon(1e-12));
  }
  SUBCASE("random image, odd size") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(11, 13, 3);
    for (auto& v : img.data) v = u(rng);
    const Image got = feature_extract(img);
    const Image ref = feature_oracle(img);
    REQUIRE(got.height == 6);
    REQUIRE(got.width == 7);
    for (std::size_t p = 0; p < got.data.size(); ++p)
      CHECK(got.data[p] == doctest::Approx(ref.data[p]).epsilon(1e-12));
  }
  SUBCASE("grayscale input replicated to 3 channels") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(10, 12, 1);
    for (auto& v : img.data) v = u(rng);
    const Image got = feature_extract(img);
    const Image ref = feature_oracle(img);
    for (std::size_t p = 0; p < got.data.size(); ++p)
      CHECK(got.data[p] == doctest::Approx(ref.data[p]).epsilon(1e-12));
  }
}

TEST_CASE("channel values are normalized to [0,1]") {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(24, 26, 3);
  for (auto& v : img.data) v = u(rng);
  const Image f = feature_extract(img);
  for (double v : f.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
