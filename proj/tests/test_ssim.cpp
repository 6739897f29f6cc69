#include <random>

#include "doctest.h"

#include "colde/ssim.hpp"

using namespace colde;

namespace {

constexpr double kC1 = 1e-4;
constexpr double kC2 = 9e-4;

int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Scalar brute-force 3x3 window oracle with reflect-101 padding.
double ssim_oracle(const std::vector<double>& a, const std::vector<double>& b, int h, int w,
                   int ci, int cj) {
  double ma = 0, mb = 0, ea2 = 0, eb2 = 0, eab = 0;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj) {
      const int i = reflect101(ci + di, h), j = reflect101(cj + dj, w);
      const double va = a[i * w + j], vb = b[i * w + j];
      ma += va;
      mb += vb;
      ea2 += va * va;
      eb2 += vb * vb;
      eab += va * vb;
    }
  ma /= 9.0;
  mb /= 9.0;
  const double var_a = ea2 / 9.0 - ma * ma;
  const double var_b = eb2 / 9.0 - mb * mb;
  const double cov = eab / 9.0 - ma * mb;
  return ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
         ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
}

}  // namespace

TEST_CASE("ssim of an image with itself is 1 everywhere") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(9, 12, 3);
  for (auto& v : img.data) v = u(rng);
  const Image s = ssim_map(img, img, kC1, kC2);
  for (double v : s.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant images 0 and 1 give C1/(1+C1)") {
  const Image a(6, 7, 1, 0.0), b(6, 7, 1, 1.0);
  const Image s = ssim_map(a, b, kC1, kC2);
  const double expected = kC1 / (1.0 + kC1);
  CHECK(expected == doctest::Approx(9.999e-5).epsilon(1e-4));
  for (double v : s.data) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim matches the brute-force window oracle, including ssim(I, 1-I)") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int h = 10, w = 13;
  std::vector<double> a(h * w), b(h * w);
  for (auto& v : a) v = u(rng);

  SUBCASE("independent noise images") {
    for (auto& v : b) v = u(rng);
  }
  SUBCASE("b = 1 - a") {
    for (int p = 0; p < h * w; ++p) b[p] = 1.0 - a[p];
  }

  std::vector<double> out(h * w);
  ssim_plane(a.data(), b.data(), h, w, kC1, kC2, out.data());
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double ref = ssim_oracle(a, b, h, w, i, j);
      CHECK(out[i * w + j] == doctest::Approx(ref).epsilon(1e-13));
      CHECK(out[i * w + j] >= -1.0 - 1e-12);
      CHECK(out[i * w + j] <= 1.0 + 1e-12);
    }
}

TEST_CASE("multi-channel ssim averages per-channel maps") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image a(5, 6, 3), b(5, 6, 3);
  for (auto& v : a.data) v = u(rng);
  for (auto& v : b.data) v = u(rng);
  const Image s = ssim_map(a, b, kC1, kC2);
  REQUIRE(s.channels == 1);

  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) {
      double mean = 0.0;
      for (int c = 0; c < 3; ++c) {
        std::vector<double> pa(30), pb(30);
        for (int p = 0; p < 30; ++p) {
          pa[p] = a.data[p * 3 + c];
          pb[p] = b.data[p * 3 + c];
        }
        mean += ssim_oracle(pa, pb, 5, 6, i, j);
      }
      CHECK(s.at(i, j) == doctest::Approx(mean / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("ssim backward matches finite differences") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  const int h = 6, w = 7;
  std::vector<double> a(h * w), b(h * w), up(h * w);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  for (auto& v : up) v = u(rng);

  const auto f = [&](const std::vector<double>& av) {
    std::vector<double> s(h * w);
    ssim_plane(av.data(), b.data(), h, w, kC1, kC2, s.data());
    double total = 0.0;
    for (int p = 0; p < h * w; ++p) total += up[p] * s[p];
    return total;
  };

  std::vector<double> grad(h * w, 0.0);
  ssim_plane_backward(a.data(), b.data(), h, w, kC1, kC2, up.data(), grad.data());

  const double step = 1e-6;
  for (int p = 0; p < h * w; ++p) {
    std::vector<double> ap = a;
    ap[p] += step;
    const double fp = f(ap);
    ap[p] = a[p] - step;
    const double fm = f(ap);
    const double fd = (fp - fm) / (2.0 * step);
    CHECK(grad[p] == doctest::Approx(fd).epsilon(1e-5));
  }
}
