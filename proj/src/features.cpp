#include "colde/features.hpp"

#include <cmath>
#include <random>

#include "colde/parallel.hpp"

namespace colde {

namespace {

inline int reflect(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

std::vector<double> build_bank() {
  const int ks = kFeatureKernelSize;
  std::vector<double> bank(static_cast<std::size_t>(kFeatureChannels) * ks * ks * 3);
  std::mt19937_64 rng(0x5eedc01de5eedULL);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(ks * ks * 3)));
  for (auto& v : bank) v = gauss(rng);
  return bank;
}

}  // namespace

const std::vector<double>& feature_kernels() {
  static const std::vector<double> bank = build_bank();
  return bank;
}

Image feature_extract(const Image& img) {
  require(img.channels == 1 || img.channels == 3, "invalid-input",
          "feature_extract expects 1- or 3-channel input");
  const int h = img.height, w = img.width;
  const int oh = (h + kFeatureStride - 1) / kFeatureStride;
  const int ow = (w + kFeatureStride - 1) / kFeatureStride;
  const int ks = kFeatureKernelSize;
  const int half = ks / 2;
  const auto& bank = feature_kernels();

  Image out(oh, ow, kFeatureChannels, 0.0);
  parallel_rows(oh, [&](int row_begin, int row_end) {
    for (int oi = row_begin; oi < row_end; ++oi) {
      for (int oj = 0; oj < ow; ++oj) {
        const int ci = oi * kFeatureStride;
        const int cj = oj * kFeatureStride;
        for (int f = 0; f < kFeatureChannels; ++f) {
          double acc = 0.0;
          for (int dy = 0; dy < ks; ++dy) {
            const int ri = reflect(ci + dy - half, h);
            for (int dx = 0; dx < ks; ++dx) {
              const int rj = reflect(cj + dx - half, w);
              for (int c = 0; c < 3; ++c) {
                const int ic = img.channels == 3 ? c : 0;
                acc += bank[(((static_cast<std::size_t>(f) * ks + dy) * ks + dx) * 3) + c] *
                       img.at(ri, rj, ic);
              }
            }
          }
          out.at(oi, oj, f) = acc;
        }
      }
    }
  });

  // Per-channel min-max normalization to [0,1].
  for (int f = 0; f < kFeatureChannels; ++f) {
    double lo = out.at(0, 0, f), hi = lo;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        const double v = out.at(i, j, f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const double range = hi - lo;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double& v = out.at(i, j, f);
        v = range > 1e-12 ? (v - lo) / range : 0.0;
      }
  }
  return out;
}

}  // namespace colde
