#include "colde/ssim.hpp"

#include <cmath>
#include <vector>

namespace colde {

namespace {

// reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

struct WindowStats {
  double mu_a, mu_b, ea2, eb2, eab;
};

inline WindowStats window_stats(const double* a, const double* b, int h, int w, int i, int j) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int di = -1; di <= 1; ++di) {
    const int ri = reflect(i + di, h);
    for (int dj = -1; dj <= 1; ++dj) {
      const int rj = reflect(j + dj, w);
      const double av = a[static_cast<std::size_t>(ri) * w + rj];
      const double bv = b[static_cast<std::size_t>(ri) * w + rj];
      sa += av;
      sb += bv;
      saa += av * av;
      sbb += bv * bv;
      sab += av * bv;
    }
  }
  const double inv = 1.0 / 9.0;
  return {sa * inv, sb * inv, saa * inv, sbb * inv, sab * inv};
}

}  // namespace

void ssim_plane(const double* a, const double* b, int h, int w, double c1, double c2,
                double* out) {
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const WindowStats s = window_stats(a, b, h, w, i, j);
      const double var_a = s.ea2 - s.mu_a * s.mu_a;
      const double var_b = s.eb2 - s.mu_b * s.mu_b;
      const double cov = s.eab - s.mu_a * s.mu_b;
      const double num = (2.0 * s.mu_a * s.mu_b + c1) * (2.0 * cov + c2);
      const double den = (s.mu_a * s.mu_a + s.mu_b * s.mu_b + c1) * (var_a + var_b + c2);
      out[static_cast<std::size_t>(i) * w + j] = num / den;
    }
  }
}

void ssim_plane_backward(const double* a, const double* b, int h, int w, double c1,
                         double c2, const double* upstream, double* grad_a) {
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double u = upstream[static_cast<std::size_t>(i) * w + j];
      if (u == 0.0) continue;
      const WindowStats s = window_stats(a, b, h, w, i, j);
      const double var_a = s.ea2 - s.mu_a * s.mu_a;
      const double var_b = s.eb2 - s.mu_b * s.mu_b;
      const double cov = s.eab - s.mu_a * s.mu_b;
      const double num_l = 2.0 * s.mu_a * s.mu_b + c1;
      const double den_l = s.mu_a * s.mu_a + s.mu_b * s.mu_b + c1;
      const double num_c = 2.0 * cov + c2;
      const double den_c = var_a + var_b + c2;
      const double l_term = num_l / den_l;
      const double c_term = num_c / den_c;

      const double dc_dvar_a = -num_c / (den_c * den_c);
      const double dc_dcov = 2.0 / den_c;
      const double dl_dmu_a = (2.0 * s.mu_b * den_l - num_l * 2.0 * s.mu_a) / (den_l * den_l);

      const double ds_dmu_a = c_term * dl_dmu_a +
                              l_term * (dc_dvar_a * (-2.0 * s.mu_a) + dc_dcov * (-s.mu_b));
      const double ds_dea2 = l_term * dc_dvar_a;
      const double ds_deab = l_term * dc_dcov;

      const double inv = 1.0 / 9.0;
      for (int di = -1; di <= 1; ++di) {
        const int ri = reflect(i + di, h);
        for (int dj = -1; dj <= 1; ++dj) {
          const int rj = reflect(j + dj, w);
          const std::size_t idx = static_cast<std::size_t>(ri) * w + rj;
          grad_a[idx] += u * inv * (ds_dmu_a + 2.0 * a[idx] * ds_dea2 + b[idx] * ds_deab);
        }
      }
    }
  }
}

Image ssim_map(const Image& a, const Image& b, double c1, double c2) {
  require(a.same_shape(b), "shape-mismatch", "ssim inputs differ in shape");
  const int h = a.height, w = a.width, c = a.channels;
  Image out(h, w, 1, 0.0);
  std::vector<double> pa(static_cast<std::size_t>(h) * w), pb(pa.size()), ps(pa.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        pa[static_cast<std::size_t>(i) * w + j] = a.at(i, j, ch);
        pb[static_cast<std::size_t>(i) * w + j] = b.at(i, j, ch);
      }
    ssim_plane(pa.data(), pb.data(), h, w, c1, c2, ps.data());
    for (std::size_t p = 0; p < ps.size(); ++p) out.data[p] += ps[p] / c;
  }
  return out;
}

}  // namespace colde
