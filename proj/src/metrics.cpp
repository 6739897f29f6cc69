#include "colde/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace colde {

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + n / 2);
  return 0.5 * (lo + hi);
}

}  // namespace

std::pair<DepthField, double> median_scale(const DepthField& pred, const DepthField& gt,
                                           const Mask& valid) {
  require(pred.height == gt.height && pred.width == gt.width && valid.height == gt.height &&
              valid.width == gt.width,
          "shape-mismatch", "median_scale shapes differ");
  std::vector<double> ps, gs;
  for (int i = 0; i < gt.height; ++i)
    for (int j = 0; j < gt.width; ++j) {
      if (!valid.at(i, j)) continue;
      ps.push_back(pred.at(i, j));
      gs.push_back(gt.at(i, j));
    }
  require(!ps.empty(), "empty-valid-set", "median_scale needs at least one valid pixel");
  const double scale = median_of(gs) / median_of(ps);
  DepthField out = pred;
  for (auto& d : out.data) d *= scale;
  return {out, scale};
}

DepthMetrics compute_metrics(const DepthField& pred, const DepthField& gt, const Mask& valid,
                             bool scale_first) {
  DepthMetrics m;
  DepthField p = pred;
  if (scale_first) {
    auto [scaled, scale] = median_scale(pred, gt, valid);
    p = std::move(scaled);
    m.scale_applied = scale;
  }
  double abs_rel = 0, sq_rel = 0, se = 0, se_log = 0;
  long n = 0, d1 = 0, d2 = 0, d3 = 0;
  for (int i = 0; i < gt.height; ++i)
    for (int j = 0; j < gt.width; ++j) {
      if (!valid.at(i, j)) continue;
      const double g = gt.at(i, j);
      require(g > 0.0, "invalid-input", "non-positive ground-truth depth on valid set");
      const double pv = p.at(i, j);
      require(pv > 0.0, "invalid-input", "non-positive predicted depth on valid set");
      const double err = pv - g;
      abs_rel += std::abs(err) / g;
      sq_rel += err * err / g;
      se += err * err;
      const double le = std::log(pv) - std::log(g);
      se_log += le * le;
      const double ratio = std::max(pv / g, g / pv);
      d1 += ratio < 1.25;
      d2 += ratio < 1.25 * 1.25;
      d3 += ratio < 1.25 * 1.25 * 1.25;
      ++n;
    }
  require(n > 0, "empty-valid-set", "compute_metrics needs at least one valid pixel");
  m.abs_rel = abs_rel / n;
  m.sq_rel = sq_rel / n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(se_log / n);
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  return m;
}

}  // namespace colde
