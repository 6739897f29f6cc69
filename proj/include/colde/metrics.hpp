#pragma once

#include "colde/grid.hpp"

namespace colde {

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double scale_applied = 1.0;
};

// Multiplies pred by median(gt)/median(pred) over the valid set.
// Throws empty-valid-set when no pixel is valid.
std::pair<DepthField, double> median_scale(const DepthField& pred, const DepthField& gt,
                                           const Mask& valid);

// Standard depth error/accuracy metrics over the valid set; delta thresholds
// use strict inequality against 1.25^k.
DepthMetrics compute_metrics(const DepthField& pred, const DepthField& gt, const Mask& valid,
                             bool scale_first);

}  // namespace colde
