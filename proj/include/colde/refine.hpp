#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "colde/gradient.hpp"
#include "colde/metrics.hpp"
#include "colde/objectives.hpp"

namespace colde {

struct RefineConfig {
  int max_iters = 300;
  double learning_rate = 1e-2;  // initial step on log-depth; line search adapts
  bool optimize_depth = true;
  bool optimize_normals = false;
  double convergence_tol = 1e-6;
  std::uint64_t seed = 0;
  bool resample_feature_channel = true;  // fix the channel for monotonicity tests
  double divergence_factor = 10.0;

  void validate() const {
    require(max_iters >= 1, "invalid-config", "max_iters must be >= 1");
    require(learning_rate > 0.0, "invalid-config", "learning_rate must be positive");
  }
};

struct IterationRecord {
  int iter = 0;
  LossBreakdown loss;  // recorded under the iteration's frozen masks
  double step = 0.0;
  double wall_ms = 0.0;
};

struct RefineReport {
  std::vector<IterationRecord> iterations;
  DepthMetrics initial_metrics, final_metrics;                    // median-scaled
  DepthMetrics initial_metrics_unscaled, final_metrics_unscaled;  // raw scale
  bool has_metrics = false;
  bool converged = false;
  bool aborted = false;
  std::string abort_reason;
  double total_wall_ms = 0.0;
};

struct SequenceFrame {
  Image image;
  DepthField depth;
  NormalField normals;
  PoseSE3 pose_world;  // camera-to-world
};

struct RefineResult {
  std::vector<DepthField> depths;
  std::vector<NormalField> normals;
  RefineReport report;
};

// Gradient descent with backtracking line search on log-depth (and normals on
// the unit sphere), poses held fixed. Adjacent directed pairs (t, t+-1);
// every frame's fields receive gradients from all pairs they appear in.
RefineResult refine_sequence(const std::vector<SequenceFrame>& frames, const Intrinsics& k,
                             const LossWeights& w, const RefineConfig& cfg,
                             const std::vector<DepthField>* gt = nullptr,
                             const std::vector<Mask>* gt_valid = nullptr);

// Single directed pair; both views' fields are optimized, metrics report the
// target view against gt.
std::pair<FramePair, RefineReport> refine_pair(const FramePair& pair, const LossWeights& w,
                                               const RefineConfig& cfg,
                                               const DepthField* gt = nullptr,
                                               const Mask* gt_valid = nullptr);

}  // namespace colde
