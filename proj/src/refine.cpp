#include "colde/refine.hpp"

#include <chrono>
#include <limits>
#include <cmath>
#include <random>

#include "colde/features.hpp"

namespace colde {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

DepthMetrics mean_metrics(const std::vector<DepthMetrics>& ms) {
  DepthMetrics out;
  if (ms.empty()) return out;
  double scale = 0.0;
  for (const auto& m : ms) {
    out.abs_rel += m.abs_rel;
    out.sq_rel += m.sq_rel;
    out.rmse += m.rmse;
    out.rmse_log += m.rmse_log;
    out.delta1 += m.delta1;
    out.delta2 += m.delta2;
    out.delta3 += m.delta3;
    scale += m.scale_applied;
  }
  const double n = static_cast<double>(ms.size());
  out.abs_rel /= n;
  out.sq_rel /= n;
  out.rmse /= n;
  out.rmse_log /= n;
  out.delta1 /= n;
  out.delta2 /= n;
  out.delta3 /= n;
  out.scale_applied = scale / n;
  return out;
}

struct State {
  std::vector<DepthField> depths;
  std::vector<NormalField> normals;
};

class Engine {
 public:
  Engine(std::vector<FramePair> pairs, std::vector<std::pair<int, int>> frame_index,
         const LossWeights& w, const RefineConfig& cfg)
      : pairs_(std::move(pairs)), frame_index_(std::move(frame_index)), w_(w), cfg_(cfg),
        rng_(cfg.seed) {}

  // frame_index_[p] = (target frame id, source frame id) of pair p.

  void sync(const State& s) {
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      pairs_[p].target_depth = s.depths[frame_index_[p].first];
      pairs_[p].source_depth = s.depths[frame_index_[p].second];
      pairs_[p].target_normals = s.normals[frame_index_[p].first];
      pairs_[p].source_normals = s.normals[frame_index_[p].second];
    }
  }

  void draw_channels() {
    std::uniform_int_distribution<int> pick(0, kFeatureChannels - 1);
    for (auto& pair : pairs_) pair.feature_channel = pick(rng_);
  }

  std::vector<Mask> current_masks() const {
    std::vector<Mask> out;
    out.reserve(pairs_.size());
    for (const auto& pair : pairs_) out.push_back(combined_mask(pair, w_));
    return out;
  }

  LossBreakdown eval(const State& s, const std::vector<Mask>& masks) {
    sync(s);
    LossBreakdown agg;
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      const LossBreakdown b = total_loss_masked(pairs_[p], w_, masks[p]);
      agg.photo += b.photo;
      agg.feat += b.feat;
      agg.depth += b.depth;
      agg.norm += b.norm;
      agg.orth += b.orth;
      agg.smooth += b.smooth;
      agg.total += b.total;
      agg.masked_pixel_count += b.masked_pixel_count;
    }
    const double n = static_cast<double>(pairs_.size());
    agg.photo /= n;
    agg.feat /= n;
    agg.depth /= n;
    agg.norm /= n;
    agg.orth /= n;
    agg.smooth /= n;
    agg.total /= n;
    agg.empty_mask = agg.masked_pixel_count == 0;
    return agg;
  }

  // Accumulated gradients, already chained to log-depth / tangent space.
  void gradient(const State& s, const std::vector<Mask>& masks,
                std::vector<DepthField>* g_logd, std::vector<NormalField>* g_norm) {
    sync(s);
    const double scale = 1.0 / static_cast<double>(pairs_.size());
    const Wrt wrt = cfg_.optimize_depth && cfg_.optimize_normals
                        ? Wrt::all
                        : (cfg_.optimize_normals ? Wrt::normals : Wrt::depth);
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      const GradientBundle b = grad_total_loss(pairs_[p], w_, wrt, &masks[p]);
      const int ft = frame_index_[p].first, fs = frame_index_[p].second;
      if (g_logd) {
        auto& gt = (*g_logd)[ft];
        auto& gs = (*g_logd)[fs];
        for (std::size_t q = 0; q < gt.data.size(); ++q) {
          gt.data[q] += scale * b.d_depth.data[q] * s.depths[ft].data[q];
          gs.data[q] += scale * b.d_source_depth.data[q] * s.depths[fs].data[q];
        }
      }
      if (g_norm) {
        for (int i = 0; i < b.d_normals.height; ++i)
          for (int j = 0; j < b.d_normals.width; ++j) {
            Eigen::Vector3d gt = (*g_norm)[ft].at(i, j) +
                                 scale * project_to_tangent(s.normals[ft].at(i, j),
                                                            b.d_normals.at(i, j));
            (*g_norm)[ft].set(i, j, gt);
            Eigen::Vector3d gs = (*g_norm)[fs].at(i, j) +
                                 scale * project_to_tangent(s.normals[fs].at(i, j),
                                                            b.d_source_normals.at(i, j));
            (*g_norm)[fs].set(i, j, gs);
          }
      }
    }
  }

  std::size_t pair_count() const { return pairs_.size(); }
  const FramePair& pair(std::size_t p) const { return pairs_[p]; }

 private:
  std::vector<FramePair> pairs_;
  std::vector<std::pair<int, int>> frame_index_;
  const LossWeights& w_;
  const RefineConfig& cfg_;
  std::mt19937_64 rng_;
};

// 3x3 box blur (replicate border), used to build a smoothed descent direction.
DepthField box_blur(const DepthField& g) {
  DepthField out(g.height, g.width, 0.0);
  for (int i = 0; i < g.height; ++i)
    for (int j = 0; j < g.width; ++j) {
      double acc = 0.0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int ii = std::clamp(i + di, 0, g.height - 1);
          const int jj = std::clamp(j + dj, 0, g.width - 1);
          acc += g.at(ii, jj);
        }
      out.at(i, j) = acc / 9.0;
    }
  return out;
}

State apply_step(const State& s, const std::vector<DepthField>& g_logd,
                 const std::vector<NormalField>& g_norm, double t, bool depth, bool normals) {
  State out = s;
  if (depth) {
    for (std::size_t f = 0; f < s.depths.size(); ++f)
      for (std::size_t q = 0; q < s.depths[f].data.size(); ++q)
        out.depths[f].data[q] = s.depths[f].data[q] * std::exp(-t * g_logd[f].data[q]);
  }
  if (normals) {
    for (std::size_t f = 0; f < s.normals.size(); ++f)
      for (int i = 0; i < s.normals[f].height; ++i)
        for (int j = 0; j < s.normals[f].width; ++j) {
          Eigen::Vector3d n = s.normals[f].at(i, j) - t * g_norm[f].at(i, j);
          const double norm = n.norm();
          if (norm > 1e-12) {
            n /= norm;
            // Keep the camera-facing convention (z <= 0); the orthogonality
            // term is symmetric in the sign, so pick the admissible one.
            if (n.z() > 0.0) n = -n;
            out.normals[f].set(i, j, n);
          }
        }
  }
  return out;
}

RefineReport run_descent(Engine& engine, State& state, const LossWeights& /*w*/,
                         const RefineConfig& cfg, int n_frames, int height, int width) {
  RefineReport report;
  const auto t_start = Clock::now();

  engine.draw_channels();
  std::vector<Mask> masks = engine.current_masks();
  LossBreakdown f_cur = engine.eval(state, masks);
  const double initial_total = f_cur.total;
  double step = cfg.learning_rate;
  double sign_step = cfg.learning_rate;
  double blur_step = cfg.learning_rate;
  int consecutive_failures = 0;
  int small_decreases = 0;

  // Backtracking line search along -dir scaled by t0, with expansion when the
  // first trial already decreases the loss. Returns the accepted step, or 0.
  const auto line_search = [&](const std::vector<DepthField>& d_logd,
                               const std::vector<NormalField>& d_norm, double t0,
                               double f_base, State* best, LossBreakdown* f_best) {
    double t = t0;
    for (int trial = 0; trial < 60; ++trial) {
      State candidate = apply_step(state, d_logd, d_norm, t, cfg.optimize_depth,
                                   cfg.optimize_normals);
      LossBreakdown f_try = engine.eval(candidate, masks);
      if (f_try.total < f_base) {
        if (trial == 0) {
          for (int grow = 0; grow < 60; ++grow) {
            State bigger = apply_step(state, d_logd, d_norm, t * 2.0, cfg.optimize_depth,
                                      cfg.optimize_normals);
            const LossBreakdown f_big = engine.eval(bigger, masks);
            if (f_big.total >= f_try.total) break;
            t *= 2.0;
            candidate = std::move(bigger);
            f_try = f_big;
          }
        }
        *best = std::move(candidate);
        *f_best = f_try;
        return t;
      }
      t *= 0.5;
    }
    return 0.0;
  };

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const auto t_iter = Clock::now();
    if (iter > 0) {
      if (cfg.resample_feature_channel) {
        engine.draw_channels();
        masks = engine.current_masks();
        f_cur = engine.eval(state, masks);
      } else {
        // Refresh masks only when that does not raise the recorded loss, so
        // the fixed-channel loss sequence stays monotone.
        std::vector<Mask> fresh = engine.current_masks();
        const LossBreakdown f_fresh = engine.eval(state, fresh);
        if (f_fresh.total <= f_cur.total) {
          masks = std::move(fresh);
          f_cur = f_fresh;
        }
      }
    }

    std::vector<DepthField> g_logd(n_frames, DepthField(height, width, 0.0));
    std::vector<NormalField> g_norm;
    for (int f = 0; f < n_frames; ++f) {
      NormalField nf(height, width);
      for (auto& v : nf.data) v = 0.0;
      g_norm.push_back(std::move(nf));
    }
    engine.gradient(state, masks, cfg.optimize_depth ? &g_logd : nullptr,
                    cfg.optimize_normals ? &g_norm : nullptr);

    double gmax = 0.0;
    for (const auto& g : g_logd)
      for (double v : g.data) gmax = std::max(gmax, std::abs(v));
    for (const auto& g : g_norm)
      for (double v : g.data) gmax = std::max(gmax, std::abs(v));

    IterationRecord rec;
    rec.iter = iter;
    if (gmax < 1e-14) {
      rec.loss = f_cur;
      rec.wall_ms = ms_since(t_iter);
      report.iterations.push_back(rec);
      report.converged = true;
      break;
    }

    // Raw gradient direction: fast near smooth minima but a few large
    // coordinates at L1 kinks can force microscopic steps. The sign direction
    // moves every coordinate at the same rate, so the many smooth-term
    // gradients outvote kink coordinates. Search along both, keep the better.
    std::vector<DepthField> s_logd = g_logd;
    std::vector<NormalField> s_norm = g_norm;
    for (auto& g : s_logd)
      for (double& v : g.data) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    for (auto& g : s_norm)
      for (double& v : g.data) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);

    // Spatially smoothed gradient: averaging over neighbors suppresses
    // isolated kink subgradients while keeping coherent structure.
    std::vector<DepthField> b_logd;
    b_logd.reserve(g_logd.size());
    for (const auto& g : g_logd) b_logd.push_back(box_blur(box_blur(g)));

    State cand_g, cand_s, cand_b;
    LossBreakdown f_g, f_s, f_b;
    const double t_g = line_search(g_logd, g_norm, step, f_cur.total, &cand_g, &f_g);
    const double t_s = line_search(s_logd, s_norm, sign_step, f_cur.total, &cand_s, &f_s);
    const double t_b = cfg.optimize_depth
                           ? line_search(b_logd, g_norm, blur_step, f_cur.total, &cand_b, &f_b)
                           : 0.0;
    if (t_g > 0.0) step = t_g;
    if (t_s > 0.0) sign_step = t_s;
    if (t_b > 0.0) blur_step = t_b;

    bool accepted = t_g > 0.0 || t_s > 0.0 || t_b > 0.0;
    double best_total = std::numeric_limits<double>::infinity();
    int pick = -1;
    if (t_g > 0.0 && f_g.total < best_total) { best_total = f_g.total; pick = 0; }
    if (t_s > 0.0 && f_s.total < best_total) { best_total = f_s.total; pick = 1; }
    if (t_b > 0.0 && f_b.total < best_total) { best_total = f_b.total; pick = 2; }
    LossBreakdown f_try = pick == 1 ? f_s : (pick == 2 ? f_b : f_g);
    State candidate = pick == 1 ? std::move(cand_s)
                                : (pick == 2 ? std::move(cand_b) : std::move(cand_g));
    const bool use_sign = pick == 1;

    if (!accepted && cfg.resample_feature_channel && consecutive_failures < 8) {
      // A failed search under this channel draw is not terminal; the next
      // iteration samples a different channel and may open a descent path.
      ++consecutive_failures;
      rec.loss = f_cur;
      rec.step = 0.0;
      rec.wall_ms = ms_since(t_iter);
      report.iterations.push_back(rec);
      continue;
    }
    if (!accepted) {
      rec.loss = f_cur;
      rec.step = 0.0;
      rec.wall_ms = ms_since(t_iter);
      report.iterations.push_back(rec);
      report.converged = true;
      break;
    }

    consecutive_failures = 0;
    const double prev_total = f_cur.total;
    state = std::move(candidate);
    f_cur = f_try;
    rec.loss = f_cur;
    rec.step = use_sign ? sign_step : (pick == 2 ? blur_step : step);
    rec.wall_ms = ms_since(t_iter);
    report.iterations.push_back(rec);
    step = std::min(step * 2.0, 1e12);
    sign_step = std::min(sign_step * 2.0, 1e12);
    blur_step = std::min(blur_step * 2.0, 1e12);

    if (f_cur.total > cfg.divergence_factor * std::max(initial_total, 1e-300)) {
      report.aborted = true;
      report.abort_reason = "divergence: loss exceeded " +
                            std::to_string(cfg.divergence_factor) + "x initial";
      break;
    }
    if (prev_total - f_cur.total < cfg.convergence_tol * std::max(prev_total, 1e-300)) {
      // Under channel resampling a tiny decrease on one channel draw is weak
      // evidence, so require several in a row before stopping.
      ++small_decreases;
      if (!cfg.resample_feature_channel || small_decreases >= 5) {
        report.converged = true;
        break;
      }
    } else {
      small_decreases = 0;
    }
  }

  report.total_wall_ms = ms_since(t_start);
  return report;
}

}  // namespace

RefineResult refine_sequence(const std::vector<SequenceFrame>& frames, const Intrinsics& k,
                             const LossWeights& w, const RefineConfig& cfg,
                             const std::vector<DepthField>* gt,
                             const std::vector<Mask>* gt_valid) {
  cfg.validate();
  w.validate();
  require(frames.size() >= 2, "invalid-input", "refine_sequence needs at least 2 frames");
  const int n = static_cast<int>(frames.size());

  std::vector<Image> features;
  features.reserve(n);
  for (const auto& f : frames) features.push_back(feature_extract(f.image));

  std::vector<FramePair> pairs;
  std::vector<std::pair<int, int>> index;
  for (int t = 0; t < n; ++t) {
    for (int s : {t - 1, t + 1}) {
      if (s < 0 || s >= n) continue;
      FramePair pair;
      pair.target = frames[t].image;
      pair.source = frames[s].image;
      pair.target_depth = frames[t].depth;
      pair.source_depth = frames[s].depth;
      pair.target_normals = frames[t].normals;
      pair.source_normals = frames[s].normals;
      pair.pose_t_to_s = frames[s].pose_world.inverse() * frames[t].pose_world;
      pair.intrinsics = k;
      pair.target_features = features[t];
      pair.source_features = features[s];
      pairs.push_back(std::move(pair));
      index.emplace_back(t, s);
    }
  }

  Engine engine(std::move(pairs), std::move(index), w, cfg);
  State state;
  for (const auto& f : frames) {
    state.depths.push_back(f.depth);
    state.normals.push_back(f.normals);
  }

  const auto metrics_vs_gt = [&](const std::vector<DepthField>& depths, bool scaled) {
    std::vector<DepthMetrics> ms;
    for (int f = 0; f < n; ++f) {
      Mask valid = gt_valid ? (*gt_valid)[f] : Mask(k.height, k.width, true);
      ms.push_back(compute_metrics(depths[f], (*gt)[f], valid, scaled));
    }
    return mean_metrics(ms);
  };

  RefineReport report;
  if (gt) {
    report.has_metrics = true;
    report.initial_metrics = metrics_vs_gt(state.depths, true);
    report.initial_metrics_unscaled = metrics_vs_gt(state.depths, false);
  }

  RefineReport descent = run_descent(engine, state, w, cfg, n, k.height, k.width);
  descent.has_metrics = report.has_metrics;
  descent.initial_metrics = report.initial_metrics;
  descent.initial_metrics_unscaled = report.initial_metrics_unscaled;
  if (gt) {
    descent.final_metrics = metrics_vs_gt(state.depths, true);
    descent.final_metrics_unscaled = metrics_vs_gt(state.depths, false);
  }

  RefineResult result;
  result.depths = std::move(state.depths);
  result.normals = std::move(state.normals);
  result.report = std::move(descent);
  return result;
}

std::pair<FramePair, RefineReport> refine_pair(const FramePair& pair, const LossWeights& w,
                                               const RefineConfig& cfg, const DepthField* gt,
                                               const Mask* gt_valid) {
  cfg.validate();
  w.validate();
  const Intrinsics& k = pair.intrinsics;

  std::vector<FramePair> pairs{pair};
  std::vector<std::pair<int, int>> index{{0, 1}};
  Engine engine(std::move(pairs), std::move(index), w, cfg);

  State state;
  state.depths = {pair.target_depth, pair.source_depth};
  state.normals = {pair.target_normals, pair.source_normals};

  RefineReport report;
  if (gt) {
    report.has_metrics = true;
    const Mask valid = gt_valid ? *gt_valid : Mask(k.height, k.width, true);
    report.initial_metrics = compute_metrics(state.depths[0], *gt, valid, true);
    report.initial_metrics_unscaled = compute_metrics(state.depths[0], *gt, valid, false);
  }

  RefineReport descent = run_descent(engine, state, w, cfg, 2, k.height, k.width);
  descent.has_metrics = report.has_metrics;
  descent.initial_metrics = report.initial_metrics;
  descent.initial_metrics_unscaled = report.initial_metrics_unscaled;
  if (gt) {
    const Mask valid = gt_valid ? *gt_valid : Mask(k.height, k.width, true);
    descent.final_metrics = compute_metrics(state.depths[0], *gt, valid, true);
    descent.final_metrics_unscaled = compute_metrics(state.depths[0], *gt, valid, false);
  }

  FramePair refined = pair;
  refined.target_depth = std::move(state.depths[0]);
  refined.source_depth = std::move(state.depths[1]);
  refined.target_normals = std::move(state.normals[0]);
  refined.source_normals = std::move(state.normals[1]);
  return {std::move(refined), std::move(descent)};
}

}  // namespace colde
