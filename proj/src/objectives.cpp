#include "colde/objectives.hpp"

#include <cmath>

#include "colde/features.hpp"
#include "colde/parallel.hpp"
#include "colde/ssim.hpp"

namespace colde {

void LossWeights::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, "invalid-weights", "alpha must be in [0,1]");
  require(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && lambda4 >= 0 && lambda5 >= 0,
          "invalid-weights", "lambdas must be non-negative");
  require(ssim_c1 >= 0 && ssim_c2 >= 0, "invalid-weights", "ssim stabilizers must be non-negative");
  require(spec_threshold >= 0 && spec_dilate >= 0, "invalid-weights",
          "specular mask parameters must be non-negative");
}

void FramePair::validate() const {
  intrinsics.validate();
  const int h = intrinsics.height, w = intrinsics.width;
  require(target.height == h && target.width == w && target.same_shape(source),
          "shape-mismatch", "images do not match intrinsics");
  require(target_depth.height == h && target_depth.width == w && source_depth.height == h &&
              source_depth.width == w,
          "shape-mismatch", "depth fields do not match intrinsics");
  require(target_normals.height == h && target_normals.width == w &&
              source_normals.height == h && source_normals.width == w,
          "shape-mismatch", "normal fields do not match intrinsics");
  require(feature_channel >= 0 && feature_channel < target_features.channels,
          "invalid-input", "feature channel out of range");
  require(target_features.same_shape(source_features), "shape-mismatch",
          "feature maps differ in shape");
  for (double d : target_depth.data)
    require(d > 0.0 && std::isfinite(d), "invalid-input", "target depth must be positive");
  for (double d : source_depth.data)
    require(d > 0.0 && std::isfinite(d), "invalid-input", "source depth must be positive");
}

namespace {

// Feature maps are half resolution; image coordinate x lands at feature
// coordinate x/2, clamped to the feature grid.
inline double to_feature_coord(double x, int extent) {
  return std::clamp(x * 0.5, 0.0, static_cast<double>(extent - 1));
}

}  // namespace

WarpContext make_warp_context(const FramePair& pair) {
  const Intrinsics& k = pair.intrinsics;
  require(pair.feature_channel >= 0 && pair.feature_channel < pair.target_features.channels,
          "invalid-input", "feature channel out of range");
  const int h = k.height, w = k.width;
  const int fc = pair.feature_channel;

  WarpContext ctx;
  ctx.height = h;
  ctx.width = w;
  ctx.qx.assign(static_cast<std::size_t>(h) * w, 0.0);
  ctx.qy.assign(static_cast<std::size_t>(h) * w, 0.0);
  ctx.dproj.assign(static_cast<std::size_t>(h) * w, 0.0);
  ctx.cam_point.assign(static_cast<std::size_t>(h) * w, Eigen::Vector3d::Zero());
  ctx.valid = Mask(h, w, false);
  ctx.warped_image = Image(h, w, pair.source.channels, 0.0);
  ctx.warped_feature = Image(h, w, 1, 0.0);
  ctx.target_feature_up = Image(h, w, 1, 0.0);
  ctx.warped_source_depth = Image(h, w, 1, 0.0);
  ctx.warped_source_normals = Image(h, w, 3, 0.0);

  const int fh = pair.source_features.height, fw = pair.source_features.width;

  parallel_rows(h, [&](int row_begin, int row_end) {
    for (int i = row_begin; i < row_end; ++i) {
      for (int j = 0; j < w; ++j) {
        const std::size_t p = static_cast<std::size_t>(i) * w + j;
        const Eigen::Vector3d y =
            pair.pose_t_to_s.apply(backproject(j, i, pair.target_depth.at(i, j), k));
        ctx.cam_point[p] = y;
        const Projection proj = project_point(y, k);
        ctx.dproj[p] = proj.depth;

        {
          const BilinearTap ft = make_tap(fh, fw, to_feature_coord(j, fw), to_feature_coord(i, fh));
          ctx.target_feature_up.data[p] = tap_value(ft, pair.target_features, fc);
        }
        if (!proj.valid()) continue;
        ctx.qx[p] = proj.x;
        ctx.qy[p] = proj.y;

        const BilinearTap t = make_tap(h, w, proj.x, proj.y);
        if (!t.in_bounds) continue;
        ctx.valid.set(i, j, true);
        for (int c = 0; c < pair.source.channels; ++c)
          ctx.warped_image.at(i, j, c) = tap_value(t, pair.source, c);

        double sd = 0.0;
        {
          const double v00 = pair.source_depth.at(t.i0, t.j0);
          const double v01 = pair.source_depth.at(t.i0, t.j1);
          const double v10 = pair.source_depth.at(t.i1, t.j0);
          const double v11 = pair.source_depth.at(t.i1, t.j1);
          sd = (1.0 - t.wy) * ((1.0 - t.wx) * v00 + t.wx * v01) +
               t.wy * ((1.0 - t.wx) * v10 + t.wx * v11);
        }
        ctx.warped_source_depth.data[p] = sd;

        for (int c = 0; c < 3; ++c) {
          const double v00 = pair.source_normals.data[(static_cast<std::size_t>(t.i0) * w + t.j0) * 3 + c];
          const double v01 = pair.source_normals.data[(static_cast<std::size_t>(t.i0) * w + t.j1) * 3 + c];
          const double v10 = pair.source_normals.data[(static_cast<std::size_t>(t.i1) * w + t.j0) * 3 + c];
          const double v11 = pair.source_normals.data[(static_cast<std::size_t>(t.i1) * w + t.j1) * 3 + c];
          ctx.warped_source_normals.at(i, j, c) =
              (1.0 - t.wy) * ((1.0 - t.wx) * v00 + t.wx * v01) +
              t.wy * ((1.0 - t.wx) * v10 + t.wx * v11);
        }

        const BilinearTap ftap =
            make_tap(fh, fw, to_feature_coord(proj.x, fw), to_feature_coord(proj.y, fh));
        ctx.warped_feature.data[p] = tap_value(ftap, pair.source_features, fc);
      }
    }
  });
  return ctx;
}

Image ssim(const Image& a, const Image& b, const LossWeights& w) {
  return ssim_map(a, b, w.ssim_c1, w.ssim_c2);
}

namespace {

Image photometric_of(const Image& candidate, const Image& target, const LossWeights& w) {
  const Image s = ssim_map(candidate, target, w.ssim_c1, w.ssim_c2);
  Image out(target.height, target.width, 1, 0.0);
  const int c = target.channels;
  for (int i = 0; i < target.height; ++i)
    for (int j = 0; j < target.width; ++j) {
      double l1 = 0.0;
      for (int ch = 0; ch < c; ++ch) l1 += std::abs(candidate.at(i, j, ch) - target.at(i, j, ch));
      l1 /= c;
      out.at(i, j) = (1.0 - w.alpha) * l1 + 0.5 * w.alpha * (1.0 - s.at(i, j));
    }
  return out;
}

}  // namespace

Image photometric_map(const FramePair& pair, const WarpContext& ctx, const LossWeights& w) {
  return photometric_of(ctx.warped_image, pair.target, w);
}

Image feature_map(const FramePair& /*pair*/, const WarpContext& ctx, const LossWeights& w) {
  const Image s = ssim_map(ctx.warped_feature, ctx.target_feature_up, w.ssim_c1, w.ssim_c2);
  Image out(ctx.height, ctx.width, 1, 0.0);
  for (std::size_t p = 0; p < out.data.size(); ++p)
    out.data[p] = 0.5 * w.alpha * (1.0 - s.data[p]);
  return out;
}

Image depth_consistency_map(const FramePair& /*pair*/, const WarpContext& ctx) {
  Image out(ctx.height, ctx.width, 1, 0.0);
  for (int i = 0; i < ctx.height; ++i)
    for (int j = 0; j < ctx.width; ++j) {
      if (!ctx.valid.at(i, j)) continue;
      const std::size_t p = static_cast<std::size_t>(i) * ctx.width + j;
      out.data[p] = depth_ratio(ctx.warped_source_depth.data[p], ctx.dproj[p]);
    }
  return out;
}

Image normal_consistency_map(const FramePair& pair, const WarpContext& ctx) {
  Image out(ctx.height, ctx.width, 1, 0.0);
  const Eigen::Matrix3d& r = pair.pose_t_to_s.rotation;
  for (int i = 0; i < ctx.height; ++i)
    for (int j = 0; j < ctx.width; ++j) {
      if (!ctx.valid.at(i, j)) continue;
      const Eigen::Vector3d rotated = r * pair.target_normals.at(i, j);
      double l1 = 0.0;
      for (int c = 0; c < 3; ++c)
        l1 += std::abs(ctx.warped_source_normals.at(i, j, c) - rotated[c]);
      out.at(i, j) = l1;
    }
  return out;
}

Image photometric_loss(const FramePair& pair, const LossWeights& w) {
  return photometric_map(pair, make_warp_context(pair), w);
}
Image feature_loss(const FramePair& pair, const LossWeights& w) {
  return feature_map(pair, make_warp_context(pair), w);
}
Image depth_consistency_loss(const FramePair& pair, const LossWeights& /*w*/) {
  return depth_consistency_map(pair, make_warp_context(pair));
}
Image normal_consistency_loss(const FramePair& pair, const LossWeights& /*w*/) {
  return normal_consistency_map(pair, make_warp_context(pair));
}

std::vector<Eigen::Vector3d> surface_vectors(const DepthField& d, const Intrinsics& k,
                                             int i, int j) {
  if (i < 1 || j < 1 || i > d.height - 2 || j > d.width - 2) return {};
  const auto point = [&](int pi, int pj) -> Eigen::Vector3d { return d.at(pi, pj) * k.ray(pj, pi); };
  return {point(i - 1, j - 1) - point(i + 1, j + 1),
          point(i - 1, j + 1) - point(i + 1, j - 1)};
}

double orthogonality_loss(const DepthField& d, const NormalField& n, const Intrinsics& k) {
  double sum = 0.0;
  long count = 0;
  for (int i = 1; i < d.height - 1; ++i) {
    for (int j = 1; j < d.width - 1; ++j) {
      const Eigen::Vector3d normal = n.at(i, j);
      for (const Eigen::Vector3d& v : surface_vectors(d, k, i, j)) {
        const double norm = v.norm();
        if (norm < 1e-15) continue;
        sum += std::abs(normal.dot(v) / norm);
        ++count;
      }
    }
  }
  return count > 0 ? sum / count : 0.0;
}

namespace {

struct InverseDepthStar {
  std::vector<double> dstar;  // (1/D) / mean(1/D)
  std::vector<double> u;      // 1/D
  double mean_u = 0.0;
};

InverseDepthStar make_dstar(const DepthField& d) {
  InverseDepthStar out;
  out.u.resize(d.size());
  double sum = 0.0;
  for (std::size_t p = 0; p < d.size(); ++p) {
    out.u[p] = 1.0 / d.data[p];
    sum += out.u[p];
  }
  out.mean_u = sum / d.size();
  out.dstar.resize(d.size());
  for (std::size_t p = 0; p < d.size(); ++p) out.dstar[p] = out.u[p] / out.mean_u;
  return out;
}

inline double image_grad_x(const Image& img, int i, int j) {
  double g = 0.0;
  for (int c = 0; c < img.channels; ++c) g += std::abs(img.at(i, j + 1, c) - img.at(i, j, c));
  return g / img.channels;
}

inline double image_grad_y(const Image& img, int i, int j) {
  double g = 0.0;
  for (int c = 0; c < img.channels; ++c) g += std::abs(img.at(i + 1, j, c) - img.at(i, j, c));
  return g / img.channels;
}

}  // namespace

double smoothness_loss(const DepthField& d, const Image& img) {
  require(img.height == d.height && img.width == d.width, "shape-mismatch",
          "smoothness image does not match depth");
  const InverseDepthStar s = make_dstar(d);
  const int h = d.height, w = d.width;
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j + 1 < w; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * w + j;
      sx += std::abs(s.dstar[p + 1] - s.dstar[p]) * std::exp(-image_grad_x(img, i, j));
    }
  for (int i = 0; i + 1 < h; ++i)
    for (int j = 0; j < w; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * w + j;
      sy += std::abs(s.dstar[p + w] - s.dstar[p]) * std::exp(-image_grad_y(img, i, j));
    }
  double out = 0.0;
  if (w > 1) out += sx / (static_cast<double>(h) * (w - 1));
  if (h > 1) out += sy / (static_cast<double>(w) * (h - 1));
  return out;
}

Mask valid_mask(const FramePair& /*pair*/, const WarpContext& ctx) { return ctx.valid; }

Mask auto_mask(const FramePair& pair, const WarpContext& ctx, const LossWeights& w) {
  const Image warped = photometric_map(pair, ctx, w);
  const Image still = photometric_of(pair.source, pair.target, w);
  Mask out(ctx.height, ctx.width, false);
  for (int i = 0; i < ctx.height; ++i)
    for (int j = 0; j < ctx.width; ++j) out.set(i, j, warped.at(i, j) < still.at(i, j));
  return out;
}

Mask auto_mask(const FramePair& pair, const LossWeights& w) {
  return auto_mask(pair, make_warp_context(pair), w);
}

Mask specular_mask(const Image& img, const LossWeights& w) {
  Mask bright(img.height, img.width, false);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j) {
      double mx = 0.0;
      for (int c = 0; c < img.channels; ++c) mx = std::max(mx, img.at(i, j, c));
      bright.set(i, j, mx > w.spec_threshold);
    }
  Mask keep(img.height, img.width, true);
  const int r = w.spec_dilate;
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j) {
      if (!bright.at(i, j)) continue;
      for (int di = -r; di <= r; ++di)
        for (int dj = -r; dj <= r; ++dj) {
          const int ii = i + di, jj = j + dj;
          if (ii >= 0 && ii < img.height && jj >= 0 && jj < img.width) keep.set(ii, jj, false);
        }
    }
  return keep;
}

Mask combined_mask(const FramePair& pair, const WarpContext& ctx, const LossWeights& w) {
  return mask_and(mask_and(auto_mask(pair, ctx, w), specular_mask(pair.target, w)), ctx.valid);
}

Mask combined_mask(const FramePair& pair, const LossWeights& w) {
  return combined_mask(pair, make_warp_context(pair), w);
}

LossBreakdown total_loss_with(const FramePair& pair, const LossWeights& w,
                              const WarpContext& ctx, const Mask& m) {
  const Image photo = photometric_map(pair, ctx, w);
  const Image feat = feature_map(pair, ctx, w);
  const Image depth = depth_consistency_map(pair, ctx);
  const Image norm = normal_consistency_map(pair, ctx);

  LossBreakdown out;
  out.masked_pixel_count = m.count();
  out.empty_mask = out.masked_pixel_count == 0;
  if (!out.empty_mask) {
    double sp = 0, sf = 0, sd = 0, sn = 0;
    for (int i = 0; i < ctx.height; ++i)
      for (int j = 0; j < ctx.width; ++j) {
        if (!m.at(i, j)) continue;
        sp += photo.at(i, j);
        sf += feat.at(i, j);
        sd += depth.at(i, j);
        sn += norm.at(i, j);
      }
    out.photo = sp / out.masked_pixel_count;
    out.feat = sf / out.masked_pixel_count;
    out.depth = sd / out.masked_pixel_count;
    out.norm = sn / out.masked_pixel_count;
  }
  out.orth = orthogonality_loss(pair.target_depth, pair.target_normals, pair.intrinsics);
  out.smooth = 0.5 * (smoothness_loss(pair.target_depth, pair.target) +
                      smoothness_loss(pair.source_depth, pair.source));
  out.total = out.photo + w.lambda1 * out.feat + w.lambda2 * out.depth + w.lambda3 * out.norm +
              w.lambda4 * out.orth + w.lambda5 * out.smooth;
  return out;
}

LossBreakdown total_loss_masked(const FramePair& pair, const LossWeights& w, const Mask& m) {
  return total_loss_with(pair, w, make_warp_context(pair), m);
}

LossBreakdown total_loss(const FramePair& pair, const LossWeights& w) {
  const WarpContext ctx = make_warp_context(pair);
  return total_loss_with(pair, w, ctx, combined_mask(pair, ctx, w));
}

void add_smoothness_grad(const DepthField& d, const Image& img, double coeff,
                         DepthField& grad_depth) {
  require(grad_depth.height == d.height && grad_depth.width == d.width, "shape-mismatch",
          "gradient buffer shape");
  const InverseDepthStar s = make_dstar(d);
  const int h = d.height, w = d.width;
  std::vector<double> g_dstar(d.size(), 0.0);
  if (w > 1) {
    const double cx = 1.0 / (static_cast<double>(h) * (w - 1));
    for (int i = 0; i < h; ++i)
      for (int j = 0; j + 1 < w; ++j) {
        const std::size_t p = static_cast<std::size_t>(i) * w + j;
        const double diff = s.dstar[p + 1] - s.dstar[p];
        if (diff == 0.0) continue;
        const double sgn = diff > 0 ? 1.0 : -1.0;
        const double wgt = sgn * std::exp(-image_grad_x(img, i, j)) * cx;
        g_dstar[p + 1] += wgt;
        g_dstar[p] -= wgt;
      }
  }
  if (h > 1) {
    const double cy = 1.0 / (static_cast<double>(w) * (h - 1));
    for (int i = 0; i + 1 < h; ++i)
      for (int j = 0; j < w; ++j) {
        const std::size_t p = static_cast<std::size_t>(i) * w + j;
        const double diff = s.dstar[p + w] - s.dstar[p];
        if (diff == 0.0) continue;
        const double sgn = diff > 0 ? 1.0 : -1.0;
        const double wgt = sgn * std::exp(-image_grad_y(img, i, j)) * cy;
        g_dstar[p + w] += wgt;
        g_dstar[p] -= wgt;
      }
  }
  // d* = u / mean(u): chain through the normalization, then u = 1/D.
  double dot = 0.0;
  for (std::size_t p = 0; p < d.size(); ++p) dot += g_dstar[p] * s.u[p];
  const double n = static_cast<double>(d.size());
  for (std::size_t p = 0; p < d.size(); ++p) {
    const double g_u = g_dstar[p] / s.mean_u - dot / (n * s.mean_u * s.mean_u);
    grad_depth.data[p] += coeff * g_u * (-1.0 / (d.data[p] * d.data[p]));
  }
}

void add_orthogonality_grad(const DepthField& d, const NormalField& n, const Intrinsics& k,
                            double coeff, DepthField* grad_depth, NormalField* grad_normals) {
  // Forward pass counts the included terms first.
  long count = 0;
  for (int i = 1; i < d.height - 1; ++i)
    for (int j = 1; j < d.width - 1; ++j)
      for (const Eigen::Vector3d& v : surface_vectors(d, k, i, j))
        if (v.norm() >= 1e-15) ++count;
  if (count == 0) return;
  const double scale = coeff / count;

  for (int i = 1; i < d.height - 1; ++i) {
    for (int j = 1; j < d.width - 1; ++j) {
      const Eigen::Vector3d normal = n.at(i, j);
      for (int diag = 0; diag < 2; ++diag) {
        const int ia = i - 1, ja = diag == 0 ? j - 1 : j + 1;
        const int ib = i + 1, jb = diag == 0 ? j + 1 : j - 1;
        const Eigen::Vector3d ha = k.ray(ja, ia);
        const Eigen::Vector3d hb = k.ray(jb, ib);
        const Eigen::Vector3d v = d.at(ia, ja) * ha - d.at(ib, jb) * hb;
        const double norm = v.norm();
        if (norm < 1e-15) continue;
        const Eigen::Vector3d vhat = v / norm;
        const double dot = normal.dot(vhat);
        const double sgn = dot >= 0 ? 1.0 : -1.0;
        if (grad_normals) {
          Eigen::Vector3d g = grad_normals->at(i, j);
          g += scale * sgn * vhat;
          grad_normals->set(i, j, g);
        }
        if (grad_depth) {
          const Eigen::Vector3d dv = scale * sgn * (normal - dot * vhat) / norm;
          grad_depth->at(ia, ja) += dv.dot(ha);
          grad_depth->at(ib, jb) -= dv.dot(hb);
        }
      }
    }
  }
}

FramePair make_frame_pair(Image target, Image source, DepthField target_depth,
                          DepthField source_depth, NormalField target_normals,
                          NormalField source_normals, PoseSE3 pose_t_to_s,
                          const Intrinsics& k, int feature_channel) {
  FramePair pair;
  pair.target = std::move(target);
  pair.source = std::move(source);
  pair.target_depth = std::move(target_depth);
  pair.source_depth = std::move(source_depth);
  pair.target_normals = std::move(target_normals);
  pair.source_normals = std::move(source_normals);
  pair.pose_t_to_s = std::move(pose_t_to_s);
  pair.intrinsics = k;
  pair.target_features = feature_extract(pair.target);
  pair.source_features = feature_extract(pair.source);
  pair.feature_channel = feature_channel;
  pair.validate();
  return pair;
}

}  // namespace colde
