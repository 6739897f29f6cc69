#include "colde/gradient.hpp"

#include <cmath>
#include <vector>

#include "colde/ssim.hpp"

namespace colde {

namespace {

inline double sgn(double x) { return x >= 0.0 ? 1.0 : -1.0; }

std::vector<double> extract_plane(const Image& img, int c) {
  std::vector<double> out(static_cast<std::size_t>(img.height) * img.width);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j)
      out[static_cast<std::size_t>(i) * img.width + j] = img.at(i, j, c);
  return out;
}

void check_finite(const std::vector<double>& v, const char* term) {
  for (double x : v)
    if (!std::isfinite(x)) fail("non-finite-gradient", std::string("term: ") + term);
}

}  // namespace

GradientBundle grad_total_loss(const FramePair& pair, const LossWeights& w, Wrt wrt,
                               const Mask* frozen_mask) {
  const Intrinsics& k = pair.intrinsics;
  const int h = k.height, wd = k.width;
  const int channels = pair.target.channels;

  const WarpContext ctx = make_warp_context(pair);
  const Mask m = frozen_mask ? *frozen_mask : combined_mask(pair, ctx, w);

  GradientBundle out;
  const bool want_depth = wrt == Wrt::depth || wrt == Wrt::all;
  const bool want_normals = wrt == Wrt::normals || wrt == Wrt::all;
  const bool want_pose = wrt == Wrt::pose || wrt == Wrt::all;
  out.d_depth = DepthField(h, wd, 0.0);
  out.d_source_depth = DepthField(h, wd, 0.0);
  out.d_normals = NormalField(h, wd);
  out.d_source_normals = NormalField(h, wd);
  for (auto& v : out.d_normals.data) v = 0.0;
  for (auto& v : out.d_source_normals.data) v = 0.0;
  out.loss_value = total_loss_with(pair, w, ctx, m).total;

  const long n_masked = m.count();
  const double g = n_masked > 0 ? 1.0 / n_masked : 0.0;
  const std::size_t npx = static_cast<std::size_t>(h) * wd;

  // Adjoints of the warped quantities.
  std::vector<double> adj_img(npx * channels, 0.0);
  std::vector<double> adj_feat(npx, 0.0);
  std::vector<double> adj_sdepth(npx, 0.0);
  std::vector<double> adj_snorm(npx * 3, 0.0);
  std::vector<double> adj_dproj(npx, 0.0);

  std::vector<double> upstream(npx, 0.0);
  for (std::size_t p = 0; p < npx; ++p)
    if (m.data[p]) upstream[p] = 1.0;

  // L_photo: (1-alpha) L1 + alpha/2 (1 - mean_c SSIM_c).
  if (g > 0.0) {
    std::vector<double> plane_adj(npx);
    std::vector<double> ssim_up(npx);
    for (int c = 0; c < channels; ++c) {
      const std::vector<double> a = extract_plane(ctx.warped_image, c);
      const std::vector<double> b = extract_plane(pair.target, c);
      std::fill(plane_adj.begin(), plane_adj.end(), 0.0);
      for (std::size_t p = 0; p < npx; ++p) {
        if (!m.data[p]) continue;
        plane_adj[p] += g * (1.0 - w.alpha) / channels * sgn(a[p] - b[p]);
      }
      for (std::size_t p = 0; p < npx; ++p)
        ssim_up[p] = upstream[p] * (-g * 0.5 * w.alpha / channels);
      ssim_plane_backward(a.data(), b.data(), h, wd, w.ssim_c1, w.ssim_c2, ssim_up.data(),
                          plane_adj.data());
      for (std::size_t p = 0; p < npx; ++p) adj_img[p * channels + c] += plane_adj[p];
    }
    check_finite(adj_img, "photo");
  }

  // L_feat: lambda1 * alpha/2 (1 - SSIM) on the selected channel.
  if (g > 0.0 && w.lambda1 > 0.0) {
    const std::vector<double> a = extract_plane(ctx.warped_feature, 0);
    const std::vector<double> b = extract_plane(ctx.target_feature_up, 0);
    std::vector<double> ssim_up(npx);
    for (std::size_t p = 0; p < npx; ++p)
      ssim_up[p] = upstream[p] * (-g * w.lambda1 * 0.5 * w.alpha);
    ssim_plane_backward(a.data(), b.data(), h, wd, w.ssim_c1, w.ssim_c2, ssim_up.data(),
                        adj_feat.data());
    check_finite(adj_feat, "feat");
  }

  // L_depth: |s - d| / (s + d).
  if (g > 0.0 && w.lambda2 > 0.0) {
    for (std::size_t p = 0; p < npx; ++p) {
      if (!m.data[p] || !ctx.valid.data[p]) continue;
      const double s = ctx.warped_source_depth.data[p];
      const double d = ctx.dproj[p];
      const double den = s + d;
      const double diff = s - d;
      const double sg = sgn(diff);
      adj_sdepth[p] += g * w.lambda2 * (sg * den - std::abs(diff)) / (den * den);
      adj_dproj[p] += g * w.lambda2 * (-sg * den - std::abs(diff)) / (den * den);
    }
    check_finite(adj_sdepth, "depth");
  }

  // L_norm: sum_k |n_s_k - (R n_t)_k|.
  if (g > 0.0 && w.lambda3 > 0.0) {
    const Eigen::Matrix3d& r = pair.pose_t_to_s.rotation;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j) {
        const std::size_t p = static_cast<std::size_t>(i) * wd + j;
        if (!m.data[p] || !ctx.valid.data[p]) continue;
        const Eigen::Vector3d rotated = r * pair.target_normals.at(i, j);
        Eigen::Vector3d sv;
        for (int c = 0; c < 3; ++c) {
          sv[c] = sgn(ctx.warped_source_normals.at(i, j, c) - rotated[c]);
          adj_snorm[p * 3 + c] += g * w.lambda3 * sv[c];
        }
        if (want_normals) {
          Eigen::Vector3d gn = out.d_normals.at(i, j);
          gn += -g * w.lambda3 * (r.transpose() * sv);
          out.d_normals.set(i, j, gn);
        }
        if (want_pose) {
          // Direct dependence of R n_t on a left perturbation of the pose:
          // d(R n)/d omega_k = e_k x (R n), so dL/d omega = (R n) x dL/d(R n).
          const Eigen::Vector3d dl_drot = -g * w.lambda3 * sv;
          out.d_pose.head<3>() += rotated.cross(dl_drot);
        }
      }
    check_finite(adj_snorm, "norm");
  }

  // Chain every valid pixel's adjoints through sampling and projection.
  const int fh = pair.source_features.height, fw = pair.source_features.width;
  const int fc = pair.feature_channel;
  const Eigen::Matrix3d& rot = pair.pose_t_to_s.rotation;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < wd; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * wd + j;
      if (!ctx.valid.data[p]) continue;
      const double qx = ctx.qx[p], qy = ctx.qy[p];
      const BilinearTap t = make_tap(h, wd, qx, qy);

      double adj_qx = 0.0, adj_qy = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double u = adj_img[p * channels + c];
        if (u == 0.0) continue;
        double dvdx, dvdy;
        tap_coord_grad(t, pair.source, c, &dvdx, &dvdy);
        adj_qx += u * dvdx;
        adj_qy += u * dvdy;
      }
      if (adj_feat[p] != 0.0) {
        const double fxc = std::clamp(qx * 0.5, 0.0, static_cast<double>(fw - 1));
        const double fyc = std::clamp(qy * 0.5, 0.0, static_cast<double>(fh - 1));
        const BilinearTap ft = make_tap(fh, fw, fxc, fyc);
        double dvdx, dvdy;
        tap_coord_grad(ft, pair.source_features, fc, &dvdx, &dvdy);
        const double mx = (qx * 0.5 > 0.0 && qx * 0.5 < fw - 1) ? 0.5 : 0.0;
        const double my = (qy * 0.5 > 0.0 && qy * 0.5 < fh - 1) ? 0.5 : 0.0;
        adj_qx += adj_feat[p] * dvdx * mx;
        adj_qy += adj_feat[p] * dvdy * my;
      }
      {
        const double v00 = pair.source_depth.at(t.i0, t.j0);
        const double v01 = pair.source_depth.at(t.i0, t.j1);
        const double v10 = pair.source_depth.at(t.i1, t.j0);
        const double v11 = pair.source_depth.at(t.i1, t.j1);
        const double u = adj_sdepth[p];
        if (u != 0.0) {
          adj_qx += u * ((1.0 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
          adj_qy += u * ((1.0 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
          if (want_depth) {
            out.d_source_depth.at(t.i0, t.j0) += u * (1.0 - t.wy) * (1.0 - t.wx);
            out.d_source_depth.at(t.i0, t.j1) += u * (1.0 - t.wy) * t.wx;
            out.d_source_depth.at(t.i1, t.j0) += u * t.wy * (1.0 - t.wx);
            out.d_source_depth.at(t.i1, t.j1) += u * t.wy * t.wx;
          }
        }
      }
      for (int c = 0; c < 3; ++c) {
        const double u = adj_snorm[p * 3 + c];
        if (u == 0.0) continue;
        const auto nval = [&](int ii, int jj) {
          return pair.source_normals.data[(static_cast<std::size_t>(ii) * wd + jj) * 3 + c];
        };
        const double v00 = nval(t.i0, t.j0), v01 = nval(t.i0, t.j1);
        const double v10 = nval(t.i1, t.j0), v11 = nval(t.i1, t.j1);
        adj_qx += u * ((1.0 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
        adj_qy += u * ((1.0 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
        if (want_normals) {
          auto& gdata = out.d_source_normals.data;
          gdata[(static_cast<std::size_t>(t.i0) * wd + t.j0) * 3 + c] += u * (1.0 - t.wy) * (1.0 - t.wx);
          gdata[(static_cast<std::size_t>(t.i0) * wd + t.j1) * 3 + c] += u * (1.0 - t.wy) * t.wx;
          gdata[(static_cast<std::size_t>(t.i1) * wd + t.j0) * 3 + c] += u * t.wy * (1.0 - t.wx);
          gdata[(static_cast<std::size_t>(t.i1) * wd + t.j1) * 3 + c] += u * t.wy * t.wx;
        }
      }

      if (adj_qx == 0.0 && adj_qy == 0.0 && adj_dproj[p] == 0.0) continue;

      // q = (fx Yx/Yz + cx, fy Yy/Yz + cy), dproj = Yz.
      const Eigen::Vector3d& y = ctx.cam_point[p];
      const double iz = 1.0 / y.z();
      Eigen::Vector3d adj_y;
      adj_y.x() = adj_qx * k.fx * iz;
      adj_y.y() = adj_qy * k.fy * iz;
      adj_y.z() = -adj_qx * k.fx * y.x() * iz * iz - adj_qy * k.fy * y.y() * iz * iz +
                  adj_dproj[p];

      if (want_depth) out.d_depth.at(i, j) += adj_y.dot(rot * k.ray(j, i));
      if (want_pose) {
        out.d_pose.head<3>() += y.cross(adj_y);
        out.d_pose.tail<3>() += adj_y;
      }
    }
  }

  if (w.lambda4 > 0.0 && (want_depth || want_normals)) {
    add_orthogonality_grad(pair.target_depth, pair.target_normals, k, w.lambda4,
                           want_depth ? &out.d_depth : nullptr,
                           want_normals ? &out.d_normals : nullptr);
    check_finite(out.d_depth.data, "orth");
  }
  if (w.lambda5 > 0.0 && want_depth) {
    add_smoothness_grad(pair.target_depth, pair.target, 0.5 * w.lambda5, out.d_depth);
    add_smoothness_grad(pair.source_depth, pair.source, 0.5 * w.lambda5, out.d_source_depth);
    check_finite(out.d_depth.data, "smooth");
    check_finite(out.d_source_depth.data, "smooth");
  }
  check_finite(out.d_normals.data, "normals");
  for (int c = 0; c < 6; ++c)
    if (!std::isfinite(out.d_pose[c])) fail("non-finite-gradient", "term: pose");
  return out;
}

GradientBundle fd_gradient_of(const FramePair& pair,
                              const std::function<double(const FramePair&)>& f, Wrt wrt,
                              double step) {
  require(step > 0.0, "invalid-input", "fd step must be positive");
  const int h = pair.intrinsics.height, wd = pair.intrinsics.width;
  GradientBundle out;
  out.d_depth = DepthField(h, wd, 0.0);
  out.d_source_depth = DepthField(h, wd, 0.0);
  out.d_normals = NormalField(h, wd);
  out.d_source_normals = NormalField(h, wd);
  for (auto& v : out.d_normals.data) v = 0.0;
  for (auto& v : out.d_source_normals.data) v = 0.0;
  out.loss_value = f(pair);

  FramePair work = pair;
  const auto central = [&](double& x, double scale_ref) {
    const double h_eff = step * std::max(1.0, std::abs(scale_ref));
    const double saved = x;
    x = saved + h_eff;
    const double fp = f(work);
    x = saved - h_eff;
    const double fm = f(work);
    x = saved;
    return (fp - fm) / (2.0 * h_eff);
  };

  if (wrt == Wrt::depth || wrt == Wrt::all) {
    for (std::size_t p = 0; p < work.target_depth.data.size(); ++p)
      out.d_depth.data[p] = central(work.target_depth.data[p], work.target_depth.data[p]);
    for (std::size_t p = 0; p < work.source_depth.data.size(); ++p)
      out.d_source_depth.data[p] = central(work.source_depth.data[p], work.source_depth.data[p]);
  }
  if (wrt == Wrt::normals || wrt == Wrt::all) {
    for (std::size_t p = 0; p < work.target_normals.data.size(); ++p)
      out.d_normals.data[p] = central(work.target_normals.data[p], 1.0);
    for (std::size_t p = 0; p < work.source_normals.data.size(); ++p)
      out.d_source_normals.data[p] = central(work.source_normals.data[p], 1.0);
  }
  if (wrt == Wrt::pose || wrt == Wrt::all) {
    const PoseSE3 base = pair.pose_t_to_s;
    for (int c = 0; c < 6; ++c) {
      Vector6d delta = Vector6d::Zero();
      delta[c] = step;
      work.pose_t_to_s = PoseSE3::exp(delta) * base;
      const double fp = f(work);
      delta[c] = -step;
      work.pose_t_to_s = PoseSE3::exp(delta) * base;
      const double fm = f(work);
      out.d_pose[c] = (fp - fm) / (2.0 * step);
    }
    work.pose_t_to_s = base;
  }
  return out;
}

GradientBundle fd_gradient(const FramePair& pair, const LossWeights& w, Wrt wrt, double step,
                           const Mask* frozen_mask) {
  const Mask m = frozen_mask ? *frozen_mask : combined_mask(pair, w);
  return fd_gradient_of(
      pair, [&](const FramePair& p) { return total_loss_masked(p, w, m).total; }, wrt, step);
}

double GradCheckReport::worst() const {
  return std::max({depth, source_depth, normals, source_normals, pose});
}

namespace {

double max_rel_error(const std::vector<double>& a, const std::vector<double>& f) {
  double worst = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    const double denom = std::max({std::abs(a[p]), std::abs(f[p]), 1e-6});
    worst = std::max(worst, std::abs(a[p] - f[p]) / denom);
  }
  return worst;
}

}  // namespace

GradCheckReport check_gradients(const FramePair& pair, const LossWeights& w, double step) {
  const Mask m = combined_mask(pair, w);
  const GradientBundle an = grad_total_loss(pair, w, Wrt::all, &m);
  const GradientBundle fd = fd_gradient(pair, w, Wrt::all, step, &m);

  GradCheckReport r;
  r.depth = max_rel_error(an.d_depth.data, fd.d_depth.data);
  r.source_depth = max_rel_error(an.d_source_depth.data, fd.d_source_depth.data);
  r.normals = max_rel_error(an.d_normals.data, fd.d_normals.data);
  r.source_normals = max_rel_error(an.d_source_normals.data, fd.d_source_normals.data);
  const std::vector<double> ap(an.d_pose.data(), an.d_pose.data() + 6);
  const std::vector<double> fp(fd.d_pose.data(), fd.d_pose.data() + 6);
  r.pose = max_rel_error(ap, fp);
  return r;
}

bool near_cell_boundary(const FramePair& pair, const LossWeights& w, double tol) {
  const WarpContext ctx = make_warp_context(pair);
  const Mask m = combined_mask(pair, ctx, w);
  const auto near_lattice = [tol](double x) { return std::abs(x - std::round(x)) < tol; };
  const double fw_max = (pair.target_features.width > 0)
                            ? static_cast<double>(pair.target_features.width - 1)
                            : 0.0;
  const double fh_max = (pair.target_features.height > 0)
                            ? static_cast<double>(pair.target_features.height - 1)
                            : 0.0;
  for (int i = 0; i < ctx.height; ++i) {
    for (int j = 0; j < ctx.width; ++j) {
      if (!m.at(i, j)) continue;
      const std::size_t p = static_cast<std::size_t>(i) * ctx.width + j;
      const double qx = ctx.qx[p];
      const double qy = ctx.qy[p];
      if (near_lattice(qx) || near_lattice(qy)) return true;
      if (near_lattice(0.5 * qx) || near_lattice(0.5 * qy)) return true;
      if (std::abs(0.5 * qx - fw_max) < tol || std::abs(0.5 * qy - fh_max) < tol) return true;
    }
  }
  return false;
}

}  // namespace colde
