#include <cmath>
#include <random>

#include "doctest.h"

#include "colde/instance.hpp"
#include "colde/objectives.hpp"
#include "colde/synthcolon.hpp"

using namespace colde;

namespace {

// Identical target/source frames over a fronto-parallel plane.
FramePair identity_pair(int h, int w, double albedo = 0.5) {
  const Intrinsics k = Intrinsics::centered(w, h, 0.8 * w);
  Image img(h, w, 3, albedo);
  const DepthField d(h, w, 2.0);
  const NormalField n(h, w);
  return make_frame_pair(img, img, d, d, n, n, PoseSE3{}, k);
}

SceneConfig small_scene() {
  SceneConfig cfg;
  cfg.width = 64;
  cfg.height = 48;
  cfg.far_plane = 6.0;
  return cfg;
}

// Camera at the axis looking at the tube wall: smooth depth, no background.
PoseSE3 side_pose() {
  Vector6d xi = Vector6d::Zero();
  xi[1] = M_PI / 2.0;
  return PoseSE3::exp(xi);
}

FramePair pair_from(const RenderedSequence& seq, int t, int s, int channel = 0) {
  const RenderedFrame& ft = seq.frames[t];
  const RenderedFrame& fs = seq.frames[s];
  return make_frame_pair(ft.image, fs.image, ft.gt_depth, fs.gt_depth, ft.gt_normals,
                         fs.gt_normals, seq.relative_pose(t, s), seq.intrinsics, channel);
}

double masked_mean(const Image& map, const Mask& m) {
  double sum = 0.0;
  long n = 0;
  for (int i = 0; i < map.height; ++i)
    for (int j = 0; j < map.width; ++j) {
      if (!m.at(i, j)) continue;
      sum += map.at(i, j);
      ++n;
    }
  REQUIRE(n > 0);
  return sum / n;
}

}  // namespace

TEST_CASE("photometric loss closed forms") {
  const LossWeights w;

  SUBCASE("identical warped and target images give 0") {
    const FramePair pair = identity_pair(12, 16);
    const Image map = photometric_loss(pair, w);
    for (double v : map.data) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("warped 0 against target 1 matches the SSIM-mix constants") {
    FramePair pair = identity_pair(12, 16);
    for (auto& v : pair.target.data) v = 1.0;
    for (auto& v : pair.source.data) v = 0.0;
    const Image map = photometric_loss(pair, w);
    const double ssim_const = w.ssim_c1 / (1.0 + w.ssim_c1);
    const double expected = (1.0 - w.alpha) * 1.0 + 0.5 * w.alpha * (1.0 - ssim_const);
    CHECK(expected == doctest::Approx(0.15 + 0.425 * 0.9999).epsilon(1e-4));
    for (double v : map.data) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("ground-truth inputs on a synthetic pair stay below 0.02") {
    // The light rides with the camera, so the residual is the (baseline-
    // proportional) shading change plus interpolation error.
    SceneConfig cfg = small_scene();
    cfg.camera_path = pullback_path(2, 0.01);
    const RenderedSequence seq = render_sequence(cfg);
    const FramePair pair = pair_from(seq, 0, 1);
    const WarpContext ctx = make_warp_context(pair);
    const Mask m = combined_mask(pair, ctx, w);
    CHECK(masked_mean(photometric_map(pair, ctx, w), m) < 0.02);
  }
}

TEST_CASE("feature loss closed forms") {
  const LossWeights w;

  SUBCASE("identical feature maps under identity pose give 0") {
    const FramePair pair = identity_pair(12, 16);
    const Image map = feature_loss(pair, w);
    for (double v : map.data) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("out-of-range feature channel is rejected") {
    const Intrinsics k = Intrinsics::centered(16, 12, 12.0);
    const Image img(12, 16, 3, 0.5);
    const DepthField d(12, 16, 2.0);
    const NormalField n(12, 16);
    CHECK_THROWS_AS(make_frame_pair(img, img, d, d, n, n, PoseSE3{}, k, 64), Error);
    CHECK_THROWS_AS(make_frame_pair(img, img, d, d, n, n, PoseSE3{}, k, -1), Error);
  }
  SUBCASE("ground-truth inputs on a synthetic pair stay below 0.05") {
    SceneConfig cfg = small_scene();
    cfg.camera_path = pullback_path(2, 0.01);
    const RenderedSequence seq = render_sequence(cfg);
    const FramePair pair = pair_from(seq, 0, 1, 17);
    const WarpContext ctx = make_warp_context(pair);
    const Mask m = combined_mask(pair, ctx, w);
    CHECK(masked_mean(feature_map(pair, ctx, w), m) < 0.05);
  }
}

TEST_CASE("depth consistency ratio") {
  CHECK(depth_ratio(3.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(depth_ratio(2.0, 2.0) == 0.0);
  // Symmetry and joint positive scale invariance.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = u(rng), b = u(rng), s = u(rng);
    CHECK(depth_ratio(a, b) == doctest::Approx(depth_ratio(b, a)).epsilon(1e-15));
    CHECK(depth_ratio(s * a, s * b) == doctest::Approx(depth_ratio(a, b)).epsilon(1e-12));
    CHECK(depth_ratio(a, b) >= 0.0);
    CHECK(depth_ratio(a, b) < 1.0);
  }
}

TEST_CASE("depth consistency on an exactly consistent planar pair is below 1e-3") {
  const int h = 24, wdt = 32;
  const Intrinsics k = Intrinsics::centered(wdt, h, 30.0);
  // Plane z = 2 seen from two cameras offset along x: both views see constant
  // depth 2, and the projection is exact.
  const double z0 = 2.0;
  const DepthField d(h, wdt, z0);
  Image img(h, wdt, 3);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  for (auto& v : img.data) v = u(rng);
  const NormalField n(h, wdt);
  PoseSE3 pose;
  pose.translation = Eigen::Vector3d(0.05, 0.0, 0.0);
  const FramePair pair = make_frame_pair(img, img, d, d, n, n, pose, k);
  const WarpContext ctx = make_warp_context(pair);
  CHECK(masked_mean(depth_consistency_map(pair, ctx), ctx.valid) < 1e-3);
}

TEST_CASE("normal consistency closed forms") {
  SUBCASE("identity everything gives 0") {
    const FramePair pair = identity_pair(10, 14);
    const Image map = normal_consistency_loss(pair, LossWeights{});
    for (double v : map.data) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("90-degree rotation with matching normals gives 0") {
    const int h = 10, wdt = 14;
    const Intrinsics k = Intrinsics::centered(wdt, h, 100.0);
    Image img(h, wdt, 3, 0.5);
    const DepthField d(h, wdt, 2.0);
    NormalField nt(h, wdt), ns(h, wdt);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wdt; ++j) {
        nt.set(i, j, Eigen::Vector3d(1, 0, 0));
        ns.set(i, j, Eigen::Vector3d(0, 1, 0));
      }
    Vector6d xi = Vector6d::Zero();
    xi[2] = M_PI / 2.0;
    const FramePair pair = make_frame_pair(img, img, d, d, nt, ns, PoseSE3::exp(xi), k);
    const WarpContext ctx = make_warp_context(pair);
    const Image map = normal_consistency_map(pair, ctx);
    long valid = 0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wdt; ++j) {
        if (!ctx.valid.at(i, j)) continue;
        ++valid;
        CHECK(std::abs(map.at(i, j)) < 1e-12);
      }
    CHECK(valid > 0);
  }
  SUBCASE("antipodal normals give L1 = 2") {
    const int h = 10, wdt = 14;
    const Intrinsics k = Intrinsics::centered(wdt, h, 12.0);
    Image img(h, wdt, 3, 0.5);
    const DepthField d(h, wdt, 2.0);
    NormalField nt(h, wdt), ns(h, wdt);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wdt; ++j) {
        nt.set(i, j, Eigen::Vector3d(1, 0, 0));
        ns.set(i, j, Eigen::Vector3d(-1, 0, 0));
      }
    const FramePair pair = make_frame_pair(img, img, d, d, nt, ns, PoseSE3{}, k);
    const Image map = normal_consistency_loss(pair, LossWeights{});
    for (double v : map.data) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("2-norm of the difference is rotation invariant") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      Vector6d xi = Vector6d::Zero();
      for (int c = 0; c < 3; ++c) xi[c] = 2.0 * u(rng);
      const Eigen::Matrix3d q = PoseSE3::exp(xi).rotation;
      const Eigen::Vector3d a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
      CHECK((q * a - q * b).norm() == doctest::Approx((a - b).norm()).epsilon(1e-12));
    }
  }
}

TEST_CASE("surface vectors") {
  const Intrinsics k = Intrinsics::centered(16, 12, 20.0);

  SUBCASE("fronto-parallel plane gives zero z-components") {
    const DepthField d(12, 16, 2.0);
    for (int i = 1; i < 11; ++i)
      for (int j = 1; j < 15; ++j) {
        const auto vs = surface_vectors(d, k, i, j);
        REQUIRE(vs.size() == 2);
        for (const auto& v : vs) CHECK(std::abs(v.z()) < 1e-15);
      }
  }
  SUBCASE("ramp depth matches an explicit backprojection oracle") {
    DepthField d(12, 16);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 16; ++j) d.at(i, j) = 1.0 + 0.1 * i;
    for (int i = 1; i < 11; ++i)
      for (int j = 1; j < 15; ++j) {
        const auto vs = surface_vectors(d, k, i, j);
        const auto bp = [&](int pi, int pj) {
          return Eigen::Vector3d(d.at(pi, pj) * (pj - k.cx) / k.fx,
                                 d.at(pi, pj) * (pi - k.cy) / k.fy, d.at(pi, pj));
        };
        const Eigen::Vector3d v1 = bp(i - 1, j - 1) - bp(i + 1, j + 1);
        const Eigen::Vector3d v2 = bp(i - 1, j + 1) - bp(i + 1, j - 1);
        CHECK((vs[0] - v1).norm() < 1e-12);
        CHECK((vs[1] - v2).norm() < 1e-12);
        CHECK(vs[0].z() == doctest::Approx(-0.2).epsilon(1e-12));
      }
  }
  SUBCASE("2x2 field has no interior pixel") {
    const DepthField d(2, 2, 1.0);
    CHECK(surface_vectors(d, k, 0, 0).empty());
    CHECK(surface_vectors(d, k, 1, 1).empty());
  }
}

TEST_CASE("orthogonality loss closed forms") {
  const Intrinsics k = Intrinsics::centered(16, 12, 20.0);
  const DepthField d(12, 16, 2.0);

  SUBCASE("plane with axis normals is exactly 0") {
    const NormalField n(12, 16);  // all (0,0,-1)
    CHECK(orthogonality_loss(d, n, k) == 0.0);
  }
  SUBCASE("45-degree normal on a fronto-parallel plane") {
    NormalField n(12, 16);
    const Eigen::Vector3d tilted(std::sqrt(0.5), 0.0, -std::sqrt(0.5));
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 16; ++j) n.set(i, j, tilted);
    // Against an x-aligned unit surface vector the dot product is sqrt(2)/2...
    CHECK(std::abs(tilted.dot(Eigen::Vector3d::UnitX())) ==
          doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    // ...but the two diagonal tangent vectors are (+-1,-1,0)/sqrt(2) on this
    // plane (fx = fy), so each |N.V| is exactly 1/2.
    CHECK(orthogonality_loss(d, n, k) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("synthetic cylinder with analytic normals stays below 0.02") {
    SceneConfig cfg = small_scene();
    cfg.fold_amplitude = 0.0;
    const RenderedFrame f = render_frame(cfg, side_pose());
    REQUIRE(f.valid.count() == 64 * 48);
    CHECK(orthogonality_loss(f.gt_depth, f.gt_normals, cfg.make_intrinsics()) < 0.02);
  }
}

TEST_CASE("smoothness loss closed forms") {
  SUBCASE("constant depth gives 0") {
    CHECK(smoothness_loss(DepthField(10, 12, 2.0), Image(10, 12, 3, 0.5)) == 0.0);
  }
  SUBCASE("ramp on a constant image matches the direct formula") {
    const int h = 8, w = 10;
    DepthField d(h, w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) d.at(i, j) = 1.0 + 0.2 * j;
    const Image img(h, w, 1, 0.3);

    // Direct evaluation of mean |forward difference of d*| with unit weights.
    std::vector<double> u(d.size());
    double mean_u = 0.0;
    for (std::size_t p = 0; p < d.size(); ++p) {
      u[p] = 1.0 / d.data[p];
      mean_u += u[p];
    }
    mean_u /= d.size();
    double sx = 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j + 1 < w; ++j)
        sx += std::abs(u[i * w + j + 1] / mean_u - u[i * w + j] / mean_u);
    const double expected = sx / (h * (w - 1));  // y-differences vanish on the ramp

    const double got = smoothness_loss(d, img);
    CHECK(got > 0.0);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("an aligned image edge lowers the penalty") {
    const int h = 8, w = 10;
    DepthField d(h, w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) d.at(i, j) = 1.0 + 0.2 * j;
    Image flat(h, w, 1, 0.3), edgy(h, w, 1, 0.3);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) edgy.at(i, j) = j % 2 ? 0.9 : 0.1;
    CHECK(smoothness_loss(d, edgy) < smoothness_loss(d, flat));
  }
}

TEST_CASE("auto mask behavior") {
  const LossWeights w;
  SUBCASE("static pair keeps nothing") {
    const FramePair pair = identity_pair(12, 16);
    CHECK(auto_mask(pair, w).count() == 0);
  }
  SUBCASE("moving camera on a textured ground-truth scene keeps > 90%") {
    // A clear baseline and strong texture make the unwarped residual large.
    SceneConfig cfg = small_scene();
    cfg.texture_contrast = 0.6;
    cfg.camera_path = pullback_path(2, 0.2);
    const RenderedSequence seq = render_sequence(cfg);
    const FramePair pair = pair_from(seq, 0, 1);
    const WarpContext ctx = make_warp_context(pair);
    const Mask m = mask_and(auto_mask(pair, ctx, w), ctx.valid);
    CHECK(m.count() > 0.9 * ctx.valid.count());
  }
}

TEST_CASE("specular mask") {
  const LossWeights w;
  SUBCASE("all-dark image keeps everything") {
    CHECK(specular_mask(Image(10, 12, 3, 0.2), w).count() == 10 * 12);
  }
  SUBCASE("single saturated pixel cuts a 5x5 block") {
    Image img(11, 11, 3, 0.2);
    img.at(5, 5, 1) = 0.99;
    const Mask m = specular_mask(img, w);
    CHECK(m.count() == 11 * 11 - 25);
    for (int i = 3; i <= 7; ++i)
      for (int j = 3; j <= 7; ++j) CHECK(!m.at(i, j));
  }
  SUBCASE("covers at least 95% of strong Phong highlights") {
    SceneConfig cfg = small_scene();
    cfg.specular_on = true;
    cfg.specular_strength = 1.0;
    cfg.light_falloff = false;
    cfg.light_gain = 1.2;
    const PoseSE3 pose = side_pose();
    const RenderedFrame f = render_frame(cfg, pose);
    const Intrinsics k = cfg.make_intrinsics();
    const Mask m = specular_mask(f.image, w);

    long strong = 0, covered = 0;
    for (int i = 0; i < cfg.height; ++i)
      for (int j = 0; j < cfg.width; ++j) {
        const Eigen::Vector3d dir_cam = k.ray(j, i).normalized();
        const double t_hit = f.gt_depth.at(i, j) / dir_cam.z();
        const Eigen::Vector3d dir = pose.rotation * dir_cam;
        const Eigen::Vector3d hit = pose.translation + t_hit * dir;
        const Eigen::Vector3d n_world = pose.rotation * f.gt_normals.at(i, j);
        if (cfg.specular_term(hit, n_world, -dir) <= 0.5) continue;
        ++strong;
        covered += !m.at(i, j);
      }
    REQUIRE(strong > 20);
    CHECK(covered >= 0.95 * strong);
  }
}

TEST_CASE("total loss composition") {
  SUBCASE("all lambdas zero reduces to masked photometric mean") {
    const FramePair pair = make_random_pair(31, 16, 20);
    LossWeights w;
    w.lambda1 = w.lambda2 = w.lambda3 = w.lambda4 = w.lambda5 = 0.0;
    const LossBreakdown b = total_loss(pair, w);
    CHECK(b.total == doctest::Approx(b.photo).epsilon(1e-15));
    const WarpContext ctx = make_warp_context(pair);
    const Mask m = combined_mask(pair, ctx, w);
    CHECK(b.photo == doctest::Approx(masked_mean(photometric_map(pair, ctx, w), m)).epsilon(1e-13));
  }
  SUBCASE("identical frames under identity pose leave only smoothness") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.2, 0.8), dd(1.0, 3.0);
    const Intrinsics k = Intrinsics::centered(20, 16, 16.0);
    Image img(16, 20, 3);
    DepthField d(16, 20, 2.0);  // constant depth keeps orth at exactly 0
    for (auto& v : img.data) v = u(rng);
    const NormalField n(16, 20);
    const FramePair pair = make_frame_pair(img, img, d, d, n, n, PoseSE3{}, k);
    const LossWeights w;
    const LossBreakdown b = total_loss(pair, w);
    CHECK(b.empty_mask);  // the warp cannot beat the identity residual
    CHECK(b.orth == 0.0);
    CHECK(b.total == doctest::Approx(w.lambda5 * b.smooth).epsilon(1e-13));
  }
  SUBCASE("breakdown recombines to the total within 1e-12") {
    const LossWeights w;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      const FramePair pair = make_random_pair(seed, 14, 18);
      const LossBreakdown b = total_loss(pair, w);
      const double recombined = b.photo + w.lambda1 * b.feat + w.lambda2 * b.depth +
                                w.lambda3 * b.norm + w.lambda4 * b.orth + w.lambda5 * b.smooth;
      CHECK(std::abs(b.total - recombined) < 1e-12);
    }
  }
  SUBCASE("raising any lambda with positive sub-losses raises the total") {
    const FramePair pair = make_random_pair(5, 14, 18);
    const LossWeights w;
    const LossBreakdown b = total_loss(pair, w);
    REQUIRE(b.feat > 0.0);
    REQUIRE(b.depth > 0.0);
    REQUIRE(b.norm > 0.0);
    REQUIRE(b.orth > 0.0);
    REQUIRE(b.smooth > 0.0);
    for (int which = 0; which < 5; ++which) {
      LossWeights bumped = w;
      (which == 0   ? bumped.lambda1
       : which == 1 ? bumped.lambda2
       : which == 2 ? bumped.lambda3
       : which == 3 ? bumped.lambda4
                    : bumped.lambda5) += 0.1;
      CHECK(total_loss(pair, bumped).total > b.total);
    }
  }
  SUBCASE("loss maps are non-negative and finite on the mask") {
    const FramePair pair = make_random_pair(9, 14, 18);
    const LossWeights w;
    const WarpContext ctx = make_warp_context(pair);
    const Mask m = combined_mask(pair, ctx, w);
    for (const Image& map : {photometric_map(pair, ctx, w), feature_map(pair, ctx, w),
                             depth_consistency_map(pair, ctx), normal_consistency_map(pair, ctx)})
      for (int i = 0; i < ctx.height; ++i)
        for (int j = 0; j < ctx.width; ++j) {
          if (!m.at(i, j)) continue;
          CHECK(map.at(i, j) >= 0.0);
          CHECK(std::isfinite(map.at(i, j)));
        }
  }
  SUBCASE("ground-truth inputs on a 10-frame sequence keep every pair below 0.05") {
    SceneConfig cfg = small_scene();
    cfg.camera_path = pullback_path(10, 0.05);
    const RenderedSequence seq = render_sequence(cfg);
    const LossWeights w;
    for (int t = 0; t < 10; ++t)
      for (const int s : {t - 1, t + 1}) {
        if (s < 0 || s >= 10) continue;
        CHECK(total_loss(pair_from(seq, t, s), w).total < 0.05);
      }
  }
}

TEST_CASE("weights validation") {
  LossWeights w;
  w.alpha = 1.2;
  CHECK_THROWS_AS(w.validate(), Error);
  w.alpha = 0.85;
  w.lambda2 = -0.1;
  CHECK_THROWS_AS(w.validate(), Error);
}
