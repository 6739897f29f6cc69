#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "colde/fusion.hpp"
#include "colde/gradient.hpp"
#include "colde/instance.hpp"
#include "colde/io.hpp"
#include "colde/metrics.hpp"
#include "colde/refine.hpp"
#include "colde/synthcolon.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace colde;

namespace {

std::string frame_stem(int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03d", idx);
  return buf;
}

json scene_to_json(const SceneConfig& cfg) {
  json j;
  j["base_radius"] = cfg.base_radius;
  j["fold_amplitude"] = cfg.fold_amplitude;
  j["fold_period"] = cfg.fold_period;
  j["texture"] = cfg.texture == SceneConfig::Texture::none ? "none" : "sinusoidal_vessel";
  j["texture_contrast"] = cfg.texture_contrast;
  j["specular_on"] = cfg.specular_on;
  j["specular_exponent"] = cfg.specular_exponent;
  j["specular_strength"] = cfg.specular_strength;
  j["light_falloff"] = cfg.light_falloff;
  j["light_gain"] = cfg.light_gain;
  j["far_plane"] = cfg.far_plane;
  j["width"] = cfg.width;
  j["height"] = cfg.height;
  j["focal_scale"] = cfg.focal_scale;
  j["seed"] = cfg.seed;
  return j;
}

// Writes a rendered sequence as a manifest directory.
void write_sequence(const std::string& out, const SceneConfig& cfg, const RenderedSequence& seq,
                    bool png) {
  fs::create_directories(out);
  SequenceManifest m;
  m.intrinsics = seq.intrinsics;
  m.far_plane = cfg.far_plane;
  m.scene_json = scene_to_json(cfg).dump();
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const RenderedFrame& fr = seq.frames[f];
    const std::string stem = frame_stem(static_cast<int>(f));
    FrameEntry e;
    e.image = stem + ".image.bin";
    e.depth = stem + ".depth.bin";
    e.normals = stem + ".normals.bin";
    e.pose_world = fr.pose_world;
    write_float_image((fs::path(out) / e.image).string(), fr.image);
    write_depth((fs::path(out) / e.depth).string(), fr.gt_depth);
    write_normals((fs::path(out) / e.normals).string(), fr.gt_normals);
    if (png) {
      e.image_png = stem + ".png";
      write_png((fs::path(out) / e.image_png).string(), fr.image);
    }
    m.frames.push_back(std::move(e));
  }
  save_manifest(out, m);
}

struct LoadedSequence {
  SequenceManifest manifest;
  std::vector<LoadedFrame> frames;
};

LoadedSequence load_sequence(const std::string& dir) {
  LoadedSequence seq;
  seq.manifest = load_manifest(dir);
  for (const FrameEntry& e : seq.manifest.frames) seq.frames.push_back(load_frame(dir, e));
  return seq;
}

Mask depth_valid_mask(const DepthField& d, double far_plane) {
  Mask m(d.height, d.width);
  for (std::size_t p = 0; p < d.size(); ++p)
    m.data[p] = (d.data[p] > 0.0 && d.data[p] < far_plane) ? 1 : 0;
  return m;
}

json breakdown_to_json(const LossBreakdown& b) {
  return json{{"photo", b.photo},   {"feat", b.feat},     {"depth", b.depth},
              {"norm", b.norm},     {"orth", b.orth},     {"smooth", b.smooth},
              {"total", b.total},   {"masked_pixel_count", b.masked_pixel_count},
              {"empty_mask", b.empty_mask}};
}

json metrics_to_json(const DepthMetrics& m) {
  return json{{"abs_rel", m.abs_rel},   {"sq_rel", m.sq_rel}, {"rmse", m.rmse},
              {"rmse_log", m.rmse_log}, {"delta1", m.delta1}, {"delta2", m.delta2},
              {"delta3", m.delta3},     {"scale", m.scale_applied}};
}

LossWeights weights_from_flag(const std::string& path) {
  return path.empty() ? LossWeights{} : load_weights(path);
}

FramePair pair_from_sequence(const LoadedSequence& seq, int target, int source, int channel) {
  require(target >= 0 && source >= 0 && target < static_cast<int>(seq.frames.size()) &&
              source < static_cast<int>(seq.frames.size()) && target != source,
          "invalid-input", "target/source frame indices out of range");
  const LoadedFrame& t = seq.frames[target];
  const LoadedFrame& s = seq.frames[source];
  const PoseSE3 pose = s.pose_world.inverse() * t.pose_world;
  return make_frame_pair(t.image, s.image, t.depth, s.depth, t.normals, s.normals, pose,
                         seq.manifest.intrinsics, channel);
}

// --- subcommands ---

int run_synth(const std::string& out, int frames, double z_step, SceneConfig cfg, bool no_png) {
  cfg.camera_path = pullback_path(frames, z_step);
  const RenderedSequence seq = render_sequence(cfg);
  write_sequence(out, cfg, seq, !no_png);
  std::cout << "wrote " << frames << " frames to " << out << "\n";
  return 0;
}

int run_perturb(const std::string& in, const std::string& out, double scale, double noise,
                std::uint64_t seed) {
  const LoadedSequence seq = load_sequence(in);
  fs::create_directories(out);
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const FrameEntry& e = seq.manifest.frames[f];
    const DepthField noisy =
        perturb_depth(seq.frames[f].depth, scale, noise, seed * 1000003ULL + f);
    write_depth((fs::path(out) / e.depth).string(), noisy);
    for (const std::string& name : {e.image, e.normals, e.image_png}) {
      if (name.empty()) continue;
      fs::copy_file(fs::path(in) / name, fs::path(out) / name,
                    fs::copy_options::overwrite_existing);
    }
  }
  save_manifest(out, seq.manifest);
  std::cout << "wrote perturbed sequence to " << out << "\n";
  return 0;
}

int run_loss(const std::string& dir, int target, int source, int channel,
             const std::string& weights_path) {
  const LossWeights w = weights_from_flag(weights_path);
  const LoadedSequence seq = load_sequence(dir);
  const FramePair pair = pair_from_sequence(seq, target, source, channel);
  std::cout << breakdown_to_json(total_loss(pair, w)).dump(2) << "\n";
  return 0;
}

int run_check_grad(std::uint64_t seed, int height, int width, double step, double tol,
                   const std::string& weights_path) {
  const LossWeights w = weights_from_flag(weights_path);
  // Scan seeds for an instance with no projection on a sampling-cell boundary,
  // where the loss is differentiable everywhere the mask is on.
  FramePair pair = make_random_pair(seed, height, width);
  std::uint64_t used = seed;
  for (int tries = 0; tries < 100 && near_cell_boundary(pair, w, 1e-3); ++tries) {
    ++used;
    pair = make_random_pair(used, height, width);
  }
  require(!near_cell_boundary(pair, w, 1e-3), "invalid-input",
          "no boundary-free instance found in 100 seeds");

  const GradCheckReport r = check_gradients(pair, w, step);
  std::printf("instance seed %llu (%dx%d), fd step %.1e\n",
              static_cast<unsigned long long>(used), height, width, step);
  std::printf("depth           max rel err %.3e\n", r.depth);
  std::printf("source_depth    max rel err %.3e\n", r.source_depth);
  std::printf("normals         max rel err %.3e\n", r.normals);
  std::printf("source_normals  max rel err %.3e\n", r.source_normals);
  std::printf("pose            max rel err %.3e\n", r.pose);
  if (r.worst() >= tol) {
    std::printf("FAIL: worst %.3e >= tol %.1e\n", r.worst(), tol);
    return 1;
  }
  std::printf("OK: worst %.3e < tol %.1e\n", r.worst(), tol);
  return 0;
}

int run_refine(const std::string& dir, const std::string& gt_dir, const std::string& out,
               const std::string& weights_path, RefineConfig cfg) {
  const LossWeights w = weights_from_flag(weights_path);
  const LoadedSequence seq = load_sequence(dir);

  std::vector<SequenceFrame> frames;
  for (const LoadedFrame& f : seq.frames)
    frames.push_back({f.image, f.depth, f.normals, f.pose_world});

  std::vector<DepthField> gt;
  std::vector<Mask> gt_valid;
  if (!gt_dir.empty()) {
    const LoadedSequence gts = load_sequence(gt_dir);
    require(gts.frames.size() == seq.frames.size(), "shape-mismatch",
            "gt sequence length differs from input");
    for (const LoadedFrame& f : gts.frames) {
      gt.push_back(f.depth);
      gt_valid.push_back(depth_valid_mask(f.depth, gts.manifest.far_plane));
    }
  }

  const RefineResult res =
      refine_sequence(frames, seq.manifest.intrinsics, w, cfg, gt.empty() ? nullptr : &gt,
                      gt_valid.empty() ? nullptr : &gt_valid);

  fs::create_directories(out);
  SequenceManifest m = seq.manifest;
  for (std::size_t f = 0; f < res.depths.size(); ++f) {
    const FrameEntry& e = m.frames[f];
    write_depth((fs::path(out) / e.depth).string(), res.depths[f]);
    write_normals((fs::path(out) / e.normals).string(), res.normals[f]);
    for (const std::string& name : {e.image, e.image_png}) {
      if (name.empty()) continue;
      fs::copy_file(fs::path(dir) / name, fs::path(out) / name,
                    fs::copy_options::overwrite_existing);
    }
  }
  save_manifest(out, m);

  json report;
  report["converged"] = res.report.converged;
  report["aborted"] = res.report.aborted;
  report["abort_reason"] = res.report.abort_reason;
  report["total_wall_ms"] = res.report.total_wall_ms;
  report["iterations"] = json::array();
  for (const IterationRecord& it : res.report.iterations)
    report["iterations"].push_back(
        {{"iter", it.iter}, {"loss", it.loss.total}, {"step", it.step}, {"wall_ms", it.wall_ms}});
  if (res.report.has_metrics) {
    report["initial_metrics"] = metrics_to_json(res.report.initial_metrics);
    report["final_metrics"] = metrics_to_json(res.report.final_metrics);
    report["initial_metrics_unscaled"] = metrics_to_json(res.report.initial_metrics_unscaled);
    report["final_metrics_unscaled"] = metrics_to_json(res.report.final_metrics_unscaled);
  }
  std::ofstream rf(fs::path(out) / "report.json");
  rf << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";
  return 0;
}

// A prediction source for eval: a manifest directory, or a directory of
// *.depth.bin files matched by sorted name.
std::vector<DepthField> load_depths(const std::string& dir, double* far_plane) {
  if (fs::exists(fs::path(dir) / "manifest.json")) {
    const LoadedSequence seq = load_sequence(dir);
    if (far_plane) *far_plane = seq.manifest.far_plane;
    std::vector<DepthField> out;
    for (const LoadedFrame& f : seq.frames) out.push_back(f.depth);
    return out;
  }
  require(fs::is_directory(dir), "missing-file", dir + " is not a directory");
  std::vector<std::string> names;
  for (const auto& ent : fs::directory_iterator(dir)) {
    const std::string n = ent.path().filename().string();
    if (n.size() > 10 && n.substr(n.size() - 10) == ".depth.bin") names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  require(!names.empty(), "missing-file", "no manifest.json or *.depth.bin files in " + dir);
  std::vector<DepthField> out;
  for (const std::string& n : names) out.push_back(read_depth((fs::path(dir) / n).string()));
  return out;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir, bool no_median_scale,
             const std::string& csv_path, const std::string& json_path) {
  double far_plane = 1e300;
  const std::vector<DepthField> pred = load_depths(pred_dir, nullptr);
  const std::vector<DepthField> gt = load_depths(gt_dir, &far_plane);
  require(pred.size() == gt.size(), "shape-mismatch", "prediction/gt frame counts differ");
  require(!pred.empty(), "invalid-input", "no frames to evaluate");

  std::ostringstream csv;
  csv << "frame,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,scale\n";
  DepthMetrics mean;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const Mask valid = depth_valid_mask(gt[f], far_plane);
    const DepthMetrics m = compute_metrics(pred[f], gt[f], valid, !no_median_scale);
    csv << f << "," << m.abs_rel << "," << m.sq_rel << "," << m.rmse << "," << m.rmse_log << ","
        << m.delta1 << "," << m.delta2 << "," << m.delta3 << "," << m.scale_applied << "\n";
    mean.abs_rel += m.abs_rel;
    mean.sq_rel += m.sq_rel;
    mean.rmse += m.rmse;
    mean.rmse_log += m.rmse_log;
    mean.delta1 += m.delta1;
    mean.delta2 += m.delta2;
    mean.delta3 += m.delta3;
    mean.scale_applied += m.scale_applied;
  }
  const double n = static_cast<double>(pred.size());
  mean.abs_rel /= n;
  mean.sq_rel /= n;
  mean.rmse /= n;
  mean.rmse_log /= n;
  mean.delta1 /= n;
  mean.delta2 /= n;
  mean.delta3 /= n;
  mean.scale_applied /= n;

  if (csv_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(csv_path);
    require(f.good(), "io-error", "cannot write " + csv_path);
    f << csv.str();
  }
  json agg;
  agg["frames"] = pred.size();
  agg["mean"] = metrics_to_json(mean);
  if (json_path.empty()) {
    std::cout << agg.dump(2) << "\n";
  } else {
    std::ofstream f(json_path);
    require(f.good(), "io-error", "cannot write " + json_path);
    f << agg.dump(2) << "\n";
  }
  return 0;
}

int run_fuse(const std::string& dir, const std::string& out, int window, bool no_average,
             double voxel) {
  const LoadedSequence seq = load_sequence(dir);
  std::vector<DepthField> depths;
  std::vector<PoseSE3> poses;
  for (const LoadedFrame& f : seq.frames) {
    depths.push_back(f.depth);
    poses.push_back(f.pose_world);
  }
  if (!no_average)
    depths = windowed_depth_average(depths, poses, seq.manifest.intrinsics, window);

  std::vector<FusionFrame> frames;
  for (std::size_t f = 0; f < depths.size(); ++f)
    frames.push_back({depths[f], seq.frames[f].image, poses[f],
                      depth_valid_mask(seq.frames[f].depth, seq.manifest.far_plane)});
  const PointCloud cloud = fuse_pointcloud(frames, seq.manifest.intrinsics, voxel);
  write_ply(out, cloud);
  std::cout << "wrote " << cloud.points.size() << " points to " << out << "\n";
  return 0;
}

int run_config_init(const std::string& out) {
  save_weights(out, LossWeights{});
  std::cout << "wrote default weights to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"colde: self-supervised depth objectives on a procedural colon"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "render a synthetic sequence directory");
  std::string synth_out;
  int synth_frames = 10;
  double synth_zstep = 0.08;
  bool synth_no_png = false, synth_specular = false, synth_no_texture = false;
  bool synth_no_falloff = false;
  SceneConfig scene;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--frames", synth_frames, "number of frames");
  synth->add_option("--z-step", synth_zstep, "pull-back step per frame");
  synth->add_option("--width", scene.width, "image width");
  synth->add_option("--height", scene.height, "image height");
  synth->add_option("--base-radius", scene.base_radius, "tube radius");
  synth->add_option("--fold-amplitude", scene.fold_amplitude, "fold amplitude");
  synth->add_option("--fold-period", scene.fold_period, "fold period");
  synth->add_option("--far-plane", scene.far_plane, "background depth cap");
  synth->add_option("--focal-scale", scene.focal_scale, "fx = fy = scale * width");
  synth->add_option("--texture-contrast", scene.texture_contrast, "albedo pattern contrast");
  synth->add_option("--light-gain", scene.light_gain, "light intensity gain");
  synth->add_option("--seed", scene.seed, "scene seed");
  synth->add_flag("--specular", synth_specular, "enable Phong speculars");
  synth->add_flag("--no-texture", synth_no_texture, "disable albedo texture");
  synth->add_flag("--no-light-falloff", synth_no_falloff, "disable inverse-square light falloff");
  synth->add_flag("--no-png", synth_no_png, "skip advisory PNGs");

  // perturb
  auto* perturb = app.add_subcommand("perturb", "perturb a sequence's depths");
  std::string pert_in, pert_out;
  double pert_scale = 1.0, pert_noise = 0.0;
  std::uint64_t pert_seed = 0;
  perturb->add_option("--in", pert_in, "input sequence directory")->required();
  perturb->add_option("--out", pert_out, "output sequence directory")->required();
  perturb->add_option("--scale", pert_scale, "global multiplicative scale");
  perturb->add_option("--noise", pert_noise, "log-normal noise sigma");
  perturb->add_option("--seed", pert_seed, "noise seed");

  // loss
  auto* loss = app.add_subcommand("loss", "print the loss breakdown for a frame pair");
  std::string loss_dir, loss_weights;
  int loss_target = 0, loss_source = 1, loss_channel = 0;
  loss->add_option("--dir", loss_dir, "sequence directory")->required();
  loss->add_option("--target", loss_target, "target frame index");
  loss->add_option("--source", loss_source, "source frame index");
  loss->add_option("--channel", loss_channel, "feature channel");
  loss->add_option("--weights", loss_weights, "weights JSON");

  // check-grad
  auto* cg = app.add_subcommand("check-grad", "analytic vs finite-difference gradients");
  std::uint64_t cg_seed = 0;
  int cg_h = 16, cg_w = 20;
  double cg_step = 1e-6, cg_tol = 1e-4;
  std::string cg_weights;
  cg->add_option("--seed", cg_seed, "instance seed");
  cg->add_option("--height", cg_h, "instance height");
  cg->add_option("--width", cg_w, "instance width");
  cg->add_option("--step", cg_step, "fd step");
  cg->add_option("--tol", cg_tol, "failure threshold on worst relative error");
  cg->add_option("--weights", cg_weights, "weights JSON");

  // refine
  auto* refine = app.add_subcommand("refine", "variational refinement of a sequence");
  std::string ref_dir, ref_gt, ref_out, ref_weights;
  RefineConfig rcfg;
  bool ref_fixed_channel = false;
  refine->add_option("--dir", ref_dir, "input sequence directory")->required();
  refine->add_option("--out", ref_out, "output directory")->required();
  refine->add_option("--gt", ref_gt, "ground-truth sequence directory (for metrics)");
  refine->add_option("--weights", ref_weights, "weights JSON");
  refine->add_option("--iters", rcfg.max_iters, "max iterations");
  refine->add_option("--lr", rcfg.learning_rate, "initial step size");
  refine->add_option("--seed", rcfg.seed, "feature-channel seed");
  refine->add_option("--tol", rcfg.convergence_tol, "relative-decrease convergence tolerance");
  refine->add_flag("--optimize-normals", rcfg.optimize_normals, "also refine normals");
  refine->add_flag("--fixed-channel", ref_fixed_channel,
                   "keep one feature channel for all iterations");

  // eval
  auto* eval = app.add_subcommand("eval", "depth metrics against ground truth");
  std::string eval_pred, eval_gt, eval_csv, eval_json;
  bool eval_no_scale = false;
  eval->add_option("--pred", eval_pred, "prediction directory")->required();
  eval->add_option("--gt", eval_gt, "ground-truth directory")->required();
  eval->add_option("--csv", eval_csv, "per-frame CSV path (default stdout)");
  eval->add_option("--json", eval_json, "aggregate JSON path (default stdout)");
  eval->add_flag("--no-median-scale", eval_no_scale, "skip median rescaling");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "fuse a sequence into a point cloud");
  std::string fuse_dir, fuse_out;
  int fuse_window = 7;
  bool fuse_no_avg = false;
  double fuse_voxel = 0.0;
  fuse->add_option("--dir", fuse_dir, "sequence directory")->required();
  fuse->add_option("--out", fuse_out, "output PLY path")->required();
  fuse->add_option("--window", fuse_window, "depth averaging window (odd)");
  fuse->add_option("--voxel", fuse_voxel, "voxel downsampling size (0 disables)");
  fuse->add_flag("--no-average", fuse_no_avg, "skip windowed depth averaging");

  // config init
  auto* config = app.add_subcommand("config", "configuration helpers");
  auto* config_init = config->add_subcommand("init", "write default weights JSON");
  std::string config_out = "weights.json";
  config_init->add_option("--out", config_out, "output path");
  config->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      scene.specular_on = synth_specular;
      if (synth_no_texture) scene.texture = SceneConfig::Texture::none;
      if (synth_no_falloff) scene.light_falloff = false;
      return run_synth(synth_out, synth_frames, synth_zstep, scene, synth_no_png);
    }
    if (*perturb) return run_perturb(pert_in, pert_out, pert_scale, pert_noise, pert_seed);
    if (*loss) return run_loss(loss_dir, loss_target, loss_source, loss_channel, loss_weights);
    if (*cg) return run_check_grad(cg_seed, cg_h, cg_w, cg_step, cg_tol, cg_weights);
    if (*refine) {
      rcfg.resample_feature_channel = !ref_fixed_channel;
      return run_refine(ref_dir, ref_gt, ref_out, ref_weights, rcfg);
    }
    if (*eval) return run_eval(eval_pred, eval_gt, eval_no_scale, eval_csv, eval_json);
    if (*fuse) return run_fuse(fuse_dir, fuse_out, fuse_window, fuse_no_avg, fuse_voxel);
    if (*config_init) return run_config_init(config_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";  // what() is "<code>: <message>"
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
