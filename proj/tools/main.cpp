// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "oass/checkpoint.hpp"
#include "oass/common.hpp"
#include "oass/config.hpp"
#include "oass/imageio.hpp"
#include "oass/metrics.hpp"
#include "oass/synth.hpp"
#include "oass/trainer.hpp"
#include "oass/viz.hpp"

namespace fs = std::filesystem;
using namespace oass;

namespace {

struct GlobalOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string device = "cpu";
};

RunConfig effective_config(const GlobalOpts& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed_set) cfg.train.seed = g.seed;
  if (g.device != "cpu")
    throw ConfigError("only --device cpu is supported by this build");
  return cfg;
}

std::vector<std::string> synth_names(int num_classes) {
  static const char* kShapes[5] = {"circle", "square", "triangle", "ring", "plus"};
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c)
    names.push_back(c < 5 ? kShapes[c] : strf("class%d", c));
  return names;
}

std::vector<Sample> load_voc_samples(const std::string& root,
                                     const std::string& split,
                                     bool include_difficult, bool with_images) {
  VocDataset ds = load_voc_split(root, split);
  std::vector<Sample> out;
  for (const std::string& id : ds.ids) {
    VocAnnotation ann = load_voc_annotation_file(root, id, include_difficult);
    Sample s;
    s.id = id;
    s.labels = ann.labels;
    s.boxes = ann.boxes;
    if (with_images) {
      const fs::path bmp = fs::path(root) / "JPEGImages" / (id + ".bmp");
      if (!fs::exists(bmp))
        throw DataError(strf("image %s not found (this build reads BMP rasters; "
                             "convert JPEGImages first)",
                             bmp.string().c_str()));
      s.image.data = rgb_to_tensor(read_bmp(bmp.string()));
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("VOC split '" + split + "' is empty");
  return out;
}

// Train/eval sets for the configured data source. Synthetic eval uses an
// independent generator stream so it never overlaps the train set.
std::vector<Sample> build_split(const RunConfig& cfg, bool eval_split) {
  const DataConfig& d = cfg.data;
  if (d.kind == "synth") {
    SynthConfig sc = d.synth;
    if (eval_split) sc.num_images = d.synth_eval_images;
    return synth_dataset(sc, eval_split ? d.synth_seed + 1 : d.synth_seed);
  }
  if (d.kind == "manifest") {
    if (d.root.empty()) throw ConfigError("data.root must name the manifest file");
    return load_synth_manifest(d.root, true);
  }
  if (d.root.empty()) throw ConfigError("data.root must name the VOC directory");
  return load_voc_samples(d.root, eval_split ? d.eval_split : d.train_split,
                          d.include_difficult, true);
}

std::vector<std::string> class_names_for(const RunConfig& cfg) {
  if (cfg.data.kind == "voc") return voc_class_names();
  return synth_names(cfg.model.num_classes);
}

void print_report(const APReport& rep, const std::vector<std::string>& names) {
  std::cout << "per-class AP:\n";
  for (size_t c = 0; c < rep.per_class_ap.size(); ++c) {
    const std::string name = c < names.size() ? names[c] : strf("class%zu", c);
    if (std::isnan(rep.per_class_ap[c]))
      std::cout << strf("  %-14s  (no positives)\n", name.c_str());
    else
      std::cout << strf("  %-14s  %.4f\n", name.c_str(), rep.per_class_ap[c]);
  }
  std::cout << strf("mAP %.4f over %d images\n", rep.map, rep.num_images);
}

int cmd_train(const GlobalOpts& g, const std::string& resume_path) {
  RunConfig cfg = effective_config(g);
  std::vector<Sample> train_set = build_split(cfg, false);
  std::cout << strf("training on %zu samples, strategy %s%s\n", train_set.size(),
                    strategy_name(cfg.pipeline.keypoint.strategy),
                    cfg.model.csi ? " + csi" : "");
  Checkpoint resume;
  const Checkpoint* rp = nullptr;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    rp = &resume;
    std::cout << strf("resuming at epoch %d\n", resume.epoch);
  }
  TrainResult res = train_model(cfg, train_set, &std::cout, rp);

  std::vector<Sample> eval_set = build_split(cfg, true);
  APReport rep = evaluate(res.model, eval_set, config_digest(cfg));
  print_report(rep, class_names_for(cfg));
  if (!cfg.train.out_dir.empty())
    write_ap_csv(rep, (fs::path(cfg.train.out_dir) / "ap.csv").string(),
                 class_names_for(cfg));
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt_path,
             const std::string& split, const std::string& out_csv) {
  RunConfig cfg = effective_config(g);
  Checkpoint ck = load_checkpoint(ckpt_path);
  if (!g.config_path.empty() && ck.model_cfg.num_classes != cfg.model.num_classes)
    throw ConfigError(strf("checkpoint has %d classes, config expects %d",
                           ck.model_cfg.num_classes, cfg.model.num_classes));
  Model model = restore_model(ck);
  if (!split.empty()) cfg.data.eval_split = split;
  std::vector<Sample> eval_set = build_split(cfg, true);
  APReport rep = evaluate(model, eval_set, config_digest(cfg));
  print_report(rep, class_names_for(cfg));
  if (!out_csv.empty()) write_ap_csv(rep, out_csv, class_names_for(cfg));
  return 0;
}

int cmd_stats(const GlobalOpts& g, const std::string& root,
              const std::string& manifest, const std::string& split,
              const std::string& out_dir, int target_size) {
  RunConfig cfg = effective_config(g);
  std::vector<Sample> samples;
  std::vector<std::string> names;
  if (!manifest.empty()) {
    samples = load_synth_manifest(manifest, false);
    int classes = 0;
    for (const Sample& s : samples) classes = std::max(classes, s.labels.size());
    names = synth_names(classes);
  } else if (!root.empty()) {
    samples = load_voc_samples(root, split, cfg.data.include_difficult, false);
    names = voc_class_names();
  } else {
    throw ConfigError("stats needs --root (VOC) or --manifest (synthetic)");
  }
  ShiftStats stats = shift_statistics(samples, target_size);
  fs::create_directories(out_dir);
  write_shift_stats_csv(stats, (fs::path(out_dir) / "shift_stats.csv").string(), names);
  plot_shift_stats(stats, names, (fs::path(out_dir) / "shift_stats.bmp").string());
  std::cout << strf("cross-class mean |dx| = %.2f px (at %d), %zu classes\n",
                    stats.cross_class_mean_abs_dx(), target_size,
                    stats.per_class.size());
  std::cout << "wrote " << (fs::path(out_dir) / "shift_stats.csv").string() << "\n";
  return 0;
}

int cmd_viz(const GlobalOpts& g, const std::string& ckpt_path,
            const std::vector<std::string>& ids, const std::string& out_dir) {
  RunConfig cfg = effective_config(g);
  Checkpoint ck = load_checkpoint(ckpt_path);
  Model model = restore_model(ck);
  std::vector<Sample> eval_set = build_split(cfg, true);
  fs::create_directories(out_dir);
  const std::vector<std::string> names = class_names_for(cfg);
  int written = 0;
  for (const Sample& s : eval_set) {
    if (!ids.empty() &&
        std::find(ids.begin(), ids.end(), s.id) == ids.end())
      continue;
    FeatureMap f = extract_features(model, s.image);
    ClassActivationMaps cams = compute_cams(f, model);
    export_cam_visualization(s.image, cams, s.labels, names,
                             (fs::path(out_dir) / (s.id + "_cam.bmp")).string());
    ++written;
    if (ids.empty() && written >= 8) break;  // unfiltered: first few only
  }
  if (written == 0) throw DataError("viz: no sample matched the requested ids");
  std::cout << strf("wrote %d visualization(s) to %s\n", written, out_dir.c_str());
  return 0;
}

int cmd_synth(const GlobalOpts& g, uint64_t seed, bool seed_set,
              const std::string& out_dir) {
  RunConfig cfg = effective_config(g);
  SynthConfig sc = cfg.data.synth;
  const uint64_t use_seed = seed_set ? seed : cfg.data.synth_seed;
  std::vector<Sample> samples = synth_dataset(sc, use_seed);
  const std::string manifest = write_synth_dataset(samples, sc, out_dir);
  std::cout << strf("wrote %zu images, manifest %s\n", samples.size(),
                    manifest.c_str());
  std::cout << strf("placement variance per axis: %.4f px^2\n",
                    synth_placement_variance(sc));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"object-aware self-supervision for multi-label classification"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", g.seed, "override train.seed");
  app.add_option("--device", g.device, "compute device (cpu only)");

  auto* train = app.add_subcommand("train", "train a model");
  std::string resume_path;
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, split, out_csv;
  eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--split", split, "evaluation split name");
  eval->add_option("--out", out_csv, "write the AP table as CSV");

  auto* stats = app.add_subcommand("stats", "object location-shift statistics");
  std::string stats_root, stats_manifest, stats_out = "stats_out";
  std::string stats_split = "train";
  int stats_target = 512;
  stats->add_option("--root", stats_root, "VOC dataset root");
  stats->add_option("--manifest", stats_manifest, "synthetic dataset manifest");
  stats->add_option("--split", stats_split, "VOC split name");
  stats->add_option("--out-dir", stats_out, "output directory");
  stats->add_option("--target-size", stats_target, "normalization frame in px");

  auto* viz = app.add_subcommand("viz", "export CAM overlays");
  std::string viz_ckpt, viz_out = "viz_out";
  std::vector<std::string> viz_ids;
  viz->add_option("checkpoint", viz_ckpt, "checkpoint file")->required();
  viz->add_option("--ids", viz_ids, "sample ids to render");
  viz->add_option("--out-dir", viz_out, "output directory");

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  uint64_t synth_seed = 0;
  std::string synth_out = "synth_out";
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out-dir", synth_out, "output directory");

  try {
    app.parse(argc, argv);
    g.seed_set = seed_opt->count() > 0;
    if (train->parsed()) return cmd_train(g, resume_path);
    if (eval->parsed()) return cmd_eval(g, ckpt_path, split, out_csv);
    if (stats->parsed())
      return cmd_stats(g, stats_root, stats_manifest, stats_split, stats_out,
                       stats_target);
    if (viz->parsed()) return cmd_viz(g, viz_ckpt, viz_ids, viz_out);
    if (synth->parsed())
      return cmd_synth(g, synth_seed, synth_seed_opt->count() > 0, synth_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const ShapeError& e) {
    std::cerr << "internal shape violation: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
