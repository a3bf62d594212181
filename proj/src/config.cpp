// SPDX-License-Identifier: Apache-2.0

#include "oass/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "oass/common.hpp"

namespace oass {

namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw ConfigError(what); }

void check_keys(const json& obj, const char* section,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) bad(strf("config section '%s' must be an object", section));
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      bad(strf("unknown config key '%s.%s'", section, it.key().c_str()));
}

template <typename T>
T get(const json& obj, const char* section, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad(strf("config key '%s.%s' has the wrong type", section, key));
  }
}

Interp parse_interp(const std::string& s) {
  if (s == "bilinear") return Interp::Bilinear;
  if (s == "nearest") return Interp::Nearest;
  bad("patching.interpolation must be 'bilinear' or 'nearest'");
}

ReForm parse_re_form(const std::string& s) {
  if (s == "mae") return ReForm::Mae;
  if (s == "mse") return ReForm::Mse;
  bad("loss.re_form must be 'mae' or 'mse'");
}

CsiClsMode parse_cls_mode(const std::string& s) {
  if (s == "replace") return CsiClsMode::Replace;
  if (s == "supplement") return CsiClsMode::Supplement;
  bad("loss.csi_cls_mode must be 'replace' or 'supplement'");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    bad(strf("config is not valid JSON: %s", e.what()));
  }
  check_keys(j, "<root>", {"model", "keypoint", "patching", "train", "loss", "data"});

  RunConfig cfg;

  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model", {"encoder", "depth", "stride", "num_classes", "csi"});
    cfg.model.encoder = get<std::string>(m, "model", "encoder", cfg.model.encoder);
    cfg.model.depth = get<int>(m, "model", "depth", cfg.model.depth);
    cfg.model.stride = get<int>(m, "model", "stride", cfg.model.stride);
    cfg.model.num_classes = get<int>(m, "model", "num_classes", cfg.model.num_classes);
    cfg.model.csi = get<bool>(m, "model", "csi", cfg.model.csi);
    if (cfg.model.encoder != "tiny_cnn" && cfg.model.encoder != "identity")
      bad("model.encoder must be 'tiny_cnn' or 'identity'");
    if (cfg.model.depth < 1) bad("model.depth must be >= 1");
    if (cfg.model.stride < 1 || (cfg.model.stride & (cfg.model.stride - 1)) != 0)
      bad("model.stride must be a positive power of two");
    if (cfg.model.num_classes < 1) bad("model.num_classes must be >= 1");
  }

  if (j.contains("keypoint")) {
    const json& k = j["keypoint"];
    check_keys(k, "keypoint",
               {"strategy", "k", "min_patch", "literal_ctopkw_scaling", "source"});
    StrategyConfig& sc = cfg.pipeline.keypoint;
    if (k.contains("strategy"))
      sc.strategy = parse_strategy(get<std::string>(k, "keypoint", "strategy", "max"));
    sc.k = get<int>(k, "keypoint", "k", sc.k);
    sc.min_patch = get<int>(k, "keypoint", "min_patch", sc.min_patch);
    sc.literal_ctopkw_scaling = get<bool>(k, "keypoint", "literal_ctopkw_scaling",
                                          sc.literal_ctopkw_scaling);
    const std::string src = get<std::string>(k, "keypoint", "source", "student");
    if (src == "teacher")
      cfg.pipeline.keypoint_from_teacher = true;
    else if (src != "student")
      bad("keypoint.source must be 'student' or 'teacher'");
    if (sc.k < 1) bad("keypoint.k must be >= 1");
    if (sc.min_patch < 1) bad("keypoint.min_patch must be >= 1");
  }

  if (j.contains("patching")) {
    const json& p = j["patching"];
    check_keys(p, "patching", {"interpolation"});
    if (p.contains("interpolation"))
      cfg.pipeline.interpolation =
          parse_interp(get<std::string>(p, "patching", "interpolation", "bilinear"));
  }

  if (j.contains("loss")) {
    const json& l = j["loss"];
    check_keys(l, "loss", {"re_form", "csi_cls_mode"});
    if (l.contains("re_form"))
      cfg.pipeline.re_form = parse_re_form(get<std::string>(l, "loss", "re_form", "mae"));
    if (l.contains("csi_cls_mode"))
      cfg.pipeline.csi_cls_mode =
          parse_cls_mode(get<std::string>(l, "loss", "csi_cls_mode", "replace"));
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train",
               {"epochs", "batch_size", "lr", "ema_decay", "alpha_final",
                "rampup_epochs", "seed", "threads", "checkpoint_every", "out_dir"});
    cfg.train.epochs = get<int>(t, "train", "epochs", cfg.train.epochs);
    cfg.train.batch_size = get<int>(t, "train", "batch_size", cfg.train.batch_size);
    cfg.train.lr = get<double>(t, "train", "lr", cfg.train.lr);
    cfg.train.ema_decay = get<double>(t, "train", "ema_decay", cfg.train.ema_decay);
    cfg.train.alpha_final = get<double>(t, "train", "alpha_final", cfg.train.alpha_final);
    cfg.train.rampup_epochs = get<int>(t, "train", "rampup_epochs", cfg.train.rampup_epochs);
    cfg.train.seed = get<uint64_t>(t, "train", "seed", cfg.train.seed);
    cfg.train.threads = get<int>(t, "train", "threads", cfg.train.threads);
    cfg.train.checkpoint_every =
        get<int>(t, "train", "checkpoint_every", cfg.train.checkpoint_every);
    cfg.train.out_dir = get<std::string>(t, "train", "out_dir", cfg.train.out_dir);
    if (cfg.train.epochs < 0) bad("train.epochs must be >= 0");
    if (cfg.train.batch_size < 1) bad("train.batch_size must be >= 1");
    if (!(cfg.train.lr > 0)) bad("train.lr must be > 0");
    if (cfg.train.ema_decay < 0 || cfg.train.ema_decay >= 1)
      bad("train.ema_decay must lie in [0, 1)");
    if (cfg.train.alpha_final < 0) bad("train.alpha_final must be >= 0");
    if (cfg.train.rampup_epochs < 1) bad("train.rampup_epochs must be >= 1");
    if (cfg.train.threads < 0) bad("train.threads must be >= 0");
    if (cfg.train.checkpoint_every < 1) bad("train.checkpoint_every must be >= 1");
  }

  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, "data",
               {"kind", "root", "train_split", "eval_split", "include_difficult",
                "augment", "synth", "synth_seed", "synth_eval_images"});
    cfg.data.kind = get<std::string>(d, "data", "kind", cfg.data.kind);
    if (cfg.data.kind != "synth" && cfg.data.kind != "manifest" && cfg.data.kind != "voc")
      bad("data.kind must be 'synth', 'manifest', or 'voc'");
    cfg.data.root = get<std::string>(d, "data", "root", cfg.data.root);
    cfg.data.train_split = get<std::string>(d, "data", "train_split", cfg.data.train_split);
    cfg.data.eval_split = get<std::string>(d, "data", "eval_split", cfg.data.eval_split);
    cfg.data.include_difficult =
        get<bool>(d, "data", "include_difficult", cfg.data.include_difficult);
    cfg.data.synth_seed = get<uint64_t>(d, "data", "synth_seed", cfg.data.synth_seed);
    cfg.data.synth_eval_images =
        get<int>(d, "data", "synth_eval_images", cfg.data.synth_eval_images);
    if (d.contains("augment")) {
      const json& a = d["augment"];
      check_keys(a, "data.augment",
                 {"enabled", "min_size", "max_size", "canvas", "flip_prob"});
      AugmentConfig& ac = cfg.data.augment;
      ac.enabled = get<bool>(a, "data.augment", "enabled", ac.enabled);
      ac.min_size = get<int>(a, "data.augment", "min_size", ac.min_size);
      ac.max_size = get<int>(a, "data.augment", "max_size", ac.max_size);
      ac.canvas = get<int>(a, "data.augment", "canvas", ac.canvas);
      ac.flip_prob = get<double>(a, "data.augment", "flip_prob", ac.flip_prob);
      if (ac.min_size < 1 || ac.max_size < ac.min_size)
        bad("data.augment resize range is invalid");
      if (ac.canvas < 2 || ac.canvas % 2 != 0)
        bad("data.augment.canvas must be even and >= 2");
      if (ac.flip_prob < 0 || ac.flip_prob > 1)
        bad("data.augment.flip_prob must lie in [0, 1]");
    }
    if (d.contains("synth")) {
      const json& s = d["synth"];
      check_keys(s, "data.synth",
                 {"num_images", "num_classes", "image_size", "min_objects",
                  "max_objects", "half_lo", "half_hi", "shift_lo", "shift_hi",
                  "noise_amp", "color_jitter", "shared_colors"});
      SynthConfig& sy = cfg.data.synth;
      sy.num_images = get<int>(s, "data.synth", "num_images", sy.num_images);
      sy.num_classes = get<int>(s, "data.synth", "num_classes", sy.num_classes);
      sy.image_size = get<int>(s, "data.synth", "image_size", sy.image_size);
      sy.min_objects = get<int>(s, "data.synth", "min_objects", sy.min_objects);
      sy.max_objects = get<int>(s, "data.synth", "max_objects", sy.max_objects);
      sy.half_lo = get<double>(s, "data.synth", "half_lo", sy.half_lo);
      sy.half_hi = get<double>(s, "data.synth", "half_hi", sy.half_hi);
      sy.shift_lo = get<double>(s, "data.synth", "shift_lo", sy.shift_lo);
      sy.shift_hi = get<double>(s, "data.synth", "shift_hi", sy.shift_hi);
      sy.noise_amp = get<double>(s, "data.synth", "noise_amp", sy.noise_amp);
      sy.color_jitter = get<double>(s, "data.synth", "color_jitter", sy.color_jitter);
      sy.shared_colors = get<bool>(s, "data.synth", "shared_colors", sy.shared_colors);
    }
  }

  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) bad("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_canonical(const RunConfig& cfg) {
  json j;
  j["model"] = {{"encoder", cfg.model.encoder},
                {"depth", cfg.model.depth},
                {"stride", cfg.model.stride},
                {"num_classes", cfg.model.num_classes},
                {"csi", cfg.model.csi}};
  j["keypoint"] = {
      {"strategy", strategy_name(cfg.pipeline.keypoint.strategy)},
      {"k", cfg.pipeline.keypoint.k},
      {"min_patch", cfg.pipeline.keypoint.min_patch},
      {"literal_ctopkw_scaling", cfg.pipeline.keypoint.literal_ctopkw_scaling},
      {"source", cfg.pipeline.keypoint_from_teacher ? "teacher" : "student"}};
  j["patching"] = {
      {"interpolation",
       cfg.pipeline.interpolation == Interp::Bilinear ? "bilinear" : "nearest"}};
  j["loss"] = {{"re_form", cfg.pipeline.re_form == ReForm::Mae ? "mae" : "mse"},
               {"csi_cls_mode", cfg.pipeline.csi_cls_mode == CsiClsMode::Replace
                                    ? "replace"
                                    : "supplement"}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"ema_decay", cfg.train.ema_decay},
                {"alpha_final", cfg.train.alpha_final},
                {"rampup_epochs", cfg.train.rampup_epochs},
                {"seed", cfg.train.seed},
                {"threads", cfg.train.threads},
                {"checkpoint_every", cfg.train.checkpoint_every},
                {"out_dir", cfg.train.out_dir}};
  j["data"] = {{"kind", cfg.data.kind},
               {"root", cfg.data.root},
               {"train_split", cfg.data.train_split},
               {"eval_split", cfg.data.eval_split},
               {"include_difficult", cfg.data.include_difficult},
               {"synth_seed", cfg.data.synth_seed},
               {"synth_eval_images", cfg.data.synth_eval_images},
               {"augment",
                {{"enabled", cfg.data.augment.enabled},
                 {"min_size", cfg.data.augment.min_size},
                 {"max_size", cfg.data.augment.max_size},
                 {"canvas", cfg.data.augment.canvas},
                 {"flip_prob", cfg.data.augment.flip_prob}}},
               {"synth",
                {{"num_images", cfg.data.synth.num_images},
                 {"num_classes", cfg.data.synth.num_classes},
                 {"image_size", cfg.data.synth.image_size},
                 {"min_objects", cfg.data.synth.min_objects},
                 {"max_objects", cfg.data.synth.max_objects},
                 {"half_lo", cfg.data.synth.half_lo},
                 {"half_hi", cfg.data.synth.half_hi},
                 {"shift_lo", cfg.data.synth.shift_lo},
                 {"shift_hi", cfg.data.synth.shift_hi},
                 {"noise_amp", cfg.data.synth.noise_amp},
                 {"color_jitter", cfg.data.synth.color_jitter},
                 {"shared_colors", cfg.data.synth.shared_colors}}}};
  return j.dump();  // nlohmann objects iterate in sorted key order
}

std::string config_digest(const RunConfig& cfg) {
  const std::string s = run_config_canonical(cfg);
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return strf("%016llx", static_cast<unsigned long long>(h));
}

LossWeights loss_weights(const RunConfig& cfg) {
  LossWeights w;
  w.alpha_final = cfg.train.alpha_final;
  w.rampup_epochs = cfg.train.rampup_epochs;
  return w;
}

}  // namespace oass
