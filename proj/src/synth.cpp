// SPDX-License-Identifier: Apache-2.0

#include "oass/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "oass/common.hpp"
#include "oass/imageio.hpp"

namespace oass {

namespace {

using json = nlohmann::json;

struct Rgb {
  double r, g, b;
};

// per-class base colors; with shared_colors every class draws from palette[0]
const Rgb kPalette[5] = {
    {0.85, 0.25, 0.25},  // circle
    {0.25, 0.75, 0.30},  // square
    {0.25, 0.40, 0.90},  // triangle
    {0.90, 0.80, 0.20},  // ring
    {0.80, 0.30, 0.85},  // plus
};

bool inside_shape(int cls, double x, double y, double cx, double cy, double r) {
  const double dx = x - cx, dy = y - cy;
  switch (cls) {
    case 0:  // circle
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case 2: {  // triangle, apex up
      if (dy < -r || dy > r) return false;
      const double half_w = (dy + r) / (2.0 * r) * r;
      return std::abs(dx) <= half_w;
    }
    case 3: {  // ring
      const double d2 = dx * dx + dy * dy;
      const double rin = 0.55 * r;
      return d2 <= r * r && d2 >= rin * rin;
    }
    case 4:  // plus
      return (std::abs(dx) <= 0.34 * r && std::abs(dy) <= r) ||
             (std::abs(dy) <= 0.34 * r && std::abs(dx) <= r);
    default:
      return false;
  }
}

void validate(const SynthConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.num_classes > 5)
    throw DataError("synth: num_classes must be in [1, 5]");
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects ||
      cfg.max_objects > cfg.num_classes)
    throw DataError("synth: invalid objects-per-image range");
  if (cfg.half_lo <= 0 || cfg.half_hi < cfg.half_lo)
    throw DataError("synth: invalid half-extent range");
  if (cfg.shift_lo < 0 || cfg.shift_hi <= cfg.shift_lo)
    throw DataError("synth: invalid shift range");
  const double reach = cfg.shift_hi + cfg.half_hi;
  if (reach >= cfg.image_size / 2.0)
    throw DataError(strf("synth: unsatisfiable placement, shift+size reach %.1f "
                         "exceeds half canvas %.1f",
                         reach, cfg.image_size / 2.0));
  if (cfg.image_size % 2 != 0) throw DataError("synth: image_size must be even");
}

}  // namespace

double synth_placement_variance(const SynthConfig& cfg) {
  const double lo = cfg.shift_lo, hi = cfg.shift_hi;
  return (hi * hi * hi - lo * lo * lo) / (3.0 * (hi - lo));
}

std::vector<Sample> synth_dataset(const SynthConfig& cfg, uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  const int S = cfg.image_size;
  const double cx0 = S / 2.0, cy0 = S / 2.0;

  std::vector<Sample> out;
  out.reserve(cfg.num_images);
  for (int i = 0; i < cfg.num_images; ++i) {
    Sample smp;
    smp.id = strf("synth_%06d", i);
    smp.labels.bits.assign(cfg.num_classes, 0);
    smp.image.data = Tensor(3, S, S);

    // textured background: gray base, low-frequency ripple, per-pixel noise
    const double phase = rng.uniform(0.0, 6.28318530717958647692);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double ripple = 0.05 * std::sin(0.11 * x + phase) * std::cos(0.07 * y);
        for (int ch = 0; ch < 3; ++ch) {
          double v = 0.5 + ripple + rng.uniform(-cfg.noise_amp, cfg.noise_amp);
          smp.image.data.at(ch, y, x) = std::clamp(v, 0.0, 1.0);
        }
      }

    // distinct classes for this image
    std::vector<int> classes(cfg.num_classes);
    for (int c = 0; c < cfg.num_classes; ++c) classes[c] = c;
    for (int c = cfg.num_classes - 1; c > 0; --c)
      std::swap(classes[c], classes[rng.uniform_int(0, c)]);
    const int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);

    for (int k = 0; k < count; ++k) {
      const int cls = classes[k];
      const double r = rng.uniform(cfg.half_lo, cfg.half_hi);
      const double mx = rng.uniform(cfg.shift_lo, cfg.shift_hi);
      const double my = rng.uniform(cfg.shift_lo, cfg.shift_hi);
      const double sx = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double sy = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double ocx = cx0 + sx * mx, ocy = cy0 + sy * my;

      Rgb base = cfg.shared_colors ? kPalette[0] : kPalette[cls];
      const double jr = rng.uniform(-cfg.color_jitter, cfg.color_jitter);
      const double jg = rng.uniform(-cfg.color_jitter, cfg.color_jitter);
      const double jb = rng.uniform(-cfg.color_jitter, cfg.color_jitter);
      base = {std::clamp(base.r + jr, 0.05, 1.0), std::clamp(base.g + jg, 0.05, 1.0),
              std::clamp(base.b + jb, 0.05, 1.0)};

      const int x0 = static_cast<int>(std::floor(ocx - r)),
                x1 = static_cast<int>(std::ceil(ocx + r));
      const int y0 = static_cast<int>(std::floor(ocy - r)),
                y1 = static_cast<int>(std::ceil(ocy + r));
      for (int y = std::max(0, y0); y <= std::min(S - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(S - 1, x1); ++x)
          if (inside_shape(cls, x + 0.5, y + 0.5, ocx, ocy, r)) {
            smp.image.data.at(0, y, x) = base.r;
            smp.image.data.at(1, y, x) = base.g;
            smp.image.data.at(2, y, x) = base.b;
          }

      BBoxAnnotation box;
      box.class_id = cls;
      box.x_l = ocx - r;
      box.x_h = ocx + r;
      box.y_l = ocy - r;
      box.y_h = ocy + r;
      box.image_w = S;
      box.image_h = S;
      smp.boxes.push_back(box);
      smp.labels.bits[cls] = 1;
    }
    out.push_back(std::move(smp));
  }
  return out;
}

std::string write_synth_dataset(const std::vector<Sample>& samples,
                                const SynthConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");

  json manifest;
  manifest["format"] = "oass-synth-v1";
  manifest["num_classes"] = cfg.num_classes;
  manifest["image_size"] = cfg.image_size;
  manifest["samples"] = json::array();
  for (const Sample& s : samples) {
    const std::string img_rel = "images/" + s.id + ".bmp";
    write_bmp(tensor_to_rgb(s.image.data), (fs::path(out_dir) / img_rel).string());
    json rec;
    rec["id"] = s.id;
    rec["image"] = img_rel;
    rec["labels"] = s.labels.bits;
    rec["boxes"] = json::array();
    for (const BBoxAnnotation& b : s.boxes)
      rec["boxes"].push_back({{"class_id", b.class_id},
                              {"x_l", b.x_l},
                              {"y_l", b.y_l},
                              {"x_h", b.x_h},
                              {"y_h", b.y_h}});
    manifest["samples"].push_back(rec);
  }
  const std::string mpath = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream os(mpath);
  if (!os) throw DataError("cannot write " + mpath);
  os << manifest.dump(2) << "\n";
  return mpath;
}

std::vector<Sample> load_synth_manifest(const std::string& manifest_path,
                                        bool load_images) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw DataError("cannot open manifest " + manifest_path);
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw DataError(strf("bad manifest %s: %s", manifest_path.c_str(), e.what()));
  }
  if (manifest.value("format", "") != "oass-synth-v1")
    throw DataError("unrecognized manifest format in " + manifest_path);

  const fs::path dir = fs::path(manifest_path).parent_path();
  const int size = manifest.value("image_size", 0);
  std::vector<Sample> out;
  for (const json& rec : manifest["samples"]) {
    Sample s;
    s.id = rec.at("id").get<std::string>();
    s.labels.bits = rec.at("labels").get<std::vector<uint8_t>>();
    for (const json& jb : rec.at("boxes")) {
      BBoxAnnotation b;
      b.class_id = jb.at("class_id").get<int>();
      b.x_l = jb.at("x_l").get<double>();
      b.y_l = jb.at("y_l").get<double>();
      b.x_h = jb.at("x_h").get<double>();
      b.y_h = jb.at("y_h").get<double>();
      b.image_w = size;
      b.image_h = size;
      s.boxes.push_back(b);
    }
    if (load_images)
      s.image.data = rgb_to_tensor(read_bmp((dir / rec.at("image").get<std::string>()).string()));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace oass
