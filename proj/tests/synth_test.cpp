// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "oass/data.hpp"
#include "oass/synth.hpp"

using namespace oass;

namespace {

SynthConfig quick_cfg(int images = 60) {
  SynthConfig cfg;
  cfg.num_images = images;
  cfg.image_size = 96;
  cfg.half_lo = 8.0;
  cfg.half_hi = 14.0;
  cfg.shift_lo = 10.0;
  cfg.shift_hi = 30.0;
  return cfg;
}

}  // namespace

TEST_CASE("placement variance closed form") {
  SynthConfig cfg;
  cfg.shift_lo = 10.0;
  cfg.shift_hi = 34.0;
  // (34^3 - 10^3) / (3 * 24) = 38304 / 72
  CHECK(synth_placement_variance(cfg) == doctest::Approx(532.0).epsilon(1e-12));
  cfg.shift_lo = 0.0;
  cfg.shift_hi = 12.0;
  CHECK(synth_placement_variance(cfg) == doctest::Approx(48.0).epsilon(1e-12));
}

TEST_CASE("synthetic dataset is bitwise deterministic in the seed") {
  SynthConfig cfg = quick_cfg(20);
  std::vector<Sample> a = synth_dataset(cfg, 7);
  std::vector<Sample> b = synth_dataset(cfg, 7);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.data.v == b[i].image.data.v);
    CHECK(a[i].labels.bits == b[i].labels.bits);
    REQUIRE(a[i].boxes.size() == b[i].boxes.size());
    for (size_t j = 0; j < a[i].boxes.size(); ++j) {
      CHECK(a[i].boxes[j].x_l == b[i].boxes[j].x_l);
      CHECK(a[i].boxes[j].y_h == b[i].boxes[j].y_h);
    }
  }
  std::vector<Sample> c = synth_dataset(cfg, 8);
  bool any_diff = false;
  for (size_t i = 0; i < a.size() && !any_diff; ++i)
    any_diff = a[i].image.data.v != c[i].image.data.v;
  CHECK(any_diff);
}

TEST_CASE("every box stays inside the image and matches its label") {
  SynthConfig cfg = quick_cfg(80);
  std::vector<Sample> ds = synth_dataset(cfg, 3);
  REQUIRE(static_cast<int>(ds.size()) == 80);
  for (const Sample& s : ds) {
    CHECK(s.image.width() == 96);
    CHECK(s.image.height() == 96);
    REQUIRE_FALSE(s.boxes.empty());
    CHECK(static_cast<int>(s.boxes.size()) >= cfg.min_objects);
    CHECK(static_cast<int>(s.boxes.size()) <= cfg.max_objects);
    LabelVector from_boxes;
    from_boxes.bits.assign(cfg.num_classes, 0);
    for (const BBoxAnnotation& b : s.boxes) {
      CHECK(b.x_l >= 0.0);
      CHECK(b.x_h <= 96.0);
      CHECK(b.y_l >= 0.0);
      CHECK(b.y_h <= 96.0);
      CHECK(b.x_l < b.x_h);
      CHECK(b.y_l < b.y_h);
      from_boxes.bits[b.class_id] = 1;
    }
    CHECK(from_boxes.bits == s.labels.bits);
    for (double v : s.image.data.v) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("object classes within one image are distinct") {
  std::vector<Sample> ds = synth_dataset(quick_cfg(60), 5);
  for (const Sample& s : ds) {
    std::vector<int> seen(5, 0);
    for (const BBoxAnnotation& b : s.boxes) {
      CHECK(seen[b.class_id] == 0);
      seen[b.class_id] = 1;
    }
  }
}

TEST_CASE("empirical placement variance approaches the closed form") {
  SynthConfig cfg = quick_cfg(400);
  cfg.min_objects = 1;
  cfg.max_objects = 2;
  std::vector<Sample> ds = synth_dataset(cfg, 11);
  auto stats = shift_statistics(ds, cfg.image_size);
  const double want = synth_placement_variance(cfg);
  int checked = 0;
  for (const auto& [cls, cs] : stats.per_class) {
    if (cs.count < 80) continue;  // too few boxes to bound the estimator
    ++checked;
    CHECK(cs.var_dx == doctest::Approx(want).epsilon(0.25));
    CHECK(std::fabs(cs.mean_dx) < 6.0);  // symmetric signs
  }
  CHECK(checked >= 3);
}

TEST_CASE("manifest round-trips boxes, labels and image bytes") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "oass_synth_rt").string();
  fs::remove_all(dir);
  SynthConfig cfg = quick_cfg(6);
  std::vector<Sample> ds = synth_dataset(cfg, 9);
  const std::string manifest = write_synth_dataset(ds, cfg, dir);
  CHECK(fs::exists(manifest));

  std::vector<Sample> back = load_synth_manifest(manifest, true);
  REQUIRE(back.size() == ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(back[i].id == ds[i].id);
    CHECK(back[i].labels.bits == ds[i].labels.bits);
    REQUIRE(back[i].boxes.size() == ds[i].boxes.size());
    for (size_t j = 0; j < ds[i].boxes.size(); ++j) {
      CHECK(back[i].boxes[j].class_id == ds[i].boxes[j].class_id);
      CHECK(back[i].boxes[j].x_l == doctest::Approx(ds[i].boxes[j].x_l).epsilon(1e-9));
    }
    // pixels pass through 8-bit quantization once
    REQUIRE(back[i].image.data.v.size() == ds[i].image.data.v.size());
    double max_err = 0.0;
    for (size_t k = 0; k < ds[i].image.data.v.size(); ++k)
      max_err = std::max(max_err,
                         std::fabs(back[i].image.data.v[k] - ds[i].image.data.v[k]));
    CHECK(max_err <= 0.5 / 255.0 + 1e-9);
  }

  std::vector<Sample> light = load_synth_manifest(manifest, false);
  CHECK(light[0].image.data.v.empty());
  fs::remove_all(dir);
}

TEST_CASE("config validation rejects impossible placements") {
  SynthConfig cfg = quick_cfg();
  cfg.shift_hi = 60.0;  // 60 + 14 >= 96/2
  CHECK_THROWS_AS(synth_dataset(cfg, 1), DataError);
  cfg = quick_cfg();
  cfg.image_size = 95;
  CHECK_THROWS_AS(synth_dataset(cfg, 1), DataError);
  cfg = quick_cfg();
  cfg.num_classes = 9;
  CHECK_THROWS_AS(synth_dataset(cfg, 1), DataError);
  cfg = quick_cfg();
  cfg.shift_lo = 30.0;
  cfg.shift_hi = 10.0;
  CHECK_THROWS_AS(synth_dataset(cfg, 1), DataError);
}
