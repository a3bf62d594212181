// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "oass/checkpoint.hpp"
#include "oass/config.hpp"
#include "oass/imageio.hpp"
#include "oass/rng.hpp"

using namespace oass;

namespace {

namespace fs = std::filesystem;

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("bmp: 8-bit pixels survive a write/read round trip exactly") {
  Rng rng(131);
  RgbImage img(37, 23);  // odd width exercises row padding
  for (uint8_t& b : img.px) b = static_cast<uint8_t>(rng.uniform_int(0, 255));
  const std::string path = tmp_path("oass_rt.bmp");
  write_bmp(img, path);
  RgbImage back = read_bmp(path);
  REQUIRE(back.w == img.w);
  REQUIRE(back.h == img.h);
  CHECK(back.px == img.px);
  fs::remove(path);
}

TEST_CASE("bmp: bytes on disk are deterministic") {
  RgbImage img(16, 9);
  for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = static_cast<uint8_t>(i * 7);
  const std::string p1 = tmp_path("oass_d1.bmp"), p2 = tmp_path("oass_d2.bmp");
  write_bmp(img, p1);
  write_bmp(img, p2);
  CHECK(slurp(p1) == slurp(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("tensor/rgb conversion quantizes symmetrically") {
  Tensor t(3, 4, 5);
  Rng rng(132);
  for (double& v : t.v) v = rng.uniform();
  RgbImage img = tensor_to_rgb(t);
  Tensor back = rgb_to_tensor(img);
  REQUIRE(back.h == 4);
  REQUIRE(back.w == 5);
  for (size_t i = 0; i < t.v.size(); ++i)
    CHECK(std::fabs(back.v[i] - t.v[i]) <= 0.5 / 255.0 + 1e-12);
  // a second pass is the identity: quantization is idempotent
  RgbImage img2 = tensor_to_rgb(back);
  CHECK(img2.px == img.px);
}

TEST_CASE("checkpoint round-trips the full training state") {
  ModelConfig mc;
  mc.encoder = "tiny_cnn";
  mc.depth = 6;
  mc.stride = 4;
  mc.num_classes = 4;
  mc.csi = true;
  Rng rng(133);
  Model model = Model::create(mc, rng);
  EmaState ema = EmaState::init(model.encoder_params(), 0.97);
  for (double& t : ema.teacher) t += 0.01;
  ema.step = 42;
  AdamState adam = AdamState::init(model.params.size(), 3e-4);
  adam.t = 10;
  for (double& m : adam.m) m = rng.uniform(-1e-3, 1e-3);
  for (double& v : adam.v) v = rng.uniform(0.0, 1e-5);

  Checkpoint ck = snapshot(model, mc, ema, adam, 17);
  const std::string path = tmp_path("oass_ck.bin");
  save_checkpoint(ck, path);
  Checkpoint back = load_checkpoint(path);

  CHECK(back.model_cfg.encoder == "tiny_cnn");
  CHECK(back.model_cfg.depth == 6);
  CHECK(back.model_cfg.stride == 4);
  CHECK(back.model_cfg.num_classes == 4);
  CHECK(back.model_cfg.csi == true);
  CHECK(back.params == model.params);
  CHECK(back.ema.teacher == ema.teacher);
  CHECK(back.ema.decay == 0.97);
  CHECK(back.ema.step == 42);
  CHECK(back.adam.m == adam.m);
  CHECK(back.adam.v == adam.v);
  CHECK(back.adam.t == 10);
  CHECK(back.adam.lr == 3e-4);
  CHECK(back.epoch == 17);

  Model restored = restore_model(back);
  CHECK(restored.params == model.params);
  CHECK(restored.num_classes == 4);
  CHECK(restored.csi_enabled);
  fs::remove(path);
}

TEST_CASE("checkpoint loader rejects corrupt or truncated files") {
  ModelConfig mc;
  mc.encoder = "tiny_cnn";
  mc.depth = 4;
  mc.stride = 2;
  mc.num_classes = 2;
  Rng rng(134);
  Model model = Model::create(mc, rng);
  EmaState ema = EmaState::init(model.encoder_params(), 0.9);
  AdamState adam = AdamState::init(model.params.size(), 1e-3);
  const std::string path = tmp_path("oass_ck2.bin");
  save_checkpoint(snapshot(model, mc, ema, adam, 1), path);

  std::vector<char> bytes = slurp(path);

  // truncation
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  // magic corruption
  bytes[0] = 'X';
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  CHECK_THROWS_AS(load_checkpoint(tmp_path("oass_ck_missing.bin")), DataError);
  fs::remove(path);
}

TEST_CASE("restore rejects a parameter vector of the wrong length") {
  ModelConfig mc;
  mc.encoder = "tiny_cnn";
  mc.depth = 4;
  mc.stride = 2;
  mc.num_classes = 2;
  Rng rng(135);
  Model model = Model::create(mc, rng);
  EmaState ema = EmaState::init(model.encoder_params(), 0.9);
  AdamState adam = AdamState::init(model.params.size(), 1e-3);
  Checkpoint ck = snapshot(model, mc, ema, adam, 1);
  ck.params.pop_back();
  CHECK_THROWS_AS(restore_model(ck), DataError);
  ck = snapshot(model, mc, ema, adam, 1);
  ck.ema.teacher.push_back(0.0);
  CHECK_THROWS_AS(restore_model(ck), DataError);
}

TEST_CASE("run config parses overrides and rejects unknown keys") {
  RunConfig cfg = parse_run_config(R"({
    "model": {"depth": 24, "stride": 8, "num_classes": 5, "csi": true},
    "keypoint": {"strategy": "ctopk", "k": 3, "min_patch": 16},
    "train": {"epochs": 7, "lr": 0.002, "seed": 9},
    "data": {"kind": "synth"}
  })");
  CHECK(cfg.model.depth == 24);
  CHECK(cfg.model.stride == 8);
  CHECK(cfg.model.csi);
  CHECK(cfg.pipeline.keypoint.strategy == KeypointStrategy::CTopk);
  CHECK(cfg.pipeline.keypoint.k == 3);
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.train.lr == 0.002);
  CHECK(cfg.train.seed == 9);

  CHECK_THROWS_AS(parse_run_config(R"({"modle": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"depht": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"stride": 7}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"keypoint": {"strategy": "sideways"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"ema_decay": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("not json"), ConfigError);
}

TEST_CASE("config digest is stable, key-order free and value sensitive") {
  RunConfig a = parse_run_config(R"({"model": {"depth": 16, "stride": 4}})");
  RunConfig b = parse_run_config(R"({"model": {"stride": 4, "depth": 16}})");
  CHECK(config_digest(a) == config_digest(b));
  CHECK(config_digest(a).size() == 16);

  RunConfig c = parse_run_config(R"({"model": {"depth": 17, "stride": 4}})");
  CHECK(config_digest(a) != config_digest(c));

  // defaults serialize explicitly: an empty doc digests like stated defaults
  RunConfig d = parse_run_config("{}");
  RunConfig e;
  CHECK(config_digest(d) == config_digest(e));
}

TEST_CASE("canonical serialization re-parses to the same digest") {
  RunConfig cfg = parse_run_config(R"({
    "model": {"depth": 12, "csi": true},
    "keypoint": {"strategy": "max"},
    "loss": {"re_form": "mse"},
    "train": {"alpha_final": 0.05, "rampup_epochs": 40}
  })");
  const std::string canon = run_config_canonical(cfg);
  RunConfig back = parse_run_config(canon);
  CHECK(config_digest(back) == config_digest(cfg));
  CHECK(back.train.alpha_final == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(back.train.rampup_epochs == 40);
}
