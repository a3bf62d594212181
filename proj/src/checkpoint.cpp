// SPDX-License-Identifier: Apache-2.0

#include "oass/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "oass/common.hpp"

namespace oass {

namespace {

constexpr char kMagic[8] = {'O', 'A', 'S', 'S', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put(std::ostream& os, T v) {
  put_bytes(os, &v, sizeof(v));
}

void put_str(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
  put<uint64_t>(os, v.size());
  put_bytes(os, v.data(), v.size() * sizeof(double));
}

void get_bytes(std::istream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n)
    throw DataError(strf("checkpoint truncated while reading %s", what));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v;
  get_bytes(is, &v, sizeof(v), what);
  return v;
}

std::string get_str(std::istream& is, const char* what) {
  const uint32_t n = get<uint32_t>(is, what);
  if (n > 4096) throw DataError(strf("checkpoint: implausible %s length", what));
  std::string s(n, '\0');
  get_bytes(is, s.data(), n, what);
  return s;
}

std::vector<double> get_vec(std::istream& is, const char* what) {
  const uint64_t n = get<uint64_t>(is, what);
  if (n > (1ULL << 32)) throw DataError(strf("checkpoint: implausible %s size", what));
  std::vector<double> v(n);
  get_bytes(is, v.data(), n * sizeof(double), what);
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path);
  put_bytes(os, kMagic, sizeof(kMagic));
  put<uint32_t>(os, kVersion);
  put_str(os, ck.model_cfg.encoder);
  put<int32_t>(os, ck.model_cfg.depth);
  put<int32_t>(os, ck.model_cfg.stride);
  put<int32_t>(os, ck.model_cfg.num_classes);
  put<uint8_t>(os, ck.model_cfg.csi ? 1 : 0);
  put_vec(os, ck.params);
  put<double>(os, ck.ema.decay);
  put<int64_t>(os, ck.ema.step);
  put_vec(os, ck.ema.teacher);
  put<double>(os, ck.adam.lr);
  put<double>(os, ck.adam.beta1);
  put<double>(os, ck.adam.beta2);
  put<double>(os, ck.adam.eps);
  put<int64_t>(os, ck.adam.t);
  put_vec(os, ck.adam.m);
  put_vec(os, ck.adam.v);
  put<int32_t>(os, ck.epoch);
  if (!os) throw DataError("write failure on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  get_bytes(is, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(path + " is not a checkpoint file");
  const uint32_t version = get<uint32_t>(is, "version");
  if (version != kVersion)
    throw DataError(strf("unsupported checkpoint version %u", version));

  Checkpoint ck;
  ck.model_cfg.encoder = get_str(is, "encoder name");
  ck.model_cfg.depth = get<int32_t>(is, "depth");
  ck.model_cfg.stride = get<int32_t>(is, "stride");
  ck.model_cfg.num_classes = get<int32_t>(is, "num_classes");
  ck.model_cfg.csi = get<uint8_t>(is, "csi flag") != 0;
  ck.params = get_vec(is, "parameters");
  ck.ema.decay = get<double>(is, "ema decay");
  ck.ema.step = get<int64_t>(is, "ema step");
  ck.ema.teacher = get_vec(is, "teacher parameters");
  ck.adam.lr = get<double>(is, "adam lr");
  ck.adam.beta1 = get<double>(is, "adam beta1");
  ck.adam.beta2 = get<double>(is, "adam beta2");
  ck.adam.eps = get<double>(is, "adam eps");
  ck.adam.t = get<int64_t>(is, "adam step");
  ck.adam.m = get_vec(is, "adam m");
  ck.adam.v = get_vec(is, "adam v");
  ck.epoch = get<int32_t>(is, "epoch");
  return ck;
}

Model restore_model(const Checkpoint& ck) {
  Rng rng(0);
  Model model = Model::create(ck.model_cfg, rng);
  if (model.params.size() != ck.params.size())
    throw DataError(strf("checkpoint parameter count %zu does not match "
                         "architecture (%zu expected)",
                         ck.params.size(), model.params.size()));
  if (!ck.ema.teacher.empty() &&
      ck.ema.teacher.size() != static_cast<size_t>(model.layout.encoder_count))
    throw DataError("checkpoint teacher parameter count mismatch");
  model.params = ck.params;
  return model;
}

Checkpoint snapshot(const Model& model, const ModelConfig& cfg,
                    const EmaState& ema, const AdamState& adam, int epoch) {
  Checkpoint ck;
  ck.model_cfg = cfg;
  ck.params = model.params;
  ck.ema = ema;
  ck.adam = adam;
  ck.epoch = epoch;
  return ck;
}

}  // namespace oass
