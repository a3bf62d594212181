// SPDX-License-Identifier: Apache-2.0

#include "oass/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include "oass/common.hpp"

namespace oass {

namespace {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Deterministic epoch shuffle: seed and epoch fully determine the order.
std::vector<int> epoch_order(int n, uint64_t seed, int epoch) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).fork(0x5B0FFull + static_cast<uint64_t>(epoch));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  return order;
}

double mean_of(const std::map<int, double>& m) {
  if (m.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [k, v] : m) s += v;
  return s / static_cast<double>(m.size());
}

}  // namespace

LossBundle train_step(Model& model, EmaState& ema, AdamState& adam,
                      const std::vector<const Sample*>& batch,
                      const RampedAlphas& alphas, const PipelineConfig& cfg,
                      int threads, PipelineCounters* counters) {
  const int n = static_cast<int>(batch.size());
  require(n > 0, "train_step: empty batch");
  const size_t np = model.params.size();

  std::vector<std::vector<double>> grads(n, std::vector<double>(np, 0.0));
  std::vector<SampleForward> results(n);

  auto worker = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i)
      results[i] = sample_forward(model, ema, *batch[i], alphas, cfg, nullptr,
                                  &grads[i]);
  };
  const int nt = std::min(resolve_threads(threads), n);
  if (nt <= 1) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
      const int lo = t * chunk, hi = std::min(n, lo + chunk);
      if (lo < hi) pool.emplace_back(worker, lo, hi);
    }
    for (std::thread& th : pool) th.join();
  }

  // serial index-order reduction keeps the sum bitwise reproducible
  std::vector<double> grad(np, 0.0);
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i)
    for (size_t p = 0; p < np; ++p) grad[p] += grads[i][p];
  for (double& g : grad) g *= inv_n;

  LossBundle agg;
  std::map<int, int> re_n, pcls_n;
  for (int i = 0; i < n; ++i) {
    const LossBundle& b = results[i].losses;
    if (!std::isfinite(b.total))
      throw NumericalError(strf("non-finite loss on sample '%s'",
                                batch[i]->id.c_str()));
    agg.cls += b.cls * inv_n;
    agg.total += b.total * inv_n;
    agg.num_positive += b.num_positive;
    for (const auto& [c, v] : b.per_class_re) {
      agg.per_class_re[c] += v;
      ++re_n[c];
    }
    for (const auto& [c, v] : b.per_class_pcls) {
      agg.per_class_pcls[c] += v;
      ++pcls_n[c];
    }
    if (counters) {
      counters->keypoints_computed += results[i].counters.keypoints_computed;
      counters->patch_encodes += results[i].counters.patch_encodes;
      counters->fallbacks += results[i].counters.fallbacks;
    }
  }
  for (auto& [c, v] : agg.per_class_re) v /= re_n[c];
  for (auto& [c, v] : agg.per_class_pcls) v /= pcls_n[c];

  adam_step(adam, model.params, grad);
  ema_update(ema, model.encoder_params());
  return agg;
}

TrainResult train_model(const RunConfig& cfg, const std::vector<Sample>& train_set,
                        std::ostream* log, const Checkpoint* resume) {
  require(!train_set.empty(), "train_model: empty training set");
  namespace fs = std::filesystem;

  Rng rng(cfg.train.seed);
  TrainResult res;
  int start_epoch = 0;
  if (resume) {
    res.model = restore_model(*resume);
    if (res.model.num_classes != cfg.model.num_classes ||
        res.model.csi_enabled != cfg.model.csi)
      throw ConfigError("resume checkpoint does not match the model config");
    res.ema = resume->ema;
    res.adam = resume->adam;
    if (res.adam.m.size() != res.model.params.size())
      res.adam = AdamState::init(res.model.params.size(), cfg.train.lr);
    start_epoch = resume->epoch;
  } else {
    res.model = Model::create(cfg.model, rng);
    res.ema = EmaState::init(res.model.encoder_params(), cfg.train.ema_decay);
    res.adam = AdamState::init(res.model.params.size(), cfg.train.lr);
  }
  for (const Sample& s : train_set)
    require(s.labels.size() == res.model.num_classes,
            "train_model: sample label count differs from model");

  const LossWeights weights = loss_weights(cfg);
  const int n = static_cast<int>(train_set.size());
  const bool augment_on = cfg.data.augment.enabled;

  if (!cfg.train.out_dir.empty()) fs::create_directories(cfg.train.out_dir);

  for (int epoch = start_epoch; epoch < cfg.train.epochs; ++epoch) {
    const RampedAlphas alphas = rampup_weight(epoch, weights);
    const std::vector<int> order = epoch_order(n, cfg.train.seed, epoch);

    EpochStats st;
    st.epoch = epoch;
    st.alpha = alphas.alpha_re;
    int batches = 0;

    for (int off = 0; off < n; off += cfg.train.batch_size) {
      const int hi = std::min(n, off + cfg.train.batch_size);
      // augmented copies live for one step; forked streams keep the bytes
      // independent of threading and batch boundaries
      std::vector<Sample> storage;
      std::vector<const Sample*> batch;
      storage.reserve(hi - off);
      for (int i = off; i < hi; ++i) {
        const Sample& src = train_set[order[i]];
        if (augment_on) {
          Rng ar = Rng(cfg.train.seed)
                       .fork(0xA06ull * (epoch + 1) + static_cast<uint64_t>(order[i]));
          storage.push_back(augment(src, cfg.data.augment, ar));
        }
      }
      for (int i = off; i < hi; ++i)
        batch.push_back(augment_on ? &storage[i - off] : &train_set[order[i]]);

      LossBundle b;
      try {
        b = train_step(res.model, res.ema, res.adam, batch, alphas,
                       cfg.pipeline, cfg.train.threads, &res.counters);
      } catch (const NumericalError& e) {
        throw NumericalError(strf("epoch %d batch %d: %s", epoch, batches, e.what()));
      }
      st.cls += b.cls;
      st.total += b.total;
      st.mean_re += mean_of(b.per_class_re);
      st.mean_pcls += mean_of(b.per_class_pcls);
      ++batches;
    }
    st.cls /= batches;
    st.total /= batches;
    st.mean_re /= batches;
    st.mean_pcls /= batches;
    res.history.push_back(st);

    if (log)
      *log << strf("epoch %3d  cls %.4f  re %.4f  pcls %.4f  total %.4f  alpha %.4f\n",
                   st.epoch, st.cls, st.mean_re, st.mean_pcls, st.total, st.alpha);

    if (!cfg.train.out_dir.empty()) {
      write_metrics_csv(res.history, (fs::path(cfg.train.out_dir) / "metrics.csv").string());
      const bool last = epoch + 1 == cfg.train.epochs;
      if ((epoch + 1) % cfg.train.checkpoint_every == 0 || last) {
        const Checkpoint ck =
            snapshot(res.model, cfg.model, res.ema, res.adam, epoch + 1);
        save_checkpoint(ck, (fs::path(cfg.train.out_dir) /
                             strf("epoch_%04d.ckpt", epoch + 1)).string());
        if (last)
          save_checkpoint(ck, (fs::path(cfg.train.out_dir) / "final.ckpt").string());
      }
    }
  }
  return res;
}

void write_metrics_csv(const std::vector<EpochStats>& history,
                       const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "epoch,cls,mean_re,mean_pcls,total,alpha\n";
  for (const EpochStats& st : history)
    os << strf("%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", st.epoch, st.cls, st.mean_re,
               st.mean_pcls, st.total, st.alpha);
}

}  // namespace oass
