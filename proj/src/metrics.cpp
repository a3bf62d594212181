// SPDX-License-Identifier: Apache-2.0

#include "oass/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>

#include "oass/common.hpp"
#include "oass/csi.hpp"
#include "oass/training.hpp"

namespace oass {

double average_precision(const std::vector<double>& scores,
                         const std::vector<uint8_t>& labels, ApMode mode) {
  require(scores.size() == labels.size(), "average_precision: length mismatch");
  const int n = static_cast<int>(scores.size());
  int num_pos = 0;
  for (uint8_t y : labels) num_pos += (y != 0);
  if (num_pos == 0) throw DataError("average_precision: no positive instances");
  for (double s : scores)
    if (!std::isfinite(s)) throw DataError("average_precision: non-finite score");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });

  if (mode == ApMode::AllPoint) {
    double sum = 0.0;
    int hits = 0;
    for (int rank = 1; rank <= n; ++rank)
      if (labels[order[rank - 1]]) {
        ++hits;
        sum += static_cast<double>(hits) / rank;
      }
    return sum / num_pos;
  }

  // eleven-point: max precision over ranks whose recall meets each threshold
  std::vector<double> prec, rec;
  int hits = 0;
  for (int rank = 1; rank <= n; ++rank)
    if (labels[order[rank - 1]]) {
      ++hits;
      prec.push_back(static_cast<double>(hits) / rank);
      rec.push_back(static_cast<double>(hits) / num_pos);
    }
  double sum = 0.0;
  for (int t = 0; t <= 10; ++t) {
    const double thr = t / 10.0;
    double best = 0.0;
    for (size_t i = 0; i < prec.size(); ++i)
      if (rec[i] >= thr - 1e-12) best = std::max(best, prec[i]);
    sum += best;
  }
  return sum / 11.0;
}

bool identical(const APReport& a, const APReport& b) {
  if (a.per_class_ap.size() != b.per_class_ap.size()) return false;
  if (!a.per_class_ap.empty() &&
      std::memcmp(a.per_class_ap.data(), b.per_class_ap.data(),
                  a.per_class_ap.size() * sizeof(double)) != 0)
    return false;
  return std::memcmp(&a.map, &b.map, sizeof(double)) == 0 &&
         a.num_images == b.num_images && a.config_digest == b.config_digest;
}

APReport evaluate(const Model& model, const std::vector<Sample>& samples,
                  const std::string& config_digest, ApMode mode) {
  require(!samples.empty(), "evaluate: empty dataset");
  const int C = model.num_classes;

  std::vector<std::vector<double>> scores(C);
  std::vector<std::vector<uint8_t>> truth(C);
  for (const Sample& s : samples) {
    if (s.labels.size() != C)
      throw DataError(strf("evaluate: sample %s has %d labels, model expects %d",
                           s.id.c_str(), s.labels.size(), C));
    FeatureMap f = extract_features(model, s.image);
    std::vector<double> logits;
    if (model.csi_enabled) {
      ClassActivationMaps cams = compute_cams(f, model);
      logits = csi_head(generate_csi(f, cams), model);
    } else {
      logits = classify(f, model);
    }
    for (int c = 0; c < C; ++c) {
      scores[c].push_back(sigmoid(logits[c]));
      truth[c].push_back(s.labels.bits[c]);
    }
  }

  APReport rep;
  rep.num_images = static_cast<int>(samples.size());
  rep.config_digest = config_digest;
  rep.per_class_ap.resize(C);
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < C; ++c) {
    bool any = false;
    for (uint8_t y : truth[c]) any |= (y != 0);
    if (!any) {
      std::cerr << "warning: class " << c << " has no positives, AP skipped\n";
      rep.per_class_ap[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    rep.per_class_ap[c] = average_precision(scores[c], truth[c], mode);
    sum += rep.per_class_ap[c];
    ++defined;
  }
  require(defined > 0, "evaluate: every class lacks positives");
  rep.map = sum / defined;
  return rep;
}

std::vector<double> per_class_improvement(const APReport& a, const APReport& b) {
  if (a.per_class_ap.size() != b.per_class_ap.size())
    throw DataError("per_class_improvement: class-count mismatch");
  std::vector<double> delta(a.per_class_ap.size());
  for (size_t c = 0; c < delta.size(); ++c)
    delta[c] = b.per_class_ap[c] - a.per_class_ap[c];
  return delta;
}

void write_ap_csv(const APReport& report, const std::string& path,
                  const std::vector<std::string>& class_names) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "class,ap\n";
  for (size_t c = 0; c < report.per_class_ap.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : strf("class%zu", c);
    if (std::isnan(report.per_class_ap[c]))
      os << name << ",skipped\n";
    else
      os << name << "," << strf("%.17g", report.per_class_ap[c]) << "\n";
  }
  os << "mAP," << strf("%.17g", report.map) << "\n";
  os << "num_images," << report.num_images << "\n";
  os << "config_digest," << report.config_digest << "\n";
}

}  // namespace oass
