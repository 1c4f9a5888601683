#pragma once
// Direct-formula metric oracle over a dense count matrix.

#include <cmath>
#include <random>
#include <vector>

#include "msfcn/metrics.hpp"

namespace msfcn::testing {

struct OracleMetrics {
  double pa, mpa, miou, fwiou, score;
};

inline OracleMetrics oracle_metrics(const std::vector<std::vector<double>>& n) {
  const std::size_t k = n.size();
  std::vector<double> t(k, 0.0), col(k, 0.0);
  double total = 0.0, diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      t[i] += n[i][j];
      col[j] += n[i][j];
      total += n[i][j];
    }
    diag += n[i][i];
  }
  double acc = 0.0, iou = 0.0, fw = 0.0;
  int present = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (t[i] == 0.0) continue;
    ++present;
    acc += n[i][i] / t[i];
    const double u = n[i][i] / (t[i] + col[i] - n[i][i]);
    iou += u;
    fw += t[i] * u;
  }
  OracleMetrics m{};
  m.pa = diag / total;
  m.mpa = acc / present;
  m.miou = iou / present;
  m.fwiou = fw / total;
  m.score = (m.mpa + m.miou) / 2.0;
  return m;
}

// Random 5x5 matrix; about one in five rows is left empty.
inline eval::ConfusionMatrix random_matrix(std::mt19937_64& rng, std::vector<std::vector<double>>& dense) {
  eval::ConfusionMatrix cm(5);
  dense.assign(5, std::vector<double>(5, 0.0));
  bool any = false;
  for (int i = 0; i < 5; ++i) {
    if (rng() % 5 == 0 && (i < 4 || any)) continue;
    for (int j = 0; j < 5; ++j) {
      const std::uint64_t v = rng() % (i == j ? 100000 : 20000);
      cm.at(i, j) = v;
      dense[i][j] = static_cast<double>(v);
    }
    cm.at(i, i) += 1;
    dense[i][i] += 1.0;
    any = true;
  }
  return cm;
}

inline double worst_metric_error(const eval::MetricBundle& got, const OracleMetrics& want) {
  return std::max({std::abs(got.pa - want.pa), std::abs(got.mpa - want.mpa), std::abs(got.miou - want.miou),
                   std::abs(got.fwiou - want.fwiou), std::abs(got.score - want.score)});
}

}  // namespace msfcn::testing
