#include "msfcn/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "msfcn/error.hpp"

namespace msfcn::eval {

ConfusionMatrix::ConfusionMatrix(int classes) : k_(classes) {
  if (classes < 1) throw Error(Errc::invalid_config, "confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t s = 0;
  for (int j = 0; j < k_; ++j) s += at(truth, j);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int pred) const {
  std::uint64_t s = 0;
  for (int i = 0; i < k_; ++i) s += at(i, pred);
  return s;
}

void ConfusionMatrix::accumulate(const LabelMask& truth, const LabelMask& pred) {
  if (truth.width != pred.width || truth.height != pred.height) {
    throw Error(Errc::shape_mismatch, "truth " + std::to_string(truth.width) + "x" + std::to_string(truth.height) +
                                          " vs prediction " + std::to_string(pred.width) + "x" +
                                          std::to_string(pred.height));
  }
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const int t = truth.labels[i];
    const int p = pred.labels[i];
    if (t >= k_ || p >= k_) throw Error(Errc::decode, "label value outside the class range");
    ++counts_[static_cast<std::size_t>(t) * k_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw Error(Errc::shape_mismatch, "confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void to_json(nlohmann::json& j, const ConfusionMatrix& cm) {
  j = nlohmann::json::array();
  for (int i = 0; i < cm.classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < cm.classes(); ++k) row.push_back(cm.at(i, k));
    j.push_back(std::move(row));
  }
}

MetricBundle metrics(const ConfusionMatrix& cm) {
  const int k = cm.classes();
  const std::uint64_t n = cm.total();
  if (n == 0) throw Error(Errc::empty_matrix, "confusion matrix is empty");
  MetricBundle m;
  m.per_class_iou.assign(k, std::nullopt);
  double diag = 0.0, acc_sum = 0.0, iou_sum = 0.0, fw_sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double nii = static_cast<double>(cm.at(i, i));
    const double ti = static_cast<double>(cm.row_sum(i));
    const double union_i = ti + static_cast<double>(cm.col_sum(i)) - nii;
    diag += nii;
    if (union_i > 0.0) m.per_class_iou[i] = nii / union_i;
    if (ti > 0.0) {
      ++m.classes_present;
      acc_sum += nii / ti;
      iou_sum += nii / union_i;
      fw_sum += ti * nii / union_i;
    }
  }
  const double total = static_cast<double>(n);
  m.pa = diag / total;
  m.mpa = acc_sum / m.classes_present;
  m.miou = iou_sum / m.classes_present;
  m.fwiou = fw_sum / total;
  m.score = (m.mpa + m.miou) / 2.0;
  return m;
}

void to_json(nlohmann::json& j, const MetricBundle& m) {
  nlohmann::json iou = nlohmann::json::object();
  for (std::size_t i = 0; i < m.per_class_iou.size(); ++i) {
    const std::string name = i < kAllClasses.size() ? std::string(class_name(kAllClasses[i])) : std::to_string(i);
    iou[name] = m.per_class_iou[i] ? nlohmann::json(*m.per_class_iou[i]) : nlohmann::json(nullptr);
  }
  j = {{"pa", m.pa},       {"mpa", m.mpa},     {"miou", m.miou},
       {"fwiou", m.fwiou}, {"score", m.score}, {"classes_present", m.classes_present},
       {"per_class_iou", iou}};
}

EvaluationReport evaluate(const std::vector<std::pair<std::string, ConfusionMatrix>>& slides) {
  if (slides.empty()) throw Error(Errc::empty_matrix, "no slides to evaluate");
  EvaluationReport r;
  r.pooled_matrix = ConfusionMatrix(slides.front().second.classes());
  for (const auto& [id, cm] : slides) {
    r.per_slide.emplace_back(id, metrics(cm));
    r.pooled_matrix.merge(cm);
  }
  r.pooled = metrics(r.pooled_matrix);
  const double n = static_cast<double>(r.per_slide.size());
  const int k = r.pooled_matrix.classes();
  r.mean.per_class_iou.assign(k, std::nullopt);
  std::vector<int> iou_count(k, 0);
  std::vector<double> iou_sum(k, 0.0);
  for (const auto& [id, m] : r.per_slide) {
    r.mean.pa += m.pa / n;
    r.mean.mpa += m.mpa / n;
    r.mean.miou += m.miou / n;
    r.mean.fwiou += m.fwiou / n;
    r.mean.classes_present = std::max(r.mean.classes_present, m.classes_present);
    for (int c = 0; c < k; ++c) {
      if (m.per_class_iou[c]) {
        iou_sum[c] += *m.per_class_iou[c];
        ++iou_count[c];
      }
    }
  }
  for (int c = 0; c < k; ++c) {
    if (iou_count[c] > 0) r.mean.per_class_iou[c] = iou_sum[c] / iou_count[c];
  }
  r.mean.score = (r.mean.mpa + r.mean.miou) / 2.0;
  return r;
}

void to_json(nlohmann::json& j, const EvaluationReport& r) {
  nlohmann::json slides = nlohmann::json::array();
  for (const auto& [id, m] : r.per_slide) {
    nlohmann::json s = m;
    s["slide_id"] = id;
    slides.push_back(std::move(s));
  }
  j = {{"per_slide", slides}, {"mean_of_slides", r.mean}, {"pooled", r.pooled}, {"confusion", r.pooled_matrix}};
  if (r.wall_time_s) j["wall_time_s"] = *r.wall_time_s;
}

std::string format_table(const EvaluationReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %8s\n", "slide", "PA", "mPA", "mIoU", "fwIoU", "score");
  os << line;
  auto row = [&](const std::string& name, const MetricBundle& m) {
    std::snprintf(line, sizeof line, "%-16s %8.4f %8.4f %8.4f %8.4f %8.4f\n", name.c_str(), m.pa, m.mpa, m.miou,
                  m.fwiou, m.score);
    os << line;
  };
  for (const auto& [id, m] : r.per_slide) row(id, m);
  row("mean", r.mean);
  row("pooled", r.pooled);
  if (r.wall_time_s) {
    std::snprintf(line, sizeof line, "wall time %.3f s\n", *r.wall_time_s);
    os << line;
  }
  return os.str();
}

double free_marginal_kappa(double p_observed, int categories) {
  if (categories < 2) throw Error(Errc::degenerate_table, "kappa needs at least two categories");
  const double chance = 1.0 / categories;
  return (p_observed - chance) / (1.0 - chance);
}

KappaResult randolph_kappa(const RaterTable& table) {
  const int q = table.categories;
  if (q < 2) throw Error(Errc::degenerate_table, "kappa needs at least two categories");
  if (table.assignments.empty()) throw Error(Errc::degenerate_table, "rater table has no cases");
  const std::size_t raters = table.assignments.front().size();
  if (raters < 2) throw Error(Errc::degenerate_table, "kappa needs at least two raters");
  std::uint64_t agree = 0;
  std::vector<std::uint64_t> n_ij(q);
  for (const auto& row : table.assignments) {
    if (row.size() != raters) throw Error(Errc::degenerate_table, "every case needs the same number of raters");
    std::fill(n_ij.begin(), n_ij.end(), 0);
    for (int a : row) {
      if (a < 1 || a > q) throw Error(Errc::degenerate_table, "assignment outside 1..q");
      ++n_ij[a - 1];
    }
    for (auto c : n_ij) agree += c * (c == 0 ? 0 : c - 1);
  }
  const double denom = static_cast<double>(table.assignments.size()) * raters * (raters - 1);
  KappaResult r;
  r.p_observed = static_cast<double>(agree) / denom;
  r.kappa = free_marginal_kappa(r.p_observed, q);
  return r;
}

}  // namespace msfcn::eval
