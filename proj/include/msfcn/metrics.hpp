#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msfcn/raster.hpp"

namespace msfcn::eval {

// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = kNumClasses);

  int classes() const noexcept { return k_; }
  std::uint64_t& at(int truth, int pred) { return counts_[static_cast<std::size_t>(truth) * k_ + pred]; }
  std::uint64_t at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth) * k_ + pred]; }
  std::uint64_t total() const noexcept;
  std::uint64_t row_sum(int truth) const;
  std::uint64_t col_sum(int pred) const;

  // Throws ShapeMismatch on differing sizes; labels must be < classes().
  void accumulate(const LabelMask& truth, const LabelMask& pred);
  void merge(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int k_;
  std::vector<std::uint64_t> counts_;
};

void to_json(nlohmann::json& j, const ConfusionMatrix& cm);

struct MetricBundle {
  double pa = 0.0;
  double mpa = 0.0;
  double miou = 0.0;
  double fwiou = 0.0;
  double score = 0.0;
  int classes_present = 0;  // classes with at least one ground-truth pixel
  // Empty for classes absent from both truth and prediction.
  std::vector<std::optional<double>> per_class_iou;
};

void to_json(nlohmann::json& j, const MetricBundle& m);

// Averages run over classes present in the ground truth. Throws EmptyMatrix.
MetricBundle metrics(const ConfusionMatrix& cm);

// Per-slide bundles, their mean, and the pooled-pixel bundle.
struct EvaluationReport {
  std::vector<std::pair<std::string, MetricBundle>> per_slide;
  MetricBundle mean;
  MetricBundle pooled;
  ConfusionMatrix pooled_matrix;
  std::optional<double> wall_time_s;
};

EvaluationReport evaluate(const std::vector<std::pair<std::string, ConfusionMatrix>>& slides);
void to_json(nlohmann::json& j, const EvaluationReport& r);

// Aligned-column table: one row per slide, then mean and pooled rows.
std::string format_table(const EvaluationReport& r);

struct RaterTable {
  int categories = 0;                          // q
  std::vector<std::vector<int>> assignments;  // [case][rater], values in 1..q
};

struct KappaResult {
  double p_observed = 0.0;
  double kappa = 0.0;
};

// Free-marginal multirater kappa. Throws DegenerateTable.
KappaResult randolph_kappa(const RaterTable& table);

// Kappa from a known observed agreement.
double free_marginal_kappa(double p_observed, int categories);

}  // namespace msfcn::eval
