#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdee/tensor.hpp"

namespace cdee {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t n = 0) : classes(n), counts(n * n, 0) {}

  std::uint64_t& at(std::size_t truth, std::size_t predicted) {
    return counts[truth * classes + predicted];
  }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * classes + predicted];
  }
  std::uint64_t total() const;
  std::uint64_t true_positives(std::size_t c) const { return at(c, c); }
  std::uint64_t false_positives(std::size_t c) const;
  std::uint64_t false_negatives(std::size_t c) const;
  std::uint64_t support(std::size_t c) const;
};

ConfusionMatrix confusion(std::span<const int> true_labels,
                          std::span<const int> predicted_labels,
                          std::size_t classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct AggregateMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsSummary {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  AggregateMetrics micro;  // pooled TP/FP/FN over classes
  AggregateMetrics macro;  // unweighted mean over classes
  // One message per ratio whose denominator was zero (reported as 0).
  std::vector<std::string> warnings;
};

MetricsSummary summary(const ConfusionMatrix& matrix);

struct RocCurve {
  std::vector<double> thresholds;  // descending, first is +infinity
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
};

// One-vs-rest ROC of `scores` for samples labelled `positive_class`.
// Thresholds sweep the distinct scores; a sample is positive when its score
// is >= the threshold. AUC is the trapezoidal area.
RocCurve roc_curve(std::span<const int> true_labels,
                   std::span<const double> scores, int positive_class);

// Binary form: nonzero is_positive[i] marks positives.
RocCurve roc_curve_binary(std::span<const std::uint8_t> is_positive,
                          std::span<const double> scores);

double trapezoid_auc(std::span<const double> fpr, std::span<const double> tpr);

inline constexpr std::size_t kMacroGridPoints = 101;

struct MulticlassRoc {
  std::vector<RocCurve> per_class;
  RocCurve micro;  // pooled (label == c, score_c) pairs over all classes
  RocCurve macro;  // mean TPR of the per-class curves on a shared FPR grid
};

// `scores` is (n, classes), one probability row per sample.
MulticlassRoc multiclass_roc(std::span<const int> true_labels,
                             const Tensor& scores);

// Linear interpolation of a ROC curve at `x`, taking the highest TPR where
// the curve is vertical.
double interpolate_tpr(const RocCurve& curve, double x);

}  // namespace cdee
