#include "cdee/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cdee {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::false_positives(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes; ++t)
    if (t != c) s += at(t, c);
  return s;
}

std::uint64_t ConfusionMatrix::false_negatives(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes; ++p)
    if (p != c) s += at(c, p);
  return s;
}

std::uint64_t ConfusionMatrix::support(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes; ++p) s += at(c, p);
  return s;
}

ConfusionMatrix confusion(std::span<const int> true_labels,
                          std::span<const int> predicted_labels,
                          std::size_t classes) {
  if (true_labels.size() != predicted_labels.size()) {
    throw std::invalid_argument("confusion: " +
                                std::to_string(true_labels.size()) +
                                " true labels vs " +
                                std::to_string(predicted_labels.size()) +
                                " predictions");
  }
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int t = true_labels[i], p = predicted_labels[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= classes ||
        static_cast<std::size_t>(p) >= classes) {
      throw std::invalid_argument("confusion: label pair (" +
                                  std::to_string(t) + ", " +
                                  std::to_string(p) + ") outside [0, " +
                                  std::to_string(classes) + ")");
    }
    ++m.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return m;
}

namespace {

double ratio(double num, double den, const std::string& what,
             std::vector<std::string>& warnings) {
  if (den == 0.0) {
    warnings.push_back(what + " is undefined (zero denominator); reported as 0");
    return 0.0;
  }
  return num / den;
}

}  // namespace

MetricsSummary summary(const ConfusionMatrix& m) {
  const std::uint64_t total = m.total();
  if (m.classes == 0 || total == 0) {
    throw std::invalid_argument("summary: empty confusion matrix");
  }
  MetricsSummary s;
  double tp_sum = 0, fp_sum = 0, fn_sum = 0, correct = 0;
  for (std::size_t c = 0; c < m.classes; ++c) {
    const double tp = static_cast<double>(m.true_positives(c));
    const double fp = static_cast<double>(m.false_positives(c));
    const double fn = static_cast<double>(m.false_negatives(c));
    const std::string name = "class " + std::to_string(c);
    ClassMetrics cm;
    cm.precision = ratio(tp, tp + fp, name + " precision", s.warnings);
    cm.recall = ratio(tp, tp + fn, name + " recall", s.warnings);
    cm.f1 = ratio(2 * tp, 2 * tp + fp + fn, name + " f1", s.warnings);
    cm.support = m.support(c);
    s.per_class.push_back(cm);
    tp_sum += tp;
    fp_sum += fp;
    fn_sum += fn;
    correct += tp;
  }
  s.accuracy = correct / static_cast<double>(total);
  s.micro.precision = ratio(tp_sum, tp_sum + fp_sum, "micro precision", s.warnings);
  s.micro.recall = ratio(tp_sum, tp_sum + fn_sum, "micro recall", s.warnings);
  s.micro.f1 =
      ratio(2 * tp_sum, 2 * tp_sum + fp_sum + fn_sum, "micro f1", s.warnings);
  const double k = static_cast<double>(m.classes);
  for (const ClassMetrics& c : s.per_class) {
    s.macro.precision += c.precision / k;
    s.macro.recall += c.recall / k;
    s.macro.f1 += c.f1 / k;
  }
  return s;
}

double trapezoid_auc(std::span<const double> fpr, std::span<const double> tpr) {
  double area = 0.0;
  for (std::size_t i = 1; i < fpr.size(); ++i)
    area += (fpr[i] - fpr[i - 1]) * (tpr[i] + tpr[i - 1]) / 2.0;
  return area;
}

RocCurve roc_curve_binary(std::span<const std::uint8_t> is_positive,
                          std::span<const double> scores) {
  if (is_positive.size() != scores.size()) {
    throw std::invalid_argument("roc_curve: labels and scores differ in length");
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw std::invalid_argument("roc_curve: non-finite score at index " +
                                  std::to_string(i));
    }
    pos += is_positive[i];
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument(
        "roc_curve: need both positive and negative samples");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve roc;
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      if (is_positive[order[i]]) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    roc.thresholds.push_back(t);
    roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
    roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
  }
  roc.auc = trapezoid_auc(roc.fpr, roc.tpr);
  return roc;
}

RocCurve roc_curve(std::span<const int> true_labels,
                   std::span<const double> scores, int positive_class) {
  std::vector<std::uint8_t> positive(true_labels.size());
  for (std::size_t i = 0; i < true_labels.size(); ++i)
    positive[i] = true_labels[i] == positive_class;
  return roc_curve_binary(positive, scores);
}

double interpolate_tpr(const RocCurve& curve, double x) {
  const auto& f = curve.fpr;
  const auto& t = curve.tpr;
  // Last point with fpr <= x; on a vertical run this is the highest TPR.
  std::size_t i = 0;
  while (i + 1 < f.size() && f[i + 1] <= x) ++i;
  if (i + 1 >= f.size() || f[i] == x) return t[i];
  const double w = (x - f[i]) / (f[i + 1] - f[i]);
  return t[i] + w * (t[i + 1] - t[i]);
}

MulticlassRoc multiclass_roc(std::span<const int> true_labels,
                             const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(0) != true_labels.size()) {
    throw std::invalid_argument("multiclass_roc: scores " +
                                shape_string(scores.shape()) + " for " +
                                std::to_string(true_labels.size()) + " labels");
  }
  const std::size_t n = scores.dim(0), classes = scores.dim(1);
  MulticlassRoc out;
  std::vector<double> column(n);
  std::vector<std::uint8_t> pooled_pos(n * classes);
  std::vector<double> pooled_scores(n * classes);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = scores.at(i, c);
      pooled_pos[c * n + i] = true_labels[i] == static_cast<int>(c);
      pooled_scores[c * n + i] = column[i];
    }
    out.per_class.push_back(
        roc_curve(true_labels, column, static_cast<int>(c)));
  }
  out.micro = roc_curve_binary(pooled_pos, pooled_scores);

  for (std::size_t g = 0; g < kMacroGridPoints; ++g) {
    const double x =
        static_cast<double>(g) / static_cast<double>(kMacroGridPoints - 1);
    double mean = 0.0;
    for (const RocCurve& r : out.per_class) mean += interpolate_tpr(r, x);
    out.macro.fpr.push_back(x);
    out.macro.tpr.push_back(mean / static_cast<double>(classes));
  }
  out.macro.auc = trapezoid_auc(out.macro.fpr, out.macro.tpr);
  return out;
}

}  // namespace cdee
