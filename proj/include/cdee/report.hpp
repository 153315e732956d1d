#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdee/metrics.hpp"

namespace cdee {

struct Evaluation {
  std::vector<int> true_labels;
  std::vector<int> predicted;
  Tensor probabilities;  // (n, classes)
  ConfusionMatrix matrix;
  MetricsSummary metrics;
  MulticlassRoc roc;
};

Evaluation evaluate(std::span<const int> true_labels, const Tensor& probabilities);

// Confusion matrix followed by a precision / recall / f1-score / support
// table, one row per class plus accuracy and the micro and macro averages.
std::string format_report(const Evaluation& eval,
                          const std::vector<std::string>& class_names);

// curve,threshold,fpr,tpr rows for every per-class, micro and macro point.
std::string format_roc_csv(const Evaluation& eval,
                           const std::vector<std::string>& class_names);

nlohmann::json metrics_json(const Evaluation& eval,
                            const std::vector<std::string>& class_names);

// report.txt, roc.csv and metrics.json under `dir`.
void write_evaluation(const Evaluation& eval,
                      const std::vector<std::string>& class_names,
                      const std::filesystem::path& dir);

std::vector<std::string> default_class_names();

}  // namespace cdee
