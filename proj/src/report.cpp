#include "cdee/report.hpp"

#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cdee/classifier.hpp"
#include "cdee/io.hpp"
#include "cdee/patching.hpp"

namespace cdee {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

// %.17g keeps every bit of a double and is locale-independent.
std::string exact(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}


}  // namespace

std::vector<std::string> default_class_names() {
  std::vector<std::string> out;
  for (int k = 0; k < kNumClasses; ++k) {
    out.emplace_back(to_string(static_cast<ClassLabel>(k)));
  }
  return out;
}

Evaluation evaluate(std::span<const int> true_labels, const Tensor& probabilities) {
  Evaluation e;
  e.true_labels.assign(true_labels.begin(), true_labels.end());
  e.probabilities = probabilities;
  e.predicted = argmax_rows(probabilities);
  const std::size_t classes = probabilities.dim(1);
  e.matrix = confusion(e.true_labels, e.predicted, classes);
  e.metrics = summary(e.matrix);
  e.roc = multiclass_roc(e.true_labels, probabilities);
  return e;
}

std::string format_report(const Evaluation& eval,
                          const std::vector<std::string>& names) {
  const std::size_t k = eval.matrix.classes;
  if (names.size() != k) {
    throw std::invalid_argument("format_report: class name count mismatch");
  }
  std::size_t name_w = 14;
  for (const auto& n : names) name_w = std::max(name_w, n.size() + 2);

  std::ostringstream out;
  out << "confusion matrix (rows: true class, columns: predicted class)\n";
  out << pad_right("", name_w);
  for (const auto& n : names) out << pad_left(n, 10);
  out << '\n';
  for (std::size_t t = 0; t < k; ++t) {
    out << pad_right(names[t], name_w);
    for (std::size_t p = 0; p < k; ++p) {
      out << pad_left(std::to_string(eval.matrix.at(t, p)), 10);
    }
    out << '\n';
  }
  out << '\n';

  const MetricsSummary& m = eval.metrics;
  out << pad_right("", name_w) << pad_left("precision", 11)
      << pad_left("recall", 11) << pad_left("f1-score", 11)
      << pad_left("support", 11) << '\n';
  for (std::size_t c = 0; c < k; ++c) {
    const ClassMetrics& cm = m.per_class[c];
    out << pad_right(names[c], name_w) << pad_left(fixed(cm.precision, 2), 11)
        << pad_left(fixed(cm.recall, 2), 11) << pad_left(fixed(cm.f1, 2), 11)
        << pad_left(std::to_string(cm.support), 11) << '\n';
  }
  const std::string total = std::to_string(eval.matrix.total());
  out << '\n'
      << pad_right("accuracy", name_w) << pad_left("", 22)
      << pad_left(fixed(m.accuracy, 4), 11) << pad_left(total, 11) << '\n';
  auto agg = [&](const char* label, const AggregateMetrics& a) {
    out << pad_right(label, name_w) << pad_left(fixed(a.precision, 2), 11)
        << pad_left(fixed(a.recall, 2), 11) << pad_left(fixed(a.f1, 2), 11)
        << pad_left(total, 11) << '\n';
  };
  agg("micro avg", m.micro);
  agg("macro avg", m.macro);

  out << "\nAUC";
  for (std::size_t c = 0; c < k; ++c) {
    out << "  " << names[c] << ' ' << fixed(eval.roc.per_class[c].auc, 4);
  }
  out << "  micro " << fixed(eval.roc.micro.auc, 4) << "  macro "
      << fixed(eval.roc.macro.auc, 4) << '\n';
  for (const auto& w : m.warnings) out << "warning: " << w << '\n';
  return out.str();
}

std::string format_roc_csv(const Evaluation& eval,
                           const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "curve,threshold,fpr,tpr\n";
  auto emit = [&](const std::string& curve, const RocCurve& c) {
    for (std::size_t i = 0; i < c.fpr.size(); ++i) {
      const std::string th = i < c.thresholds.size() ? exact(c.thresholds[i]) : "";
      out << curve << ',' << th << ',' << exact(c.fpr[i]) << ','
          << exact(c.tpr[i]) << '\n';
    }
  };
  for (std::size_t c = 0; c < eval.roc.per_class.size(); ++c) {
    emit(names.at(c), eval.roc.per_class[c]);
  }
  emit("micro", eval.roc.micro);
  emit("macro", eval.roc.macro);
  return out.str();
}

nlohmann::json metrics_json(const Evaluation& eval,
                            const std::vector<std::string>& names) {
  const MetricsSummary& m = eval.metrics;
  nlohmann::json j;
  j["samples"] = eval.matrix.total();
  j["accuracy"] = m.accuracy;
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    per[names.at(c)] = {{"precision", m.per_class[c].precision},
                        {"recall", m.per_class[c].recall},
                        {"f1", m.per_class[c].f1},
                        {"support", m.per_class[c].support},
                        {"auc", eval.roc.per_class[c].auc}};
  }
  j["per_class"] = per;
  j["micro"] = {{"precision", m.micro.precision},
                {"recall", m.micro.recall},
                {"f1", m.micro.f1},
                {"auc", eval.roc.micro.auc}};
  j["macro"] = {{"precision", m.macro.precision},
                {"recall", m.macro.recall},
                {"f1", m.macro.f1},
                {"auc", eval.roc.macro.auc}};
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < eval.matrix.classes; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < eval.matrix.classes; ++p) {
      row.push_back(eval.matrix.at(t, p));
    }
    rows.push_back(row);
  }
  j["confusion"] = rows;
  j["warnings"] = m.warnings;
  return j;
}

void write_evaluation(const Evaluation& eval,
                      const std::vector<std::string>& names,
                      const std::filesystem::path& dir) {
  write_text_atomic(dir / "report.txt", format_report(eval, names));
  write_text_atomic(dir / "roc.csv", format_roc_csv(eval, names));
  write_text_atomic(dir / "metrics.json", metrics_json(eval, names).dump(2) + "\n");
}

}  // namespace cdee
