#pragma once

#include <array>
#include <optional>
#include <vector>

#include "riskgraph/config.hpp"
#include "riskgraph/domain.hpp"

namespace riskgraph {

struct ClassMetrics {
  int64_t support = 0;    // true instances
  int64_t predicted = 0;  // predicted instances
  std::optional<double> precision_pct;  // absent when nothing was predicted
  std::optional<double> recall_pct;     // absent when the class has no support
};

// Classification quality in the shape the reports use: overall accuracy, a
// confusion matrix, per-class precision/recall, and the high-risk error rates
// FP_high = 100 - precision(high), FN_high = 100 - recall(high).
struct MetricsReport {
  int64_t total = 0;
  double accuracy_pct = 0.0;
  std::array<std::array<int64_t, kRiskCount>, kRiskCount> confusion{};  // [truth][pred]
  std::array<ClassMetrics, kRiskCount> per_class;
  std::optional<double> fp_high_pct;
  std::optional<double> fn_high_pct;

  ordered_json to_json() const;
};

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& labels);

}  // namespace riskgraph
