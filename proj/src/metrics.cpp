#include "riskgraph/metrics.hpp"

#include <stdexcept>

namespace riskgraph {

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("compute_metrics: prediction/label length mismatch");
  if (predictions.empty()) throw std::invalid_argument("compute_metrics: empty input");

  MetricsReport r;
  r.total = int64_t(predictions.size());
  int64_t correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    int y = labels[i], p = predictions[i];
    if (y < 0 || y >= kRiskCount || p < 0 || p >= kRiskCount)
      throw std::invalid_argument("compute_metrics: class out of range");
    r.confusion[size_t(y)][size_t(p)]++;
    if (y == p) ++correct;
  }
  r.accuracy_pct = 100.0 * double(correct) / double(r.total);

  for (int c = 0; c < kRiskCount; ++c) {
    ClassMetrics& m = r.per_class[size_t(c)];
    int64_t tp = r.confusion[size_t(c)][size_t(c)];
    for (int k = 0; k < kRiskCount; ++k) {
      m.support += r.confusion[size_t(c)][size_t(k)];
      m.predicted += r.confusion[size_t(k)][size_t(c)];
    }
    if (m.predicted > 0) m.precision_pct = 100.0 * double(tp) / double(m.predicted);
    if (m.support > 0) m.recall_pct = 100.0 * double(tp) / double(m.support);
  }
  const ClassMetrics& high = r.per_class[size_t(Risk::kHigh)];
  if (high.precision_pct) r.fp_high_pct = 100.0 - *high.precision_pct;
  if (high.recall_pct) r.fn_high_pct = 100.0 - *high.recall_pct;
  return r;
}

ordered_json MetricsReport::to_json() const {
  ordered_json conf = ordered_json::array();
  for (int y = 0; y < kRiskCount; ++y) {
    ordered_json row = ordered_json::array();
    for (int p = 0; p < kRiskCount; ++p) row.push_back(confusion[size_t(y)][size_t(p)]);
    conf.push_back(row);
  }
  ordered_json per = ordered_json::object();
  for (int c = 0; c < kRiskCount; ++c) {
    const ClassMetrics& m = per_class[size_t(c)];
    per[risk_name(Risk(c))] =
        ordered_json{{"support", m.support},
                     {"predicted", m.predicted},
                     {"precision_pct",
                      m.precision_pct ? ordered_json(*m.precision_pct) : ordered_json(nullptr)},
                     {"recall_pct",
                      m.recall_pct ? ordered_json(*m.recall_pct) : ordered_json(nullptr)}};
  }
  return ordered_json{
      {"total", total},
      {"accuracy_pct", accuracy_pct},
      {"confusion", conf},
      {"per_class", per},
      {"fp_high_pct", fp_high_pct ? ordered_json(*fp_high_pct) : ordered_json(nullptr)},
      {"fn_high_pct", fn_high_pct ? ordered_json(*fn_high_pct) : ordered_json(nullptr)}};
}

}  // namespace riskgraph
