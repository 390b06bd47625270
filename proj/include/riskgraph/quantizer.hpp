#pragma once

#include <array>
#include <vector>

#include "riskgraph/config.hpp"
#include "riskgraph/domain.hpp"
#include "riskgraph/record.hpp"

namespace riskgraph {

// Five-bin value quantizer for one sensor: boundaries at the 20/40/60/80th
// percentiles of the training split, plus a physical-bounds normalized copy of
// the raw value. Encoded feature = one-hot(5 bins) ++ [normalized].
struct Quantizer {
  Sensor sensor = Sensor::kRainfall;
  std::array<double, 4> boundaries{};  // strictly increasing

  int bin(double v) const;                    // 0..4
  double normalized(double v) const;          // (v-min)/(max-min), clamped to [0,1]
  std::array<double, 6> encode(double v) const;
  // Raw value back from an encoded feature: the normalized slot inverts the
  // bounds mapping exactly (modulo float width of the carrier).
  double decode_normalized(double norm) const;
};

struct QuantizerSet {
  std::array<Quantizer, kSensorCount> q;

  const Quantizer& for_sensor(Sensor s) const { return q[size_t(s)]; }
  ordered_json to_json() const;
  static QuantizerSet from_json(const ordered_json& j);
  std::string hash() const;
};

// Fits boundaries on the given record subset (pass the training split).
// Percentiles are nearest-rank over the sorted distinct values, which keeps
// boundaries strictly increasing for zero-inflated sensors; a sensor with
// fewer than 5 distinct values is rejected by name.
QuantizerSet fit_quantizers(const std::vector<ReportRecord>& records,
                            const std::vector<size_t>& subset);

}  // namespace riskgraph
