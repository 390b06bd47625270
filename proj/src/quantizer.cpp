#include "riskgraph/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "riskgraph/sha256.hpp"

namespace riskgraph {

int Quantizer::bin(double v) const {
  for (int i = 0; i < 4; ++i)
    if (v <= boundaries[size_t(i)]) return i;
  return 4;
}

double Quantizer::normalized(double v) const {
  const SensorInfo& si = sensor_info(sensor);
  double n = (v - si.min) / (si.max - si.min);
  return std::min(1.0, std::max(0.0, n));
}

std::array<double, 6> Quantizer::encode(double v) const {
  std::array<double, 6> f{};
  f[size_t(bin(v))] = 1.0;
  f[5] = normalized(v);
  return f;
}

double Quantizer::decode_normalized(double norm) const {
  const SensorInfo& si = sensor_info(sensor);
  return si.min + norm * (si.max - si.min);
}

ordered_json QuantizerSet::to_json() const {
  ordered_json j = ordered_json::object();
  for (Sensor s : all_sensors()) {
    const Quantizer& qu = q[size_t(s)];
    j[sensor_info(s).id] = ordered_json{{"boundaries", qu.boundaries}};
  }
  return j;
}

QuantizerSet QuantizerSet::from_json(const ordered_json& j) {
  QuantizerSet set;
  for (Sensor s : all_sensors()) {
    Quantizer& qu = set.q[size_t(s)];
    qu.sensor = s;
    j.at(sensor_info(s).id).at("boundaries").get_to(qu.boundaries);
  }
  return set;
}

std::string QuantizerSet::hash() const { return sha256_hex(to_json().dump()); }

QuantizerSet fit_quantizers(const std::vector<ReportRecord>& records,
                            const std::vector<size_t>& subset) {
  if (subset.empty()) throw std::invalid_argument("fit_quantizers: empty fitting subset");
  QuantizerSet set;
  for (Sensor s : all_sensors()) {
    std::vector<double> vals;
    vals.reserve(subset.size());
    for (size_t i : subset) vals.push_back(records[i].sensors[size_t(s)]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    if (vals.size() < 5)
      throw std::invalid_argument(std::string("fit_quantizers: sensor ") + sensor_info(s).id +
                                  " has only " + std::to_string(vals.size()) +
                                  " distinct values (need >= 5)");
    Quantizer& qu = set.q[size_t(s)];
    qu.sensor = s;
    const double percentiles[4] = {20.0, 40.0, 60.0, 80.0};
    for (int k = 0; k < 4; ++k) {
      // Nearest-rank: smallest value with at least p% of the mass at or below.
      auto rank = size_t(std::ceil(percentiles[k] / 100.0 * double(vals.size())));
      rank = std::max<size_t>(1, std::min(rank, vals.size()));
      qu.boundaries[size_t(k)] = vals[rank - 1];
    }
    for (int k = 0; k < 3; ++k)
      if (!(qu.boundaries[size_t(k)] < qu.boundaries[size_t(k + 1)]))
        throw std::invalid_argument(std::string("fit_quantizers: sensor ") + sensor_info(s).id +
                                    " yields non-increasing bin boundaries");
  }
  return set;
}

}  // namespace riskgraph
