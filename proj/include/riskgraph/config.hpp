#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "riskgraph/domain.hpp"

#include <nlohmann/json.hpp>

namespace riskgraph {

using ordered_json = nlohmann::ordered_json;

struct Dist {
  double mean = 0.0;
  double stddev = 1.0;
};

// Risk-graded distribution for one hazard-bearing sensor of a category.
struct PrimaryDist {
  Sensor sensor;
  std::array<Dist, kRiskCount> by_risk;
};

// All tunable knobs of the synthetic incident generator. Everything that
// shapes the data lives here so a dataset's metadata can embed the exact
// configuration it was produced with.
struct GeneratorConfig {
  // Seasonal baseline weather per (season, sensor), truncated to the
  // sensor's physical bounds at draw time.
  std::array<std::array<Dist, kSensorCount>, kSeasonCount> baseline;

  // Category-specific hazard-sensor distributions per risk level. Means move
  // monotonically in the hazard direction as risk rises.
  std::array<std::vector<PrimaryDist>, kCategoryCount> risk_graded;

  // Alert sequence scenario mix. Medium risk: direct vs preceded; high risk:
  // direct vs preceded vs escalation.
  double medium_preceded_prob = 0.5;
  std::array<double, 3> high_scenario = {1.0 / 3, 1.0 / 3, 1.0 / 3};

  // Drainage state probabilities per risk level (normal/partial/blocked).
  std::array<std::array<double, kDrainageCount>, kRiskCount> drainage_probs = {{
      {0.70, 0.20, 0.10},
      {0.50, 0.30, 0.20},
      {0.30, 0.35, 0.35},
  }};

  // Hourly co-located report count: Poisson(lambda by risk), truncated.
  std::array<double, kRiskCount> colocated_lambda = {1.0, 3.0, 6.0};
  int colocated_max = 20;

  // Spatio-temporal coherence: readings stay within +-sigma of the most
  // recent reading of the same sensor in the same district/region within
  // reference_minutes; rolling window keeps window_hours of history.
  double temporal_sigma = 0.15;
  int window_hours = 24;
  int reference_minutes = 60;

  // Mild diurnal weighting over the 24 hours of the day.
  std::array<double, 24> diurnal = {1, 1, 1, 1, 1, 2, 3, 4, 5, 5, 5, 5,
                                    5, 5, 5, 5, 5, 4, 4, 3, 2, 2, 1, 1};

  ordered_json to_json() const;
  static GeneratorConfig from_json(const ordered_json& j);
  static GeneratorConfig defaults();
  std::string hash() const;  // sha256 of the canonical JSON dump

  const PrimaryDist* find_primary(Category c, Sensor s) const;
};

// Identity of one generated dataset.
struct DatasetParams {
  int n = 5000;
  int year = 2024;
  std::array<double, kRiskCount> risk_dist = {0.25, 0.35, 0.40};
  uint64_t seed = 42;

  ordered_json to_json() const;
  static DatasetParams from_json(const ordered_json& j);
};

}  // namespace riskgraph
