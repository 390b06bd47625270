#include "riskgraph/config.hpp"

#include <stdexcept>

#include "riskgraph/sha256.hpp"

namespace riskgraph {

namespace {

ordered_json dist_json(const Dist& d) { return ordered_json{{"mean", d.mean}, {"stddev", d.stddev}}; }

Dist dist_from(const ordered_json& j) { return Dist{j.at("mean"), j.at("stddev")}; }

}  // namespace

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig c;
  using S = Sensor;
  auto set = [&](Season season, S s, double mean, double sd) {
    c.baseline[size_t(season)][size_t(s)] = Dist{mean, sd};
  };
  // Seasonal baseline weather (rough continental mid-latitude city).
  set(Season::kSpring, S::kRainfall, 5, 10);
  set(Season::kSpring, S::kTemperature, 13, 5);
  set(Season::kSpring, S::kApparentTemp, 12, 6);
  set(Season::kSpring, S::kHumidity, 55, 15);
  set(Season::kSpring, S::kWind, 4, 2);
  set(Season::kSpring, S::kSnowfall, 0, 0.3);
  set(Season::kSpring, S::kPm, 60, 40);
  set(Season::kSummer, S::kRainfall, 15, 20);
  set(Season::kSummer, S::kTemperature, 27, 4);
  set(Season::kSummer, S::kApparentTemp, 29, 5);
  set(Season::kSummer, S::kHumidity, 70, 15);
  set(Season::kSummer, S::kWind, 3.5, 2);
  set(Season::kSummer, S::kSnowfall, 0, 0.1);
  set(Season::kSummer, S::kPm, 35, 20);
  set(Season::kAutumn, S::kRainfall, 6, 8);
  set(Season::kAutumn, S::kTemperature, 15, 6);
  set(Season::kAutumn, S::kApparentTemp, 14, 6);
  set(Season::kAutumn, S::kHumidity, 60, 15);
  set(Season::kAutumn, S::kWind, 3.5, 2);
  set(Season::kAutumn, S::kSnowfall, 0, 0.2);
  set(Season::kAutumn, S::kPm, 40, 25);
  set(Season::kWinter, S::kRainfall, 2, 4);
  set(Season::kWinter, S::kTemperature, -3, 6);
  set(Season::kWinter, S::kApparentTemp, -7, 7);
  set(Season::kWinter, S::kHumidity, 45, 15);
  set(Season::kWinter, S::kWind, 4, 2.5);
  set(Season::kWinter, S::kSnowfall, 3, 6);
  set(Season::kWinter, S::kPm, 45, 30);

  auto graded = [&](Category cat, S s, Dist low, Dist med, Dist high) {
    c.risk_graded[size_t(cat)].push_back(PrimaryDist{s, {low, med, high}});
  };
  const Dist pm_low{40, 25}, pm_med{150, 60}, pm_high{300, 100};
  const Dist rain_low{8, 8}, rain_med{45, 20}, rain_high{85, 30};
  const Dist snow_low{1, 2}, snow_med{15, 10}, snow_high{45, 20};
  const Dist cold_low{2, 3}, cold_med{-8, 4}, cold_high{-16, 5};
  graded(Category::kYellowDust, S::kPm, pm_low, pm_med, pm_high);
  graded(Category::kFineDust, S::kPm, pm_low, pm_med, pm_high);
  graded(Category::kWildfirePrevention, S::kHumidity, Dist{55, 10}, Dist{35, 8}, Dist{20, 6});
  graded(Category::kWildfirePrevention, S::kWind, Dist{4, 2}, Dist{10, 4}, Dist{18, 6});
  graded(Category::kDrainageMaintenance, S::kRainfall, rain_low, rain_med, rain_high);
  graded(Category::kLandslideRisk, S::kRainfall, rain_low, rain_med, rain_high);
  graded(Category::kHeatWave, S::kTemperature, Dist{24, 3}, Dist{31, 3}, Dist{36, 3});
  graded(Category::kFloodPrevention, S::kRainfall, rain_low, rain_med, rain_high);
  graded(Category::kLeafCleanup, S::kRainfall, rain_low, rain_med, rain_high);
  graded(Category::kHeavySnow, S::kSnowfall, snow_low, snow_med, snow_high);
  graded(Category::kRoadIcingPrevention, S::kSnowfall, snow_low, snow_med, snow_high);
  graded(Category::kRoadIcingPrevention, S::kTemperature, cold_low, cold_med, cold_high);
  graded(Category::kColdWave, S::kSnowfall, snow_low, snow_med, snow_high);
  graded(Category::kColdWave, S::kTemperature, cold_low, cold_med, cold_high);
  return c;
}

const PrimaryDist* GeneratorConfig::find_primary(Category c, Sensor s) const {
  for (const PrimaryDist& p : risk_graded[size_t(c)])
    if (p.sensor == s) return &p;
  return nullptr;
}

ordered_json GeneratorConfig::to_json() const {
  ordered_json j;
  ordered_json base = ordered_json::object();
  for (int se = 0; se < kSeasonCount; ++se) {
    ordered_json row = ordered_json::object();
    for (Sensor s : all_sensors())
      row[sensor_info(s).id] = dist_json(baseline[size_t(se)][size_t(s)]);
    base[season_name(Season(se))] = row;
  }
  j["baseline"] = base;

  ordered_json rg = ordered_json::object();
  for (Category c : all_categories()) {
    ordered_json list = ordered_json::array();
    for (const PrimaryDist& p : risk_graded[size_t(c)]) {
      ordered_json e;
      e["sensor"] = sensor_info(p.sensor).id;
      for (int r = 0; r < kRiskCount; ++r)
        e[risk_name(Risk(r))] = dist_json(p.by_risk[size_t(r)]);
      list.push_back(e);
    }
    rg[category_info(c).id] = list;
  }
  j["risk_graded"] = rg;
  j["medium_preceded_prob"] = medium_preceded_prob;
  j["high_scenario"] = high_scenario;
  ordered_json dp = ordered_json::object();
  for (int r = 0; r < kRiskCount; ++r) dp[risk_name(Risk(r))] = drainage_probs[size_t(r)];
  j["drainage_probs"] = dp;
  j["colocated_lambda"] = colocated_lambda;
  j["colocated_max"] = colocated_max;
  j["temporal_sigma"] = temporal_sigma;
  j["window_hours"] = window_hours;
  j["reference_minutes"] = reference_minutes;
  j["diurnal"] = diurnal;
  return j;
}

GeneratorConfig GeneratorConfig::from_json(const ordered_json& j) {
  GeneratorConfig c;
  const auto& base = j.at("baseline");
  for (int se = 0; se < kSeasonCount; ++se) {
    const auto& row = base.at(season_name(Season(se)));
    for (Sensor s : all_sensors())
      c.baseline[size_t(se)][size_t(s)] = dist_from(row.at(sensor_info(s).id));
  }
  const auto& rg = j.at("risk_graded");
  for (Category cat : all_categories()) {
    c.risk_graded[size_t(cat)].clear();
    for (const auto& e : rg.at(category_info(cat).id)) {
      PrimaryDist p;
      p.sensor = sensor_from_id(e.at("sensor"));
      for (int r = 0; r < kRiskCount; ++r)
        p.by_risk[size_t(r)] = dist_from(e.at(risk_name(Risk(r))));
      c.risk_graded[size_t(cat)].push_back(p);
    }
  }
  j.at("medium_preceded_prob").get_to(c.medium_preceded_prob);
  j.at("high_scenario").get_to(c.high_scenario);
  const auto& dp = j.at("drainage_probs");
  for (int r = 0; r < kRiskCount; ++r) dp.at(risk_name(Risk(r))).get_to(c.drainage_probs[size_t(r)]);
  j.at("colocated_lambda").get_to(c.colocated_lambda);
  j.at("colocated_max").get_to(c.colocated_max);
  j.at("temporal_sigma").get_to(c.temporal_sigma);
  j.at("window_hours").get_to(c.window_hours);
  j.at("reference_minutes").get_to(c.reference_minutes);
  j.at("diurnal").get_to(c.diurnal);
  return c;
}

std::string GeneratorConfig::hash() const { return sha256_hex(to_json().dump()); }

ordered_json DatasetParams::to_json() const {
  ordered_json j;
  j["n"] = n;
  j["year"] = year;
  j["risk_dist"] = risk_dist;
  j["seed"] = seed;
  return j;
}

DatasetParams DatasetParams::from_json(const ordered_json& j) {
  DatasetParams p;
  j.at("n").get_to(p.n);
  j.at("year").get_to(p.year);
  j.at("risk_dist").get_to(p.risk_dist);
  j.at("seed").get_to(p.seed);
  return p;
}

}  // namespace riskgraph
