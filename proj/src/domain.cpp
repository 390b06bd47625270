#include "riskgraph/domain.hpp"

#include <stdexcept>

namespace riskgraph {

namespace {

const std::array<SensorInfo, kSensorCount> kSensors = {{
    {"rainfall", "sensor_rainfall", "mm", 0.0, 150.0},
    {"temperature", "sensor_temperature", "degC", -25.0, 40.0},
    {"apparent_temp", "sensor_apparent_temp", "degC", -30.0, 45.0},
    {"humidity", "sensor_humidity", "pct", 0.0, 100.0},
    {"wind", "sensor_wind_speed", "m/s", 0.0, 50.0},
    {"snowfall", "sensor_snowfall", "cm", 0.0, 100.0},
    {"pm", "sensor_pm", "ug/m3", 0.0, 800.0},
}};

const char* kSeasonNames[kSeasonCount] = {"spring", "summer", "autumn", "winter"};
const char* kRiskNames[kRiskCount] = {"low", "medium", "high"};
const char* kFamilyNames[kAlertFamilyCount] = {"heavy_rain", "heat_wave",  "cold_wave",
                                               "heavy_snow", "yellow_dust", "typhoon"};
const char* kSeverityNames[3] = {"none", "advisory", "warning"};
const char* kDrainageNames[kDrainageCount] = {"normal", "partially_blocked", "blocked"};

const std::array<AlertRule, kAlertRuleCount> kRules = {{
    {AlertFamily::kHeavyRain, Severity::kAdvisory, Sensor::kRainfall, 60.0, 90.0, +1},
    {AlertFamily::kHeavyRain, Severity::kWarning, Sensor::kRainfall, 90.0, 150.0, +1},
    {AlertFamily::kHeatWave, Severity::kAdvisory, Sensor::kTemperature, 30.0, 35.0, +1},
    {AlertFamily::kHeatWave, Severity::kWarning, Sensor::kTemperature, 35.0, 40.0, +1},
    {AlertFamily::kColdWave, Severity::kAdvisory, Sensor::kTemperature, -20.0, -10.0, -1},
    {AlertFamily::kColdWave, Severity::kWarning, Sensor::kTemperature, -25.0, -15.0, -1},
    {AlertFamily::kHeavySnow, Severity::kAdvisory, Sensor::kSnowfall, 20.0, 50.0, +1},
    {AlertFamily::kHeavySnow, Severity::kWarning, Sensor::kSnowfall, 50.0, 100.0, +1},
    {AlertFamily::kYellowDust, Severity::kAdvisory, Sensor::kPm, 200.0, 400.0, +1},
    {AlertFamily::kYellowDust, Severity::kWarning, Sensor::kPm, 400.0, 800.0, +1},
    {AlertFamily::kTyphoon, Severity::kAdvisory, Sensor::kWind, 20.0, 35.0, +1},
    {AlertFamily::kTyphoon, Severity::kWarning, Sensor::kWind, 35.0, 50.0, +1},
}};

std::array<CategoryInfo, kCategoryCount> make_categories() {
  using S = Sensor;
  using F = AlertFamily;
  return {{
      {"yellow_dust_report", Season::kSpring, {{S::kPm, +1}}, {F::kYellowDust}},
      {"fine_dust_report", Season::kSpring, {{S::kPm, +1}}, {F::kYellowDust}},
      {"wildfire_prevention", Season::kSpring, {{S::kHumidity, -1}, {S::kWind, +1}}, {F::kTyphoon}},
      {"drainage_maintenance", Season::kSummer, {{S::kRainfall, +1}}, {F::kHeavyRain}},
      {"landslide_risk", Season::kSummer, {{S::kRainfall, +1}}, {F::kHeavyRain}},
      {"heat_wave", Season::kSummer, {{S::kTemperature, +1}}, {F::kHeatWave}},
      {"flood_prevention", Season::kSummer, {{S::kRainfall, +1}}, {F::kHeavyRain}},
      {"leaf_cleanup", Season::kAutumn, {{S::kRainfall, +1}}, {F::kHeavyRain}},
      {"heavy_snow", Season::kWinter, {{S::kSnowfall, +1}}, {F::kHeavySnow}},
      {"road_icing_prevention", Season::kWinter,
       {{S::kSnowfall, +1}, {S::kTemperature, -1}},
       {F::kHeavySnow, F::kColdWave}},
      {"cold_wave", Season::kWinter,
       {{S::kSnowfall, +1}, {S::kTemperature, -1}},
       {F::kColdWave, F::kHeavySnow}},
  }};
}

const std::array<CategoryInfo, kCategoryCount>& categories_table() {
  static const std::array<CategoryInfo, kCategoryCount> t = make_categories();
  return t;
}

const std::array<District, kDistrictCount> kDistricts = {{
    {"gangnam", 0, 37.5172, 127.0473},
    {"seocho", 0, 37.4837, 127.0324},
    {"songpa", 0, 37.5145, 127.1059},
    {"jongno", 1, 37.5735, 126.9790},
    {"junggu", 1, 37.5641, 126.9979},
    {"yongsan", 1, 37.5326, 126.9909},
    {"mapo", 2, 37.5663, 126.9016},
    {"seodaemun", 2, 37.5791, 126.9368},
    {"eunpyeong", 2, 37.6176, 126.9227},
}};

const char* kNodeTypeNames[kNodeTypeCount] = {
    "report",
    "sensor_rainfall",
    "sensor_temperature",
    "sensor_apparent_temp",
    "sensor_humidity",
    "sensor_wind_speed",
    "sensor_snowfall",
    "sensor_pm",
    "weather_alert",
    "pre_alert_type",
    "pre_alert_time",
    "pre_alert_severity",
    "drainage",
    "report_type",
    "report_count",
    "location",
};

const int kNodeTypeDims[kNodeTypeCount] = {
    1,   // report: constant placeholder feature
    6, 6, 6, 6, 6, 6, 6,  // sensors: 5 quantile bins one-hot + normalized value
    13,  // weather_alert: one-hot over alert states
    13,  // pre_alert_type: one-hot over alert states
    6,   // pre_alert_time: one-hot lead-time bins
    3,   // pre_alert_severity: none/advisory/warning
    3,   // drainage
    8,   // report_type: learned embedding width
    5,   // report_count bins
    4,   // location: lat, lon, region, distance-from-center (normalized)
};

}  // namespace

const SensorInfo& sensor_info(Sensor s) { return kSensors[size_t(s)]; }

const std::array<Sensor, kSensorCount>& all_sensors() {
  static const std::array<Sensor, kSensorCount> a = {
      Sensor::kRainfall, Sensor::kTemperature, Sensor::kApparentTemp, Sensor::kHumidity,
      Sensor::kWind,     Sensor::kSnowfall,    Sensor::kPm};
  return a;
}

Sensor sensor_from_id(const std::string& id) {
  for (Sensor s : all_sensors())
    if (id == sensor_info(s).id) return s;
  throw std::invalid_argument("unknown sensor id: " + id);
}

const char* season_name(Season s) { return kSeasonNames[int(s)]; }

Season season_from_name(const std::string& name) {
  for (int i = 0; i < kSeasonCount; ++i)
    if (name == kSeasonNames[i]) return Season(i);
  throw std::invalid_argument("unknown season: " + name);
}

Season season_of_month(int month) {
  switch (month) {
    case 3: case 4: case 5: return Season::kSpring;
    case 6: case 7: case 8: return Season::kSummer;
    case 9: case 10: case 11: return Season::kAutumn;
    case 12: case 1: case 2: return Season::kWinter;
    default: throw std::invalid_argument("month out of range: " + std::to_string(month));
  }
}

const std::vector<int>& months_of_season(Season s) {
  static const std::vector<int> m[kSeasonCount] = {
      {3, 4, 5}, {6, 7, 8}, {9, 10, 11}, {1, 2, 12}};
  return m[int(s)];
}

const char* risk_name(Risk r) { return kRiskNames[int(r)]; }

Risk risk_from_name(const std::string& name) {
  for (int i = 0; i < kRiskCount; ++i)
    if (name == kRiskNames[i]) return Risk(i);
  throw std::invalid_argument("unknown risk level: " + name);
}

const char* alert_family_name(AlertFamily f) { return kFamilyNames[int(f)]; }

const char* severity_name(Severity s) { return kSeverityNames[int(s)]; }

Severity severity_from_name(const std::string& name) {
  for (int i = 0; i < 3; ++i)
    if (name == kSeverityNames[i]) return Severity(i);
  throw std::invalid_argument("unknown severity: " + name);
}

std::string alert_state_name(const AlertState& a) {
  if (a.is_none()) return "none";
  return std::string(alert_family_name(a.family)) + "_" + severity_name(a.severity);
}

AlertState alert_state_from_name(const std::string& name) {
  if (name == "none") return AlertState{};
  for (int f = 0; f < kAlertFamilyCount; ++f) {
    for (Severity sev : {Severity::kAdvisory, Severity::kWarning}) {
      AlertState a{AlertFamily(f), sev};
      if (alert_state_name(a) == name) return a;
    }
  }
  throw std::invalid_argument("unknown alert state: " + name);
}

AlertState alert_state_from_id(int id) {
  if (id == 0) return AlertState{};
  if (id < 0 || id >= kAlertStateCount)
    throw std::invalid_argument("alert state id out of range: " + std::to_string(id));
  int k = id - 1;
  return AlertState{AlertFamily(k / 2), (k % 2) ? Severity::kWarning : Severity::kAdvisory};
}

const std::array<AlertRule, kAlertRuleCount>& alert_rules() { return kRules; }

const AlertRule& alert_rule_for(const AlertState& a) {
  if (a.is_none()) throw std::invalid_argument("alert_rule_for: no rule for 'none'");
  for (const AlertRule& r : kRules)
    if (r.family == a.family && r.severity == a.severity) return r;
  throw std::logic_error("alert rule table incomplete");
}

void check_alert_rules(const std::array<AlertRule, kAlertRuleCount>& rules) {
  for (const AlertRule& r : rules) {
    const std::string tag = std::string(alert_family_name(r.family)) + "_" +
                            severity_name(r.severity);
    if (!(r.lo < r.hi))
      throw std::invalid_argument("alert rule " + tag + ": empty range");
    const SensorInfo& si = sensor_info(r.sensor);
    if (r.lo < si.min || r.hi > si.max)
      throw std::invalid_argument("alert rule " + tag + ": range outside physical bounds of " +
                                  si.id);
    if (r.hazard_sign != 1 && r.hazard_sign != -1)
      throw std::invalid_argument("alert rule " + tag + ": hazard_sign must be +-1");
  }
  // Advisory must sit strictly below warning along the hazard axis.
  for (int f = 0; f < kAlertFamilyCount; ++f) {
    const AlertRule* adv = nullptr;
    const AlertRule* warn = nullptr;
    for (const AlertRule& r : rules) {
      if (int(r.family) != f) continue;
      (r.severity == Severity::kAdvisory ? adv : warn) = &r;
    }
    if (!adv || !warn)
      throw std::invalid_argument(std::string("alert family ") + kFamilyNames[f] +
                                  ": missing severity rule");
    double a_hi = adv->hazard_sign > 0 ? adv->hi : -adv->lo;
    double w_hi = warn->hazard_sign > 0 ? warn->hi : -warn->lo;
    double a_lo = adv->hazard_sign > 0 ? adv->lo : -adv->hi;
    double w_lo = warn->hazard_sign > 0 ? warn->lo : -warn->hi;
    if (!(a_lo < w_lo && a_hi <= w_hi))
      throw std::invalid_argument(std::string("alert family ") + kFamilyNames[f] +
                                  ": advisory must precede warning on the hazard axis");
  }
}

const CategoryInfo& category_info(Category c) { return categories_table()[size_t(c)]; }

const std::array<Category, kCategoryCount>& all_categories() {
  static const std::array<Category, kCategoryCount> a = [] {
    std::array<Category, kCategoryCount> v{};
    for (int i = 0; i < kCategoryCount; ++i) v[size_t(i)] = Category(i);
    return v;
  }();
  return a;
}

Category category_from_id(const std::string& id) {
  for (Category c : all_categories())
    if (id == category_info(c).id) return c;
  throw std::invalid_argument("unknown category: " + id);
}

const char* drainage_name(Drainage d) { return kDrainageNames[int(d)]; }

Drainage drainage_from_name(const std::string& name) {
  for (int i = 0; i < kDrainageCount; ++i)
    if (name == kDrainageNames[i]) return Drainage(i);
  throw std::invalid_argument("unknown drainage state: " + name);
}

const std::array<District, kDistrictCount>& districts() { return kDistricts; }

int district_from_id(const std::string& id) {
  for (int i = 0; i < kDistrictCount; ++i)
    if (id == kDistricts[size_t(i)].id) return i;
  throw std::invalid_argument("unknown district: " + id);
}

const std::vector<int>& districts_in_region(int region) {
  static const std::vector<int> groups[kRegionCount] = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};
  if (region < 0 || region >= kRegionCount)
    throw std::invalid_argument("region out of range: " + std::to_string(region));
  return groups[region];
}

int report_count_bin(int count) {
  if (count < 0) throw std::invalid_argument("report_count_bin: negative count");
  if (count == 0) return 0;
  if (count <= 2) return 1;
  if (count <= 5) return 2;
  if (count <= 10) return 3;
  return 4;
}

int lead_time_bin(int hours) {
  if (hours < 0) throw std::invalid_argument("lead_time_bin: negative hours");
  if (hours <= 1) return 0;
  if (hours <= 2) return 1;
  if (hours <= 3) return 2;
  if (hours <= 6) return 3;
  if (hours <= 12) return 4;
  return 5;
}

const std::array<int, kLeadTimeBins>& lead_time_choices() {
  static const std::array<int, kLeadTimeBins> c = {1, 2, 3, 6, 12, 24};
  return c;
}

const char* node_type_name(NodeType t) { return kNodeTypeNames[int(t)]; }

NodeType node_type_from_name(const std::string& name) {
  for (int i = 0; i < kNodeTypeCount; ++i)
    if (name == kNodeTypeNames[i]) return NodeType(i);
  throw std::invalid_argument("unknown node type: " + name);
}

int node_type_feature_dim(NodeType t) { return kNodeTypeDims[int(t)]; }

NodeType sensor_node_type(Sensor s) {
  return NodeType(int(NodeType::kSensorRainfall) + int(s));
}

bool node_type_is_sensor(NodeType t) {
  return int(t) >= int(NodeType::kSensorRainfall) && int(t) <= int(NodeType::kSensorPm);
}

Sensor sensor_of_node_type(NodeType t) {
  if (!node_type_is_sensor(t))
    throw std::invalid_argument(std::string("not a sensor node type: ") + node_type_name(t));
  return Sensor(int(t) - int(NodeType::kSensorRainfall));
}

NodeType neighbor_slot_type(int slot) {
  if (slot < 0 || slot >= kNeighborSlotCount)
    throw std::invalid_argument("neighbor slot out of range: " + std::to_string(slot));
  return NodeType(slot + 1);  // everything after kReport
}

int neighbor_slot_of(NodeType t) { return t == NodeType::kReport ? -1 : int(t) - 1; }

const std::vector<NodeType>& prunable_types() {
  static const std::vector<NodeType> v = {
      NodeType::kSensorRainfall, NodeType::kSensorTemperature, NodeType::kSensorApparentTemp,
      NodeType::kSensorHumidity, NodeType::kSensorWind,        NodeType::kSensorSnowfall,
      NodeType::kSensorPm,       NodeType::kWeatherAlert,      NodeType::kPreAlertType,
      NodeType::kPreAlertTime,   NodeType::kPreAlertSeverity,  NodeType::kDrainage,
  };
  return v;
}

bool is_prunable(NodeType t) {
  for (NodeType p : prunable_types())
    if (p == t) return true;
  return false;
}

bool is_sensor_group(NodeType t) { return node_type_is_sensor(t); }

bool is_context_group(NodeType t) { return is_prunable(t) && !node_type_is_sensor(t); }

}  // namespace riskgraph
