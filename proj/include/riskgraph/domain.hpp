#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace riskgraph {

// ---------------------------------------------------------------------------
// Sensors
// ---------------------------------------------------------------------------

enum class Sensor : int {
  kRainfall = 0,
  kTemperature,
  kApparentTemp,
  kHumidity,
  kWind,
  kSnowfall,
  kPm,
};
constexpr int kSensorCount = 7;

struct SensorInfo {
  const char* id;         // record/JSON field name
  const char* node_type;  // graph node type name
  const char* unit;
  double min;             // physical bounds, clamp targets for all generation
  double max;
};

const SensorInfo& sensor_info(Sensor s);
const std::array<Sensor, kSensorCount>& all_sensors();
Sensor sensor_from_id(const std::string& id);

// ---------------------------------------------------------------------------
// Seasons / calendar
// ---------------------------------------------------------------------------

enum class Season : int { kSpring = 0, kSummer, kAutumn, kWinter };
constexpr int kSeasonCount = 4;

const char* season_name(Season s);
Season season_from_name(const std::string& name);
Season season_of_month(int month);                    // 1..12
const std::vector<int>& months_of_season(Season s);   // calendar months

// ---------------------------------------------------------------------------
// Risk levels
// ---------------------------------------------------------------------------

enum class Risk : int { kLow = 0, kMedium, kHigh };
constexpr int kRiskCount = 3;

const char* risk_name(Risk r);
Risk risk_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Alerts
// ---------------------------------------------------------------------------

enum class AlertFamily : int {
  kHeavyRain = 0,
  kHeatWave,
  kColdWave,
  kHeavySnow,
  kYellowDust,
  kTyphoon,
};
constexpr int kAlertFamilyCount = 6;

const char* alert_family_name(AlertFamily f);

enum class Severity : int { kNone = 0, kAdvisory, kWarning };
const char* severity_name(Severity s);
Severity severity_from_name(const std::string& name);

// Alert state vocabulary: "none" plus family x {advisory, warning}.
// State ids are stable: 0 = none, then family-major.
constexpr int kAlertStateCount = 1 + kAlertFamilyCount * 2;

struct AlertState {
  AlertFamily family = AlertFamily::kHeavyRain;
  Severity severity = Severity::kNone;  // kNone means "no alert"

  bool is_none() const { return severity == Severity::kNone; }
  int state_id() const {
    if (is_none()) return 0;
    return 1 + int(family) * 2 + (severity == Severity::kWarning ? 1 : 0);
  }
  bool operator==(const AlertState& o) const {
    return state_id() == o.state_id();
  }
};

std::string alert_state_name(const AlertState& a);
AlertState alert_state_from_name(const std::string& name);
AlertState alert_state_from_id(int id);

// One row of the alert-weather consistency rulebook: the sensor an alert
// severity governs and the closed value range it must lie in. hazard_sign
// is +1 when larger values are more hazardous, -1 when smaller are (cold).
struct AlertRule {
  AlertFamily family;
  Severity severity;  // advisory or warning
  Sensor sensor;
  double lo, hi;      // inclusive, raw sensor units
  int hazard_sign;
};
constexpr int kAlertRuleCount = kAlertFamilyCount * 2;

const std::array<AlertRule, kAlertRuleCount>& alert_rules();
const AlertRule& alert_rule_for(const AlertState& a);  // a must not be none

// Checks the rulebook's internal consistency (finite ordered ranges inside
// physical bounds; advisory below warning along the hazard axis). Throws
// std::invalid_argument naming the first offending rule.
void check_alert_rules(const std::array<AlertRule, kAlertRuleCount>& rules);

// ---------------------------------------------------------------------------
// Report categories
// ---------------------------------------------------------------------------

enum class Category : int {
  kYellowDust = 0,
  kFineDust,
  kWildfirePrevention,
  kDrainageMaintenance,
  kLandslideRisk,
  kHeatWave,
  kFloodPrevention,
  kLeafCleanup,
  kHeavySnow,
  kRoadIcingPrevention,
  kColdWave,
};
constexpr int kCategoryCount = 11;

struct PrimarySensor {
  Sensor sensor;
  int hazard_sign;  // +1: hazard grows with value, -1: with falling value
};

struct CategoryInfo {
  const char* id;
  Season season;
  std::vector<PrimarySensor> primary;       // hazard-bearing sensors
  std::vector<AlertFamily> alert_families;  // families its alerts may use
};

const CategoryInfo& category_info(Category c);
const std::array<Category, kCategoryCount>& all_categories();
Category category_from_id(const std::string& id);

// ---------------------------------------------------------------------------
// Drainage
// ---------------------------------------------------------------------------

enum class Drainage : int { kNormal = 0, kPartiallyBlocked, kBlocked };
constexpr int kDrainageCount = 3;
const char* drainage_name(Drainage d);
Drainage drainage_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Districts (fixed gazetteer: 9 districts in 3 adjacency regions)
// ---------------------------------------------------------------------------

struct District {
  const char* id;
  int region;  // 0..2; districts sharing a region are mutually adjacent
  double lat, lon;
};
constexpr int kDistrictCount = 9;
constexpr int kRegionCount = 3;

const std::array<District, kDistrictCount>& districts();
int district_from_id(const std::string& id);
const std::vector<int>& districts_in_region(int region);

// ---------------------------------------------------------------------------
// Binning vocabularies
// ---------------------------------------------------------------------------

// Colocated report count bins: 0 | 1-2 | 3-5 | 6-10 | >10.
constexpr int kReportCountBins = 5;
int report_count_bin(int count);

// Pre-alert lead time bins (hours): <=1 | 2 | 3 | 6 | 12 | 24+.
constexpr int kLeadTimeBins = 6;
int lead_time_bin(int hours);
const std::array<int, kLeadTimeBins>& lead_time_choices();  // sampled values

// ---------------------------------------------------------------------------
// Graph node types
// ---------------------------------------------------------------------------

enum class NodeType : int {
  kReport = 0,
  kSensorRainfall,
  kSensorTemperature,
  kSensorApparentTemp,
  kSensorHumidity,
  kSensorWind,
  kSensorSnowfall,
  kSensorPm,
  kWeatherAlert,
  kPreAlertType,
  kPreAlertTime,
  kPreAlertSeverity,
  kDrainage,
  kReportType,
  kReportCount,
  kLocation,
};
constexpr int kNodeTypeCount = 16;
// Value node types attached to each report (everything but report/location).
constexpr int kNeighborSlotCount = 15;  // 14 per-report value nodes + location

const char* node_type_name(NodeType t);
NodeType node_type_from_name(const std::string& name);
int node_type_feature_dim(NodeType t);   // model-facing feature width
NodeType sensor_node_type(Sensor s);
bool node_type_is_sensor(NodeType t);
Sensor sensor_of_node_type(NodeType t);  // throws if not a sensor type

// Neighbor slots: the fixed per-report star. Slot order is the NodeType
// enumeration order of the 15 non-report types.
NodeType neighbor_slot_type(int slot);   // slot in [0, kNeighborSlotCount)
int neighbor_slot_of(NodeType t);        // -1 for kReport

// Types eligible for importance ranking and pruning: the 7 sensors plus
// weather_alert, pre_alert_type, pre_alert_time, pre_alert_severity, drainage.
// report_type / report_count / location are structural and never pruned.
const std::vector<NodeType>& prunable_types();
bool is_prunable(NodeType t);
bool is_sensor_group(NodeType t);   // sensor side of the importance split
bool is_context_group(NodeType t);  // alert/drainage side of the split

}  // namespace riskgraph
