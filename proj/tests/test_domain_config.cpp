#include <set>
#include <string>

#include "doctest.h"
#include "riskgraph/config.hpp"
#include "riskgraph/domain.hpp"

using namespace riskgraph;

TEST_CASE("sensor table round-trips and bounds are ordered") {
  for (Sensor s : all_sensors()) {
    const SensorInfo& info = sensor_info(s);
    CHECK(info.min < info.max);
    CHECK(sensor_from_id(info.id) == s);
    CHECK(node_type_is_sensor(sensor_node_type(s)));
    CHECK(sensor_of_node_type(sensor_node_type(s)) == s);
  }
  CHECK_THROWS(sensor_from_id("sensor_unknown"));
}

TEST_CASE("season calendar covers all twelve months exactly once") {
  std::set<int> seen;
  for (int si = 0; si < kSeasonCount; ++si) {
    Season s = Season(si);
    CHECK(season_from_name(season_name(s)) == s);
    for (int m : months_of_season(s)) {
      CHECK(season_of_month(m) == s);
      CHECK(seen.insert(m).second);
    }
  }
  CHECK(seen.size() == 12);
}

TEST_CASE("alert state ids are stable and reversible") {
  CHECK(AlertState{}.state_id() == 0);  // default severity is none
  CHECK(AlertState{}.is_none());
  AlertState none;
  none.severity = Severity::kNone;
  CHECK(none.state_id() == 0);
  CHECK(alert_state_from_name("none").is_none());
  std::set<int> ids;
  ids.insert(0);
  for (int f = 0; f < kAlertFamilyCount; ++f) {
    for (Severity sev : {Severity::kAdvisory, Severity::kWarning}) {
      AlertState a{AlertFamily(f), sev};
      CHECK(ids.insert(a.state_id()).second);
      CHECK(alert_state_from_id(a.state_id()) == a);
      CHECK(alert_state_from_name(alert_state_name(a)) == a);
    }
  }
  CHECK(ids.size() == size_t(kAlertStateCount));
}

TEST_CASE("alert rulebook is internally consistent") {
  const auto& rules = alert_rules();
  CHECK_NOTHROW(check_alert_rules(rules));
  for (const AlertRule& r : rules) {
    const SensorInfo& info = sensor_info(r.sensor);
    CHECK(r.lo <= r.hi);
    CHECK(r.lo >= info.min);
    CHECK(r.hi <= info.max);
    AlertState a{r.family, r.severity};
    const AlertRule& found = alert_rule_for(a);
    CHECK(found.sensor == r.sensor);
    CHECK(found.lo == r.lo);
  }
  // Warning ranges start strictly beyond advisory ranges along the hazard
  // axis (overlap is allowed; cold ranges overlap by design).
  for (int f = 0; f < kAlertFamilyCount; ++f) {
    const AlertRule& adv = alert_rule_for(AlertState{AlertFamily(f), Severity::kAdvisory});
    const AlertRule& warn = alert_rule_for(AlertState{AlertFamily(f), Severity::kWarning});
    CHECK(adv.sensor == warn.sensor);
    CHECK(adv.hazard_sign == warn.hazard_sign);
    double a_lo = adv.hazard_sign > 0 ? adv.lo : -adv.hi;
    double a_hi = adv.hazard_sign > 0 ? adv.hi : -adv.lo;
    double w_lo = warn.hazard_sign > 0 ? warn.lo : -warn.hi;
    double w_hi = warn.hazard_sign > 0 ? warn.hi : -warn.lo;
    CHECK(a_lo < w_lo);
    CHECK(a_hi <= w_hi);
  }
  auto broken = rules;
  std::swap(broken[0].lo, broken[0].hi);
  if (broken[0].lo != broken[0].hi) CHECK_THROWS(check_alert_rules(broken));
}

TEST_CASE("category table is season-complete and names are reversible") {
  for (Category c : all_categories()) {
    const CategoryInfo& info = category_info(c);
    CHECK(category_from_id(info.id) == c);
    CHECK(!info.primary.empty());
    for (const PrimarySensor& p : info.primary)
      CHECK((p.hazard_sign == 1 || p.hazard_sign == -1));
    CHECK(!info.alert_families.empty());
  }
  CHECK_THROWS(category_from_id("nonsense"));
}

TEST_CASE("district gazetteer splits nine districts into three regions of three") {
  std::set<std::string> ids;
  std::array<int, kRegionCount> per_region{};
  for (int d = 0; d < kDistrictCount; ++d) {
    const District& info = districts()[size_t(d)];
    CHECK(ids.insert(info.id).second);
    CHECK(district_from_id(info.id) == d);
    REQUIRE(info.region >= 0);
    REQUIRE(info.region < kRegionCount);
    ++per_region[size_t(info.region)];
  }
  for (int r = 0; r < kRegionCount; ++r) {
    CHECK(per_region[size_t(r)] == 3);
    const auto& in_region = districts_in_region(r);
    CHECK(in_region.size() == 3);
    for (int d : in_region) CHECK(districts()[size_t(d)].region == r);
  }
}

TEST_CASE("count and lead-time bins match their documented edges") {
  CHECK(report_count_bin(0) == 0);
  CHECK(report_count_bin(1) == 1);
  CHECK(report_count_bin(2) == 1);
  CHECK(report_count_bin(3) == 2);
  CHECK(report_count_bin(5) == 2);
  CHECK(report_count_bin(6) == 3);
  CHECK(report_count_bin(10) == 3);
  CHECK(report_count_bin(11) == 4);
  CHECK(report_count_bin(100) == 4);

  CHECK(lead_time_bin(0) == 0);
  CHECK(lead_time_bin(1) == 0);
  CHECK(lead_time_bin(2) == 1);
  CHECK(lead_time_bin(3) == 2);
  CHECK(lead_time_bin(6) == 3);
  CHECK(lead_time_bin(12) == 4);
  CHECK(lead_time_bin(24) == 5);
  CHECK(lead_time_bin(48) == 5);
  for (int h : lead_time_choices()) CHECK(lead_time_bin(h) >= 0);
}

TEST_CASE("neighbor slots enumerate the fifteen non-report types") {
  std::set<NodeType> seen;
  for (int slot = 0; slot < kNeighborSlotCount; ++slot) {
    NodeType t = neighbor_slot_type(slot);
    CHECK(t != NodeType::kReport);
    CHECK(neighbor_slot_of(t) == slot);
    CHECK(seen.insert(t).second);
  }
  CHECK(neighbor_slot_of(NodeType::kReport) == -1);
  for (int ti = 0; ti < kNodeTypeCount; ++ti) {
    NodeType t = NodeType(ti);
    CHECK(node_type_from_name(node_type_name(t)) == t);
    CHECK(node_type_feature_dim(t) > 0);
  }
}

TEST_CASE("prunable types are the seven sensors plus the five context types") {
  const auto& p = prunable_types();
  CHECK(p.size() == 12);
  int sensors = 0, context = 0;
  for (NodeType t : p) {
    CHECK(is_prunable(t));
    CHECK(is_sensor_group(t) != is_context_group(t));
    sensors += is_sensor_group(t) ? 1 : 0;
    context += is_context_group(t) ? 1 : 0;
  }
  CHECK(sensors == kSensorCount);
  CHECK(context == 5);
  for (NodeType t : {NodeType::kReportType, NodeType::kReportCount, NodeType::kLocation,
                     NodeType::kReport}) {
    CHECK(!is_prunable(t));
    CHECK(!is_sensor_group(t));
    CHECK(!is_context_group(t));
  }
}

TEST_CASE("generator defaults are inside physical bounds and risk-monotone") {
  GeneratorConfig g = GeneratorConfig::defaults();
  for (int season = 0; season < kSeasonCount; ++season) {
    for (int s = 0; s < kSensorCount; ++s) {
      const Dist& d = g.baseline[size_t(season)][size_t(s)];
      const SensorInfo& info = sensor_info(Sensor(s));
      CHECK(d.mean >= info.min);
      CHECK(d.mean <= info.max);
      CHECK(d.stddev > 0.0);
    }
  }
  for (Category c : all_categories()) {
    for (const PrimaryDist& pd : g.risk_graded[size_t(int(c))]) {
      const PrimarySensor* ps = nullptr;
      for (const PrimarySensor& cand : category_info(c).primary)
        if (cand.sensor == pd.sensor) ps = &cand;
      REQUIRE(ps != nullptr);
      // Hazard means move monotonically with risk in the hazard direction.
      double lo = pd.by_risk[0].mean, mid = pd.by_risk[1].mean, hi = pd.by_risk[2].mean;
      if (ps->hazard_sign > 0) {
        CHECK(lo <= mid);
        CHECK(mid <= hi);
      } else {
        CHECK(lo >= mid);
        CHECK(mid >= hi);
      }
      CHECK(g.find_primary(c, pd.sensor) != nullptr);
    }
  }
  CHECK(g.find_primary(Category::kFineDust, Sensor::kSnowfall) == nullptr);
}

TEST_CASE("generator config JSON round-trips with a stable hash") {
  GeneratorConfig g = GeneratorConfig::defaults();
  GeneratorConfig g2 = GeneratorConfig::from_json(g.to_json());
  CHECK(g.hash() == g2.hash());
  CHECK(g.to_json() == g2.to_json());
  g2.medium_preceded_prob = 0.75;
  CHECK(g.hash() != g2.hash());

  DatasetParams p;
  DatasetParams p2 = DatasetParams::from_json(p.to_json());
  CHECK(p.to_json() == p2.to_json());
}
