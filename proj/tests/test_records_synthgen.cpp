#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "riskgraph/fsutil.hpp"
#include "riskgraph/record.hpp"
#include "riskgraph/synthgen.hpp"

using namespace riskgraph;

namespace {

std::vector<ReportRecord> small_dataset(int n = 400, uint64_t seed = 42) {
  DatasetParams p;
  p.n = n;
  p.seed = seed;
  return generate_dataset(p, GeneratorConfig::defaults());
}

}  // namespace

TEST_CASE("civil time helpers agree with the calendar") {
  CHECK(days_in_month(2024, 2) == 29);
  CHECK(days_in_month(2023, 2) == 28);
  CHECK(days_in_month(2024, 4) == 30);
  int64_t m = minutes_from_civil(2024, 7, 15, 13, 45);
  CHECK(iso_from_minutes(m) == "2024-07-15T13:45");
  CHECK(minutes_from_iso("2024-07-15T13:45") == m);
  CHECK(month_of_minutes(m) == 7);
  int y, mo, d;
  civil_from_days(days_from_civil(2000, 2, 29), y, mo, d);
  CHECK(y == 2000);
  CHECK(mo == 2);
  CHECK(d == 29);
  // Epoch anchor.
  CHECK(days_from_civil(1970, 1, 1) == 0);
}

TEST_CASE("record JSON round-trips exactly") {
  ReportRecord r;
  r.id = 123456789012345;
  r.timestamp = minutes_from_civil(2024, 3, 2, 8, 30);
  r.category = Category::kFineDust;
  r.risk = Risk::kHigh;
  r.district = 4;
  r.sensors = {12.25, -3.5, -7.125, 55.0, 4.75, 0.0, 181.0 + 1.0 / 3.0};
  r.alert = AlertState{AlertFamily::kYellowDust, Severity::kWarning};
  r.pre_alert.type = AlertState{AlertFamily::kYellowDust, Severity::kAdvisory};
  r.pre_alert.lead_hours = 6;
  r.pre_alert.severity = Severity::kAdvisory;
  r.drainage = Drainage::kPartiallyBlocked;
  r.colocated_count = 7;

  ReportRecord r2 = ReportRecord::from_json(r.to_json());
  CHECK(r2.id == r.id);
  CHECK(r2.timestamp == r.timestamp);
  CHECK(r2.category == r.category);
  CHECK(r2.risk == r.risk);
  CHECK(r2.district == r.district);
  for (int s = 0; s < kSensorCount; ++s) CHECK(r2.sensors[size_t(s)] == r.sensors[size_t(s)]);
  CHECK(r2.alert == r.alert);
  CHECK(r2.pre_alert == r.pre_alert);
  CHECK(r2.drainage == r.drainage);
  CHECK(r2.colocated_count == r.colocated_count);
  CHECK(r2.to_json().dump() == r.to_json().dump());
}

TEST_CASE("structural checker flags each invariant violation") {
  auto records = small_dataset(50);
  for (const ReportRecord& r : records) CHECK(record_structural_error(r) == "");

  ReportRecord base = records[0];
  for (const ReportRecord& r : records)
    if (r.risk == Risk::kHigh) {
      base = r;
      break;
    }

  ReportRecord bad = base;
  bad.district = kDistrictCount;
  CHECK(record_structural_error(bad) != "");

  bad = base;
  bad.sensors[size_t(Sensor::kHumidity)] = 101.0;
  CHECK(record_structural_error(bad) != "");

  bad = base;
  bad.risk = Risk::kLow;  // low risk must be alert-free
  CHECK(record_structural_error(bad) != "");

  bad = base;
  bad.alert.severity = Severity::kNone;  // high risk must carry a warning
  CHECK(record_structural_error(bad) != "");

  bad = base;
  bad.colocated_count = -1;
  CHECK(record_structural_error(bad) != "");

  bad = base;
  bad.pre_alert.type = bad.alert;
  bad.pre_alert.severity = bad.alert.severity;
  bad.pre_alert.lead_hours = -5;
  CHECK(record_structural_error(bad) != "");
}

TEST_CASE("generation is deterministic and honors the risk mix") {
  auto a = small_dataset(600, 9);
  auto b = small_dataset(600, 9);
  REQUIRE(a.size() == 600);
  bool identical = true;
  for (size_t i = 0; i < a.size(); ++i)
    identical = identical && a[i].to_json().dump() == b[i].to_json().dump();
  CHECK(identical);

  auto c = small_dataset(600, 10);
  bool differs = false;
  for (size_t i = 0; i < a.size(); ++i) differs = differs || a[i].to_json() != c[i].to_json();
  CHECK(differs);

  std::array<int, kRiskCount> counts{};
  for (const auto& r : a) ++counts[size_t(int(r.risk))];
  CHECK(std::abs(counts[0] / 600.0 - 0.25) < 0.05);
  CHECK(std::abs(counts[1] / 600.0 - 0.35) < 0.05);
  CHECK(std::abs(counts[2] / 600.0 - 0.40) < 0.05);

  // Timestamp order with dense ids.
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == int64_t(i));
  for (size_t i = 1; i < a.size(); ++i) CHECK(a[i].timestamp >= a[i - 1].timestamp);
}

TEST_CASE("every generated record sits in its category's season") {
  for (const auto& r : small_dataset(500, 3)) {
    CHECK(r.season() == category_info(r.category).season);
    CHECK(record_structural_error(r) == "");
  }
}

TEST_CASE("alert sequences follow the risk scenario grammar") {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  Rng rng(77);
  bool saw_escalation = false, saw_preceded = false, saw_direct = false;
  for (int i = 0; i < 300; ++i) {
    Category c = all_categories()[rng.uniform_index(kCategoryCount)];
    AlertDraw low = generate_alert_sequence(c, Risk::kLow, cfg, rng);
    CHECK(low.alert.is_none());
    CHECK(low.pre_alert.type.is_none());

    AlertDraw med = generate_alert_sequence(c, Risk::kMedium, cfg, rng);
    CHECK(med.alert.severity == Severity::kAdvisory);
    if (!med.pre_alert.type.is_none()) {
      saw_preceded = true;
      CHECK(med.pre_alert.type == med.alert);
      CHECK(med.pre_alert.lead_hours > 0);
    }

    AlertDraw high = generate_alert_sequence(c, Risk::kHigh, cfg, rng);
    CHECK(high.alert.severity == Severity::kWarning);
    if (high.pre_alert.type.is_none()) {
      saw_direct = true;
    } else if (high.pre_alert.type.severity == Severity::kAdvisory) {
      saw_escalation = true;
      CHECK(high.pre_alert.type.family == high.alert.family);
    } else {
      CHECK(high.pre_alert.type == high.alert);
    }
    // Families come from the category's allowed list.
    bool family_ok = false;
    for (AlertFamily f : category_info(c).alert_families)
      family_ok = family_ok || f == high.alert.family;
    CHECK(family_ok);
  }
  CHECK(saw_escalation);
  CHECK(saw_preceded);
  CHECK(saw_direct);
}

TEST_CASE("constrained sensors obey the governing rule range") {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  Rng rng(5);
  for (const AlertRule& rule : alert_rules()) {
    AlertState a{rule.family, rule.severity};
    for (int i = 0; i < 50; ++i) {
      auto sensors = generate_constrained_sensors(a, Season::kSummer, cfg, rng);
      double v = sensors[size_t(int(rule.sensor))];
      CHECK(v >= rule.lo);
      CHECK(v <= rule.hi);
      for (int s = 0; s < kSensorCount; ++s) {
        const SensorInfo& info = sensor_info(Sensor(s));
        CHECK(sensors[size_t(s)] >= info.min);
        CHECK(sensors[size_t(s)] <= info.max);
      }
    }
  }
}

TEST_CASE("temporal window keeps co-located readings coherent") {
  GeneratorConfig cfg = GeneratorConfig::defaults();
  TemporalWindow w(cfg);
  int64_t t0 = minutes_from_civil(2024, 6, 1, 10, 0);
  w.append(0, Sensor::kRainfall, t0, 40.0);
  auto ref = w.reference(0, Sensor::kRainfall, t0 + 30);
  REQUIRE(ref.has_value());
  CHECK(*ref == 40.0);
  // Region partner visible, other region invisible.
  int partner = -1, other = -1;
  for (int d = 1; d < kDistrictCount; ++d) {
    if (districts()[size_t(d)].region == districts()[0].region) partner = d;
    if (districts()[size_t(d)].region != districts()[0].region) other = d;
  }
  REQUIRE(partner > 0);
  REQUIRE(other > 0);
  CHECK(w.reference(partner, Sensor::kRainfall, t0 + 30).has_value());
  CHECK(!w.reference(other, Sensor::kRainfall, t0 + 30).has_value());
  // Outside the reference horizon.
  CHECK(!w.reference(0, Sensor::kRainfall, t0 + cfg.reference_minutes + 1).has_value());
  // Rolling window eviction.
  w.advance(t0 + int64_t(cfg.window_hours) * 60 + 1);
  CHECK(w.size() == 0);

  auto [lo, hi] = TemporalWindow::coherence_band(40.0, Sensor::kRainfall, cfg.temporal_sigma);
  CHECK(lo <= 40.0);
  CHECK(hi >= 40.0);
  std::array<double, kSensorCount> sensors{};
  sensors[size_t(Sensor::kRainfall)] = hi + 5.0;
  TemporalWindow w2(cfg);
  w2.append(0, Sensor::kRainfall, t0, 40.0);
  int adjusted = enforce_temporal_consistency(sensors, 0, t0 + 10, w2, cfg);
  CHECK(adjusted >= 1);
  CHECK(sensors[size_t(Sensor::kRainfall)] <= hi);
}

TEST_CASE("dataset IO round-trips and detects tampering") {
  auto records = small_dataset(120, 21);
  DatasetParams p;
  p.n = 120;
  p.seed = 21;
  std::string path = "/tmp/riskgraph_io_test.ndjson";
  write_dataset(path, records, p, GeneratorConfig::defaults());
  auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == records.size());
  bool identical = true;
  for (size_t i = 0; i < records.size(); ++i)
    identical = identical && loaded[i].to_json().dump() == records[i].to_json().dump();
  CHECK(identical);

  // Corrupt one byte; the meta hash check must reject the file.
  std::string text = read_text_file(path);
  size_t pos = text.find("\"district\"");
  REQUIRE(pos != std::string::npos);
  text[pos + 1] = 'e';
  write_text_file(path, text);
  CHECK_THROWS(load_dataset(path));
}

TEST_CASE("audit counts structural violations and rule satisfaction") {
  auto records = small_dataset(500, 42);
  AuditReport audit = validate_dataset(records);
  CHECK(audit.record_count == 500);
  CHECK(audit.structural_violations == 0);
  CHECK(audit.low_risk_total == audit.low_risk_alert_free);
  CHECK(audit.season_mismatches == 0);
  CHECK(audit.overall_pct() >= 93.0);
  int64_t risk_total = 0;
  for (int64_t c : audit.risk_counts) risk_total += c;
  CHECK(risk_total == 500);

  // Push one alert-bearing record's governed sensor outside its range.
  for (auto& r : records)
    if (!r.alert.is_none()) {
      const AlertRule& rule = alert_rule_for(r.alert);
      r.sensors[size_t(int(rule.sensor))] =
          rule.hazard_sign > 0 ? sensor_info(rule.sensor).min : sensor_info(rule.sensor).max;
      CHECK(!record_rule_satisfied(r));
      break;
    }
  AuditReport dirty = validate_dataset(records);
  CHECK(dirty.satisfied_total == audit.satisfied_total - 1);

  // Break a structural invariant.
  records[0].district = -1;
  AuditReport broken = validate_dataset(records);
  CHECK(broken.structural_violations == 1);
  CHECK(broken.first_structural_error.find("record") != std::string::npos);
}

TEST_CASE("stratified split matches ratios per stratum and labels from train") {
  auto records = small_dataset(900, 13);
  SplitSpec spec;
  SplitInfo split = split_dataset(records, spec);
  REQUIRE(split.part.size() == records.size());
  REQUIRE(split.labeled.size() == records.size());
  CHECK(split.part_counts[0] + split.part_counts[1] + split.part_counts[2] ==
        int64_t(records.size()));
  CHECK(std::abs(split.part_counts[0] / 900.0 - 0.8) < 0.03);

  int64_t labeled = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    if (split.labeled[i]) {
      ++labeled;
      CHECK(split.part[i] == int8_t(SplitPart::kTrain));
    }
  }
  CHECK(labeled == split.labeled_count);
  CHECK(std::abs(double(labeled) / double(split.part_counts[0]) - spec.labeled_ratio) < 0.05);

  // Largest-remainder apportionment keeps every stratum within one record.
  std::map<std::pair<int, int>, std::array<int, 3>> strata;
  for (size_t i = 0; i < records.size(); ++i)
    ++strata[{int(records[i].category), int(records[i].risk)}][size_t(split.part[i])];
  for (const auto& [key, counts] : strata) {
    int total = counts[0] + counts[1] + counts[2];
    for (int part = 0; part < 3; ++part)
      CHECK(std::abs(counts[size_t(part)] - spec.ratios[size_t(part)] * total) <= 1.0 + 1e-9);
  }

  // Deterministic per seed.
  SplitInfo split2 = split_dataset(records, spec);
  CHECK(split.part == split2.part);
  CHECK(split.labeled == split2.labeled);
  spec.seed = 8;
  SplitInfo split3 = split_dataset(records, spec);
  CHECK(split.part != split3.part);
}
