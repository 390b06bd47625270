#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "riskgraph/config.hpp"
#include "riskgraph/domain.hpp"

namespace riskgraph {

// Minute-resolution civil time helpers (proleptic Gregorian, no time zones).
int64_t days_from_civil(int y, int m, int d);
void civil_from_days(int64_t z, int& y, int& m, int& d);
int days_in_month(int y, int m);
int64_t minutes_from_civil(int y, int mo, int d, int h, int mi);
std::string iso_from_minutes(int64_t minutes);
int64_t minutes_from_iso(const std::string& iso);  // "YYYY-MM-DDTHH:MM"
int month_of_minutes(int64_t minutes);             // 1..12

// Pre-alert context: the alert state that preceded the active one (or none).
struct PreAlert {
  AlertState type;     // none when the record's scenario was "direct"
  int lead_hours = 0;  // hours before the record's timestamp; 0 when none
  Severity severity = Severity::kNone;

  bool operator==(const PreAlert& o) const {
    return type == o.type && lead_hours == o.lead_hours && severity == o.severity;
  }
};

// One synthetic civil-incident report: identity, time/place, category, risk
// label, the seven weather readings, and alert/drainage/co-location context.
struct ReportRecord {
  int64_t id = 0;
  int64_t timestamp = 0;  // epoch minutes
  Category category = Category::kYellowDust;
  Risk risk = Risk::kLow;
  int district = 0;  // gazetteer index
  std::array<double, kSensorCount> sensors{};
  AlertState alert;
  PreAlert pre_alert;
  Drainage drainage = Drainage::kNormal;
  int colocated_count = 0;

  Season season() const { return season_of_month(month_of_minutes(timestamp)); }

  ordered_json to_json() const;
  static ReportRecord from_json(const ordered_json& j);
};

// Structural sanity of a single record (enum ranges, sensor bounds, low-risk
// purity, pre-alert legality). Returns an empty string when valid, else a
// human-readable description of the first violation. Alert-weather range
// conformance is the auditor's job, not this check's.
std::string record_structural_error(const ReportRecord& r);

// NDJSON dataset I/O. Writing also emits "<path>.meta.json" with the
// generation parameters, full generator config, per-label counts and the
// sha256 of the data file; loading verifies the hash when the side file
// exists.
void write_dataset(const std::string& path, const std::vector<ReportRecord>& records,
                   const DatasetParams& params, const GeneratorConfig& config);
std::vector<ReportRecord> load_dataset(const std::string& path);
std::string dataset_file_hash(const std::string& path);

}  // namespace riskgraph
