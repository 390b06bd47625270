#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "riskgraph/config.hpp"
#include "riskgraph/domain.hpp"
#include "riskgraph/record.hpp"
#include "riskgraph/rng.hpp"

namespace riskgraph {

// Rolling per-(district, sensor) history of recent readings, used to keep
// co-located reports spatio-temporally coherent. Entries must be appended in
// non-decreasing timestamp order; history older than window_hours is dropped.
class TemporalWindow {
 public:
  explicit TemporalWindow(const GeneratorConfig& cfg) : cfg_(cfg) {}

  void append(int district, Sensor s, int64_t t_minutes, double value);
  void advance(int64_t now_minutes);  // drop entries outside the rolling window

  // Most recent reading of `s` within cfg.reference_minutes before `t`, looking
  // at `district` first and then its region partners. Ties on timestamp prefer
  // the record's own district, then the lower district index.
  std::optional<double> reference(int district, Sensor s, int64_t t_minutes) const;

  // Coherence band around a reference value: multiplicative +-sigma for
  // readings away from zero, absolute sigma * physical range near zero, always
  // intersected with the sensor's physical bounds.
  static std::pair<double, double> coherence_band(double ref, Sensor s, double sigma);

  size_t size() const;

 private:
  const GeneratorConfig& cfg_;
  std::deque<std::pair<int64_t, double>> hist_[kDistrictCount][kSensorCount];
};

// Alert context drawn for one record: the active alert plus, depending on the
// scenario, the alert state that preceded it.
//   low risk        -> no alert at all
//   medium risk     -> advisory, either direct or preceded by the same advisory
//   high risk       -> warning, either direct, preceded by the same warning, or
//                      an escalation from the advisory of the same family
struct AlertDraw {
  AlertState alert;
  PreAlert pre_alert;
};
AlertDraw generate_alert_sequence(Category category, Risk risk, const GeneratorConfig& cfg,
                                  Rng& rng);

// Sensor vector with the alert's governed sensor drawn uniformly inside its
// consistency-rule range and everything else from the seasonal baseline.
std::array<double, kSensorCount> generate_constrained_sensors(const AlertState& alert,
                                                              Season season,
                                                              const GeneratorConfig& cfg,
                                                              Rng& rng);

// Sensor vector for alert-free records: the category's hazard sensors come
// from its risk-graded distributions, the rest from the seasonal baseline.
std::array<double, kSensorCount> generate_risk_based_sensors(Category category, Risk risk,
                                                             Season season,
                                                             const GeneratorConfig& cfg,
                                                             Rng& rng);

// District choice. Alert-bearing reports preferentially come from districts
// whose recent readings are compatible with the alert's sensor range (reports
// about a hazard originate where the hazard is happening); alert-free reports
// are uniform over the gazetteer.
int sample_location(const AlertState& alert, int64_t t_minutes, const TemporalWindow& window,
                    const GeneratorConfig& cfg, Rng& rng);

// Clamps each sensor into the coherence band of its window reference (when one
// exists) and appends the final readings to the window. Returns the number of
// sensors that were adjusted.
int enforce_temporal_consistency(std::array<double, kSensorCount>& sensors, int district,
                                 int64_t t_minutes, TemporalWindow& window,
                                 const GeneratorConfig& cfg);

// Uniform timestamp over the season's days of `year`, with a mild diurnal
// weighting on the hour and a uniform minute.
int64_t sample_timestamp(Season season, int year, const GeneratorConfig& cfg, Rng& rng);

// Full generation pipeline. Records are returned in timestamp order with
// dense ids 0..n-1.
std::vector<ReportRecord> generate_dataset(const DatasetParams& params,
                                           const GeneratorConfig& cfg);

// ---------------------------------------------------------------------------
// Dataset audit
// ---------------------------------------------------------------------------

struct RuleAuditRow {
  AlertState state;
  int64_t applicable = 0;
  int64_t satisfied = 0;
  double pct() const { return applicable == 0 ? 100.0 : 100.0 * double(satisfied) / double(applicable); }
};

struct AuditReport {
  int64_t record_count = 0;
  std::vector<RuleAuditRow> rules;  // one row per (family, severity)
  int64_t applicable_total = 0;
  int64_t satisfied_total = 0;
  double overall_pct() const {
    return applicable_total == 0 ? 100.0
                                 : 100.0 * double(satisfied_total) / double(applicable_total);
  }
  // Structural invariants, re-derived from raw values only.
  int64_t structural_violations = 0;
  std::string first_structural_error;  // "record <id>: <reason>"
  int64_t low_risk_total = 0;
  int64_t low_risk_alert_free = 0;
  int64_t season_mismatches = 0;  // records outside their category's months
  std::array<int64_t, kRiskCount> risk_counts{};

  ordered_json to_json() const;
};

// Re-checks every applicable alert-weather rule and the structural record
// invariants from raw record values alone (no generator state).
AuditReport validate_dataset(const std::vector<ReportRecord>& records);

// Per-record verdict of the active alert's own rule; true for alert-free
// records. Exposed so independent checkers can be compared verdict-for-verdict.
bool record_rule_satisfied(const ReportRecord& r);

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

struct SplitSpec {
  std::array<double, 3> ratios = {0.8, 0.1, 0.1};  // train / val / test
  double labeled_ratio = 0.2;                      // of the train split
  uint64_t seed = 7;
};

enum class SplitPart : int8_t { kTrain = 0, kVal = 1, kTest = 2 };

struct SplitInfo {
  std::vector<int8_t> part;     // per record: 0 train, 1 val, 2 test
  std::vector<uint8_t> labeled; // per record: 1 if in the labeled subset
  std::array<int64_t, 3> part_counts{};
  int64_t labeled_count = 0;
  SplitSpec spec;

  ordered_json summary_json() const;
};

// Stratified by (category, risk): each stratum is split close to the ratios
// (largest-remainder apportionment, so each split is within one record of its
// exact share) and the labeled subset is drawn from train per stratum.
SplitInfo split_dataset(const std::vector<ReportRecord>& records, const SplitSpec& spec);

}  // namespace riskgraph
