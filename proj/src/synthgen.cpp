#include "riskgraph/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace riskgraph {

void TemporalWindow::append(int district, Sensor s, int64_t t, double value) {
  auto& dq = hist_[district][size_t(s)];
  if (!dq.empty() && dq.back().first > t)
    throw std::logic_error("TemporalWindow: appends must be time-ordered");
  dq.emplace_back(t, value);
}

void TemporalWindow::advance(int64_t now) {
  int64_t cutoff = now - int64_t(cfg_.window_hours) * 60;
  for (auto& per_district : hist_)
    for (auto& dq : per_district)
      while (!dq.empty() && dq.front().first < cutoff) dq.pop_front();
}

std::optional<double> TemporalWindow::reference(int district, Sensor s, int64_t t) const {
  int64_t lo = t - cfg_.reference_minutes;
  int64_t best_t = lo - 1;
  std::optional<double> best;
  auto consider = [&](int d) {
    const auto& dq = hist_[d][size_t(s)];
    // Entries are time-ordered; scan from the back for the newest entry <= t.
    for (auto it = dq.rbegin(); it != dq.rend(); ++it) {
      if (it->first > t) continue;
      if (it->first < lo) break;
      if (it->first > best_t) {  // strict: earlier-scanned district wins ties
        best_t = it->first;
        best = it->second;
      }
      break;
    }
  };
  consider(district);
  for (int d : districts_in_region(districts()[size_t(district)].region))
    if (d != district) consider(d);
  return best;
}

std::pair<double, double> TemporalWindow::coherence_band(double ref, Sensor s, double sigma) {
  const SensorInfo& si = sensor_info(s);
  double scale = si.max - si.min;
  double lo, hi;
  if (std::fabs(ref) >= 1e-6 * scale) {
    double a = ref * (1.0 - sigma), b = ref * (1.0 + sigma);
    lo = std::min(a, b);
    hi = std::max(a, b);
  } else {
    lo = ref - sigma * scale;
    hi = ref + sigma * scale;
  }
  lo = std::max(lo, si.min);
  hi = std::min(hi, si.max);
  if (lo > hi) {  // reference outside bounds; collapse to the nearest bound
    double v = std::min(si.max, std::max(si.min, ref));
    lo = hi = v;
  }
  return {lo, hi};
}

size_t TemporalWindow::size() const {
  size_t n = 0;
  for (const auto& per_district : hist_)
    for (const auto& dq : per_district) n += dq.size();
  return n;
}

AlertDraw generate_alert_sequence(Category category, Risk risk, const GeneratorConfig& cfg,
                                  Rng& rng) {
  AlertDraw out;
  if (risk == Risk::kLow) return out;  // no alert, no pre-alert

  const CategoryInfo& info = category_info(category);
  AlertFamily family = info.alert_families[rng.uniform_index(info.alert_families.size())];
  Severity severity = risk == Risk::kMedium ? Severity::kAdvisory : Severity::kWarning;
  out.alert = AlertState{family, severity};

  auto draw_lead = [&] {
    const auto& choices = lead_time_choices();
    return choices[rng.uniform_index(choices.size())];
  };

  if (risk == Risk::kMedium) {
    if (rng.uniform() < cfg.medium_preceded_prob) {
      out.pre_alert.type = out.alert;
      out.pre_alert.lead_hours = draw_lead();
      out.pre_alert.severity = out.alert.severity;
    }
  } else {
    size_t scenario = rng.categorical({cfg.high_scenario[0], cfg.high_scenario[1],
                                       cfg.high_scenario[2]});
    if (scenario == 1) {  // preceded by the same warning
      out.pre_alert.type = out.alert;
      out.pre_alert.lead_hours = draw_lead();
      out.pre_alert.severity = out.alert.severity;
    } else if (scenario == 2) {  // escalation from the family's advisory
      out.pre_alert.type = AlertState{family, Severity::kAdvisory};
      out.pre_alert.lead_hours = draw_lead();
      out.pre_alert.severity = Severity::kAdvisory;
    }
  }
  return out;
}

namespace {

std::array<double, kSensorCount> baseline_sensors(Season season, const GeneratorConfig& cfg,
                                                  Rng& rng) {
  std::array<double, kSensorCount> v{};
  for (Sensor s : all_sensors()) {
    const Dist& d = cfg.baseline[size_t(season)][size_t(s)];
    const SensorInfo& si = sensor_info(s);
    v[size_t(s)] = rng.truncated_normal(d.mean, d.stddev, si.min, si.max);
  }
  return v;
}

}  // namespace

std::array<double, kSensorCount> generate_constrained_sensors(const AlertState& alert,
                                                              Season season,
                                                              const GeneratorConfig& cfg,
                                                              Rng& rng) {
  if (alert.is_none())
    throw std::invalid_argument("generate_constrained_sensors: alert must not be 'none'");
  std::array<double, kSensorCount> v = baseline_sensors(season, cfg, rng);
  const AlertRule& rule = alert_rule_for(alert);
  v[size_t(rule.sensor)] = rng.uniform(rule.lo, rule.hi);
  return v;
}

std::array<double, kSensorCount> generate_risk_based_sensors(Category category, Risk risk,
                                                             Season season,
                                                             const GeneratorConfig& cfg,
                                                             Rng& rng) {
  std::array<double, kSensorCount> v = baseline_sensors(season, cfg, rng);
  for (const PrimaryDist& p : cfg.risk_graded[size_t(category)]) {
    const Dist& d = p.by_risk[size_t(risk)];
    const SensorInfo& si = sensor_info(p.sensor);
    v[size_t(p.sensor)] = rng.truncated_normal(d.mean, d.stddev, si.min, si.max);
  }
  return v;
}

int sample_location(const AlertState& alert, int64_t t, const TemporalWindow& window,
                    const GeneratorConfig& cfg, Rng& rng) {
  if (alert.is_none()) return int(rng.uniform_index(kDistrictCount));
  const AlertRule& rule = alert_rule_for(alert);
  std::vector<int> compatible;
  for (int d = 0; d < kDistrictCount; ++d) {
    auto ref = window.reference(d, rule.sensor, t);
    if (!ref) {
      compatible.push_back(d);
      continue;
    }
    auto [lo, hi] = TemporalWindow::coherence_band(*ref, rule.sensor, cfg.temporal_sigma);
    if (std::max(lo, rule.lo) <= std::min(hi, rule.hi)) compatible.push_back(d);
  }
  if (compatible.empty()) return int(rng.uniform_index(kDistrictCount));
  return compatible[rng.uniform_index(compatible.size())];
}

int enforce_temporal_consistency(std::array<double, kSensorCount>& sensors, int district,
                                 int64_t t, TemporalWindow& window,
                                 const GeneratorConfig& cfg) {
  int adjusted = 0;
  for (Sensor s : all_sensors()) {
    double& v = sensors[size_t(s)];
    auto ref = window.reference(district, s, t);
    if (ref) {
      auto [lo, hi] = TemporalWindow::coherence_band(*ref, s, cfg.temporal_sigma);
      double clamped = std::min(hi, std::max(lo, v));
      if (clamped != v) {
        v = clamped;
        ++adjusted;
      }
    }
    window.append(district, s, t, v);
  }
  return adjusted;
}

int64_t sample_timestamp(Season season, int year, const GeneratorConfig& cfg, Rng& rng) {
  // Enumerate the season's days inside the calendar year (winter wraps the
  // year boundary, so its months are Jan, Feb and Dec of the same year).
  int total_days = 0;
  for (int m : months_of_season(season)) total_days += days_in_month(year, m);
  int day_idx = int(rng.uniform_index(uint64_t(total_days)));
  int month = 0, day = 0;
  for (int m : months_of_season(season)) {
    int dim = days_in_month(year, m);
    if (day_idx < dim) {
      month = m;
      day = day_idx + 1;
      break;
    }
    day_idx -= dim;
  }
  std::vector<double> weights(cfg.diurnal.begin(), cfg.diurnal.end());
  int hour = int(rng.categorical(weights));
  int minute = int(rng.uniform_index(60));
  return minutes_from_civil(year, month, day, hour, minute);
}

std::vector<ReportRecord> generate_dataset(const DatasetParams& params,
                                           const GeneratorConfig& cfg) {
  if (params.n <= 0) throw std::invalid_argument("generate_dataset: n must be positive");
  double rd_sum = params.risk_dist[0] + params.risk_dist[1] + params.risk_dist[2];
  if (std::fabs(rd_sum - 1.0) > 1e-9)
    throw std::invalid_argument("generate_dataset: risk_dist must sum to 1");
  check_alert_rules(alert_rules());

  // Phase one: draw every static attribute with a dedicated stream, so the
  // second phase (which depends on time ordering) cannot perturb these draws.
  Rng rng_attrs = sub_rng(params.seed, "attrs");
  struct Draft {
    Category category;
    Risk risk;
    AlertDraw alert;
    int64_t timestamp;
    Drainage drainage;
    int colocated;
  };
  std::vector<Draft> drafts(size_t(params.n));
  for (auto& d : drafts) {
    d.category = Category(rng_attrs.uniform_index(kCategoryCount));
    d.risk = Risk(rng_attrs.categorical(
        {params.risk_dist[0], params.risk_dist[1], params.risk_dist[2]}));
    d.alert = generate_alert_sequence(d.category, d.risk, cfg, rng_attrs);
    d.timestamp = sample_timestamp(category_info(d.category).season, params.year, cfg, rng_attrs);
    d.drainage = Drainage(rng_attrs.categorical({cfg.drainage_probs[size_t(d.risk)][0],
                                                 cfg.drainage_probs[size_t(d.risk)][1],
                                                 cfg.drainage_probs[size_t(d.risk)][2]}));
    d.colocated = std::min(rng_attrs.poisson(cfg.colocated_lambda[size_t(d.risk)]),
                           cfg.colocated_max);
  }

  // Phase two walks drafts in timestamp order (stable on the draw index) so
  // the rolling window sees history exactly as it would accumulate live.
  std::vector<size_t> order(drafts.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return drafts[a].timestamp < drafts[b].timestamp;
  });

  Rng rng_sensors = sub_rng(params.seed, "sensors");
  TemporalWindow window(cfg);
  std::vector<ReportRecord> out;
  out.reserve(drafts.size());
  for (size_t rank = 0; rank < order.size(); ++rank) {
    const Draft& d = drafts[order[rank]];
    ReportRecord r;
    r.id = int64_t(rank);
    r.timestamp = d.timestamp;
    r.category = d.category;
    r.risk = d.risk;
    r.alert = d.alert.alert;
    r.pre_alert = d.alert.pre_alert;
    r.drainage = d.drainage;
    r.colocated_count = d.colocated;
    Season season = category_info(d.category).season;
    window.advance(d.timestamp);
    r.sensors = d.alert.alert.is_none()
                    ? generate_risk_based_sensors(d.category, d.risk, season, cfg, rng_sensors)
                    : generate_constrained_sensors(d.alert.alert, season, cfg, rng_sensors);
    r.district = sample_location(d.alert.alert, d.timestamp, window, cfg, rng_sensors);
    enforce_temporal_consistency(r.sensors, r.district, d.timestamp, window, cfg);
    out.push_back(r);
  }
  return out;
}

bool record_rule_satisfied(const ReportRecord& r) {
  if (r.alert.is_none()) return true;
  const AlertRule& rule = alert_rule_for(r.alert);
  double v = r.sensors[size_t(rule.sensor)];
  return v >= rule.lo && v <= rule.hi;
}

AuditReport validate_dataset(const std::vector<ReportRecord>& records) {
  AuditReport rep;
  rep.record_count = int64_t(records.size());
  for (const AlertRule& rule : alert_rules())
    rep.rules.push_back(RuleAuditRow{AlertState{rule.family, rule.severity}, 0, 0});

  for (const ReportRecord& r : records) {
    rep.risk_counts[size_t(r.risk)]++;
    std::string err = record_structural_error(r);
    if (!err.empty()) {
      rep.structural_violations++;
      if (rep.first_structural_error.empty())
        rep.first_structural_error = "record " + std::to_string(r.id) + ": " + err;
    }
    if (r.risk == Risk::kLow) {
      rep.low_risk_total++;
      if (r.alert.is_none() && r.pre_alert.type.is_none()) rep.low_risk_alert_free++;
    }
    const auto& months = months_of_season(category_info(r.category).season);
    int month = month_of_minutes(r.timestamp);
    if (std::find(months.begin(), months.end(), month) == months.end())
      rep.season_mismatches++;
    if (!r.alert.is_none()) {
      for (RuleAuditRow& row : rep.rules) {
        if (row.state == r.alert) {
          row.applicable++;
          rep.applicable_total++;
          if (record_rule_satisfied(r)) {
            row.satisfied++;
            rep.satisfied_total++;
          }
          break;
        }
      }
    }
  }
  return rep;
}

ordered_json AuditReport::to_json() const {
  ordered_json j;
  j["record_count"] = record_count;
  ordered_json rule_rows = ordered_json::array();
  for (const RuleAuditRow& row : rules) {
    ordered_json e;
    e["alert"] = alert_state_name(row.state);
    e["applicable"] = row.applicable;
    e["satisfied"] = row.satisfied;
    e["pct"] = row.pct();
    rule_rows.push_back(e);
  }
  j["rules"] = rule_rows;
  j["applicable_total"] = applicable_total;
  j["satisfied_total"] = satisfied_total;
  j["overall_pct"] = overall_pct();
  j["structural_violations"] = structural_violations;
  if (!first_structural_error.empty()) j["first_structural_error"] = first_structural_error;
  j["low_risk_total"] = low_risk_total;
  j["low_risk_alert_free"] = low_risk_alert_free;
  j["season_mismatches"] = season_mismatches;
  ordered_json rc;
  for (int i = 0; i < kRiskCount; ++i) rc[risk_name(Risk(i))] = risk_counts[size_t(i)];
  j["risk_counts"] = rc;
  return j;
}

SplitInfo split_dataset(const std::vector<ReportRecord>& records, const SplitSpec& spec) {
  double ratio_sum = spec.ratios[0] + spec.ratios[1] + spec.ratios[2];
  if (std::fabs(ratio_sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: ratios must sum to 1");
  if (spec.labeled_ratio < 0.0 || spec.labeled_ratio > 1.0)
    throw std::invalid_argument("split_dataset: labeled_ratio out of [0,1]");

  // Bucket record indices per (category, risk) stratum, in id order.
  std::vector<std::vector<size_t>> strata(size_t(kCategoryCount * kRiskCount));
  for (size_t i = 0; i < records.size(); ++i) {
    int key = int(records[i].category) * kRiskCount + int(records[i].risk);
    strata[size_t(key)].push_back(i);
  }

  SplitInfo info;
  info.spec = spec;
  info.part.assign(records.size(), int8_t(SplitPart::kTrain));
  info.labeled.assign(records.size(), 0);

  for (int key = 0; key < kCategoryCount * kRiskCount; ++key) {
    auto& idx = strata[size_t(key)];
    Category cat = Category(key / kRiskCount);
    Risk risk = Risk(key % kRiskCount);
    std::string stratum = std::string(category_info(cat).id) + "/" + risk_name(risk);
    if (idx.size() < 3)
      throw std::invalid_argument("split_dataset: stratum " + stratum + " has " +
                                  std::to_string(idx.size()) + " records (need >= 3)");
    Rng rng = sub_rng(spec.seed, "split/" + stratum);
    rng.shuffle(idx);

    // Largest-remainder apportionment keeps each part within one record of
    // its exact share.
    size_t n = idx.size();
    std::array<size_t, 3> base{};
    std::array<double, 3> frac{};
    size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      double exact = spec.ratios[size_t(k)] * double(n);
      base[size_t(k)] = size_t(exact);
      frac[size_t(k)] = exact - double(base[size_t(k)]);
      assigned += base[size_t(k)];
    }
    std::array<int, 3> by_frac = {0, 1, 2};
    std::stable_sort(by_frac.begin(), by_frac.end(),
                     [&](int a, int b) { return frac[size_t(a)] > frac[size_t(b)]; });
    for (size_t r = 0; r < n - assigned; ++r) base[size_t(by_frac[r % 3])]++;

    size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      for (size_t c = 0; c < base[size_t(k)]; ++c, ++pos) {
        info.part[idx[pos]] = int8_t(k);
        info.part_counts[size_t(k)]++;
      }
    }
    // Labeled subset: the first round(labeled_ratio * train) of the shuffled
    // train slice.
    auto labeled_n = size_t(std::llround(spec.labeled_ratio * double(base[0])));
    for (size_t c = 0; c < labeled_n; ++c) {
      info.labeled[idx[c]] = 1;
      info.labeled_count++;
    }
  }
  return info;
}

ordered_json SplitInfo::summary_json() const {
  ordered_json j;
  j["ratios"] = spec.ratios;
  j["labeled_ratio"] = spec.labeled_ratio;
  j["seed"] = spec.seed;
  j["train"] = part_counts[0];
  j["val"] = part_counts[1];
  j["test"] = part_counts[2];
  j["labeled"] = labeled_count;
  return j;
}

}  // namespace riskgraph
