#include "riskgraph/anchors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "riskgraph/fsutil.hpp"
#include "riskgraph/sha256.hpp"

namespace riskgraph {

namespace {

constexpr uint32_t kFullSlotMask = 0xFFFFFFFFu;
constexpr const char* kAnchorFormat = "riskgraph-anchors-v1";

std::array<double, kSensorCount> norm_sensors(const ReportRecord& r) {
  std::array<double, kSensorCount> out{};
  for (Sensor s : all_sensors()) {
    const SensorInfo& info = sensor_info(s);
    out[size_t(s)] = (r.sensors[size_t(s)] - info.min) / (info.max - info.min);
  }
  return out;
}

double sq_dist(const std::array<double, kSensorCount>& a,
               const std::array<double, kSensorCount>& b) {
  double d = 0.0;
  for (int i = 0; i < kSensorCount; ++i) {
    double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

std::vector<const ReportRecord*> category_records(const std::vector<ReportRecord>& train,
                                                  Category c) {
  std::vector<const ReportRecord*> out;
  for (const ReportRecord& r : train)
    if (r.category == c) out.push_back(&r);
  return out;
}

}  // namespace

const char* anchor_strategy_name(AnchorStrategy s) {
  switch (s) {
    case AnchorStrategy::kSingleNode: return "single_node";
    case AnchorStrategy::kMedian: return "median";
    case AnchorStrategy::kCoverage: return "coverage";
    case AnchorStrategy::kSynthetic: return "synthetic";
  }
  throw std::invalid_argument("bad anchor strategy");
}

AnchorStrategy anchor_strategy_from_name(const std::string& name) {
  for (int i = 0; i < kAnchorStrategyCount; ++i)
    if (name == anchor_strategy_name(AnchorStrategy(i))) return AnchorStrategy(i);
  throw std::invalid_argument("unknown anchor strategy: " + name);
}

// ---------------------------------------------------------------------------
// Synthetic prototypes
// ---------------------------------------------------------------------------

ordered_json SyntheticPrototype::to_json() const {
  ordered_json sensors = ordered_json::object();
  for (Sensor s : all_sensors())
    sensors[sensor_info(s).id] =
        ordered_json{{"mean", mean[size_t(s)]}, {"stddev", stddev[size_t(s)]}};
  ordered_json dist = ordered_json::object();
  for (int d = 0; d < kDistrictCount; ++d) dist[districts()[size_t(d)].id] = district_count[size_t(d)];
  ordered_json drain = ordered_json::object();
  for (int d = 0; d < kDrainageCount; ++d) drain[drainage_name(Drainage(d))] = drainage_count[size_t(d)];
  ordered_json coloc = ordered_json::array();
  for (const auto& [value, count] : colocated_count)
    coloc.push_back(ordered_json{{"value", value}, {"count", count}});
  ordered_json combos_j = ordered_json::array();
  for (const ContextCombo& cb : combos)
    combos_j.push_back(ordered_json{{"risk", risk_name(Risk(cb.risk))},
                                    {"alert", alert_state_name(alert_state_from_id(cb.alert_id))},
                                    {"pre_alert", alert_state_name(alert_state_from_id(cb.pre_id))},
                                    {"lead_hours", cb.lead_hours},
                                    {"pre_severity", severity_name(Severity(cb.pre_severity))},
                                    {"count", cb.count}});
  ordered_json ts = ordered_json::array();
  for (int64_t t : timestamps) ts.push_back(iso_from_minutes(t));
  return ordered_json{{"n", n},           {"sensors", sensors},   {"districts", dist},
                      {"drainage", drain}, {"colocated", coloc},  {"context_combos", combos_j},
                      {"timestamps", ts}};
}

SyntheticPrototype SyntheticPrototype::from_json(const ordered_json& j) {
  SyntheticPrototype p;
  p.n = j.at("n").get<int64_t>();
  for (Sensor s : all_sensors()) {
    const ordered_json& js = j.at("sensors").at(sensor_info(s).id);
    p.mean[size_t(s)] = js.at("mean").get<double>();
    p.stddev[size_t(s)] = js.at("stddev").get<double>();
  }
  for (int d = 0; d < kDistrictCount; ++d)
    p.district_count[size_t(d)] = j.at("districts").at(districts()[size_t(d)].id).get<int64_t>();
  for (int d = 0; d < kDrainageCount; ++d)
    p.drainage_count[size_t(d)] = j.at("drainage").at(drainage_name(Drainage(d))).get<int64_t>();
  for (const ordered_json& e : j.at("colocated"))
    p.colocated_count.emplace_back(e.at("value").get<int>(), e.at("count").get<int64_t>());
  for (const ordered_json& e : j.at("context_combos")) {
    ContextCombo cb;
    cb.risk = int(risk_from_name(e.at("risk").get<std::string>()));
    cb.alert_id = alert_state_from_name(e.at("alert").get<std::string>()).state_id();
    cb.pre_id = alert_state_from_name(e.at("pre_alert").get<std::string>()).state_id();
    cb.lead_hours = e.at("lead_hours").get<int>();
    cb.pre_severity = int(severity_from_name(e.at("pre_severity").get<std::string>()));
    cb.count = e.at("count").get<int64_t>();
    p.combos.push_back(cb);
  }
  for (const ordered_json& e : j.at("timestamps"))
    p.timestamps.push_back(minutes_from_iso(e.get<std::string>()));
  return p;
}

// ---------------------------------------------------------------------------
// Anchor sets
// ---------------------------------------------------------------------------

bool AnchorSet::covers(Category c) const {
  return strategy == AnchorStrategy::kSingleNode || category_present[size_t(c)] != 0;
}

ordered_json AnchorSet::to_json() const {
  ordered_json cats = ordered_json::object();
  for (int c = 0; c < kCategoryCount; ++c) {
    ordered_json jc = ordered_json::object();
    bool present = category_present[size_t(c)] != 0;
    jc["present"] = present;
    if (present) {
      if (strategy == AnchorStrategy::kMedian || strategy == AnchorStrategy::kCoverage) {
        ordered_json arr = ordered_json::array();
        for (const ReportRecord& r : anchors[size_t(c)]) arr.push_back(r.to_json());
        jc["anchors"] = arr;
        if (strategy == AnchorStrategy::kCoverage) jc["shortfall"] = shortfall[size_t(c)] != 0;
      } else if (strategy == AnchorStrategy::kSynthetic) {
        jc["prototype"] = prototypes[size_t(c)]->to_json();
      }
    }
    cats[category_info(Category(c)).id] = jc;
  }
  return ordered_json{{"format", kAnchorFormat},
                      {"strategy", anchor_strategy_name(strategy)},
                      {"k", k},
                      {"train_hash", train_hash},
                      {"quantizer_hash", quantizer_hash},
                      {"categories", cats}};
}

AnchorSet AnchorSet::from_json(const ordered_json& j) {
  if (j.at("format").get<std::string>() != kAnchorFormat)
    throw std::invalid_argument("anchor set: unknown format");
  AnchorSet a;
  a.strategy = anchor_strategy_from_name(j.at("strategy").get<std::string>());
  a.k = j.at("k").get<int>();
  a.train_hash = j.at("train_hash").get<std::string>();
  a.quantizer_hash = j.at("quantizer_hash").get<std::string>();
  for (int c = 0; c < kCategoryCount; ++c) {
    const ordered_json& jc = j.at("categories").at(category_info(Category(c)).id);
    if (!jc.at("present").get<bool>()) continue;
    a.category_present[size_t(c)] = 1;
    if (a.strategy == AnchorStrategy::kMedian || a.strategy == AnchorStrategy::kCoverage) {
      for (const ordered_json& jr : jc.at("anchors")) {
        ReportRecord r = ReportRecord::from_json(jr);
        if (r.category != Category(c))
          throw std::invalid_argument("anchor set: anchor category mismatch");
        std::string err = record_structural_error(r);
        if (!err.empty()) throw std::invalid_argument("anchor set: invalid anchor: " + err);
        a.anchors[size_t(c)].push_back(std::move(r));
      }
      if (a.strategy == AnchorStrategy::kCoverage)
        a.shortfall[size_t(c)] = jc.at("shortfall").get<bool>() ? 1 : 0;
    } else if (a.strategy == AnchorStrategy::kSynthetic) {
      a.prototypes[size_t(c)] = SyntheticPrototype::from_json(jc.at("prototype"));
    }
  }
  return a;
}

void save_anchor_set(const AnchorSet& a, const std::string& path) {
  write_text_file(path, a.to_json().dump(2) + "\n");
}

AnchorSet load_anchor_set(const std::string& path) {
  return AnchorSet::from_json(ordered_json::parse(read_text_file(path)));
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

ReportRecord build_median_anchor(const std::vector<ReportRecord>& train, Category c) {
  std::vector<const ReportRecord*> cat = category_records(train, c);
  if (cat.empty())
    throw std::invalid_argument(std::string("median anchor: no train records of category ") +
                                category_info(c).id);
  std::array<double, kSensorCount> med{};
  std::vector<double> vals(cat.size());
  for (int s = 0; s < kSensorCount; ++s) {
    for (size_t i = 0; i < cat.size(); ++i)
      vals[i] = norm_sensors(*cat[i])[size_t(s)];
    std::sort(vals.begin(), vals.end());
    size_t n = vals.size();
    med[size_t(s)] = n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
  }
  const ReportRecord* best = nullptr;
  double best_d = 0.0;
  for (const ReportRecord* r : cat) {
    double d = sq_dist(norm_sensors(*r), med);
    if (!best || d < best_d || (d == best_d && r->id < best->id)) {
      best = r;
      best_d = d;
    }
  }
  return *best;
}

std::pair<std::vector<ReportRecord>, bool> build_coverage_anchors(
    const std::vector<ReportRecord>& train, Category c, int k) {
  if (k <= 0) throw std::invalid_argument("coverage anchors: k must be positive");
  std::vector<const ReportRecord*> cat = category_records(train, c);
  if (cat.empty())
    throw std::invalid_argument(std::string("coverage anchors: no train records of category ") +
                                category_info(c).id);
  std::vector<std::array<double, kSensorCount>> pts(cat.size());
  for (size_t i = 0; i < cat.size(); ++i) pts[i] = norm_sensors(*cat[i]);

  ReportRecord seed = build_median_anchor(train, c);
  std::vector<ReportRecord> chosen = {seed};
  std::vector<std::array<double, kSensorCount>> chosen_pts = {norm_sensors(seed)};
  std::vector<uint8_t> used(cat.size(), 0);
  for (size_t i = 0; i < cat.size(); ++i)
    if (cat[i]->id == seed.id) used[i] = 1;

  while (int(chosen.size()) < k) {
    ptrdiff_t best = -1;
    double best_d = 0.0;
    for (size_t i = 0; i < cat.size(); ++i) {
      if (used[i]) continue;
      double dmin = sq_dist(pts[i], chosen_pts[0]);
      for (size_t j = 1; j < chosen_pts.size(); ++j)
        dmin = std::min(dmin, sq_dist(pts[i], chosen_pts[j]));
      // Strict > keeps the smallest id on distance ties (candidates are
      // scanned in ascending-id order).
      if (dmin > best_d) {
        best_d = dmin;
        best = ptrdiff_t(i);
      }
    }
    if (best < 0) break;  // only zero-distance duplicates remain
    used[size_t(best)] = 1;
    chosen.push_back(*cat[size_t(best)]);
    chosen_pts.push_back(pts[size_t(best)]);
  }
  return {std::move(chosen), int(chosen.size()) < k};
}

SyntheticPrototype fit_synthetic_prototype(const std::vector<ReportRecord>& train, Category c) {
  std::vector<const ReportRecord*> cat = category_records(train, c);
  if (cat.empty())
    throw std::invalid_argument(std::string("synthetic prototype: no train records of category ") +
                                category_info(c).id);
  SyntheticPrototype p;
  p.n = int64_t(cat.size());
  for (int s = 0; s < kSensorCount; ++s) {
    double sum = 0.0;
    for (const ReportRecord* r : cat) sum += r->sensors[size_t(s)];
    double mean = sum / double(cat.size());
    double var = 0.0;
    for (const ReportRecord* r : cat) {
      double d = r->sensors[size_t(s)] - mean;
      var += d * d;
    }
    p.mean[size_t(s)] = mean;
    p.stddev[size_t(s)] = std::sqrt(var / double(cat.size()));
  }
  std::map<int, int64_t> coloc;
  std::map<std::tuple<int, int, int, int, int>, int64_t> combos;
  for (const ReportRecord* r : cat) {
    p.district_count[size_t(r->district)]++;
    p.drainage_count[size_t(r->drainage)]++;
    coloc[r->colocated_count]++;
    combos[{int(r->risk), r->alert.state_id(), r->pre_alert.type.state_id(),
            r->pre_alert.lead_hours, int(r->pre_alert.severity)}]++;
    p.timestamps.push_back(r->timestamp);
  }
  for (const auto& [value, count] : coloc) p.colocated_count.emplace_back(value, count);
  for (const auto& [key, count] : combos) {
    SyntheticPrototype::ContextCombo cb;
    std::tie(cb.risk, cb.alert_id, cb.pre_id, cb.lead_hours, cb.pre_severity) = key;
    cb.count = count;
    p.combos.push_back(cb);
  }
  return p;
}

ReportRecord build_synthetic_anchor(const SyntheticPrototype& proto, Category c, Rng& rng,
                                    int64_t id) {
  if (proto.n <= 0 || proto.combos.empty() || proto.timestamps.empty())
    throw std::invalid_argument("synthetic anchor: unfitted prototype");
  ReportRecord r;
  r.id = id;
  r.category = c;

  std::vector<double> w(proto.combos.size());
  for (size_t i = 0; i < w.size(); ++i) w[i] = double(proto.combos[i].count);
  const SyntheticPrototype::ContextCombo& cb = proto.combos[rng.categorical(w)];
  r.risk = Risk(cb.risk);
  r.alert = alert_state_from_id(cb.alert_id);
  r.pre_alert.type = alert_state_from_id(cb.pre_id);
  r.pre_alert.lead_hours = cb.lead_hours;
  r.pre_alert.severity = Severity(cb.pre_severity);

  for (Sensor s : all_sensors()) {
    const SensorInfo& info = sensor_info(s);
    double v = rng.normal(proto.mean[size_t(s)], proto.stddev[size_t(s)]);
    r.sensors[size_t(s)] = std::min(info.max, std::max(info.min, v));
  }

  w.assign(kDistrictCount, 0.0);
  for (int d = 0; d < kDistrictCount; ++d) w[size_t(d)] = double(proto.district_count[size_t(d)]);
  r.district = int(rng.categorical(w));

  w.assign(kDrainageCount, 0.0);
  for (int d = 0; d < kDrainageCount; ++d) w[size_t(d)] = double(proto.drainage_count[size_t(d)]);
  r.drainage = Drainage(rng.categorical(w));

  w.assign(proto.colocated_count.size(), 0.0);
  for (size_t i = 0; i < w.size(); ++i) w[i] = double(proto.colocated_count[i].second);
  r.colocated_count = proto.colocated_count[rng.categorical(w)].first;

  r.timestamp = proto.timestamps[rng.uniform_index(proto.timestamps.size())];
  return r;
}

AnchorSet build_anchor_set(const std::vector<ReportRecord>& records, const SplitInfo& split,
                           AnchorStrategy strategy, const QuantizerSet& quantizers, int k) {
  if (split.part.size() != records.size())
    throw std::invalid_argument("build_anchor_set: split does not match records");
  std::vector<ReportRecord> train;
  for (size_t i = 0; i < records.size(); ++i)
    if (split.part[i] == int8_t(SplitPart::kTrain)) train.push_back(records[i]);

  AnchorSet a;
  a.strategy = strategy;
  a.k = k;
  a.quantizer_hash = quantizers.hash();
  Sha256 h;
  for (const ReportRecord& r : train) h.update(r.to_json().dump() + "\n");
  a.train_hash = h.hex_digest();

  for (int c = 0; c < kCategoryCount; ++c) {
    bool present = false;
    for (const ReportRecord& r : train)
      if (r.category == Category(c)) {
        present = true;
        break;
      }
    if (!present) continue;
    a.category_present[size_t(c)] = 1;
    switch (strategy) {
      case AnchorStrategy::kSingleNode:
        break;
      case AnchorStrategy::kMedian:
        a.anchors[size_t(c)] = {build_median_anchor(train, Category(c))};
        break;
      case AnchorStrategy::kCoverage: {
        auto [recs, short_k] = build_coverage_anchors(train, Category(c), k);
        a.anchors[size_t(c)] = std::move(recs);
        a.shortfall[size_t(c)] = short_k ? 1 : 0;
        break;
      }
      case AnchorStrategy::kSynthetic:
        a.prototypes[size_t(c)] = fit_synthetic_prototype(train, Category(c));
        break;
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Inference graphs
// ---------------------------------------------------------------------------

int64_t InferenceGraph::value_nodes() const {
  int64_t n = 0;
  for (int t = 0; t < kNodeTypeCount; ++t)
    if (t != int(NodeType::kReport) && t != int(NodeType::kLocation))
      n += plan.rows[size_t(t)];
  return n;
}

namespace {

// Shared district staging for merged / cached plans: every district of every
// involved region, regions ascending, districts ascending within the region.
struct DistrictBlock {
  std::vector<int> district_list;
  std::array<int64_t, kDistrictCount> row;  // -1 when not staged
};

DistrictBlock stage_districts(BatchPlan& p, const std::vector<int>& star_districts) {
  DistrictBlock blk;
  blk.row.fill(-1);
  std::array<bool, kRegionCount> region_used{};
  for (int d : star_districts) {
    if (d < 0 || d >= kDistrictCount)
      throw std::invalid_argument("inference plan: district out of range");
    region_used[size_t(districts()[size_t(d)].region)] = true;
  }
  auto loc = size_t(NodeType::kLocation);
  for (int reg = 0; reg < kRegionCount; ++reg) {
    if (!region_used[size_t(reg)]) continue;
    const std::vector<int>& members = districts_in_region(reg);
    if (members.size() != 3) throw std::logic_error("inference plan: region size != 3");
    int64_t base = int64_t(blk.district_list.size());
    for (int d : members) {
      blk.row[size_t(d)] = int64_t(blk.district_list.size());
      blk.district_list.push_back(d);
      std::vector<float> f = encode_location(d);
      p.feat[loc].insert(p.feat[loc].end(), f.begin(), f.end());
    }
    p.loc_adj_a.insert(p.loc_adj_a.end(), {base + 1, base, base});
    p.loc_adj_b.insert(p.loc_adj_b.end(), {base + 2, base + 2, base + 1});
  }
  p.rows[loc] = int64_t(blk.district_list.size());
  p.loc_attached.assign(blk.district_list.size(), {});
  return blk;
}

// Stages one star's report/report-type/value rows at batch position i,
// mirroring the training planner's layout.
void stage_star(BatchPlan& p, const SampleNeighborhood& sn, int64_t i,
                const DistrictBlock& blk) {
  if (sn.category < 0 || sn.category >= kCategoryCount)
    throw std::invalid_argument("inference plan: category out of range");
  p.report_type_index.push_back(sn.category);
  p.owner[size_t(NodeType::kReportType)].push_back(i);
  p.labels.push_back(sn.label);
  p.scored.push_back(sn.scored ? 1 : 0);
  for (int s = 0; s < kNeighborSlotCount; ++s) {
    NodeType t = neighbor_slot_type(s);
    if (t == NodeType::kLocation) {
      p.slot_row[size_t(s)][size_t(i)] = blk.row[size_t(sn.district)];
      continue;
    }
    if (t == NodeType::kReportType) {
      p.slot_row[size_t(s)][size_t(i)] = i;
      continue;
    }
    const std::vector<float>& f = sn.slot_features[size_t(s)];
    if (f.empty()) continue;
    if (int(f.size()) != node_type_feature_dim(t))
      throw std::invalid_argument(std::string("inference plan: bad feature width for ") +
                                  node_type_name(t));
    p.slot_row[size_t(s)][size_t(i)] = p.rows[size_t(t)];
    p.owner[size_t(t)].push_back(i);
    p.feat[size_t(t)].insert(p.feat[size_t(t)].end(), f.begin(), f.end());
    p.rows[size_t(t)] += 1;
  }
}

}  // namespace

BatchPlan plan_merged(const std::vector<SampleNeighborhood>& stars) {
  if (stars.empty()) throw std::invalid_argument("plan_merged: no stars");
  BatchPlan p;
  p.B = int64_t(stars.size());
  for (int s = 0; s < kNeighborSlotCount; ++s) p.slot_row[size_t(s)].assign(size_t(p.B), -1);
  auto rep = size_t(NodeType::kReport);
  p.rows[rep] = p.B;
  p.feat[rep].assign(size_t(p.B), 1.0f);
  p.rows[size_t(NodeType::kReportType)] = p.B;

  std::vector<int> star_districts;
  for (const SampleNeighborhood& sn : stars) star_districts.push_back(sn.district);
  DistrictBlock blk = stage_districts(p, star_districts);

  for (int64_t i = 0; i < p.B; ++i) {
    stage_star(p, stars[size_t(i)], i, blk);
    // Attach in star order so frozen-anchor plans reproduce the same sums.
    p.loc_attached[size_t(blk.row[size_t(stars[size_t(i)].district)])].push_back(i);
  }
  return p;
}

BatchPlan plan_cached(const SampleNeighborhood& query, const CategoryAnchorCache& cache) {
  if (!cache.built) throw std::invalid_argument("plan_cached: cache not built");
  BatchPlan p;
  p.B = 1;
  for (int s = 0; s < kNeighborSlotCount; ++s) p.slot_row[size_t(s)].assign(1, -1);
  auto rep = size_t(NodeType::kReport);
  p.rows[rep] = 1;
  p.feat[rep].assign(1, 1.0f);
  p.rows[size_t(NodeType::kReportType)] = 1;

  std::vector<int> star_districts = {query.district};
  for (const SampleNeighborhood& sn : cache.stars) star_districts.push_back(sn.district);
  DistrictBlock blk = stage_districts(p, star_districts);

  stage_star(p, query, 0, blk);
  p.loc_attached[size_t(blk.row[size_t(query.district)])].push_back(0);
  // Anchor reports ride along as frozen rows; full index j + B for anchor j.
  for (size_t j = 0; j < cache.stars.size(); ++j)
    p.loc_attached[size_t(blk.row[size_t(cache.stars[j].district)])].push_back(int64_t(j) + 1);

  int64_t k = int64_t(cache.stars.size());
  p.frozen_rows[rep] = k;
  p.frozen_h0[rep] = cache.h0_rows;
  p.frozen_h1[rep] = cache.h1_rows;
  return p;
}

InferenceGraph assemble_inference_graph(const ReportRecord& report, const AnchorSet& anchors,
                                        const QuantizerSet& quantizers, Rng* synth_rng,
                                        int64_t* next_synth_id) {
  std::string err = record_structural_error(report);
  if (!err.empty()) throw std::invalid_argument("inference: invalid report: " + err);
  Category c = report.category;
  if (!anchors.covers(c))
    throw std::invalid_argument(std::string("inference: category missing from anchor set: ") +
                                category_info(c).id);

  InferenceGraph ig;
  ig.stars.push_back(encode_neighborhood(report, quantizers, kFullSlotMask));
  ig.stars[0].scored = true;

  auto push_anchor = [&](const ReportRecord& rec) {
    SampleNeighborhood sn = encode_neighborhood(rec, quantizers, kFullSlotMask);
    sn.scored = false;
    sn.label = -1;
    ig.stars.push_back(std::move(sn));
  };
  switch (anchors.strategy) {
    case AnchorStrategy::kSingleNode:
      break;
    case AnchorStrategy::kMedian:
    case AnchorStrategy::kCoverage:
      for (const ReportRecord& rec : anchors.anchors[size_t(c)]) push_anchor(rec);
      break;
    case AnchorStrategy::kSynthetic: {
      if (synth_rng == nullptr || next_synth_id == nullptr)
        throw std::invalid_argument("inference: synthetic strategy needs an rng and id counter");
      const SyntheticPrototype& proto = *anchors.prototypes[size_t(c)];
      for (int j = 0; j < anchors.k; ++j)
        push_anchor(build_synthetic_anchor(proto, c, *synth_rng, (*next_synth_id)++));
      break;
    }
  }
  ig.plan = plan_merged(ig.stars);
  return ig;
}

// ---------------------------------------------------------------------------
// Scoring engine
// ---------------------------------------------------------------------------

InferenceEngine make_engine(const Model& model, const QuantizerSet& quantizers,
                            const AnchorSet& anchors) {
  if (quantizers.hash() != anchors.quantizer_hash)
    throw std::invalid_argument("make_engine: anchor set was built against different quantizers");
  InferenceEngine eng;
  eng.model = model;
  eng.quantizers = quantizers;
  eng.anchors = anchors;
  if (anchors.strategy == AnchorStrategy::kMedian ||
      anchors.strategy == AnchorStrategy::kCoverage) {
    for (int c = 0; c < kCategoryCount; ++c) {
      if (!anchors.category_present[size_t(c)]) continue;
      CategoryAnchorCache& cc = eng.cache[size_t(c)];
      for (const ReportRecord& rec : anchors.anchors[size_t(c)]) {
        SampleNeighborhood sn = encode_neighborhood(rec, quantizers, kFullSlotMask);
        sn.scored = false;
        sn.label = -1;
        cc.stars.push_back(std::move(sn));
      }
      // An anchor's layer-0/1 report states depend only on its own star and
      // district, so a disjoint-star eval forward reproduces exactly what a
      // merged plan would compute for these rows.
      BatchPlan plan = plan_batch(cc.stars);
      nd::Tape<float> tape;
      ForwardOutput fo = forward_model(tape, eng.model, plan, false, nullptr);
      cc.h0_rows = tape.val(fo.h0[size_t(NodeType::kReport)]);
      cc.h1_rows = tape.val(fo.h1[size_t(NodeType::kReport)]);
      cc.built = true;
    }
  }
  return eng;
}

InferenceEngine make_engine(const Checkpoint& ckpt, const AnchorSet& anchors) {
  return make_engine(ckpt.model, ckpt.quantizers, anchors);
}

namespace {

struct ScorePlan {
  BatchPlan plan;
  int64_t report_nodes = 0;
  bool frozen = false;
};

ScorePlan build_score_plan(InferenceEngine& eng, const ReportRecord& r) {
  ScorePlan sp;
  AnchorStrategy st = eng.anchors.strategy;
  if (st == AnchorStrategy::kMedian || st == AnchorStrategy::kCoverage) {
    std::string err = record_structural_error(r);
    if (!err.empty()) throw std::invalid_argument("inference: invalid report: " + err);
    const CategoryAnchorCache& cc = eng.cache[size_t(r.category)];
    if (!cc.built)
      throw std::invalid_argument(std::string("inference: category missing from anchor set: ") +
                                  category_info(r.category).id);
    SampleNeighborhood query = encode_neighborhood(r, eng.quantizers, kFullSlotMask);
    sp.plan = plan_cached(query, cc);
    sp.frozen = true;
  } else {
    InferenceGraph ig =
        assemble_inference_graph(r, eng.anchors, eng.quantizers, &eng.synth_rng,
                                 &eng.next_synth_id);
    sp.plan = std::move(ig.plan);
  }
  sp.report_nodes = sp.plan.B + sp.plan.frozen_rows[size_t(NodeType::kReport)];
  return sp;
}

ScoreResult read_score(const std::vector<float>& logits, double latency_ms,
                       const ScorePlan& sp) {
  ScoreResult res;
  double mx = std::max({double(logits[0]), double(logits[1]), double(logits[2])});
  double z = 0.0;
  for (int c = 0; c < kRiskCount; ++c) {
    res.probs[size_t(c)] = std::exp(double(logits[size_t(c)]) - mx);
    z += res.probs[size_t(c)];
  }
  int arg = 0;
  for (int c = 0; c < kRiskCount; ++c) {
    res.probs[size_t(c)] /= z;
    if (logits[size_t(c)] > logits[size_t(arg)]) arg = c;
  }
  res.risk = arg;
  res.latency_ms = latency_ms;
  res.report_nodes = sp.report_nodes;
  res.used_frozen_anchors = sp.frozen;
  return res;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

ordered_json ScoreResult::to_json() const {
  ordered_json probs_j = ordered_json::object();
  for (int c = 0; c < kRiskCount; ++c) probs_j[risk_name(Risk(c))] = probs[size_t(c)];
  return ordered_json{{"risk", risk_name(Risk(risk))},
                      {"probs", probs_j},
                      {"latency_ms", latency_ms},
                      {"report_nodes", report_nodes},
                      {"used_frozen_anchors", used_frozen_anchors}};
}

ordered_json InferResult::to_json() const {
  ordered_json j = score.to_json();
  j["importance"] = importance.to_json();
  return j;
}

ScoreResult score_report(InferenceEngine& eng, const ReportRecord& r) {
  auto t0 = std::chrono::steady_clock::now();
  ScorePlan sp = build_score_plan(eng, r);
  nd::Tape<float> tape;
  ForwardOutput fo = forward_model(tape, eng.model, sp.plan, false, nullptr);
  const std::vector<float>& lv = tape.val(fo.logits);
  std::vector<float> row0(lv.begin(), lv.begin() + kRiskCount);
  return read_score(row0, ms_since(t0), sp);
}

InferResult infer_report(InferenceEngine& eng, const ReportRecord& r) {
  auto t0 = std::chrono::steady_clock::now();
  ScorePlan sp = build_score_plan(eng, r);
  nd::Tape<float> tape;
  ForwardOutput fo = forward_model(tape, eng.model, sp.plan, false, nullptr);
  const std::vector<float>& lv = tape.val(fo.logits);
  std::vector<float> row0(lv.begin(), lv.begin() + kRiskCount);

  InferResult out;
  out.score = read_score(row0, ms_since(t0), sp);
  if (eng.model.cfg.variant == Variant::kInductive) {
    SampleNeighborhood query = encode_neighborhood(r, eng.quantizers, kFullSlotMask);
    out.importance = gradient_importance(eng.model, query);
  } else {
    AttentionRecord rec = record_attention(tape, fo, sp.plan, eng.model.cfg.variant);
    out.importance = attention_importance(rec)[0];
  }
  out.importance.sample_id = r.id;
  out.importance.strategy = anchor_strategy_name(eng.anchors.strategy);
  out.importance.risk = int(r.risk);
  return out;
}

}  // namespace riskgraph
