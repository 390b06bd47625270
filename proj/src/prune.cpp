#include "riskgraph/prune.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "riskgraph/metrics.hpp"
#include "riskgraph/sha256.hpp"

namespace riskgraph {

namespace {

constexpr const char* kTopOnlyLeakageNote =
    "top_only conditions edge retention on each record's ground-truth risk on every split, "
    "including validation and test; the label leakage is inherent to the retrain protocol";

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::vector<NodeType> sorted_by_name(std::vector<NodeType> ts) {
  std::sort(ts.begin(), ts.end(), [](NodeType a, NodeType b) {
    return std::string(node_type_name(a)) < node_type_name(b);
  });
  return ts;
}

const ImportanceCell& require_cell(const ImportanceTable& t, Category c, Risk r) {
  const ImportanceCell* cell = t.cell(c, r);
  if (!cell)
    throw std::invalid_argument(std::string("prune derivation: importance table lacks cell (") +
                                category_info(c).id + ", " + risk_name(r) + ")");
  return *cell;
}

}  // namespace

PruneSpec derive_bottom_excluded(const ImportanceTable& table) {
  PruneSpec spec;
  spec.strategy = "bottom_excluded";
  spec.table_hash = table.hash();
  for (int c = 0; c < kCategoryCount; ++c) {
    // Sensors surviving = union of the three cells' top-3 rankings; context
    // types are never candidates for bottom exclusion.
    std::array<bool, kNodeTypeCount> in_union{};
    for (int r = 0; r < kRiskCount; ++r)
      for (NodeType t : top_k_types(require_cell(table, Category(c), Risk(r)), 3))
        in_union[size_t(t)] = true;
    std::vector<NodeType> kept;
    for (NodeType t : prunable_types())
      if (is_context_group(t) || in_union[size_t(t)]) kept.push_back(t);
    kept = sorted_by_name(kept);
    for (int r = 0; r < kRiskCount; ++r) spec.retained[size_t(c)][size_t(r)] = kept;
  }
  return spec;
}

PruneSpec derive_top_only(const ImportanceTable& table) {
  PruneSpec spec;
  spec.strategy = "top_only";
  spec.table_hash = table.hash();
  for (int c = 0; c < kCategoryCount; ++c)
    for (int r = 0; r < kRiskCount; ++r)
      spec.retained[size_t(c)][size_t(r)] =
          sorted_by_name(top_k_types(require_cell(table, Category(c), Risk(r)), 3));
  return spec;
}

PruneSpec derive_prune_spec(const std::string& strategy, const ImportanceTable& table) {
  if (strategy == "bottom_excluded") return derive_bottom_excluded(table);
  if (strategy == "top_only") return derive_top_only(table);
  throw std::invalid_argument("unknown prune strategy: " + strategy);
}

bool PruneSpec::retains(Category c, Risk r, NodeType t) const {
  if (!is_prunable(t)) return true;  // structural types survive every spec
  const auto& kept = retained[size_t(c)][size_t(r)];
  return std::find(kept.begin(), kept.end(), t) != kept.end();
}

RetainedSlots PruneSpec::to_retained_slots() const {
  RetainedSlots rs = RetainedSlots::all();
  for (int c = 0; c < kCategoryCount; ++c)
    for (int r = 0; r < kRiskCount; ++r)
      for (NodeType t : prunable_types())
        if (!retains(Category(c), Risk(r), t)) rs.drop(Category(c), Risk(r), t);
  return rs;
}

ordered_json PruneSpec::to_json() const {
  ordered_json retained_j = ordered_json::object();
  for (int c = 0; c < kCategoryCount; ++c) {
    ordered_json by_risk = ordered_json::object();
    for (int r = 0; r < kRiskCount; ++r) {
      ordered_json types = ordered_json::array();
      for (NodeType t : retained[size_t(c)][size_t(r)]) types.push_back(node_type_name(t));
      by_risk[risk_name(Risk(r))] = types;
    }
    retained_j[category_info(Category(c)).id] = by_risk;
  }
  ordered_json structural = ordered_json::array();
  for (NodeType t : {NodeType::kReportType, NodeType::kReportCount, NodeType::kLocation})
    structural.push_back(node_type_name(t));
  return ordered_json{{"strategy", strategy},
                      {"table_hash", table_hash},
                      {"always_retained", structural},
                      {"retained", retained_j}};
}

PruneSpec PruneSpec::from_json(const ordered_json& j) {
  PruneSpec spec;
  spec.strategy = j.at("strategy").get<std::string>();
  if (spec.strategy != "bottom_excluded" && spec.strategy != "top_only")
    throw std::invalid_argument("prune spec: unknown strategy " + spec.strategy);
  spec.table_hash = j.at("table_hash").get<std::string>();
  const ordered_json& retained_j = j.at("retained");
  for (int c = 0; c < kCategoryCount; ++c) {
    const char* cid = category_info(Category(c)).id;
    if (!retained_j.contains(cid))
      throw std::invalid_argument(std::string("prune spec: category missing: ") + cid);
    for (int r = 0; r < kRiskCount; ++r) {
      const ordered_json& types = retained_j.at(cid).at(risk_name(Risk(r)));
      std::vector<NodeType> kept;
      for (const ordered_json& name : types) {
        NodeType t = node_type_from_name(name.get<std::string>());
        if (!is_prunable(t))
          throw std::invalid_argument(std::string("prune spec: not an eligible type: ") +
                                      name.get<std::string>());
        kept.push_back(t);
      }
      spec.retained[size_t(c)][size_t(r)] = sorted_by_name(kept);
    }
  }
  return spec;
}

std::string PruneSpec::hash() const { return sha256_hex(to_json().dump()); }

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

ordered_json ReductionReport::to_json() const {
  ordered_json rel = ordered_json::array();
  for (const auto& [name, before, after] : per_relation)
    rel.push_back(ordered_json{{"relation", name}, {"original", before}, {"pruned", after}});
  return ordered_json{{"strategy", strategy},
                      {"original_edges", original_edges},
                      {"pruned_edges", pruned_edges},
                      {"reduction_pct", reduction_pct},
                      {"per_relation", rel},
                      {"note", note}};
}

PruneResult apply_prune(const std::vector<ReportRecord>& records, const SplitInfo& split,
                        const HeteroGraph& original, const PruneSpec& spec) {
  PruneResult out;
  out.graph = build_graph(records, original.quantizers, split, spec.to_retained_slots(),
                          original.dataset_hash, spec.hash());
  ReductionReport& rep = out.report;
  rep.strategy = spec.strategy;
  rep.original_edges = original.total_edges();
  rep.pruned_edges = out.graph.total_edges();
  rep.reduction_pct =
      100.0 * double(rep.original_edges - rep.pruned_edges) / double(rep.original_edges);
  if (original.relations.size() != out.graph.relations.size())
    throw std::runtime_error("apply_prune: relation list mismatch");
  for (size_t i = 0; i < original.relations.size(); ++i) {
    const Relation& a = original.relations[i];
    const Relation& b = out.graph.relations[i];
    if (a.name != b.name) throw std::runtime_error("apply_prune: relation order mismatch");
    rep.per_relation.emplace_back(a.name, int64_t(a.edges.size()), int64_t(b.edges.size()));
  }
  if (spec.strategy == "top_only") rep.note = kTopOnlyLeakageNote;
  return out;
}

// ---------------------------------------------------------------------------
// Retrain cycle
// ---------------------------------------------------------------------------

std::vector<int64_t> stratified_train_sample(const HeteroGraph& g, int samples_per_cell) {
  if (samples_per_cell <= 0)
    throw std::invalid_argument("stratified_train_sample: need samples_per_cell > 0");
  std::array<std::array<int, kRiskCount>, kCategoryCount> taken{};
  std::vector<int64_t> ids;
  for (int64_t i = 0; i < g.report_count(); ++i) {
    if (g.split[size_t(i)] != int8_t(SplitPart::kTrain)) continue;
    int c = g.report_category[size_t(i)], r = g.labels[size_t(i)];
    if (taken[size_t(c)][size_t(r)] >= samples_per_cell) continue;
    taken[size_t(c)][size_t(r)]++;
    ids.push_back(i);
  }
  return ids;
}

namespace {

CycleRow make_row(const std::string& model, const std::string& graph_name,
                  const HeteroGraph& g, const Model& m, double train_seconds) {
  std::vector<int64_t> test_ids;
  std::vector<int> test_labels;
  for (int64_t i = 0; i < g.report_count(); ++i)
    if (g.split[size_t(i)] == int8_t(SplitPart::kTest)) {
      test_ids.push_back(i);
      test_labels.push_back(g.labels[size_t(i)]);
    }
  if (test_ids.empty()) throw std::runtime_error("prune cycle: empty test split");
  MetricsReport mr = compute_metrics(predict(m, g, test_ids), test_labels);
  CycleRow row;
  row.model = model;
  row.graph = graph_name;
  row.edges = g.total_edges();
  row.accuracy_pct = mr.accuracy_pct;
  row.fp_high_pct = mr.fp_high_pct.value_or(100.0);
  row.fn_high_pct = mr.fn_high_pct.value_or(100.0);
  row.train_seconds = train_seconds;
  return row;
}

}  // namespace

CycleReport prune_cycle_from(const std::vector<ReportRecord>& records, const SplitInfo& split,
                             const HeteroGraph& original, const Model& original_model,
                             double original_train_seconds, const ImportanceTable& table,
                             const std::string& strategy, const ModelConfig& mc,
                             const TrainConfig& tc) {
  CycleReport rep;
  rep.table = table;
  rep.spec = derive_prune_spec(strategy, table);
  PruneResult pruned = apply_prune(records, split, original, rep.spec);
  rep.reduction = pruned.report;

  auto t0 = std::chrono::steady_clock::now();
  TrainResult pruned_result = train_model(pruned.graph, mc, tc);
  double pruned_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string vname = variant_name(mc.variant);
  rep.rows.push_back(make_row(vname, "original", original, original_model, original_train_seconds));
  rep.rows.push_back(make_row(vname, strategy, pruned.graph, pruned_result.model, pruned_seconds));
  return rep;
}

CycleReport prune_retrain_cycle(const std::vector<ReportRecord>& records, const SplitInfo& split,
                                const std::string& dataset_hash, Variant variant,
                                const std::string& strategy, const ModelConfig& mc,
                                const TrainConfig& tc, int samples_per_cell) {
  std::vector<size_t> train_idx;
  for (size_t i = 0; i < records.size(); ++i)
    if (split.part[i] == int8_t(SplitPart::kTrain)) train_idx.push_back(i);
  QuantizerSet quantizers = fit_quantizers(records, train_idx);
  HeteroGraph original =
      build_graph(records, quantizers, split, RetainedSlots::all(), dataset_hash, "original");

  ModelConfig mc2 = mc;
  mc2.variant = variant;
  auto t0 = std::chrono::steady_clock::now();
  TrainResult original_result = train_model(original, mc2, tc);
  double original_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<int64_t> ids = stratified_train_sample(original, samples_per_cell);
  std::vector<SampleNeighborhood> samples;
  samples.reserve(ids.size());
  for (int64_t id : ids) samples.push_back(extract_neighborhood(original, id));
  std::vector<ImportanceVector> vecs =
      explain_batch(original_result.model, samples, ids, default_explain_method(variant));
  ImportanceTable table = aggregate_importance(vecs, default_explain_method(variant),
                                               variant_name(variant), original.content_hash());

  return prune_cycle_from(records, split, original, original_result.model, original_seconds,
                          table, strategy, mc2, tc);
}

ordered_json CycleReport::to_json() const {
  ordered_json rows_j = ordered_json::array();
  for (const CycleRow& r : rows)
    rows_j.push_back(ordered_json{{"model", r.model},
                                  {"graph", r.graph},
                                  {"edges", r.edges},
                                  {"accuracy_pct", r.accuracy_pct},
                                  {"fp_high_pct", r.fp_high_pct},
                                  {"fn_high_pct", r.fn_high_pct},
                                  {"train_seconds", r.train_seconds}});
  return ordered_json{{"rows", rows_j},
                      {"spec", spec.to_json()},
                      {"reduction", reduction.to_json()},
                      {"table_hash", table.hash()}};
}

std::string CycleReport::to_csv() const {
  std::ostringstream os;
  os << "model,graph,edges,accuracy,fp_high,fn_high,train_seconds\n";
  for (const CycleRow& r : rows)
    os << r.model << "," << r.graph << "," << r.edges << "," << fmt_num(r.accuracy_pct) << ","
       << fmt_num(r.fp_high_pct) << "," << fmt_num(r.fn_high_pct) << ","
       << fmt_num(r.train_seconds) << "\n";
  return os.str();
}

}  // namespace riskgraph
