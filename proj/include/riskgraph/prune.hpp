#pragma once

#include <string>
#include <vector>

#include "riskgraph/explain.hpp"
#include "riskgraph/hetero_graph.hpp"

namespace riskgraph {

// Category-conditioned edge-pruning specification derived from a stratified
// importance table. Two strategies:
//   bottom_excluded - per category, drop the sensor types that never reach a
//                     risk cell's top-3; context and structural types stay.
//   top_only        - per (category, risk) cell keep exactly the cell's top-3
//                     eligible types (sensor or context) plus structural ones.
struct PruneSpec {
  std::string strategy;  // "bottom_excluded" | "top_only"
  std::string table_hash;
  // Retained eligible types per (category, risk); bottom_excluded rows are
  // identical across the three risks of a category. Sorted by type name.
  std::array<std::array<std::vector<NodeType>, kRiskCount>, kCategoryCount> retained;

  RetainedSlots to_retained_slots() const;  // adds the structural slots
  bool retains(Category c, Risk r, NodeType t) const;
  ordered_json to_json() const;
  static PruneSpec from_json(const ordered_json& j);
  std::string hash() const;
};

PruneSpec derive_bottom_excluded(const ImportanceTable& table);
PruneSpec derive_top_only(const ImportanceTable& table);
PruneSpec derive_prune_spec(const std::string& strategy, const ImportanceTable& table);

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

struct ReductionReport {
  std::string strategy;
  int64_t original_edges = 0;
  int64_t pruned_edges = 0;
  double reduction_pct = 0.0;
  // (relation name, original count, pruned count), fixed relation order.
  std::vector<std::tuple<std::string, int64_t, int64_t>> per_relation;
  std::string note;

  ordered_json to_json() const;
};

struct PruneResult {
  HeteroGraph graph;
  ReductionReport report;
};

// Rebuilds the graph under the spec and reports the per-relation edge
// reduction against `original`. Top-only conditions on each record's
// ground-truth risk on every split; the report carries a note naming that
// label leakage.
PruneResult apply_prune(const std::vector<ReportRecord>& records, const SplitInfo& split,
                        const HeteroGraph& original, const PruneSpec& spec);

// ---------------------------------------------------------------------------
// Train -> explain -> prune -> retrain comparison
// ---------------------------------------------------------------------------

struct CycleRow {
  std::string model;  // variant name
  std::string graph;  // "original" or the prune strategy
  int64_t edges = 0;
  double accuracy_pct = 0.0;
  double fp_high_pct = 0.0;  // 100 - precision(high)
  double fn_high_pct = 0.0;  // 100 - recall(high)
  double train_seconds = 0.0;
};

struct CycleReport {
  std::vector<CycleRow> rows;  // original first, pruned second
  PruneSpec spec;
  ReductionReport reduction;
  ImportanceTable table;

  ordered_json to_json() const;
  std::string to_csv() const;  // model,graph,edges,accuracy,fp_high,fn_high,train_seconds
};

// Second half of the pruning experiment, starting from an already-trained
// original model and its importance table: derive the spec, rebuild, retrain
// from fresh initialization with the identical config, and evaluate both
// models on the same test split.
CycleReport prune_cycle_from(const std::vector<ReportRecord>& records, const SplitInfo& split,
                             const HeteroGraph& original, const Model& original_model,
                             double original_train_seconds, const ImportanceTable& table,
                             const std::string& strategy, const ModelConfig& mc,
                             const TrainConfig& tc);

// End-to-end pruning experiment: train on the original graph, explain a
// stratified train sample (samples_per_cell per (category, risk)), then run
// prune_cycle_from.
CycleReport prune_retrain_cycle(const std::vector<ReportRecord>& records, const SplitInfo& split,
                                const std::string& dataset_hash, Variant variant,
                                const std::string& strategy, const ModelConfig& mc,
                                const TrainConfig& tc, int samples_per_cell);

// Stratified train-split sample used by the explain stage: up to
// samples_per_cell report ids per (category, risk), ascending id order.
std::vector<int64_t> stratified_train_sample(const HeteroGraph& g, int samples_per_cell);

}  // namespace riskgraph
