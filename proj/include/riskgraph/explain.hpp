#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "riskgraph/models.hpp"

namespace riskgraph {

// ---------------------------------------------------------------------------
// Per-sample node-type importance
// ---------------------------------------------------------------------------

// Importance-eligible types are the prunable ones (7 sensors + 5 alert/
// drainage context types); location, report_count and report_type are
// structural and never ranked. Scores are percentages normalized separately
// within the sensor group and within the context group, each summing to 100
// over the sample's present types.
struct ImportanceVector {
  int64_t sample_id = -1;
  std::string variant;
  std::string strategy;  // anchor strategy (or "graph" for training-side runs)
  std::string method;    // "attention" | "gradient"
  int category = 0;
  int risk = -1;  // stratum key; -1 when unknown
  std::array<double, kNodeTypeCount> score{};
  std::array<uint8_t, kNodeTypeCount> present{};

  ordered_json to_json() const;
  static ImportanceVector from_json(const ordered_json& j);
};

// Normalizes raw non-negative scores in place: each group's present types are
// scaled to sum to 100 (a group with vanishing total mass falls back to a
// uniform split over its present types).
void normalize_importance(ImportanceVector& v);

// Frozen attention snapshot of one forward pass, detached from the tape so
// downstream attribution is structurally forward-only.
struct AttentionRecord {
  Variant variant = Variant::kInductive;
  int64_t B = 0;
  std::array<std::vector<float>, kHeadCount> alpha;  // [B x 15] per active head
  std::array<std::vector<uint8_t>, kHeadCount> allowed;
  std::vector<int> category;                           // per sample
  std::vector<std::array<int8_t, kNeighborSlotCount>> slot_present;
};

AttentionRecord record_attention(const nd::Tape<float>& tape, const ForwardOutput& fo,
                                 const BatchPlan& plan, Variant variant);

// Attention-weight attribution: a present type's raw score is the mean
// attention it receives over the heads whose scope contains it (multihead:
// sensor types average the sensor and full heads, context types the context
// and full heads; the attention variant has only the full head). Rejects
// inductive records, directing callers to gradient_importance.
std::vector<ImportanceVector> attention_importance(const AttentionRecord& rec);

// Gradient attribution for one sample: raw score of a present neighbor =
// sum over dimensions of |d logit(predicted class) / d h| * |h|, where h is
// the neighbor's final-layer embedding (layer 1 for the inductive variant,
// layer 2 for the attention variants). Rejects samples with no eligible
// neighbor.
ImportanceVector gradient_importance(const Model& m, const SampleNeighborhood& sample);

// Convenience: one vector per sample via the method ("attention" |
// "gradient"); attention runs one batched forward, gradient loops per-sample
// tapes. Metadata (ids, risk strata) is filled from the arguments.
std::vector<ImportanceVector> explain_batch(const Model& m,
                                            const std::vector<SampleNeighborhood>& samples,
                                            const std::vector<int64_t>& sample_ids,
                                            const std::string& method);

// Picks the method a variant supports: attention for the attention-carrying
// variants, gradient for the inductive one.
std::string default_explain_method(Variant v);

// ---------------------------------------------------------------------------
// Stratified aggregation
// ---------------------------------------------------------------------------

struct ImportanceCell {
  std::array<double, kNodeTypeCount> mean{};    // over the cell's samples
  std::array<uint8_t, kNodeTypeCount> present{};  // seen in >= 1 sample
  int64_t n = 0;
};

// Mean importance per (category, risk) cell — the stratified table the prune
// strategies read. Cells nobody sampled stay absent rather than zero.
struct ImportanceTable {
  std::string method;
  std::string variant;
  std::string graph_hash;
  std::array<std::array<std::optional<ImportanceCell>, kRiskCount>, kCategoryCount> cells;

  const ImportanceCell* cell(Category c, Risk r) const {
    const auto& o = cells[size_t(c)][size_t(r)];
    return o ? &*o : nullptr;
  }

  ordered_json to_json() const;
  static ImportanceTable from_json(const ordered_json& j);
  std::string to_csv() const;  // category,risk,type,mean_importance,n
  std::string hash() const;    // sha256 of canonical JSON
};

ImportanceTable aggregate_importance(const std::vector<ImportanceVector>& vectors,
                                     const std::string& method, const std::string& variant,
                                     const std::string& graph_hash);

// Top-k eligible types of a cell by mean importance; ties broken by type
// name so rankings are deterministic.
std::vector<NodeType> top_k_types(const ImportanceCell& cell, int k);

// ---------------------------------------------------------------------------
// Cross-strategy agreement
// ---------------------------------------------------------------------------

struct AgreementReport {
  int64_t total = 0;
  int64_t agreeing = 0;
  double overall_pct = 0.0;
  std::array<std::optional<double>, kRiskCount> by_risk;
  std::array<std::optional<double>, kCategoryCount> by_category;
  std::vector<std::string> strategies;

  ordered_json to_json() const;
};

// A sample agrees when every strategy names the same top-1 type (argmax over
// the union of the strategies' present eligible types, ties by type name).
// Requires >= 2 strategies with identical sample-id sequences.
AgreementReport top1_agreement(const std::vector<std::vector<ImportanceVector>>& per_strategy);

}  // namespace riskgraph
