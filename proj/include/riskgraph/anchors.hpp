#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "riskgraph/explain.hpp"
#include "riskgraph/models.hpp"

namespace riskgraph {

// Anchor strategies: what context accompanies a single incoming report when
// it is scored.
//   single_node - the report's star alone
//   median      - the category's most central training record
//   coverage    - k spread-out training records (farthest-point sampling)
//   synthetic   - k records drawn per request from fitted prototypes
enum class AnchorStrategy : int { kSingleNode = 0, kMedian, kCoverage, kSynthetic };
constexpr int kAnchorStrategyCount = 4;

const char* anchor_strategy_name(AnchorStrategy s);
AnchorStrategy anchor_strategy_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Synthetic prototypes
// ---------------------------------------------------------------------------

// Per-category generative parameters: a diagonal Gaussian over the seven
// sensors plus empirical frequencies of every categorical field. The risk /
// alert / pre-alert context is drawn jointly (one combo observed in training),
// so generated records inherit the training records' structural invariants.
struct SyntheticPrototype {
  int64_t n = 0;  // fitted record count
  std::array<double, kSensorCount> mean{};
  std::array<double, kSensorCount> stddev{};  // population
  std::array<int64_t, kDistrictCount> district_count{};
  std::array<int64_t, kDrainageCount> drainage_count{};
  std::vector<std::pair<int, int64_t>> colocated_count;  // value -> frequency

  struct ContextCombo {
    int risk = 0;
    int alert_id = 0;      // AlertState::state_id
    int pre_id = 0;        // pre-alert type state id
    int lead_hours = 0;
    int pre_severity = 0;  // Severity as int
    int64_t count = 0;
  };
  std::vector<ContextCombo> combos;
  std::vector<int64_t> timestamps;  // pool sampled at request time

  ordered_json to_json() const;
  static SyntheticPrototype from_json(const ordered_json& j);
};

// ---------------------------------------------------------------------------
// Anchor sets
// ---------------------------------------------------------------------------

struct AnchorSet {
  AnchorStrategy strategy = AnchorStrategy::kSingleNode;
  int k = 5;
  // Stored anchor records (1 for median, up to k for coverage).
  std::array<std::vector<ReportRecord>, kCategoryCount> anchors;
  std::array<uint8_t, kCategoryCount> shortfall{};  // coverage found < k points
  std::array<std::optional<SyntheticPrototype>, kCategoryCount> prototypes;
  std::array<uint8_t, kCategoryCount> category_present{};
  std::string train_hash;      // over the train-split records
  std::string quantizer_hash;

  // True when the strategy can serve the category (single_node always can).
  bool covers(Category c) const;

  ordered_json to_json() const;
  static AnchorSet from_json(const ordered_json& j);
};

void save_anchor_set(const AnchorSet& a, const std::string& path);
AnchorSet load_anchor_set(const std::string& path);

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

// The actual train record nearest (Euclidean over bounds-normalized sensors)
// to the category's per-sensor median vector; distance ties keep the smallest
// id. Rejects categories with no train records.
ReportRecord build_median_anchor(const std::vector<ReportRecord>& train, Category c);

// Farthest-point sampling over bounds-normalized sensors, seeded at the
// median anchor; every later pick maximizes the minimum distance to the picks
// so far (ties by smallest id). Zero-distance candidates are never picked, so
// the anchors are pairwise distinct; .second flags a shortfall (fewer than k
// distinct points available).
std::pair<std::vector<ReportRecord>, bool> build_coverage_anchors(
    const std::vector<ReportRecord>& train, Category c, int k = 5);

SyntheticPrototype fit_synthetic_prototype(const std::vector<ReportRecord>& train, Category c);

// One generated record: sensors from the prototype Gaussian clamped to
// physical bounds, categorical fields from the empirical frequencies.
ReportRecord build_synthetic_anchor(const SyntheticPrototype& proto, Category c, Rng& rng,
                                    int64_t id);

// Builds the strategy's per-category constructions over the train split of
// `records`. Categories without train records are marked absent.
AnchorSet build_anchor_set(const std::vector<ReportRecord>& records, const SplitInfo& split,
                           AnchorStrategy strategy, const QuantizerSet& quantizers, int k = 5);

// ---------------------------------------------------------------------------
// Inference graphs
// ---------------------------------------------------------------------------

// Scoring instance for one incoming report: star 0 is the report (the only
// scored node), later stars are its category's anchors. Stars share district
// rows; the plan covers every district of each involved region so same-region
// adjacency stays intact.
struct InferenceGraph {
  std::vector<SampleNeighborhood> stars;
  BatchPlan plan;

  int64_t report_nodes() const { return plan.B; }
  int64_t district_nodes() const { return plan.rows[size_t(NodeType::kLocation)]; }
  int64_t value_nodes() const;     // per-report value rows staged in the plan
  int64_t scored_index() const { return 0; }
};

// Merged plan over explicit stars (order preserved; each star keeps its own
// label/scored flags). Unlike training plans, district rows are shared.
BatchPlan plan_merged(const std::vector<SampleNeighborhood>& stars);

// Builds the report's scoring instance under the set's strategy. The rng and
// id counter are consumed only by the synthetic strategy (which generates k
// fresh anchors per request) and may be null otherwise.
InferenceGraph assemble_inference_graph(const ReportRecord& report, const AnchorSet& anchors,
                                        const QuantizerSet& quantizers, Rng* synth_rng = nullptr,
                                        int64_t* next_synth_id = nullptr);

// ---------------------------------------------------------------------------
// Scoring engine
// ---------------------------------------------------------------------------

// Frozen per-category anchor context: the anchors' projected layer-0/1 report
// states, computed once when the engine is built. A report's own logits read
// anchor reports only through these two layers, so scoring against stored
// anchors can stage them as constants instead of recomputing their stars.
struct CategoryAnchorCache {
  bool built = false;
  std::vector<SampleNeighborhood> stars;
  std::vector<float> h0_rows, h1_rows;  // [k x d], row-major
};

// Plan for one query against a frozen cache: the query's star and the
// involved district rows are computed, the anchor report states ride along
// as frozen rows. Produces logits identical to plan_merged over the same
// stars.
BatchPlan plan_cached(const SampleNeighborhood& query, const CategoryAnchorCache& cache);

struct InferenceEngine {
  Model model;
  QuantizerSet quantizers;
  AnchorSet anchors;
  std::array<CategoryAnchorCache, kCategoryCount> cache;  // median / coverage
  Rng synth_rng{0x5eed5eed};
  int64_t next_synth_id = 1000000000;
};

// Wires a scoring engine over a frozen model + anchor set (quantizer hashes
// must match) and pre-computes the frozen caches for stored-anchor
// strategies. Scoring always uses the full neighbor schema.
InferenceEngine make_engine(const Model& model, const QuantizerSet& quantizers,
                            const AnchorSet& anchors);
InferenceEngine make_engine(const Checkpoint& ckpt, const AnchorSet& anchors);

struct ScoreResult {
  int risk = 0;  // argmax class
  std::array<double, kRiskCount> probs{};
  double latency_ms = 0.0;  // assembly + forward + readout
  int64_t report_nodes = 0;
  bool used_frozen_anchors = false;

  ordered_json to_json() const;
};

ScoreResult score_report(InferenceEngine& eng, const ReportRecord& r);

struct InferResult {
  ScoreResult score;
  ImportanceVector importance;

  ordered_json to_json() const;
};

// Scoring plus the per-type importance vector (attention weights for the
// attention variants, gradient attribution for the inductive one). The
// reported latency covers scoring only.
InferResult infer_report(InferenceEngine& eng, const ReportRecord& r);

}  // namespace riskgraph
