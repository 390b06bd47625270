#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riskgraph/quantizer.hpp"
#include "riskgraph/synthgen.hpp"

namespace riskgraph {

// Per-(category, risk) bitmask over the 15 neighbor slots saying which ones a
// built graph materializes edges for. Structural slots (report_type,
// report_count, location) are always kept.
struct RetainedSlots {
  std::array<std::array<uint32_t, kRiskCount>, kCategoryCount> bits;

  static RetainedSlots all();
  bool keep(Category c, Risk r, int slot) const {
    return (bits[size_t(c)][size_t(r)] >> slot) & 1u;
  }
  void drop(Category c, Risk r, NodeType t);
  bool is_all() const;
};

struct FeatureMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<float> data;

  void init(int64_t r, int64_t c) {
    rows = r;
    cols = c;
    data.assign(size_t(r * c), 0.0f);
  }
  float* row(int64_t i) { return data.data() + i * cols; }
  const float* row(int64_t i) const { return data.data() + i * cols; }
};

struct Relation {
  NodeType src, dst;
  std::string name;
  std::vector<std::array<int32_t, 2>> edges;  // (src node, dst node), directed
};

// Heterogeneous report graph: 16 node types, a star of up to 15 neighbor
// nodes per report (14 per-report value nodes + the shared district node),
// reverse edges for every star edge, and same-region adjacency between the 9
// district nodes.
struct HeteroGraph {
  std::array<FeatureMatrix, kNodeTypeCount> features;
  std::vector<Relation> relations;        // fixed enumeration order
  std::vector<int32_t> star;              // [reports x 15] neighbor node or -1
  std::vector<int8_t> labels;             // risk per report
  std::vector<uint8_t> labeled;           // per report
  std::vector<int8_t> split;              // SplitPart per report
  std::vector<int8_t> report_category;
  std::vector<int8_t> report_district;
  QuantizerSet quantizers;
  std::string dataset_hash;
  std::string prune_hash = "original";    // prune spec hash or "original"

  int64_t report_count() const { return features[size_t(NodeType::kReport)].rows; }
  int64_t total_edges() const;
  int32_t star_at(int64_t report, int slot) const {
    return star[size_t(report) * kNeighborSlotCount + size_t(slot)];
  }
  // Byte-content identity over features/edges/labels/masks (provenance
  // strings excluded so an identity prune hashes equal to the original).
  std::string content_hash() const;
};

// Feature encoders (shared by graph building and inference-time assembly).
std::vector<float> encode_sensor_value(Sensor s, double value, const QuantizerSet& q);
std::vector<float> encode_alert_state(const AlertState& a);       // one-hot 13
std::vector<float> encode_lead_time(int hours);                   // one-hot 6
std::vector<float> encode_severity(Severity s);                   // one-hot 3
std::vector<float> encode_drainage(Drainage d);                   // one-hot 3
std::vector<float> encode_report_count(int count);                // one-hot 5
std::vector<float> encode_location(int district);                 // 4 floats
// Value-node feature for any neighbor slot of a record. report_type yields
// the category index (the model resolves it through its embedding table).
std::vector<float> encode_slot(NodeType t, const ReportRecord& r, const QuantizerSet& q);

// Builds the full graph. `retained` controls pruning (RetainedSlots::all()
// for the unpruned graph); labels/split/labeled are taken from `split_info`.
HeteroGraph build_graph(const std::vector<ReportRecord>& records, const QuantizerSet& quantizers,
                        const SplitInfo& split_info, const RetainedSlots& retained,
                        const std::string& dataset_hash, const std::string& prune_hash);

// ---------------------------------------------------------------------------
// Stats
// ---------------------------------------------------------------------------

struct GraphStats {
  std::vector<std::pair<std::string, int64_t>> nodes_per_type;
  std::vector<std::pair<std::string, int64_t>> edges_per_relation;
  int64_t total_nodes = 0;
  int64_t total_edges = 0;

  ordered_json to_json() const;
  std::string hash() const;
};

GraphStats graph_stats(const HeteroGraph& g);

// ---------------------------------------------------------------------------
// Directory serialization
// ---------------------------------------------------------------------------

// Layout: manifest.json, quantizers.json, features/<type>.bin (row-major
// float32 little-endian), edges/<relation>.bin (int32 pairs), star.bin,
// labels.bin, labeled.bin, split.bin, category.bin, district.bin. The
// manifest records the shape of every file plus per-file sha256 hashes and
// the combined content hash.
void save_graph(const HeteroGraph& g, const std::string& dir);
HeteroGraph load_graph(const std::string& dir);  // verifies hashes

// ---------------------------------------------------------------------------
// Per-sample neighborhoods (training extraction and inference assembly)
// ---------------------------------------------------------------------------

// One report plus its star, in raw feature form. location_rows[0] is the
// report's own district, [1] and [2] its region partners (ascending id).
struct SampleNeighborhood {
  std::array<std::vector<float>, kNeighborSlotCount> slot_features;  // empty = absent
  int category = 0;
  int district = 0;
  int label = -1;  // risk, or -1 when unknown
  bool scored = true;  // false for anchor-context samples at inference
  std::array<std::vector<float>, 3> location_rows;
};

SampleNeighborhood extract_neighborhood(const HeteroGraph& g, int64_t report);
SampleNeighborhood encode_neighborhood(const ReportRecord& r, const QuantizerSet& q,
                                       uint32_t slot_mask);

}  // namespace riskgraph
