#include "riskgraph/hetero_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "riskgraph/fsutil.hpp"
#include "riskgraph/sha256.hpp"

namespace riskgraph {

namespace {

constexpr uint32_t kStructuralBits = (1u << (int(NodeType::kReportType) - 1)) |
                                     (1u << (int(NodeType::kReportCount) - 1)) |
                                     (1u << (int(NodeType::kLocation) - 1));
constexpr uint32_t kAllSlotsMask = (1u << kNeighborSlotCount) - 1;

struct LocationEncoding {
  std::array<std::array<float, 4>, kDistrictCount> rows;
};

const LocationEncoding& location_encoding() {
  static const LocationEncoding enc = [] {
    LocationEncoding e{};
    double lat_min = 1e9, lat_max = -1e9, lon_min = 1e9, lon_max = -1e9;
    double lat_c = 0, lon_c = 0;
    for (const District& d : districts()) {
      lat_min = std::min(lat_min, d.lat);
      lat_max = std::max(lat_max, d.lat);
      lon_min = std::min(lon_min, d.lon);
      lon_max = std::max(lon_max, d.lon);
      lat_c += d.lat;
      lon_c += d.lon;
    }
    lat_c /= kDistrictCount;
    lon_c /= kDistrictCount;
    double max_dist = 0;
    for (const District& d : districts())
      max_dist = std::max(max_dist, std::hypot(d.lat - lat_c, d.lon - lon_c));
    for (int i = 0; i < kDistrictCount; ++i) {
      const District& d = districts()[size_t(i)];
      e.rows[size_t(i)] = {
          float((d.lat - lat_min) / (lat_max - lat_min)),
          float((d.lon - lon_min) / (lon_max - lon_min)),
          float(double(d.region) / double(kRegionCount - 1)),
          float(std::hypot(d.lat - lat_c, d.lon - lon_c) / max_dist),
      };
    }
    return e;
  }();
  return enc;
}

std::vector<float> one_hot(int idx, int width) {
  std::vector<float> v(size_t(width), 0.0f);
  v[size_t(idx)] = 1.0f;
  return v;
}

}  // namespace

RetainedSlots RetainedSlots::all() {
  RetainedSlots r;
  for (auto& per_cat : r.bits)
    for (auto& m : per_cat) m = kAllSlotsMask;
  return r;
}

void RetainedSlots::drop(Category c, Risk r, NodeType t) {
  if (!is_prunable(t))
    throw std::invalid_argument(std::string("cannot prune structural node type ") +
                                node_type_name(t));
  bits[size_t(c)][size_t(r)] &= ~(1u << neighbor_slot_of(t));
}

bool RetainedSlots::is_all() const {
  for (const auto& per_cat : bits)
    for (uint32_t m : per_cat)
      if (m != kAllSlotsMask) return false;
  return true;
}

std::vector<float> encode_sensor_value(Sensor s, double value, const QuantizerSet& q) {
  auto enc = q.for_sensor(s).encode(value);
  return std::vector<float>(enc.begin(), enc.end());
}

std::vector<float> encode_alert_state(const AlertState& a) {
  return one_hot(a.state_id(), kAlertStateCount);
}

std::vector<float> encode_lead_time(int hours) { return one_hot(lead_time_bin(hours), kLeadTimeBins); }

std::vector<float> encode_severity(Severity s) { return one_hot(int(s), 3); }

std::vector<float> encode_drainage(Drainage d) { return one_hot(int(d), kDrainageCount); }

std::vector<float> encode_report_count(int count) {
  return one_hot(report_count_bin(count), kReportCountBins);
}

std::vector<float> encode_location(int district) {
  const auto& row = location_encoding().rows[size_t(district)];
  return std::vector<float>(row.begin(), row.end());
}

std::vector<float> encode_slot(NodeType t, const ReportRecord& r, const QuantizerSet& q) {
  if (node_type_is_sensor(t)) {
    Sensor s = sensor_of_node_type(t);
    return encode_sensor_value(s, r.sensors[size_t(s)], q);
  }
  switch (t) {
    case NodeType::kWeatherAlert: return encode_alert_state(r.alert);
    case NodeType::kPreAlertType: return encode_alert_state(r.pre_alert.type);
    case NodeType::kPreAlertTime: return encode_lead_time(r.pre_alert.lead_hours);
    case NodeType::kPreAlertSeverity: return encode_severity(r.pre_alert.severity);
    case NodeType::kDrainage: return encode_drainage(r.drainage);
    case NodeType::kReportType: return {float(int(r.category))};
    case NodeType::kReportCount: return encode_report_count(r.colocated_count);
    case NodeType::kLocation: return encode_location(r.district);
    default:
      throw std::invalid_argument(std::string("encode_slot: not a neighbor type: ") +
                                  node_type_name(t));
  }
}

int64_t HeteroGraph::total_edges() const {
  int64_t n = 0;
  for (const Relation& r : relations) n += int64_t(r.edges.size());
  return n;
}

std::string HeteroGraph::content_hash() const {
  Sha256 h;
  for (int t = 0; t < kNodeTypeCount; ++t) {
    const FeatureMatrix& f = features[size_t(t)];
    h.update(node_type_name(NodeType(t)));
    int64_t dims[2] = {f.rows, f.cols};
    h.update(dims, sizeof(dims));
    h.update(f.data.data(), f.data.size() * sizeof(float));
  }
  for (const Relation& r : relations) {
    h.update(r.name);
    h.update(r.edges.data(), r.edges.size() * sizeof(r.edges[0]));
  }
  h.update(star.data(), star.size() * sizeof(int32_t));
  h.update(labels.data(), labels.size());
  h.update(labeled.data(), labeled.size());
  h.update(split.data(), split.size());
  h.update(report_category.data(), report_category.size());
  h.update(report_district.data(), report_district.size());
  h.update(quantizers.to_json().dump());
  return h.hex_digest();
}

HeteroGraph build_graph(const std::vector<ReportRecord>& records, const QuantizerSet& quantizers,
                        const SplitInfo& split_info, const RetainedSlots& retained,
                        const std::string& dataset_hash, const std::string& prune_hash) {
  if (records.empty()) throw std::invalid_argument("build_graph: no records");
  if (split_info.part.size() != records.size())
    throw std::invalid_argument("build_graph: split does not match record count");
  const int64_t n = int64_t(records.size());

  HeteroGraph g;
  g.quantizers = quantizers;
  g.dataset_hash = dataset_hash;
  g.prune_hash = prune_hash;

  for (int t = 0; t < kNodeTypeCount; ++t) {
    NodeType nt = NodeType(t);
    int64_t cols = nt == NodeType::kReportType ? 1 : node_type_feature_dim(nt);
    int64_t rows = nt == NodeType::kLocation ? kDistrictCount : n;
    g.features[size_t(t)].init(rows, cols);
  }
  // Report nodes carry a constant placeholder feature; content lives in the
  // star around them.
  for (int64_t i = 0; i < n; ++i) g.features[size_t(NodeType::kReport)].row(i)[0] = 1.0f;
  for (int d = 0; d < kDistrictCount; ++d) {
    auto loc = encode_location(d);
    std::copy(loc.begin(), loc.end(), g.features[size_t(NodeType::kLocation)].row(d));
  }

  g.star.assign(size_t(n) * kNeighborSlotCount, -1);
  g.labels.resize(size_t(n));
  g.labeled = split_info.labeled;
  g.split = split_info.part;
  g.report_category.resize(size_t(n));
  g.report_district.resize(size_t(n));

  for (int64_t i = 0; i < n; ++i) {
    const ReportRecord& r = records[size_t(i)];
    g.labels[size_t(i)] = int8_t(r.risk);
    g.report_category[size_t(i)] = int8_t(r.category);
    g.report_district[size_t(i)] = int8_t(r.district);
    for (int s = 0; s < kNeighborSlotCount; ++s) {
      NodeType t = neighbor_slot_type(s);
      bool keep = retained.keep(r.category, r.risk, s) || !is_prunable(t);
      // Value-node features are materialized for every report (so node rows
      // stay aligned with report ids); pruning only removes edges.
      if (t != NodeType::kLocation) {
        auto feat = encode_slot(t, r, quantizers);
        std::copy(feat.begin(), feat.end(), g.features[size_t(t)].row(i));
      }
      if (keep) {
        g.star[size_t(i) * kNeighborSlotCount + size_t(s)] =
            t == NodeType::kLocation ? int32_t(r.district) : int32_t(i);
      }
    }
  }

  // Relations in fixed order: 15 forward stars, 15 reverses, district
  // adjacency. Edges are emitted in report order.
  for (int s = 0; s < kNeighborSlotCount; ++s) {
    NodeType t = neighbor_slot_type(s);
    Relation fwd{NodeType::kReport, t, std::string("has_") + node_type_name(t), {}};
    for (int64_t i = 0; i < n; ++i) {
      int32_t tgt = g.star[size_t(i) * kNeighborSlotCount + size_t(s)];
      if (tgt >= 0) fwd.edges.push_back({int32_t(i), tgt});
    }
    g.relations.push_back(std::move(fwd));
  }
  for (int s = 0; s < kNeighborSlotCount; ++s) {
    NodeType t = neighbor_slot_type(s);
    Relation rev{t, NodeType::kReport, std::string("rev_") + node_type_name(t), {}};
    const Relation& fwd = g.relations[size_t(s)];
    for (const auto& e : fwd.edges) rev.edges.push_back({e[1], e[0]});
    g.relations.push_back(std::move(rev));
  }
  Relation adj{NodeType::kLocation, NodeType::kLocation, "loc_adjacent", {}};
  for (int region = 0; region < kRegionCount; ++region) {
    const auto& ds = districts_in_region(region);
    for (size_t a = 0; a < ds.size(); ++a)
      for (size_t b = a + 1; b < ds.size(); ++b) {
        adj.edges.push_back({int32_t(ds[a]), int32_t(ds[b])});
        adj.edges.push_back({int32_t(ds[b]), int32_t(ds[a])});
      }
  }
  g.relations.push_back(std::move(adj));
  return g;
}

GraphStats graph_stats(const HeteroGraph& g) {
  GraphStats s;
  for (int t = 0; t < kNodeTypeCount; ++t) {
    int64_t rows = g.features[size_t(t)].rows;
    s.nodes_per_type.emplace_back(node_type_name(NodeType(t)), rows);
    s.total_nodes += rows;
  }
  for (const Relation& r : g.relations) {
    s.edges_per_relation.emplace_back(r.name, int64_t(r.edges.size()));
    s.total_edges += int64_t(r.edges.size());
  }
  return s;
}

ordered_json GraphStats::to_json() const {
  ordered_json j;
  ordered_json nodes = ordered_json::object();
  for (const auto& [name, count] : nodes_per_type) nodes[name] = count;
  j["nodes_per_type"] = nodes;
  ordered_json edges = ordered_json::object();
  for (const auto& [name, count] : edges_per_relation) edges[name] = count;
  j["edges_per_relation"] = edges;
  j["total_nodes"] = total_nodes;
  j["total_edges"] = total_edges;
  return j;
}

std::string GraphStats::hash() const { return sha256_hex(to_json().dump()); }

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

std::string feature_file(NodeType t) {
  return std::string("features/") + node_type_name(t) + ".bin";
}
std::string edge_file(const std::string& rel) { return "edges/" + rel + ".bin"; }

}  // namespace

void save_graph(const HeteroGraph& g, const std::string& dir) {
  ensure_dir(dir);
  ensure_dir(dir + "/features");
  ensure_dir(dir + "/edges");

  ordered_json files = ordered_json::object();
  auto emit = [&](const std::string& rel_path, const void* data, size_t len) {
    std::string full = dir + "/" + rel_path;
    write_file_bytes(full, data, len);
    files[rel_path] = sha256_hex(data, len);
  };

  ordered_json types = ordered_json::array();
  for (int t = 0; t < kNodeTypeCount; ++t) {
    const FeatureMatrix& f = g.features[size_t(t)];
    std::string rel_path = feature_file(NodeType(t));
    emit(rel_path, f.data.data(), f.data.size() * sizeof(float));
    ordered_json e;
    e["type"] = node_type_name(NodeType(t));
    e["rows"] = f.rows;
    e["cols"] = f.cols;
    e["file"] = rel_path;
    types.push_back(e);
  }
  ordered_json rels = ordered_json::array();
  for (const Relation& r : g.relations) {
    std::string rel_path = edge_file(r.name);
    emit(rel_path, r.edges.data(), r.edges.size() * sizeof(r.edges[0]));
    ordered_json e;
    e["name"] = r.name;
    e["src"] = node_type_name(r.src);
    e["dst"] = node_type_name(r.dst);
    e["count"] = r.edges.size();
    e["file"] = rel_path;
    rels.push_back(e);
  }
  emit("star.bin", g.star.data(), g.star.size() * sizeof(int32_t));
  emit("labels.bin", g.labels.data(), g.labels.size());
  emit("labeled.bin", g.labeled.data(), g.labeled.size());
  emit("split.bin", g.split.data(), g.split.size());
  emit("category.bin", g.report_category.data(), g.report_category.size());
  emit("district.bin", g.report_district.data(), g.report_district.size());
  std::string qjson = g.quantizers.to_json().dump(2) + "\n";
  emit("quantizers.json", qjson.data(), qjson.size());

  ordered_json manifest;
  manifest["format"] = "riskgraph-graph-v1";
  manifest["dataset_hash"] = g.dataset_hash;
  manifest["prune_hash"] = g.prune_hash;
  manifest["report_count"] = g.report_count();
  manifest["node_types"] = types;
  manifest["relations"] = rels;
  manifest["files"] = files;
  manifest["content_hash"] = g.content_hash();
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

HeteroGraph load_graph(const std::string& dir) {
  ordered_json manifest = ordered_json::parse(read_text_file(dir + "/manifest.json"));
  if (manifest.at("format") != "riskgraph-graph-v1")
    throw std::runtime_error("load_graph: unexpected format in " + dir);

  for (auto& [rel_path, hash] : manifest.at("files").items()) {
    auto bytes = read_file_bytes(dir + "/" + rel_path);
    std::string actual = sha256_hex(bytes.data(), bytes.size());
    if (actual != hash.get<std::string>())
      throw std::runtime_error("load_graph: hash mismatch for " + rel_path);
  }

  HeteroGraph g;
  g.dataset_hash = manifest.at("dataset_hash");
  g.prune_hash = manifest.at("prune_hash");
  for (const auto& e : manifest.at("node_types")) {
    NodeType t = node_type_from_name(e.at("type"));
    FeatureMatrix& f = g.features[size_t(t)];
    f.rows = e.at("rows");
    f.cols = e.at("cols");
    auto bytes = read_file_bytes(dir + "/" + e.at("file").get<std::string>());
    if (bytes.size() != size_t(f.rows * f.cols) * sizeof(float))
      throw std::runtime_error("load_graph: feature size mismatch for " +
                               std::string(node_type_name(t)));
    f.data.resize(size_t(f.rows * f.cols));
    std::memcpy(f.data.data(), bytes.data(), bytes.size());
  }
  for (const auto& e : manifest.at("relations")) {
    Relation r;
    r.name = e.at("name");
    r.src = node_type_from_name(e.at("src"));
    r.dst = node_type_from_name(e.at("dst"));
    auto bytes = read_file_bytes(dir + "/" + e.at("file").get<std::string>());
    r.edges.resize(bytes.size() / sizeof(r.edges[0]));
    std::memcpy(r.edges.data(), bytes.data(), bytes.size());
    if (r.edges.size() != e.at("count").get<size_t>())
      throw std::runtime_error("load_graph: edge count mismatch for " + r.name);
    g.relations.push_back(std::move(r));
  }
  auto read_i8 = [&](const std::string& rel_path, std::vector<int8_t>& out) {
    auto bytes = read_file_bytes(dir + "/" + rel_path);
    out.assign(bytes.begin(), bytes.end());
  };
  auto star_bytes = read_file_bytes(dir + "/star.bin");
  g.star.resize(star_bytes.size() / sizeof(int32_t));
  std::memcpy(g.star.data(), star_bytes.data(), star_bytes.size());
  read_i8("labels.bin", g.labels);
  auto labeled_bytes = read_file_bytes(dir + "/labeled.bin");
  g.labeled.assign(labeled_bytes.begin(), labeled_bytes.end());
  read_i8("split.bin", g.split);
  read_i8("category.bin", g.report_category);
  read_i8("district.bin", g.report_district);
  g.quantizers = QuantizerSet::from_json(ordered_json::parse(read_text_file(dir + "/quantizers.json")));

  std::string expect = manifest.at("content_hash");
  std::string actual = g.content_hash();
  if (actual != expect)
    throw std::runtime_error("load_graph: content hash mismatch in " + dir);
  return g;
}

// ---------------------------------------------------------------------------
// Neighborhood views
// ---------------------------------------------------------------------------

namespace {

std::array<std::vector<float>, 3> location_rows_for(int district) {
  std::array<std::vector<float>, 3> rows;
  rows[0] = encode_location(district);
  int at = 1;
  for (int d : districts_in_region(districts()[size_t(district)].region))
    if (d != district) rows[size_t(at++)] = encode_location(d);
  return rows;
}

}  // namespace

SampleNeighborhood extract_neighborhood(const HeteroGraph& g, int64_t report) {
  if (report < 0 || report >= g.report_count())
    throw std::invalid_argument("extract_neighborhood: report index out of range");
  SampleNeighborhood s;
  s.category = g.report_category[size_t(report)];
  s.district = g.report_district[size_t(report)];
  s.label = g.labels[size_t(report)];
  for (int slot = 0; slot < kNeighborSlotCount; ++slot) {
    NodeType t = neighbor_slot_type(slot);
    if (t == NodeType::kLocation) continue;  // handled via location_rows
    int32_t node = g.star_at(report, slot);
    if (node < 0) continue;
    const FeatureMatrix& f = g.features[size_t(t)];
    s.slot_features[size_t(slot)].assign(f.row(node), f.row(node) + f.cols);
  }
  s.location_rows = location_rows_for(s.district);
  return s;
}

SampleNeighborhood encode_neighborhood(const ReportRecord& r, const QuantizerSet& q,
                                       uint32_t slot_mask) {
  SampleNeighborhood s;
  s.category = int(r.category);
  s.district = r.district;
  s.label = int(r.risk);
  for (int slot = 0; slot < kNeighborSlotCount; ++slot) {
    NodeType t = neighbor_slot_type(slot);
    if (t == NodeType::kLocation) continue;
    bool keep = ((slot_mask >> slot) & 1u) || !is_prunable(t);
    if (!keep) continue;
    s.slot_features[size_t(slot)] = encode_slot(t, r, q);
  }
  s.location_rows = location_rows_for(r.district);
  return s;
}

}  // namespace riskgraph
