#include "riskgraph/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "riskgraph/sha256.hpp"

namespace riskgraph {

namespace {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

bool group_of(NodeType t) { return is_sensor_group(t); }  // true = sensor group

}  // namespace

ordered_json ImportanceVector::to_json() const {
  ordered_json scores = ordered_json::object();
  ordered_json groups = ordered_json::object();
  for (int s = 0; s < kNeighborSlotCount; ++s) {
    NodeType t = neighbor_slot_type(s);
    if (!is_prunable(t) || !present[size_t(t)]) continue;
    scores[node_type_name(t)] = score[size_t(t)];
    groups[node_type_name(t)] = is_sensor_group(t) ? "sensor" : "context";
  }
  ordered_json j;
  j["sample_id"] = sample_id;
  j["variant"] = variant;
  j["strategy"] = strategy;
  j["method"] = method;
  j["category"] = category_info(Category(category)).id;
  j["risk"] = risk >= 0 ? ordered_json(risk_name(Risk(risk))) : ordered_json(nullptr);
  j["scores"] = scores;
  j["groups"] = groups;
  return j;
}

ImportanceVector ImportanceVector::from_json(const ordered_json& j) {
  ImportanceVector v;
  v.sample_id = j.at("sample_id").get<int64_t>();
  v.variant = j.at("variant").get<std::string>();
  v.strategy = j.at("strategy").get<std::string>();
  v.method = j.at("method").get<std::string>();
  v.category = int(category_from_id(j.at("category").get<std::string>()));
  v.risk = j.at("risk").is_null() ? -1 : int(risk_from_name(j.at("risk").get<std::string>()));
  for (const auto& [name, val] : j.at("scores").items()) {
    NodeType t = node_type_from_name(name);
    if (!is_prunable(t)) throw std::invalid_argument("importance vector: ineligible type " + name);
    v.score[size_t(t)] = val.get<double>();
    v.present[size_t(t)] = 1;
  }
  return v;
}

void normalize_importance(ImportanceVector& v) {
  for (bool sensor_side : {true, false}) {
    std::vector<NodeType> members;
    double sum = 0.0;
    for (int s = 0; s < kNeighborSlotCount; ++s) {
      NodeType t = neighbor_slot_type(s);
      if (!is_prunable(t) || group_of(t) != sensor_side || !v.present[size_t(t)]) continue;
      if (v.score[size_t(t)] < 0.0)
        throw std::invalid_argument("normalize_importance: negative raw score");
      members.push_back(t);
      sum += v.score[size_t(t)];
    }
    if (members.empty()) continue;
    for (NodeType t : members)
      v.score[size_t(t)] =
          sum > 1e-12 ? 100.0 * v.score[size_t(t)] / sum : 100.0 / double(members.size());
  }
  for (int ti = 0; ti < kNodeTypeCount; ++ti)
    if (!v.present[size_t(ti)]) v.score[size_t(ti)] = 0.0;
}

AttentionRecord record_attention(const nd::Tape<float>& tape, const ForwardOutput& fo,
                                 const BatchPlan& plan, Variant variant) {
  AttentionRecord rec;
  rec.variant = variant;
  rec.B = plan.B;
  for (int h = 0; h < kHeadCount; ++h) {
    if (fo.head_alpha[size_t(h)] < 0) continue;
    rec.alpha[size_t(h)] = tape.val(fo.head_alpha[size_t(h)]);
    rec.allowed[size_t(h)] = fo.head_allowed[size_t(h)];
  }
  for (int64_t i = 0; i < plan.B; ++i) {
    rec.category.push_back(int(plan.report_type_index[size_t(i)]));
    std::array<int8_t, kNeighborSlotCount> pres{};
    for (int s = 0; s < kNeighborSlotCount; ++s)
      pres[size_t(s)] = plan.slot_row[size_t(s)][size_t(i)] >= 0 ? 1 : 0;
    rec.slot_present.push_back(pres);
  }
  return rec;
}

std::vector<ImportanceVector> attention_importance(const AttentionRecord& rec) {
  bool any_head = false;
  for (int h = 0; h < kHeadCount; ++h) any_head = any_head || !rec.alpha[size_t(h)].empty();
  if (!any_head)
    throw std::invalid_argument(
        "attention_importance: no attention recorded (inductive variant); use "
        "gradient_importance");
  std::vector<ImportanceVector> out;
  for (int64_t i = 0; i < rec.B; ++i) {
    ImportanceVector v;
    v.variant = variant_name(rec.variant);
    v.method = "attention";
    v.category = rec.category[size_t(i)];
    for (int s = 0; s < kNeighborSlotCount; ++s) {
      NodeType t = neighbor_slot_type(s);
      if (!is_prunable(t) || !rec.slot_present[size_t(i)][size_t(s)]) continue;
      double raw = 0.0;
      int heads = 0;
      for (int h = 0; h < kHeadCount; ++h) {
        if (rec.alpha[size_t(h)].empty()) continue;
        if ((head_slot_mask(HeadKind(h)) >> s & 1u) == 0) continue;
        raw += double(rec.alpha[size_t(h)][size_t(i) * kNeighborSlotCount + size_t(s)]);
        ++heads;
      }
      v.score[size_t(t)] = heads > 0 ? raw / double(heads) : 0.0;
      v.present[size_t(t)] = 1;
    }
    normalize_importance(v);
    out.push_back(std::move(v));
  }
  return out;
}

ImportanceVector gradient_importance(const Model& m, const SampleNeighborhood& sample) {
  nd::Tape<float> tape;
  BatchPlan plan = plan_batch({sample});
  ForwardOutput fo = forward_model(tape, m, plan, false, nullptr);
  const std::vector<float>& lv = tape.val(fo.logits);
  int pred = 0;
  for (int c = 1; c < kRiskCount; ++c)
    if (lv[size_t(c)] > lv[size_t(pred)]) pred = c;
  int target = nd::select_entry(tape, fo.logits, 0, pred);
  tape.backward(target);

  ImportanceVector v;
  v.variant = variant_name(m.cfg.variant);
  v.method = "gradient";
  v.category = sample.category;
  v.risk = sample.label;
  bool any = false;
  for (int s = 0; s < kNeighborSlotCount; ++s) {
    NodeType t = neighbor_slot_type(s);
    if (!is_prunable(t)) continue;
    int64_t row = plan.slot_row[size_t(s)][0];
    if (row < 0) continue;
    int node = fo.grad_target[size_t(t)];
    const std::vector<float>& h = tape.val(node);
    std::vector<float> g = tape.grad(node);
    int64_t d = tape.shape(node).d[1];
    double raw = 0.0;
    for (int64_t j = 0; j < d; ++j)
      raw += std::abs(double(g[size_t(row * d + j)])) * std::abs(double(h[size_t(row * d + j)]));
    v.score[size_t(t)] = raw;
    v.present[size_t(t)] = 1;
    any = true;
  }
  if (!any) throw std::invalid_argument("gradient_importance: sample has no eligible neighbor");
  normalize_importance(v);
  return v;
}

std::string default_explain_method(Variant v) {
  return v == Variant::kInductive ? "gradient" : "attention";
}

std::vector<ImportanceVector> explain_batch(const Model& m,
                                            const std::vector<SampleNeighborhood>& samples,
                                            const std::vector<int64_t>& sample_ids,
                                            const std::string& method) {
  if (samples.size() != sample_ids.size())
    throw std::invalid_argument("explain_batch: ids/samples size mismatch");
  if (samples.empty()) return {};
  std::vector<ImportanceVector> out;
  if (method == "attention") {
    nd::Tape<float> tape;
    BatchPlan plan = plan_batch(samples);
    ForwardOutput fo = forward_model(tape, m, plan, false, nullptr);
    AttentionRecord rec = record_attention(tape, fo, plan, m.cfg.variant);
    out = attention_importance(rec);
    for (size_t i = 0; i < out.size(); ++i) out[i].risk = samples[i].label;
  } else if (method == "gradient") {
    for (const SampleNeighborhood& s : samples) out.push_back(gradient_importance(m, s));
  } else {
    throw std::invalid_argument("explain_batch: unknown method " + method);
  }
  for (size_t i = 0; i < out.size(); ++i) out[i].sample_id = sample_ids[i];
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

ImportanceTable aggregate_importance(const std::vector<ImportanceVector>& vectors,
                                     const std::string& method, const std::string& variant,
                                     const std::string& graph_hash) {
  ImportanceTable t;
  t.method = method;
  t.variant = variant;
  t.graph_hash = graph_hash;
  for (const ImportanceVector& v : vectors) {
    if (v.risk < 0 || v.risk >= kRiskCount)
      throw std::invalid_argument("aggregate_importance: vector lacks a risk stratum");
    auto& cell = t.cells[size_t(v.category)][size_t(v.risk)];
    if (!cell) cell.emplace();
    for (int ti = 0; ti < kNodeTypeCount; ++ti) {
      cell->mean[size_t(ti)] += v.score[size_t(ti)];
      cell->present[size_t(ti)] |= v.present[size_t(ti)];
    }
    cell->n += 1;
  }
  for (auto& by_risk : t.cells)
    for (auto& cell : by_risk)
      if (cell)
        for (double& m : cell->mean) m /= double(cell->n);
  return t;
}

std::vector<NodeType> top_k_types(const ImportanceCell& cell, int k) {
  std::vector<NodeType> cand;
  for (int s = 0; s < kNeighborSlotCount; ++s) {
    NodeType t = neighbor_slot_type(s);
    if (is_prunable(t) && cell.present[size_t(t)]) cand.push_back(t);
  }
  std::sort(cand.begin(), cand.end(), [&](NodeType a, NodeType b) {
    double ma = cell.mean[size_t(a)], mb = cell.mean[size_t(b)];
    if (ma != mb) return ma > mb;
    return std::string(node_type_name(a)) < node_type_name(b);
  });
  if (int(cand.size()) > k) cand.resize(size_t(k));
  return cand;
}

ordered_json ImportanceTable::to_json() const {
  ordered_json cells_j = ordered_json::array();
  for (int c = 0; c < kCategoryCount; ++c)
    for (int r = 0; r < kRiskCount; ++r) {
      const ImportanceCell* cell = this->cell(Category(c), Risk(r));
      if (!cell) continue;
      ordered_json mean = ordered_json::object();
      for (int s = 0; s < kNeighborSlotCount; ++s) {
        NodeType t = neighbor_slot_type(s);
        if (is_prunable(t) && cell->present[size_t(t)])
          mean[node_type_name(t)] = cell->mean[size_t(t)];
      }
      cells_j.push_back(ordered_json{{"category", category_info(Category(c)).id},
                                     {"risk", risk_name(Risk(r))},
                                     {"n", cell->n},
                                     {"mean", mean}});
    }
  return ordered_json{
      {"method", method}, {"variant", variant}, {"graph_hash", graph_hash}, {"cells", cells_j}};
}

ImportanceTable ImportanceTable::from_json(const ordered_json& j) {
  ImportanceTable t;
  t.method = j.at("method").get<std::string>();
  t.variant = j.at("variant").get<std::string>();
  t.graph_hash = j.at("graph_hash").get<std::string>();
  for (const ordered_json& cj : j.at("cells")) {
    Category c = category_from_id(cj.at("category").get<std::string>());
    Risk r = risk_from_name(cj.at("risk").get<std::string>());
    auto& cell = t.cells[size_t(c)][size_t(r)];
    if (cell) throw std::invalid_argument("importance table: duplicate cell");
    cell.emplace();
    cell->n = cj.at("n").get<int64_t>();
    if (cell->n <= 0) throw std::invalid_argument("importance table: cell with n <= 0");
    for (const auto& [name, val] : cj.at("mean").items()) {
      NodeType ty = node_type_from_name(name);
      if (!is_prunable(ty))
        throw std::invalid_argument("importance table: ineligible type " + name);
      cell->mean[size_t(ty)] = val.get<double>();
      cell->present[size_t(ty)] = 1;
    }
  }
  return t;
}

std::string ImportanceTable::to_csv() const {
  std::ostringstream os;
  os << "category,risk,type,mean_importance,n\n";
  for (int c = 0; c < kCategoryCount; ++c)
    for (int r = 0; r < kRiskCount; ++r) {
      const ImportanceCell* cell = this->cell(Category(c), Risk(r));
      if (!cell) continue;
      for (NodeType t : top_k_types(*cell, kNeighborSlotCount))
        os << category_info(Category(c)).id << "," << risk_name(Risk(r)) << ","
           << node_type_name(t) << "," << fmt_num(cell->mean[size_t(t)]) << "," << cell->n
           << "\n";
    }
  return os.str();
}

std::string ImportanceTable::hash() const { return sha256_hex(to_json().dump()); }

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

namespace {

NodeType top1_over_union(const ImportanceVector& v, const std::vector<NodeType>& union_types) {
  NodeType best = union_types.front();
  double best_score = -1.0;
  for (NodeType t : union_types) {
    double s = v.present[size_t(t)] ? v.score[size_t(t)] : 0.0;
    if (s > best_score) {  // union_types is name-sorted, so ties keep the first
      best_score = s;
      best = t;
    }
  }
  return best;
}

}  // namespace

AgreementReport top1_agreement(const std::vector<std::vector<ImportanceVector>>& per_strategy) {
  if (per_strategy.size() < 2)
    throw std::invalid_argument("top1_agreement: need at least 2 strategies");
  size_t n = per_strategy[0].size();
  if (n == 0) throw std::invalid_argument("top1_agreement: empty sample set");
  for (const auto& vs : per_strategy) {
    if (vs.size() != n) throw std::invalid_argument("top1_agreement: sample count mismatch");
    for (size_t i = 0; i < n; ++i)
      if (vs[i].sample_id != per_strategy[0][i].sample_id)
        throw std::invalid_argument("top1_agreement: sample-id mismatch across strategies");
  }

  AgreementReport rep;
  for (const auto& vs : per_strategy) rep.strategies.push_back(vs[0].strategy);
  std::array<int64_t, kRiskCount> risk_total{}, risk_agree{};
  std::array<int64_t, kCategoryCount> cat_total{}, cat_agree{};

  for (size_t i = 0; i < n; ++i) {
    // Union of present eligible types, in name order so tie-breaks are fixed.
    std::vector<NodeType> union_types;
    for (int s = 0; s < kNeighborSlotCount; ++s) {
      NodeType t = neighbor_slot_type(s);
      if (!is_prunable(t)) continue;
      for (const auto& vs : per_strategy)
        if (vs[i].present[size_t(t)]) {
          union_types.push_back(t);
          break;
        }
    }
    if (union_types.empty())
      throw std::invalid_argument("top1_agreement: sample with no eligible types");
    std::sort(union_types.begin(), union_types.end(), [](NodeType a, NodeType b) {
      return std::string(node_type_name(a)) < node_type_name(b);
    });

    NodeType first = top1_over_union(per_strategy[0][i], union_types);
    bool agree = true;
    for (size_t k = 1; k < per_strategy.size(); ++k)
      agree = agree && top1_over_union(per_strategy[k][i], union_types) == first;

    const ImportanceVector& meta = per_strategy[0][i];
    rep.total++;
    cat_total[size_t(meta.category)]++;
    if (meta.risk >= 0) risk_total[size_t(meta.risk)]++;
    if (agree) {
      rep.agreeing++;
      cat_agree[size_t(meta.category)]++;
      if (meta.risk >= 0) risk_agree[size_t(meta.risk)]++;
    }
  }

  rep.overall_pct = 100.0 * double(rep.agreeing) / double(rep.total);
  for (int r = 0; r < kRiskCount; ++r)
    if (risk_total[size_t(r)] > 0)
      rep.by_risk[size_t(r)] = 100.0 * double(risk_agree[size_t(r)]) / double(risk_total[size_t(r)]);
  for (int c = 0; c < kCategoryCount; ++c)
    if (cat_total[size_t(c)] > 0)
      rep.by_category[size_t(c)] =
          100.0 * double(cat_agree[size_t(c)]) / double(cat_total[size_t(c)]);
  return rep;
}

ordered_json AgreementReport::to_json() const {
  ordered_json by_risk_j = ordered_json::object();
  for (int r = 0; r < kRiskCount; ++r)
    by_risk_j[risk_name(Risk(r))] =
        by_risk[size_t(r)] ? ordered_json(*by_risk[size_t(r)]) : ordered_json(nullptr);
  ordered_json by_cat_j = ordered_json::object();
  for (int c = 0; c < kCategoryCount; ++c)
    by_cat_j[category_info(Category(c)).id] =
        by_category[size_t(c)] ? ordered_json(*by_category[size_t(c)]) : ordered_json(nullptr);
  return ordered_json{{"strategies", strategies},
                      {"total", total},
                      {"agreeing", agreeing},
                      {"overall_pct", overall_pct},
                      {"by_risk", by_risk_j},
                      {"by_category", by_cat_j}};
}

}  // namespace riskgraph
