#include "riskgraph/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "riskgraph/fsutil.hpp"
#include "riskgraph/sha256.hpp"

namespace riskgraph {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kInductive: return "inductive";
    case Variant::kAttention: return "attention";
    case Variant::kMultihead: return "multihead";
  }
  throw std::invalid_argument("variant_name: bad variant");
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::kInductive, Variant::kAttention, Variant::kMultihead})
    if (name == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant: " + name);
}

const char* head_name(HeadKind h) {
  switch (h) {
    case HeadKind::kSensorHead: return "sensor";
    case HeadKind::kContextHead: return "context";
    case HeadKind::kFullHead: return "full";
  }
  throw std::invalid_argument("head_name: bad head");
}

uint32_t head_slot_mask(HeadKind h) {
  uint32_t m = 0;
  for (int s = 0; s < kNeighborSlotCount; ++s) {
    NodeType t = neighbor_slot_type(s);
    bool in = h == HeadKind::kFullHead ||
              (h == HeadKind::kSensorHead && is_sensor_group(t)) ||
              (h == HeadKind::kContextHead && is_context_group(t));
    if (in) m |= 1u << s;
  }
  return m;
}

ordered_json ModelConfig::to_json() const {
  return ordered_json{{"variant", variant_name(variant)},
                      {"d", d},
                      {"internal_heads", internal_heads},
                      {"rank", rank},
                      {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const ordered_json& j) {
  ModelConfig c;
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  c.d = j.at("d").get<int>();
  c.internal_heads = j.at("internal_heads").get<int>();
  c.rank = j.at("rank").get<int>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

ordered_json TrainConfig::to_json() const {
  return ordered_json{{"epochs", epochs},
                      {"batch_size", batch_size},
                      {"lr", lr},
                      {"patience", patience},
                      {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const ordered_json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.patience = j.at("patience").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

void apply_profile(const std::string& profile, ModelConfig& mc, TrainConfig& tc) {
  if (profile == "main") {
    mc.d = 128;
    tc.epochs = 10;
    tc.batch_size = 256;
    tc.lr = 1e-3;
    tc.patience = 20;
  } else if (profile == "pruning-bench") {
    mc.d = 256;
    tc.epochs = 50;
    tc.batch_size = 256;
    tc.lr = 1e-3;
    tc.patience = 20;
  } else {
    throw std::invalid_argument("unknown training profile: " + profile);
  }
}

namespace detail {

std::vector<std::string> relation_param_names() {
  std::vector<std::string> names;
  for (int s = 0; s < kNeighborSlotCount; ++s)
    names.push_back(std::string("has_") + node_type_name(neighbor_slot_type(s)));
  for (int s = 0; s < kNeighborSlotCount; ++s)
    names.push_back(std::string("rev_") + node_type_name(neighbor_slot_type(s)));
  names.push_back("loc_adjacent");
  return names;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

BatchPlan plan_batch(const std::vector<SampleNeighborhood>& samples) {
  if (samples.empty()) throw std::invalid_argument("plan_batch: empty batch");
  BatchPlan p;
  p.B = int64_t(samples.size());
  for (int s = 0; s < kNeighborSlotCount; ++s) p.slot_row[size_t(s)].assign(size_t(p.B), -1);
  auto rep = size_t(NodeType::kReport);
  auto loc = size_t(NodeType::kLocation);
  auto rtt = size_t(NodeType::kReportType);
  p.rows[rep] = p.B;
  p.feat[rep].assign(size_t(p.B), 1.0f);
  p.rows[rtt] = p.B;
  p.rows[loc] = 3 * p.B;
  p.feat[loc].reserve(size_t(3 * p.B) * size_t(node_type_feature_dim(NodeType::kLocation)));

  for (int64_t i = 0; i < p.B; ++i) {
    const SampleNeighborhood& sn = samples[size_t(i)];
    if (sn.category < 0 || sn.category >= kCategoryCount)
      throw std::invalid_argument("plan_batch: category out of range");
    p.report_type_index.push_back(sn.category);
    p.owner[rtt].push_back(i);
    p.labels.push_back(sn.label);
    p.scored.push_back(sn.scored ? 1 : 0);

    for (int s = 0; s < kNeighborSlotCount; ++s) {
      NodeType t = neighbor_slot_type(s);
      if (t == NodeType::kLocation) {
        p.slot_row[size_t(s)][size_t(i)] = 3 * i;  // own district row
        continue;
      }
      if (t == NodeType::kReportType) {
        p.slot_row[size_t(s)][size_t(i)] = i;  // row in the embedding-gathered matrix
        continue;
      }
      const std::vector<float>& f = sn.slot_features[size_t(s)];
      if (f.empty()) continue;  // absent / pruned slot
      if (int(f.size()) != node_type_feature_dim(t))
        throw std::invalid_argument(std::string("plan_batch: bad feature width for ") +
                                    node_type_name(t));
      p.slot_row[size_t(s)][size_t(i)] = p.rows[size_t(t)];
      p.owner[size_t(t)].push_back(i);
      p.feat[size_t(t)].insert(p.feat[size_t(t)].end(), f.begin(), f.end());
      p.rows[size_t(t)] += 1;
    }

    // Three private location rows per sample: own district then its region
    // partners. Only the own district has an attached report, so eval/train
    // results never depend on which other samples share the batch.
    for (int k = 0; k < 3; ++k) {
      const std::vector<float>& lr = sn.location_rows[size_t(k)];
      if (int(lr.size()) != node_type_feature_dim(NodeType::kLocation))
        throw std::invalid_argument("plan_batch: bad location row width");
      p.feat[loc].insert(p.feat[loc].end(), lr.begin(), lr.end());
    }
    int64_t base = 3 * i;
    p.loc_attached.push_back({i});
    p.loc_attached.push_back({});
    p.loc_attached.push_back({});
    p.loc_adj_a.insert(p.loc_adj_a.end(), {base + 1, base, base});
    p.loc_adj_b.insert(p.loc_adj_b.end(), {base + 2, base + 2, base + 1});
  }
  return p;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

std::optional<double> train_step(Model& m, const BatchPlan& plan,
                                 const std::vector<float>& class_weights,
                                 nd::AdamState<float>& adam, Rng& dropout_rng) {
  std::vector<int64_t> rows;
  std::vector<int> labels;
  for (int64_t i = 0; i < plan.B; ++i)
    if (plan.labels[size_t(i)] >= 0) {
      rows.push_back(i);
      labels.push_back(plan.labels[size_t(i)]);
    }
  if (rows.empty()) return std::nullopt;  // nothing to learn from; leave parameters untouched

  nd::Tape<float> tape;
  ForwardOutput fo = forward_model(tape, m, plan, true, &dropout_rng);
  int sub = int64_t(rows.size()) == plan.B ? fo.logits : nd::gather_rows(tape, fo.logits, rows);
  int loss = nd::weighted_cross_entropy(tape, sub, labels, class_weights);
  nd::zero_grads(m.params);
  tape.backward(loss);
  adam.step(m.params);
  return double(tape.val(loss)[0]);
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

TrainResult train_model(const HeteroGraph& g, const ModelConfig& mc, const TrainConfig& tc) {
  if (tc.epochs <= 0 || tc.batch_size <= 0) throw std::invalid_argument("train_model: bad config");
  std::vector<int64_t> train_ids, val_ids;
  for (int64_t i = 0; i < g.report_count(); ++i) {
    if (g.split[size_t(i)] == int8_t(SplitPart::kTrain) && g.labeled[size_t(i)])
      train_ids.push_back(i);
    else if (g.split[size_t(i)] == int8_t(SplitPart::kVal))
      val_ids.push_back(i);
  }
  if (train_ids.empty()) throw std::runtime_error("train_model: no labeled training rows");
  if (val_ids.empty()) throw std::runtime_error("train_model: empty validation split");

  std::array<int64_t, kRiskCount> counts{};
  for (int64_t id : train_ids) counts[size_t(g.labels[size_t(id)])]++;
  std::vector<float> weights(kRiskCount);
  for (int c = 0; c < kRiskCount; ++c) {
    if (counts[size_t(c)] == 0)
      throw std::runtime_error(std::string("train_model: risk class '") + risk_name(Risk(c)) +
                               "' is absent from the labeled training set");
    weights[size_t(c)] =
        float(double(train_ids.size()) / (double(kRiskCount) * double(counts[size_t(c)])));
  }

  Model model = Model::init(mc, tc.seed);
  nd::AdamState<float> adam;
  adam.lr = tc.lr;
  Rng shuffle_rng = sub_rng(tc.seed, "train/shuffle");
  Rng drop_rng = sub_rng(tc.seed, "train/dropout");

  std::vector<int8_t> val_labels;
  for (int64_t id : val_ids) val_labels.push_back(g.labels[size_t(id)]);

  TrainResult result;
  result.class_weights = weights;
  nd::ParamStore<float> best_params = model.params;
  double best_val = -1.0;
  int best_epoch = 0, since_best = 0, last_epoch = 0;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(train_ids);
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t at = 0; at < train_ids.size(); at += size_t(tc.batch_size)) {
      size_t hi = std::min(train_ids.size(), at + size_t(tc.batch_size));
      std::vector<SampleNeighborhood> samples;
      samples.reserve(hi - at);
      for (size_t k = at; k < hi; ++k) samples.push_back(extract_neighborhood(g, train_ids[k]));
      BatchPlan plan = plan_batch(samples);
      auto loss = train_step(model, plan, weights, adam, drop_rng);
      if (loss) {
        loss_sum += *loss * double(hi - at);
        seen += int64_t(hi - at);
      }
    }
    std::vector<int> pred = predict(model, g, val_ids, tc.batch_size);
    int64_t correct = 0;
    for (size_t k = 0; k < val_ids.size(); ++k)
      if (pred[k] == int(val_labels[k])) ++correct;
    double val_acc = double(correct) / double(val_ids.size());
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back({epoch, seen > 0 ? loss_sum / double(seen) : 0.0, val_acc, secs});
    last_epoch = epoch;
    if (val_acc > best_val) {
      best_val = val_acc;
      best_epoch = epoch;
      best_params = model.params;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      break;
    }
  }

  model.params = std::move(best_params);
  result.model = std::move(model);
  result.best_epoch = best_epoch;
  result.best_val_acc = best_val;
  result.stopped_epoch = last_epoch;
  return result;
}

std::vector<int> predict(const Model& m, const HeteroGraph& g, const std::vector<int64_t>& ids,
                         int batch_size) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (size_t at = 0; at < ids.size(); at += size_t(batch_size)) {
    size_t hi = std::min(ids.size(), at + size_t(batch_size));
    std::vector<SampleNeighborhood> samples;
    samples.reserve(hi - at);
    for (size_t k = at; k < hi; ++k) samples.push_back(extract_neighborhood(g, ids[k]));
    for (const auto& row : predict_logits(m, samples)) {
      int arg = 0;
      for (int c = 1; c < kRiskCount; ++c)
        if (row[size_t(c)] > row[size_t(arg)]) arg = c;
      out.push_back(arg);
    }
  }
  return out;
}

std::vector<std::array<float, 3>> predict_logits(const Model& m,
                                                 const std::vector<SampleNeighborhood>& samples) {
  nd::Tape<float> tape;
  BatchPlan plan = plan_batch(samples);
  ForwardOutput fo = forward_model(tape, m, plan, false, nullptr);
  const std::vector<float>& v = tape.val(fo.logits);
  std::vector<std::array<float, 3>> out(samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    for (int c = 0; c < kRiskCount; ++c) out[i][size_t(c)] = v[i * kRiskCount + size_t(c)];
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kParamMagic[8] = {'R', 'G', 'P', 'A', 'R', 'A', 'M', '1'};

template <class T>
void append_pod(std::string& buf, T v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(const std::vector<uint8_t>& buf, size_t& at) {
  if (at + sizeof(T) > buf.size()) throw std::runtime_error("parameter blob truncated");
  T v;
  std::memcpy(&v, buf.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

}  // namespace

void save_params_blob(const nd::ParamStore<float>& params, const std::string& path) {
  std::string buf;
  buf.append(kParamMagic, sizeof(kParamMagic));
  append_pod(buf, uint32_t(params.size()));
  for (const auto& [name, p] : params) {
    append_pod(buf, uint32_t(name.size()));
    buf.append(name);
    append_pod(buf, uint32_t(p.shape.ndim));
    for (int k = 0; k < p.shape.ndim; ++k) append_pod(buf, uint32_t(p.shape.d[size_t(k)]));
    buf.append(reinterpret_cast<const char*>(p.value.data()), p.value.size() * sizeof(float));
  }
  write_file_bytes(path, buf.data(), buf.size());
}

nd::ParamStore<float> load_params_blob(const std::string& path) {
  std::vector<uint8_t> buf = read_file_bytes(path);
  if (buf.size() < sizeof(kParamMagic) ||
      std::memcmp(buf.data(), kParamMagic, sizeof(kParamMagic)) != 0)
    throw std::runtime_error("not a parameter blob: " + path);
  size_t at = sizeof(kParamMagic);
  uint32_t n = read_pod<uint32_t>(buf, at);
  nd::ParamStore<float> params;
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t name_len = read_pod<uint32_t>(buf, at);
    if (at + name_len > buf.size()) throw std::runtime_error("parameter blob truncated");
    std::string name(reinterpret_cast<const char*>(buf.data() + at), name_len);
    at += name_len;
    uint32_t ndim = read_pod<uint32_t>(buf, at);
    if (ndim < 1 || ndim > 3) throw std::runtime_error("parameter blob: bad rank for " + name);
    nd::Shape shape;
    shape.ndim = int(ndim);
    for (uint32_t k = 0; k < ndim; ++k) shape.d[size_t(k)] = read_pod<uint32_t>(buf, at);
    auto& p = nd::add_param(params, name, shape);
    size_t bytes = p.value.size() * sizeof(float);
    if (at + bytes > buf.size()) throw std::runtime_error("parameter blob truncated");
    std::memcpy(p.value.data(), buf.data() + at, bytes);
    at += bytes;
  }
  if (at != buf.size()) throw std::runtime_error("parameter blob: trailing bytes");
  return params;
}

void save_checkpoint(const std::string& dir, const TrainResult& result, const TrainConfig& tc,
                     const HeteroGraph& graph, const std::string& profile) {
  ensure_dir(dir);
  save_params_blob(result.model.params, dir + "/params.bin");

  std::ostringstream hist;
  hist << "epoch,train_loss,val_acc,seconds\n";
  for (const EpochStat& e : result.history)
    hist << e.epoch << "," << e.train_loss << "," << e.val_acc << "," << e.seconds << "\n";
  write_text_file(dir + "/history.csv", hist.str());

  ordered_json manifest;
  manifest["format"] = "riskgraph-checkpoint-v1";
  manifest["variant"] = variant_name(result.model.cfg.variant);
  manifest["profile"] = profile;
  manifest["model_config"] = result.model.cfg.to_json();
  manifest["train_config"] = tc.to_json();
  manifest["param_count"] = result.model.param_count();
  manifest["params_sha256"] = sha256_file_hex(dir + "/params.bin");
  manifest["dataset_hash"] = graph.dataset_hash;
  manifest["graph_hash"] = graph.content_hash();
  manifest["prune_hash"] = graph.prune_hash;
  manifest["quantizers"] = graph.quantizers.to_json();
  manifest["best_epoch"] = result.best_epoch;
  manifest["best_val_acc"] = result.best_val_acc;
  manifest["epochs_run"] = result.stopped_epoch;
  manifest["class_weights"] = result.class_weights;
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
  ordered_json manifest = ordered_json::parse(read_text_file(dir + "/manifest.json"));
  if (manifest.at("format").get<std::string>() != "riskgraph-checkpoint-v1")
    throw std::runtime_error("not a checkpoint directory: " + dir);
  std::string want = manifest.at("params_sha256").get<std::string>();
  std::string got = sha256_file_hex(dir + "/params.bin");
  if (want != got)
    throw std::runtime_error("checkpoint parameter hash mismatch in " + dir + ": manifest " +
                             want + " vs file " + got);
  Checkpoint ck;
  ck.model.cfg = ModelConfig::from_json(manifest.at("model_config"));
  ck.model.params = load_params_blob(dir + "/params.bin");
  if (ck.model.param_count() != manifest.at("param_count").get<int64_t>())
    throw std::runtime_error("checkpoint parameter count mismatch in " + dir);
  ck.train_config = TrainConfig::from_json(manifest.at("train_config"));
  ck.quantizers = QuantizerSet::from_json(manifest.at("quantizers"));
  ck.dataset_hash = manifest.at("dataset_hash").get<std::string>();
  ck.graph_hash = manifest.at("graph_hash").get<std::string>();
  ck.prune_hash = manifest.at("prune_hash").get<std::string>();
  ck.profile = manifest.at("profile").get<std::string>();
  ck.best_epoch = manifest.at("best_epoch").get<int>();
  ck.best_val_acc = manifest.at("best_val_acc").get<double>();
  return ck;
}

}  // namespace riskgraph
