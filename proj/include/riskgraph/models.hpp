#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskgraph/hetero_graph.hpp"
#include "riskgraph/ndiff.hpp"

namespace riskgraph {

// Three classifier variants share one relation-typed message-passing
// backbone (two layers, per-relation low-rank maps + a shared self map,
// LayerNorm, residual second layer):
//   inductive  - classify straight from the report embedding
//   attention  - one masked scaled-dot-product head over all neighbor types
//   multihead  - sensor/context/full heads fused through a small MLP
enum class Variant : int { kInductive = 0, kAttention, kMultihead };
const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

enum class HeadKind : int { kSensorHead = 0, kContextHead, kFullHead };
constexpr int kHeadCount = 3;
// Learned embedding width for the report-type value node (its raw feature is
// just the category index).
constexpr int kReportTypeEmbedDim = 8;
const char* head_name(HeadKind h);
// Slot-mask of the neighbor types a head may attend to.
uint32_t head_slot_mask(HeadKind h);

struct ModelConfig {
  Variant variant = Variant::kInductive;
  int d = 128;              // hidden width (all node types)
  int internal_heads = 4;   // parallel scaled-dot-product heads inside each attention head
  int rank = 8;             // low-rank width of per-relation maps
  double dropout = 0.3;

  ordered_json to_json() const;
  static ModelConfig from_json(const ordered_json& j);
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 256;
  double lr = 1e-3;
  int patience = 20;
  uint64_t seed = 1;

  ordered_json to_json() const;
  static TrainConfig from_json(const ordered_json& j);
};

// Named hyperparameter profiles: "main" (d=128, 10 epochs) and
// "pruning-bench" (d=256, 50 epochs).
void apply_profile(const std::string& profile, ModelConfig& mc, TrainConfig& tc);

// ---------------------------------------------------------------------------
// Batched subgraphs
// ---------------------------------------------------------------------------

// A staged forward instance. Training/eval plans hold one disjoint star per
// sample (own district triplet per star), so a row's result never depends on
// which other samples share the batch. Inference plans may merge several
// stars, share district rows, and append "frozen" rows: pre-computed
// layer-0/1 states of fixed anchor stars, staged as constants after each
// type's computed rows.
struct BatchPlan {
  int64_t B = 0;                                        // report rows (computed)
  std::array<std::vector<float>, kNodeTypeCount> feat;  // staged row-major features
  std::array<int64_t, kNodeTypeCount> rows{};           // computed rows per type
  // Per neighbor slot: row of that sample's neighbor in the slot type's
  // matrix (-1 when absent/pruned). Always a computed row.
  std::array<std::vector<int64_t>, kNeighborSlotCount> slot_row;
  // Per value type: owning report row for each staged computed row.
  std::array<std::vector<int64_t>, kNodeTypeCount> owner;
  std::vector<int64_t> report_type_index;               // [B] embedding lookups
  // District rows: attached report rows (full indexing: computed then frozen)
  // and the two same-region partner rows of each district row.
  std::vector<std::vector<int64_t>> loc_attached;
  std::vector<int64_t> loc_adj_a, loc_adj_b;
  std::vector<int> labels;                              // [B]; -1 = no loss contribution
  std::vector<uint8_t> scored;                          // [B]
  // Frozen blocks (eval only): projected layer-0 and layer-1 rows appended
  // after the computed rows of each type.
  std::array<std::vector<float>, kNodeTypeCount> frozen_h0, frozen_h1;
  std::array<int64_t, kNodeTypeCount> frozen_rows{};

  int64_t full_rows(NodeType t) const {
    return rows[size_t(t)] + frozen_rows[size_t(t)];
  }
};

// Training/eval plan: disjoint per-sample stars.
BatchPlan plan_batch(const std::vector<SampleNeighborhood>& samples);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace detail {
std::vector<std::string> relation_param_names();
}

template <class T>
struct ModelT {
  ModelConfig cfg;
  nd::ParamStore<T> params;

  static ModelT init(const ModelConfig& cfg, uint64_t seed);
  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& [name, p] : params) n += p.shape.numel();
    return n;
  }
};

using Model = ModelT<float>;

struct ForwardOutput {
  int logits = -1;  // tape id, [B x 3]
  // Mean (over internal heads) attention per active head, tape ids of
  // [B x 15]; -1 when the variant lacks that head.
  std::array<int, kHeadCount> head_alpha = {-1, -1, -1};
  // Every internal head's attention matrix (for contract checks).
  std::array<std::vector<int>, kHeadCount> internal_alpha;
  std::array<std::vector<uint8_t>, kHeadCount> head_allowed;  // [B*15] masks used
  std::array<std::vector<uint8_t>, kHeadCount> head_flagged;  // [B] all-masked rows
  // Tape ids of the computed embedding matrices per node type and layer
  // (-1 when the type is absent from the batch).
  std::array<int, kNodeTypeCount> h0{}, h1{}, h2{};
  // Per node type, the matrix a gradient-based explanation differentiates
  // against: layer-1 for the inductive variant (its logit is insensitive to
  // neighbor layer-2 states), layer-2 for the attention variants.
  std::array<int, kNodeTypeCount> grad_target{};
  int report_final = -1;  // tape id of the report representation fed downstream
};

// ---------------------------------------------------------------------------
// Forward pass (templated so gradient checks can run in 64-bit)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
class LeafCache {
 public:
  LeafCache(nd::Tape<T>& tape, const nd::ParamStore<T>& params)
      // leaf() binds gradient buffers; they are only written if backward() runs.
      : tape_(tape), params_(const_cast<nd::ParamStore<T>&>(params)) {}

  int operator()(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    auto pit = params_.find(name);
    if (pit == params_.end()) throw std::invalid_argument("missing parameter: " + name);
    int id = tape_.leaf(pit->second);
    ids_.emplace(name, id);
    return id;
  }

 private:
  nd::Tape<T>& tape_;
  nd::ParamStore<T>& params_;
  std::map<std::string, int> ids_;
};

template <class T>
std::vector<T> widen(const std::vector<float>& v) {
  return std::vector<T>(v.begin(), v.end());
}

}  // namespace detail

template <class T>
ModelT<T> ModelT<T>::init(const ModelConfig& cfg, uint64_t seed) {
  if (cfg.d <= 0 || cfg.rank <= 0 || cfg.internal_heads <= 0 || cfg.d % cfg.internal_heads != 0)
    throw std::invalid_argument("model init: bad dimensions");
  ModelT<T> m;
  m.cfg = cfg;
  auto& P = m.params;
  const int d = cfg.d;

  nd::init_normal(nd::add_param(P, "emb/report_type", nd::s2(kCategoryCount, kReportTypeEmbedDim)),
                  seed, 0.02);

  for (int ti = 0; ti < kNodeTypeCount; ++ti) {
    NodeType t = NodeType(ti);
    int in_dim = t == NodeType::kReportType ? kReportTypeEmbedDim : node_type_feature_dim(t);
    std::string pre = std::string("in/") + node_type_name(t) + "/";
    nd::init_xavier(nd::add_param(P, pre + "W", nd::s2(in_dim, d)), seed, in_dim, d);
    nd::add_param(P, pre + "b", nd::s1(d));
  }

  for (int layer = 1; layer <= 2; ++layer) {
    std::string pre = "bb/L" + std::to_string(layer) + "/";
    nd::init_xavier(nd::add_param(P, pre + "self/W", nd::s2(d, d)), seed, d, d);
    nd::add_param(P, pre + "self/b", nd::s1(d));
    for (const std::string& rel : detail::relation_param_names()) {
      nd::init_xavier(nd::add_param(P, pre + "rel/" + rel + "/A", nd::s2(d, cfg.rank)), seed, d,
                      cfg.rank);
      nd::init_xavier(nd::add_param(P, pre + "rel/" + rel + "/B", nd::s2(cfg.rank, d)), seed,
                      cfg.rank, d);
    }
    nd::init_const(nd::add_param(P, pre + "ln/gamma", nd::s1(d)), T(1));
    nd::add_param(P, pre + "ln/beta", nd::s1(d));
  }

  auto add_head = [&](const std::string& head, int dh) {
    for (int i = 0; i < cfg.internal_heads; ++i) {
      std::string pre = "attn/" + head + "/h" + std::to_string(i) + "/";
      for (const char* w : {"WQ", "WK", "WV"})
        nd::init_xavier(nd::add_param(P, pre + w, nd::s2(d, dh)), seed, d, dh);
    }
    nd::init_const(nd::add_param(P, "attn/" + head + "/ln/gamma", nd::s1(d)), T(1));
    nd::add_param(P, "attn/" + head + "/ln/beta", nd::s1(d));
  };
  if (cfg.variant == Variant::kAttention) {
    add_head("full", d);
  } else if (cfg.variant == Variant::kMultihead) {
    for (HeadKind h : {HeadKind::kSensorHead, HeadKind::kContextHead, HeadKind::kFullHead})
      add_head(head_name(h), d / cfg.internal_heads);
    nd::init_xavier(nd::add_param(P, "fuse/W1", nd::s2(3 * d, 2 * d)), seed, 3 * d, 2 * d);
    nd::add_param(P, "fuse/b1", nd::s1(2 * d));
    nd::init_const(nd::add_param(P, "fuse/ln/gamma", nd::s1(2 * d)), T(1));
    nd::add_param(P, "fuse/ln/beta", nd::s1(2 * d));
    nd::init_xavier(nd::add_param(P, "fuse/W2", nd::s2(2 * d, d)), seed, 2 * d, d);
    nd::add_param(P, "fuse/b2", nd::s1(d));
  }

  nd::init_xavier(nd::add_param(P, "clf/W", nd::s2(d, kRiskCount)), seed, d, kRiskCount);
  nd::add_param(P, "clf/b", nd::s1(kRiskCount));
  return m;
}

// Runs the variant forward pass on a fresh tape. dropout_rng must be non-null
// when train_mode is true; frozen rows are an eval-only device.
template <class T>
ForwardOutput forward_model(nd::Tape<T>& tape, const ModelT<T>& m, const BatchPlan& plan,
                            bool train_mode, Rng* dropout_rng) {
  if (train_mode && dropout_rng == nullptr)
    throw std::invalid_argument("forward_model: training mode needs a dropout rng");
  const ModelConfig& cfg = m.cfg;
  const int d = cfg.d;
  const int64_t B = plan.B;
  if (B <= 0) throw std::invalid_argument("forward_model: empty plan");
  detail::LeafCache<T> L(tape, m.params);

  // Stage raw inputs.
  std::array<int, kNodeTypeCount> X;
  X.fill(-1);
  for (int ti = 0; ti < kNodeTypeCount; ++ti) {
    NodeType t = NodeType(ti);
    if (t == NodeType::kReportType || plan.rows[size_t(ti)] == 0) continue;
    X[size_t(ti)] = tape.constant(nd::s2(plan.rows[size_t(ti)], node_type_feature_dim(t)),
                                  detail::widen<T>(plan.feat[size_t(ti)]));
  }
  X[size_t(NodeType::kReportType)] =
      nd::gather_rows(tape, L("emb/report_type"), plan.report_type_index);

  // Input projections to the shared width.
  std::array<int, kNodeTypeCount> h0;
  h0.fill(-1);
  for (int ti = 0; ti < kNodeTypeCount; ++ti) {
    if (X[size_t(ti)] < 0) continue;
    std::string pre = std::string("in/") + node_type_name(NodeType(ti)) + "/";
    h0[size_t(ti)] =
        nd::add_bias(tape, nd::matmul(tape, X[size_t(ti)], L(pre + "W")), L(pre + "b"));
  }

  // Frozen rows append to the computed rows of their type.
  bool any_frozen = false;
  for (int ti = 0; ti < kNodeTypeCount; ++ti) any_frozen = any_frozen || plan.frozen_rows[size_t(ti)] > 0;
  if (any_frozen && train_mode)
    throw std::invalid_argument("forward_model: frozen rows are eval-only");
  auto with_frozen = [&](const std::array<int, kNodeTypeCount>& h,
                         const std::array<std::vector<float>, kNodeTypeCount>& blocks) {
    std::array<int, kNodeTypeCount> full = h;
    for (int ti = 0; ti < kNodeTypeCount; ++ti) {
      int64_t fr = plan.frozen_rows[size_t(ti)];
      if (fr == 0) continue;
      int block = tape.constant(nd::s2(fr, d), detail::widen<T>(blocks[size_t(ti)]));
      full[size_t(ti)] =
          h[size_t(ti)] < 0 ? block : nd::concat_rows(tape, {h[size_t(ti)], block});
    }
    return full;
  };

  // Two message-passing layers (simultaneous update of every type). Inputs to
  // relation messages come from the full (computed + frozen) matrices.
  auto relation_msg = [&](const std::string& layer_pre, const std::string& rel, int gathered) {
    int a = nd::matmul(tape, gathered, L(layer_pre + "rel/" + rel + "/A"));
    return nd::matmul(tape, a, L(layer_pre + "rel/" + rel + "/B"));
  };
  auto backbone_layer = [&](int layer, const std::array<int, kNodeTypeCount>& hin,
                            const std::array<int, kNodeTypeCount>& hin_full) {
    std::string pre = "bb/L" + std::to_string(layer) + "/";
    int Wself = L(pre + "self/W"), bself = L(pre + "self/b");
    std::array<int, kNodeTypeCount> out;
    out.fill(-1);
    for (int ti = 0; ti < kNodeTypeCount; ++ti) {
      if (hin[size_t(ti)] < 0) continue;
      NodeType t = NodeType(ti);
      int msg = nd::add_bias(tape, nd::matmul(tape, hin[size_t(ti)], Wself), bself);
      if (t == NodeType::kReport) {
        for (int s = 0; s < kNeighborSlotCount; ++s) {
          NodeType nt = neighbor_slot_type(s);
          if (hin_full[size_t(nt)] < 0) continue;
          int g = nd::gather_rows(tape, hin_full[size_t(nt)], plan.slot_row[size_t(s)]);
          msg =
              nd::add(tape, msg, relation_msg(pre, std::string("rev_") + node_type_name(nt), g));
        }
      } else if (t == NodeType::kLocation) {
        int g = nd::segment_mean_rows(tape, hin_full[size_t(NodeType::kReport)],
                                      plan.loc_attached);
        msg = nd::add(tape, msg, relation_msg(pre, "has_location", g));
        int ga = nd::gather_rows(tape, hin_full[size_t(ti)], plan.loc_adj_a);
        int gb = nd::gather_rows(tape, hin_full[size_t(ti)], plan.loc_adj_b);
        int mean_adj = nd::scale(tape, nd::add(tape, ga, gb), 0.5);
        msg = nd::add(tape, msg, relation_msg(pre, "loc_adjacent", mean_adj));
      } else {
        int g =
            nd::gather_rows(tape, hin_full[size_t(NodeType::kReport)], plan.owner[size_t(ti)]);
        msg =
            nd::add(tape, msg, relation_msg(pre, std::string("has_") + node_type_name(t), g));
      }
      int z = nd::relu(tape, msg);
      if (train_mode) z = nd::dropout(tape, z, cfg.dropout, *dropout_rng);
      int pre_ln = layer == 2 ? nd::add(tape, hin[size_t(ti)], z) : z;
      out[size_t(ti)] = nd::layer_norm(tape, pre_ln, L(pre + "ln/gamma"), L(pre + "ln/beta"));
    }
    return out;
  };

  std::array<int, kNodeTypeCount> h0_full = with_frozen(h0, plan.frozen_h0);
  std::array<int, kNodeTypeCount> h1 = backbone_layer(1, h0, h0_full);
  std::array<int, kNodeTypeCount> h1_full = with_frozen(h1, plan.frozen_h1);
  std::array<int, kNodeTypeCount> h2 = backbone_layer(2, h1, h1_full);

  ForwardOutput out;
  out.h0 = h0;
  out.h1 = h1;
  out.h2 = h2;
  out.grad_target = cfg.variant == Variant::kInductive ? h1 : h2;
  int h2_report = h2[size_t(NodeType::kReport)];

  int rep = h2_report;
  if (cfg.variant != Variant::kInductive) {
    // Stack every neighbor type's final embedding and index it per (sample, slot).
    std::array<int64_t, kNodeTypeCount> off;
    off.fill(-1);
    std::vector<int> parts;
    int64_t total = 0;
    for (int s = 0; s < kNeighborSlotCount; ++s) {
      NodeType t = neighbor_slot_type(s);
      if (h2[size_t(t)] < 0) continue;
      off[size_t(t)] = total;
      parts.push_back(h2[size_t(t)]);
      total += plan.rows[size_t(t)];
    }
    int NM = nd::concat_rows(tape, parts);
    std::vector<int64_t> flat(size_t(B) * kNeighborSlotCount, -1);
    for (int64_t i = 0; i < B; ++i)
      for (int s = 0; s < kNeighborSlotCount; ++s) {
        int64_t r = plan.slot_row[size_t(s)][size_t(i)];
        NodeType t = neighbor_slot_type(s);
        if (r >= 0 && off[size_t(t)] >= 0)
          flat[size_t(i) * kNeighborSlotCount + size_t(s)] = off[size_t(t)] + r;
      }
    int NB = nd::gather_rows(tape, NM, flat);  // [B*15, d]

    // Query: report embedding conditioned on its report-type embedding.
    int q = nd::add(tape, h2_report, h0[size_t(NodeType::kReportType)]);
    double score_scale = 1.0 / std::sqrt(double(d) / double(cfg.internal_heads));
    int dh = cfg.variant == Variant::kAttention ? d : d / cfg.internal_heads;

    auto run_head = [&](HeadKind hk) {
      uint32_t smask = head_slot_mask(hk);
      auto& allowed = out.head_allowed[size_t(hk)];
      auto& flagged = out.head_flagged[size_t(hk)];
      allowed.assign(size_t(B) * kNeighborSlotCount, 0);
      flagged.assign(size_t(B), 0);
      for (int64_t i = 0; i < B; ++i) {
        bool any = false;
        for (int s = 0; s < kNeighborSlotCount; ++s) {
          bool ok = ((smask >> s) & 1u) != 0 &&
                    flat[size_t(i) * kNeighborSlotCount + size_t(s)] >= 0;
          allowed[size_t(i) * kNeighborSlotCount + size_t(s)] = ok ? 1 : 0;
          any = any || ok;
        }
        flagged[size_t(i)] = any ? 0 : 1;  // all-masked row: context stays zero
      }
      std::string hp = std::string("attn/") + head_name(hk) + "/";
      int alpha_sum = -1, ctx_sum = -1;
      std::vector<int> ctx_parts;
      for (int ih = 0; ih < cfg.internal_heads; ++ih) {
        std::string ip = hp + "h" + std::to_string(ih) + "/";
        int Q = nd::matmul(tape, q, L(ip + "WQ"));   // [B, dh]
        int K = nd::matmul(tape, NB, L(ip + "WK"));  // [B*15, dh]
        int V = nd::matmul(tape, NB, L(ip + "WV"));
        int scores = nd::bmm(tape, nd::reshape(tape, K, nd::s3(B, kNeighborSlotCount, dh)),
                             nd::reshape(tape, Q, nd::s3(B, dh, 1)));
        scores = nd::scale(tape, nd::reshape(tape, scores, nd::s2(B, kNeighborSlotCount)),
                           score_scale);
        int alpha = nd::softmax_masked(tape, scores, allowed);
        out.internal_alpha[size_t(hk)].push_back(alpha);
        int ctx = nd::bmm(tape, nd::reshape(tape, alpha, nd::s3(B, 1, kNeighborSlotCount)),
                          nd::reshape(tape, V, nd::s3(B, kNeighborSlotCount, dh)));
        ctx = nd::reshape(tape, ctx, nd::s2(B, dh));
        alpha_sum = alpha_sum < 0 ? alpha : nd::add(tape, alpha_sum, alpha);
        if (cfg.variant == Variant::kAttention)
          ctx_sum = ctx_sum < 0 ? ctx : nd::add(tape, ctx_sum, ctx);
        else
          ctx_parts.push_back(ctx);
      }
      out.head_alpha[size_t(hk)] = nd::scale(tape, alpha_sum, 1.0 / cfg.internal_heads);
      int ctx_comb = cfg.variant == Variant::kAttention
                         ? nd::scale(tape, ctx_sum, 1.0 / cfg.internal_heads)
                         : nd::concat_cols(tape, ctx_parts);
      return nd::layer_norm(tape, nd::add(tape, h2_report, ctx_comb), L(hp + "ln/gamma"),
                            L(hp + "ln/beta"));
    };

    if (cfg.variant == Variant::kAttention) {
      rep = run_head(HeadKind::kFullHead);
    } else {
      std::vector<int> outs;
      for (HeadKind hk : {HeadKind::kSensorHead, HeadKind::kContextHead, HeadKind::kFullHead})
        outs.push_back(run_head(hk));
      int cat = nd::concat_cols(tape, outs);
      int z1 =
          nd::relu(tape, nd::add_bias(tape, nd::matmul(tape, cat, L("fuse/W1")), L("fuse/b1")));
      int n1 = nd::layer_norm(tape, z1, L("fuse/ln/gamma"), L("fuse/ln/beta"));
      rep = nd::add_bias(tape, nd::matmul(tape, n1, L("fuse/W2")), L("fuse/b2"));
    }
  }

  out.report_final = rep;
  out.logits = nd::add_bias(tape, nd::matmul(tape, rep, L("clf/W")), L("clf/b"));
  return out;
}

// ---------------------------------------------------------------------------
// Optimization / training driver (float instantiation)
// ---------------------------------------------------------------------------

// One optimization step over the plan's labeled rows (label >= 0). Returns
// the loss, or std::nullopt when the batch had no labeled rows (in which case
// parameters are untouched).
std::optional<double> train_step(Model& m, const BatchPlan& plan,
                                 const std::vector<float>& class_weights,
                                 nd::AdamState<float>& adam, Rng& dropout_rng);

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model model;  // parameters of the best validation epoch
  std::vector<EpochStat> history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  int stopped_epoch = 0;  // last epoch actually run
  std::vector<float> class_weights;
};

// Trains on the graph's labeled training rows with inverse-frequency class
// weights, evaluating accuracy on the validation split each epoch; early
// stops after `patience` epochs without a new best.
TrainResult train_model(const HeteroGraph& g, const ModelConfig& mc, const TrainConfig& tc);

// Batched evaluation (no dropout). Returns argmax predictions.
std::vector<int> predict(const Model& m, const HeteroGraph& g, const std::vector<int64_t>& ids,
                         int batch_size = 256);
std::vector<std::array<float, 3>> predict_logits(const Model& m,
                                                 const std::vector<SampleNeighborhood>& samples);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Directory layout: params.bin (named-tensor blob), manifest.json (variant,
// configs, provenance hashes, quantizers, metrics), history.csv.
void save_checkpoint(const std::string& dir, const TrainResult& result, const TrainConfig& tc,
                     const HeteroGraph& graph, const std::string& profile);

struct Checkpoint {
  Model model;
  TrainConfig train_config;
  QuantizerSet quantizers;
  std::string graph_hash;
  std::string dataset_hash;
  std::string prune_hash;
  std::string profile;
  int best_epoch = 0;
  double best_val_acc = 0.0;
};

Checkpoint load_checkpoint(const std::string& dir);

void save_params_blob(const nd::ParamStore<float>& params, const std::string& path);
nd::ParamStore<float> load_params_blob(const std::string& path);

}  // namespace riskgraph
