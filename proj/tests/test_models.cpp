#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "riskgraph/hetero_graph.hpp"
#include "riskgraph/models.hpp"
#include "riskgraph/synthgen.hpp"

using namespace riskgraph;

namespace {

std::vector<ReportRecord> dataset(int n = 300, uint64_t seed = 42) {
  DatasetParams p;
  p.n = n;
  p.seed = seed;
  return generate_dataset(p, GeneratorConfig::defaults());
}

struct Fixture {
  std::vector<ReportRecord> records;
  SplitInfo split;
  QuantizerSet quantizers;
  HeteroGraph graph;
};

Fixture make_fixture(int n = 300, uint64_t seed = 42) {
  Fixture f;
  f.records = dataset(n, seed);
  f.split = split_dataset(f.records, SplitSpec{});
  std::vector<size_t> idx;
  for (size_t i = 0; i < f.records.size(); ++i)
    if (f.split.part[i] == int8_t(SplitPart::kTrain)) idx.push_back(i);
  f.quantizers = fit_quantizers(f.records, idx);
  f.graph = build_graph(f.records, f.quantizers, f.split, RetainedSlots::all(), "fixture",
                        "original");
  return f;
}

std::vector<SampleNeighborhood> samples_of(const HeteroGraph& g, const std::vector<int64_t>& ids) {
  std::vector<SampleNeighborhood> out;
  for (int64_t i : ids) out.push_back(extract_neighborhood(g, i));
  return out;
}

ModelConfig small_config(Variant v) {
  ModelConfig mc;
  mc.variant = v;
  mc.d = 16;
  mc.rank = 4;
  mc.internal_heads = 4;
  return mc;
}

}  // namespace

TEST_CASE("parameter counts land in the documented bands") {
  ModelConfig mc;  // d=128, rank=8, 4 internal heads
  mc.variant = Variant::kInductive;
  CHECK(Model::init(mc, 1).param_count() == 175579);
  mc.variant = Variant::kAttention;
  CHECK(Model::init(mc, 1).param_count() == 372443);
  mc.variant = Variant::kMultihead;
  CHECK(Model::init(mc, 1).param_count() == 455771);
}

TEST_CASE("initialization is creation-order independent and seed-stable") {
  ModelConfig mc = small_config(Variant::kAttention);
  Model a = Model::init(mc, 9);
  Model b = Model::init(mc, 9);
  Model c = Model::init(mc, 10);
  bool same = true, diff = false;
  for (const auto& [name, p] : a.params) {
    same = same && p.value == b.params.at(name).value;
    diff = diff || p.value != c.params.at(name).value;
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("batch plans stage disjoint stars with private district triplets") {
  Fixture f = make_fixture(400, 3);
  auto samples = samples_of(f.graph, {0, 5, 9});
  BatchPlan plan = plan_batch(samples);
  CHECK(plan.B == 3);
  CHECK(plan.rows[size_t(NodeType::kReport)] == 3);
  CHECK(plan.rows[size_t(NodeType::kLocation)] == 9);  // 3 per star
  CHECK(plan.loc_attached.size() == 9);
  // Each star's own district row holds exactly that report; partners empty.
  for (int i = 0; i < 3; ++i) {
    CHECK(plan.loc_attached[size_t(3 * i)] == std::vector<int64_t>{i});
    CHECK(plan.loc_attached[size_t(3 * i + 1)].empty());
    CHECK(plan.loc_attached[size_t(3 * i + 2)].empty());
  }
  // Adjacency wires each private triplet into a clique.
  REQUIRE(plan.loc_adj_a.size() == 9);
  for (int i = 0; i < 3; ++i) {
    int64_t base = 3 * i;
    CHECK(plan.loc_adj_a[size_t(base)] == base + 1);
    CHECK(plan.loc_adj_b[size_t(base)] == base + 2);
    CHECK(plan.loc_adj_a[size_t(base + 1)] == base);
    CHECK(plan.loc_adj_b[size_t(base + 1)] == base + 2);
    CHECK(plan.loc_adj_a[size_t(base + 2)] == base);
    CHECK(plan.loc_adj_b[size_t(base + 2)] == base + 1);
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(plan.labels[size_t(i)] == samples[size_t(i)].label);
    CHECK(plan.scored[size_t(i)] == 1);
  }
  CHECK(plan.frozen_rows == std::array<int64_t, kNodeTypeCount>{});
}

TEST_CASE("logits are independent of batch composition") {
  Fixture f = make_fixture(400, 7);
  for (Variant v : {Variant::kInductive, Variant::kAttention, Variant::kMultihead}) {
    Model m = Model::init(small_config(v), 21);
    auto alone = predict_logits(m, samples_of(f.graph, {42}));
    auto batched = predict_logits(m, samples_of(f.graph, {17, 42, 99, 3}));
    auto reordered = predict_logits(m, samples_of(f.graph, {99, 42, 17}));
    for (int c = 0; c < 3; ++c) {
      CHECK(alone[0][size_t(c)] == batched[1][size_t(c)]);  // bitwise
      CHECK(alone[0][size_t(c)] == reordered[1][size_t(c)]);
    }
  }
}

TEST_CASE("attention heads honor their type masks") {
  Fixture f = make_fixture(400, 11);
  auto samples = samples_of(f.graph, {1, 2, 3, 4, 5, 6, 7, 8});
  BatchPlan plan = plan_batch(samples);

  for (Variant v : {Variant::kAttention, Variant::kMultihead}) {
    Model m = Model::init(small_config(v), 5);
    nd::Tape<float> tape;
    ForwardOutput fo = forward_model(tape, m, plan, false, nullptr);
    REQUIRE(fo.logits >= 0);
    CHECK(tape.shape(fo.logits) == nd::s2(plan.B, 3));

    int active_heads = 0;
    for (int h = 0; h < kHeadCount; ++h) {
      if (fo.head_alpha[size_t(h)] < 0) continue;
      ++active_heads;
      uint32_t mask = head_slot_mask(HeadKind(h));
      // Every internal head: unit sums over allowed slots, exact zeros outside.
      for (int internal : fo.internal_alpha[size_t(h)]) {
        const auto& alpha = tape.val(internal);
        for (int64_t b = 0; b < plan.B; ++b) {
          double sum = 0.0;
          for (int slot = 0; slot < kNeighborSlotCount; ++slot) {
            float a = alpha[size_t(b * kNeighborSlotCount + slot)];
            CHECK(a >= 0.0f);
            if (!((mask >> slot) & 1u))
              CHECK(a == 0.0f);
            else
              sum += a;
          }
          if (!fo.head_flagged[size_t(h)][size_t(b)]) CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        }
      }
    }
    CHECK(active_heads == (v == Variant::kAttention ? 1 : 3));
  }

  // The inductive variant exposes no attention.
  Model ind = Model::init(small_config(Variant::kInductive), 5);
  nd::Tape<float> tape;
  ForwardOutput fo = forward_model(tape, ind, plan, false, nullptr);
  for (int h = 0; h < kHeadCount; ++h) CHECK(fo.head_alpha[size_t(h)] == -1);
}

TEST_CASE("a fully masked head row yields zero context and a flag") {
  Fixture f = make_fixture(400, 13);
  SampleNeighborhood sn = encode_neighborhood(f.records[0], f.quantizers, 0u);
  // All sensors and context values pruned away: the sensor head sees nothing.
  BatchPlan plan = plan_batch({sn});
  Model m = Model::init(small_config(Variant::kMultihead), 7);
  nd::Tape<float> tape;
  ForwardOutput fo = forward_model(tape, m, plan, false, nullptr);
  int sensor_head = int(HeadKind::kSensorHead);
  REQUIRE(fo.head_alpha[size_t(sensor_head)] >= 0);
  CHECK(fo.head_flagged[size_t(sensor_head)][0] == 1);
  const auto& alpha = tape.val(fo.head_alpha[size_t(sensor_head)]);
  for (int slot = 0; slot < kNeighborSlotCount; ++slot) CHECK(alpha[size_t(slot)] == 0.0f);
  // Logits still finite.
  for (float v : tape.val(fo.logits)) CHECK(std::isfinite(v));
}

TEST_CASE("forward in train mode requires a dropout stream and no frozen rows") {
  Fixture f = make_fixture(400, 17);
  BatchPlan plan = plan_batch(samples_of(f.graph, {0, 1}));
  Model m = Model::init(small_config(Variant::kInductive), 1);
  nd::Tape<float> tape;
  CHECK_THROWS(forward_model(tape, m, plan, true, nullptr));

  BatchPlan frozen = plan;
  frozen.frozen_h0[size_t(NodeType::kReport)].assign(size_t(m.cfg.d), 0.0f);
  frozen.frozen_h1[size_t(NodeType::kReport)].assign(size_t(m.cfg.d), 0.0f);
  frozen.frozen_rows[size_t(NodeType::kReport)] = 1;
  Rng rng(1);
  nd::Tape<float> tape2;
  CHECK_THROWS(forward_model(tape2, m, frozen, true, &rng));
  nd::Tape<float> tape3;
  CHECK_NOTHROW(forward_model(tape3, m, frozen, false, nullptr));
}

TEST_CASE("training converges, early-stops, and is seed-reproducible") {
  Fixture f = make_fixture(400, 19);
  ModelConfig mc = small_config(Variant::kInductive);
  TrainConfig tc;
  tc.epochs = 12;
  tc.batch_size = 64;
  tc.seed = 3;

  TrainResult a = train_model(f.graph, mc, tc);
  TrainResult b = train_model(f.graph, mc, tc);
  REQUIRE(!a.history.empty());
  CHECK(a.history.size() == b.history.size());
  bool same_run = true;
  for (size_t e = 0; e < a.history.size(); ++e) {
    same_run = same_run && a.history[e].train_loss == b.history[e].train_loss &&
               a.history[e].val_acc == b.history[e].val_acc;
  }
  CHECK(same_run);
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
  CHECK(a.best_val_acc >= 1.0 / 3.0);  // val accuracy is a fraction; beats chance

  // Class weights are inverse-frequency, normalized over the labeled set.
  REQUIRE(a.class_weights.size() == 3);
  for (float w : a.class_weights) CHECK(w > 0.0f);

  // Patience: with zero epochs allowed after the best, training still returns
  // the best model.
  TrainConfig tiny = tc;
  tiny.epochs = 30;
  tiny.patience = 2;
  TrainResult c = train_model(f.graph, mc, tiny);
  CHECK(c.stopped_epoch <= 30);
  CHECK(c.stopped_epoch >= c.best_epoch);
}

TEST_CASE("predict agrees with predict_logits argmax") {
  Fixture f = make_fixture(400, 23);
  Model m = Model::init(small_config(Variant::kAttention), 11);
  std::vector<int64_t> ids = {0, 3, 7, 11, 50, 199};
  auto preds = predict(m, f.graph, ids, 4);
  auto logits = predict_logits(m, samples_of(f.graph, ids));
  REQUIRE(preds.size() == ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    int arg = 0;
    for (int c = 1; c < 3; ++c)
      if (logits[i][size_t(c)] > logits[i][size_t(arg)]) arg = c;
    CHECK(preds[i] == arg);
  }
}

TEST_CASE("checkpoints round-trip parameters bit-exactly") {
  Fixture f = make_fixture(400, 29);
  ModelConfig mc = small_config(Variant::kMultihead);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 64;
  TrainResult result = train_model(f.graph, mc, tc);

  std::string dir = "/tmp/riskgraph_ckpt_test";
  save_checkpoint(dir, result, tc, f.graph, "main");
  Checkpoint ckpt = load_checkpoint(dir);
  CHECK(ckpt.model.cfg.variant == Variant::kMultihead);
  CHECK(ckpt.model.cfg.d == mc.d);
  CHECK(ckpt.graph_hash == f.graph.content_hash());
  CHECK(ckpt.dataset_hash == f.graph.dataset_hash);
  CHECK(ckpt.profile == "main");
  CHECK(ckpt.best_epoch == result.best_epoch);
  CHECK(ckpt.quantizers.hash() == f.quantizers.hash());
  for (const auto& [name, p] : result.model.params)
    CHECK(ckpt.model.params.at(name).value == p.value);

  // Loaded model predicts identically.
  std::vector<int64_t> ids = {0, 10, 20};
  CHECK(predict(ckpt.model, f.graph, ids) == predict(result.model, f.graph, ids));
}

TEST_CASE("profiles set the documented hyperparameters") {
  ModelConfig mc;
  TrainConfig tc;
  apply_profile("main", mc, tc);
  CHECK(mc.d == 128);
  CHECK(tc.epochs == 10);
  apply_profile("pruning-bench", mc, tc);
  CHECK(mc.d == 256);
  CHECK(tc.epochs == 50);
  CHECK_THROWS(apply_profile("nonsense", mc, tc));
}
