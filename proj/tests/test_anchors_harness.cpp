#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "riskgraph/anchors.hpp"
#include "riskgraph/fsutil.hpp"
#include "riskgraph/harness.hpp"
#include "riskgraph/synthgen.hpp"

using namespace riskgraph;

namespace {

struct Fixture {
  std::vector<ReportRecord> records;
  SplitInfo split;
  QuantizerSet quantizers;
  HeteroGraph graph;
};

Fixture make_fixture(int n = 400, uint64_t seed = 42) {
  Fixture f;
  DatasetParams p;
  p.n = n;
  p.seed = seed;
  f.records = generate_dataset(p, GeneratorConfig::defaults());
  f.split = split_dataset(f.records, SplitSpec{});
  std::vector<size_t> idx;
  for (size_t i = 0; i < f.records.size(); ++i)
    if (f.split.part[i] == int8_t(SplitPart::kTrain)) idx.push_back(i);
  f.quantizers = fit_quantizers(f.records, idx);
  f.graph =
      build_graph(f.records, f.quantizers, f.split, RetainedSlots::all(), "fixture", "original");
  return f;
}

std::vector<ReportRecord> train_records(const Fixture& f) {
  std::vector<ReportRecord> out;
  for (size_t i = 0; i < f.records.size(); ++i)
    if (f.split.part[i] == int8_t(SplitPart::kTrain)) out.push_back(f.records[i]);
  return out;
}

ModelConfig small_config(Variant v) {
  ModelConfig mc;
  mc.variant = v;
  mc.d = 16;
  mc.rank = 4;
  return mc;
}

// Hand-built record with every sensor at its physical midpoint.
ReportRecord plain_record(int64_t id, Category c, double rainfall) {
  ReportRecord r;
  r.id = id;
  r.timestamp = minutes_from_civil(2024, 7, 15, 12, 0);
  r.category = c;
  r.risk = Risk::kLow;
  r.district = 0;
  for (Sensor s : all_sensors()) {
    const SensorInfo& info = sensor_info(s);
    r.sensors[size_t(s)] = 0.5 * (info.min + info.max);
  }
  r.sensors[size_t(Sensor::kRainfall)] = rainfall;
  return r;
}

double mid(Sensor s) {
  const SensorInfo& info = sensor_info(s);
  return 0.5 * (info.min + info.max);
}

std::string run_dir(const std::string& leaf) {
  std::string base = "/tmp/riskgraph_harness_tests";
  ensure_dir(base);
  return base + "/" + leaf;
}

}  // namespace

TEST_CASE("median anchor is the record nearest the per-sensor median") {
  // Odd count: the rainfall median element itself wins.
  std::vector<ReportRecord> odd = {plain_record(0, Category::kFineDust, 1.0),
                                   plain_record(1, Category::kFineDust, 5.0),
                                   plain_record(2, Category::kFineDust, 9.0)};
  ReportRecord got = build_median_anchor(odd, Category::kFineDust);
  CHECK(got.id == 1);
  CHECK(got.sensors[size_t(Sensor::kRainfall)] == 5.0);

  // Exact distance tie (dyadic rainfall values): the smaller id wins.
  REQUIRE(sensor_info(Sensor::kRainfall).min == 0.0);
  double half = 0.5 * sensor_info(Sensor::kRainfall).max;
  std::vector<ReportRecord> tie = {plain_record(3, Category::kFineDust, half),
                                   plain_record(7, Category::kFineDust, 0.0)};
  CHECK(build_median_anchor(tie, Category::kFineDust).id == 3);

  // Other categories in the pool are invisible.
  std::vector<ReportRecord> mixed = odd;
  mixed.push_back(plain_record(9, Category::kHeatWave, 100.0));
  CHECK(build_median_anchor(mixed, Category::kFineDust).id == 1);
  CHECK(build_median_anchor(mixed, Category::kHeatWave).id == 9);
  CHECK_THROWS_AS(build_median_anchor(odd, Category::kColdWave), std::invalid_argument);

  // A duplicated pool has the same medoid values.
  std::vector<ReportRecord> doubled = odd;
  for (ReportRecord r : odd) {
    r.id += 1000;
    doubled.push_back(r);
  }
  CHECK(build_median_anchor(doubled, Category::kFineDust).sensors ==
        build_median_anchor(odd, Category::kFineDust).sensors);
}

TEST_CASE("coverage anchors run farthest-point sampling from the medoid") {
  // Rainfall at 0..8: medoid is 4; the farthest-point ties resolve to the
  // ascending scan's first candidate.
  std::vector<ReportRecord> line;
  for (int i = 0; i < 9; ++i) line.push_back(plain_record(i, Category::kFineDust, double(i)));

  auto [k1, short1] = build_coverage_anchors(line, Category::kFineDust, 1);
  REQUIRE(k1.size() == 1);
  CHECK(k1[0].id == 4);
  CHECK_FALSE(short1);

  auto [k3, short3] = build_coverage_anchors(line, Category::kFineDust, 3);
  REQUIRE(k3.size() == 3);
  CHECK(k3[0].id == 4);
  CHECK(k3[1].id == 0);  // distance ties with 8, smaller id first
  CHECK(k3[2].id == 8);
  CHECK_FALSE(short3);

  // Zero-distance duplicates are never picked; exhausting distinct points
  // flags a shortfall.
  std::vector<ReportRecord> with_dup = line;
  with_dup.push_back(plain_record(99, Category::kFineDust, 4.0));  // clone of id 4
  auto [all_distinct, short_all] = build_coverage_anchors(with_dup, Category::kFineDust, 20);
  CHECK(all_distinct.size() == 9);
  CHECK(short_all);
  for (const ReportRecord& r : all_distinct) CHECK(r.id != 99);

  std::vector<ReportRecord> identical(5, plain_record(0, Category::kFineDust, 2.0));
  for (int i = 0; i < 5; ++i) identical[size_t(i)].id = i;
  auto [collapsed, short_c] = build_coverage_anchors(identical, Category::kFineDust, 5);
  CHECK(collapsed.size() == 1);
  CHECK(short_c);

  CHECK_THROWS_AS(build_coverage_anchors(line, Category::kFineDust, 0), std::invalid_argument);
}

TEST_CASE("synthetic prototype captures moments; degenerate fits collapse to constants") {
  std::vector<ReportRecord> same(4, plain_record(0, Category::kFineDust, 30.0));
  for (int i = 0; i < 4; ++i) same[size_t(i)].id = i;
  SyntheticPrototype proto = fit_synthetic_prototype(same, Category::kFineDust);
  CHECK(proto.n == 4);
  for (Sensor s : all_sensors()) {
    CHECK(proto.stddev[size_t(s)] == 0.0);
    CHECK(proto.mean[size_t(s)] ==
          (s == Sensor::kRainfall ? 30.0 : mid(s)));
  }

  Rng rng(11);
  for (int i = 0; i < 5; ++i) {
    ReportRecord a = build_synthetic_anchor(proto, Category::kFineDust, rng, 5000 + i);
    CHECK(a.id == 5000 + i);
    CHECK(a.category == Category::kFineDust);
    CHECK(a.district == 0);                  // single observed district
    CHECK(a.timestamp == same[0].timestamp);  // single-timestamp pool
    CHECK(a.risk == Risk::kLow);
    for (Sensor s : all_sensors())
      CHECK(a.sensors[size_t(s)] == doctest::Approx(proto.mean[size_t(s)]).epsilon(1e-12));
    CHECK(record_structural_error(a).empty());
  }

  CHECK_THROWS_AS(fit_synthetic_prototype(same, Category::kColdWave), std::invalid_argument);
  SyntheticPrototype unfitted;
  CHECK_THROWS_AS(build_synthetic_anchor(unfitted, Category::kFineDust, rng, 1),
                  std::invalid_argument);
}

TEST_CASE("synthetic anchors reproduce the fitted sensor means") {
  Fixture f = make_fixture(600, 7);
  std::vector<ReportRecord> train = train_records(f);

  // Most-populated category gives the tightest prototype.
  std::array<int, kCategoryCount> counts{};
  for (const ReportRecord& r : train) counts[size_t(r.category)]++;
  Category c = Category(std::max_element(counts.begin(), counts.end()) - counts.begin());
  SyntheticPrototype proto = fit_synthetic_prototype(train, c);

  // Independent moment check of the fit itself.
  double sum = 0.0;
  int64_t n = 0;
  for (const ReportRecord& r : train)
    if (r.category == c) {
      sum += r.sensors[size_t(Sensor::kHumidity)];
      ++n;
    }
  CHECK(proto.n == n);
  CHECK(proto.mean[size_t(Sensor::kHumidity)] == doctest::Approx(sum / double(n)).epsilon(1e-9));

  const int64_t N = 1000;
  Rng rng(23);
  std::array<double, kSensorCount> acc{};
  for (int64_t i = 0; i < N; ++i) {
    ReportRecord a = build_synthetic_anchor(proto, c, rng, 10000 + i);
    CHECK(record_structural_error(a).empty());
    for (Sensor s : all_sensors()) acc[size_t(s)] += a.sensors[size_t(s)];
  }
  for (Sensor s : all_sensors()) {
    const SensorInfo& info = sensor_info(s);
    double m = proto.mean[size_t(s)], sd = proto.stddev[size_t(s)];
    // Only test sensors whose Gaussian barely touches the clamp bounds.
    if (sd <= 0.0 || m - 3 * sd < info.min || m + 3 * sd > info.max) continue;
    double se = sd / std::sqrt(double(N));
    CHECK(std::abs(acc[size_t(s)] / double(N) - m) < 3.0 * se + 1e-9);
  }
}

TEST_CASE("anchor sets cover train categories and round-trip through disk") {
  Fixture f = make_fixture(400);
  std::vector<ReportRecord> train = train_records(f);
  std::set<int> train_cats;
  for (const ReportRecord& r : train) train_cats.insert(int(r.category));

  for (AnchorStrategy s : {AnchorStrategy::kSingleNode, AnchorStrategy::kMedian,
                           AnchorStrategy::kCoverage, AnchorStrategy::kSynthetic}) {
    AnchorSet a = build_anchor_set(f.records, f.split, s, f.quantizers);
    CHECK(a.strategy == s);
    CHECK(a.quantizer_hash == f.quantizers.hash());
    CHECK_FALSE(a.train_hash.empty());
    for (int c = 0; c < kCategoryCount; ++c) {
      bool in_train = train_cats.count(c) > 0;
      CHECK(a.category_present[size_t(c)] == (in_train ? 1 : 0));
      CHECK(a.covers(Category(c)) ==
            (s == AnchorStrategy::kSingleNode ? true : in_train));
      if (!in_train) continue;
      if (s == AnchorStrategy::kMedian) CHECK(a.anchors[size_t(c)].size() == 1);
      if (s == AnchorStrategy::kCoverage) {
        CHECK(a.anchors[size_t(c)].size() >= 1);
        CHECK(a.anchors[size_t(c)].size() <= 5);
        if (!a.shortfall[size_t(c)]) CHECK(a.anchors[size_t(c)].size() == 5);
      }
      if (s == AnchorStrategy::kSingleNode) CHECK(a.anchors[size_t(c)].empty());
      CHECK(a.prototypes[size_t(c)].has_value() == (s == AnchorStrategy::kSynthetic));
    }

    std::string path = run_dir(std::string("anchors_") + anchor_strategy_name(s) + ".json");
    save_anchor_set(a, path);
    AnchorSet back = load_anchor_set(path);
    CHECK(back.to_json().dump() == a.to_json().dump());
    std::string again = path + ".resaved";
    save_anchor_set(back, again);
    CHECK(read_text_file(again) == read_text_file(path));
  }

  CHECK(anchor_strategy_from_name("coverage") == AnchorStrategy::kCoverage);
  CHECK_THROWS_AS(anchor_strategy_from_name("nearest"), std::invalid_argument);
}

TEST_CASE("frozen anchor caches reproduce merged-plan logits") {
  Fixture f = make_fixture(400);
  Model m = Model::init(small_config(Variant::kAttention), 5);

  std::vector<const ReportRecord*> test;
  for (size_t i = 0; i < f.records.size(); ++i)
    if (f.split.part[i] == int8_t(SplitPart::kTest)) test.push_back(&f.records[i]);
  REQUIRE(test.size() >= 8);

  for (AnchorStrategy s : {AnchorStrategy::kMedian, AnchorStrategy::kCoverage}) {
    AnchorSet a = build_anchor_set(f.records, f.split, s, f.quantizers);
    InferenceEngine eng = make_engine(m, f.quantizers, a);
    for (size_t i = 0; i < 8; ++i) {
      const ReportRecord& r = *test[i];
      if (!a.covers(r.category)) continue;

      // Reference: one merged plan over the query star plus anchor stars.
      InferenceGraph ig = assemble_inference_graph(r, a, f.quantizers);
      nd::Tape<float> tape;
      ForwardOutput fo = forward_model(tape, m, ig.plan, false, nullptr);
      const std::vector<float>& lv = tape.val(fo.logits);
      std::array<double, kRiskCount> ref{};
      double mx = -1e30, z = 0.0;
      for (int c = 0; c < kRiskCount; ++c) mx = std::max(mx, double(lv[size_t(c)]));
      for (int c = 0; c < kRiskCount; ++c) {
        ref[size_t(c)] = std::exp(double(lv[size_t(c)]) - mx);
        z += ref[size_t(c)];
      }
      for (double& p : ref) p /= z;

      ScoreResult sr = score_report(eng, r);
      CHECK(sr.used_frozen_anchors);
      CHECK(sr.report_nodes == int64_t(ig.stars.size()));
      for (int c = 0; c < kRiskCount; ++c)
        CHECK(std::abs(sr.probs[size_t(c)] - ref[size_t(c)]) < 1e-6);
    }
  }
}

TEST_CASE("inference graph shapes per strategy") {
  Fixture f = make_fixture(400);
  Model m = Model::init(small_config(Variant::kAttention), 5);
  const ReportRecord& r = f.records[0];

  AnchorSet single = build_anchor_set(f.records, f.split, AnchorStrategy::kSingleNode,
                                      f.quantizers);
  InferenceGraph ig1 = assemble_inference_graph(r, single, f.quantizers);
  CHECK(ig1.report_nodes() == 1);
  CHECK(ig1.value_nodes() == 14);  // all slots except the shared district rows
  CHECK(ig1.district_nodes() == 3);
  CHECK(ig1.scored_index() == 0);
  CHECK(ig1.plan.scored[0]);

  AnchorSet cov = build_anchor_set(f.records, f.split, AnchorStrategy::kCoverage, f.quantizers);
  if (cov.covers(r.category) && !cov.shortfall[size_t(r.category)]) {
    InferenceGraph ig5 = assemble_inference_graph(r, cov, f.quantizers);
    CHECK(ig5.report_nodes() == 6);
    CHECK(ig5.value_nodes() == 6 * 14);
    CHECK(ig5.district_nodes() % 3 == 0);
    CHECK(ig5.district_nodes() >= 3);
    CHECK(ig5.district_nodes() <= kDistrictCount);
    CHECK(ig5.scored_index() == 0);
    for (int64_t i = 1; i < ig5.plan.B; ++i) CHECK_FALSE(ig5.plan.scored[size_t(i)]);
  }

  AnchorSet synth = build_anchor_set(f.records, f.split, AnchorStrategy::kSynthetic,
                                     f.quantizers);
  InferenceEngine eng = make_engine(m, f.quantizers, synth);
  ScoreResult sr = score_report(eng, r);
  CHECK_FALSE(sr.used_frozen_anchors);
  CHECK(sr.report_nodes == 6);  // query + 5 per-request synthetic anchors
  CHECK(sr.latency_ms > 0.0);
  double psum = sr.probs[0] + sr.probs[1] + sr.probs[2];
  CHECK(psum == doctest::Approx(1.0).epsilon(1e-6));

  // Synthetic scoring without the engine's rng plumbing is rejected.
  CHECK_THROWS_AS(assemble_inference_graph(r, synth, f.quantizers), std::invalid_argument);
}

TEST_CASE("attention explanations stay forward-only; gradient ones do not") {
  Fixture f = make_fixture(400);
  AnchorSet single = build_anchor_set(f.records, f.split, AnchorStrategy::kSingleNode,
                                      f.quantizers);
  const ReportRecord& r = f.records[1];

  Model att = Model::init(small_config(Variant::kAttention), 5);
  InferenceEngine eng_att = make_engine(att, f.quantizers, single);
  int64_t before = nd::backward_invocations();
  InferResult res = infer_report(eng_att, r);
  CHECK(nd::backward_invocations() == before);
  CHECK(res.importance.method == "attention");
  CHECK(res.importance.sample_id == r.id);

  Model ind = Model::init(small_config(Variant::kInductive), 5);
  InferenceEngine eng_ind = make_engine(ind, f.quantizers, single);
  before = nd::backward_invocations();
  InferResult res2 = infer_report(eng_ind, r);
  CHECK(nd::backward_invocations() == before + 1);
  CHECK(res2.importance.method == "gradient");
}

TEST_CASE("make_engine rejects anchor sets built against other quantizers") {
  Fixture f = make_fixture(400);
  std::vector<size_t> half;
  for (size_t i = 0; i < f.records.size() / 2; ++i)
    if (f.split.part[i] == int8_t(SplitPart::kTrain)) half.push_back(i);
  QuantizerSet other = fit_quantizers(f.records, half);
  REQUIRE(other.hash() != f.quantizers.hash());

  AnchorSet mismatched = build_anchor_set(f.records, f.split, AnchorStrategy::kMedian, other);
  Model m = Model::init(small_config(Variant::kAttention), 5);
  CHECK_THROWS_AS(make_engine(m, f.quantizers, mismatched), std::invalid_argument);
  CHECK_NOTHROW(make_engine(m, other, mismatched));
}

TEST_CASE("latency_bench reports per-sample scoring statistics") {
  Fixture f = make_fixture(400);
  AnchorSet single = build_anchor_set(f.records, f.split, AnchorStrategy::kSingleNode,
                                      f.quantizers);
  Model m = Model::init(small_config(Variant::kAttention), 5);
  InferenceEngine eng = make_engine(m, f.quantizers, single);

  std::vector<ReportRecord> samples(f.records.begin(), f.records.begin() + 12);
  LatencyStats st = latency_bench(eng, samples, 2);
  CHECK(st.strategy == "single_node");
  CHECK(st.n == 12);
  CHECK(st.mean_ms > 0.0);
  CHECK(st.median_ms > 0.0);
  CHECK(st.std_ms >= 0.0);
  ordered_json j = st.to_json();
  CHECK(j.at("strategy") == "single_node");
  CHECK(j.at("n") == 12);

  CHECK_THROWS_AS(latency_bench(eng, {}, 2), std::invalid_argument);
}

TEST_CASE("experiment config and split info round-trip") {
  ExperimentConfig cfg = ExperimentConfig::desk_defaults();
  CHECK(cfg.dataset.n == 5000);
  CHECK(cfg.samples_per_cell == 10);

  cfg.variant = "multihead";
  cfg.epochs_override = 3;
  cfg.anchor_strategies = {"median", "synthetic"};
  cfg.prune_strategy = "top_only";
  cfg.out_dir = "/tmp/somewhere";
  ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json().dump() == cfg.to_json().dump());

  Fixture f = make_fixture(400);
  SplitInfo s2 = split_info_from_json(split_info_to_json(f.split));
  CHECK(s2.part == f.split.part);
  CHECK(s2.labeled == f.split.labeled);
}

TEST_CASE("run_experiment: deterministic, resumable, exportable") {
  for (const char* leaf : {"exp_a", "exp_b", "exp_empty"})
    std::filesystem::remove_all(run_dir(leaf));

  ExperimentConfig cfg = ExperimentConfig::desk_defaults();
  cfg.dataset.n = 400;
  cfg.dataset.seed = 42;
  cfg.variant = "attention";
  cfg.epochs_override = 1;
  cfg.anchor_strategies = {"single_node", "median"};
  cfg.samples_per_cell = 2;
  cfg.latency_samples = 5;
  cfg.latency_warmup = 1;
  cfg.out_dir = run_dir("exp_a");

  ordered_json m1 = run_experiment(cfg);
  CHECK(m1.at("complete") == true);
  CHECK(m1.at("stages").size() >= 10);
  std::string d1 = m1.dump();
  CHECK(d1.find("seconds") == std::string::npos);  // timings live outside the manifest
  CHECK(file_exists(cfg.out_dir + "/timings.json"));

  // Resume: a completed directory replays to the identical manifest.
  ordered_json m2 = run_experiment(cfg);
  CHECK(m2.dump() == d1);

  // Same config elsewhere: identical up to the configured output directory.
  ExperimentConfig cfg_b = cfg;
  cfg_b.out_dir = run_dir("exp_b");
  ordered_json m3 = run_experiment(cfg_b);
  ordered_json m1_patched = m1;
  m1_patched["config"]["out_dir"] = cfg_b.out_dir;
  CHECK(m3.dump() == m1_patched.dump());

  // A directory refuses a different config.
  ExperimentConfig clash = cfg;
  clash.train_seed += 1;
  CHECK_THROWS_AS(run_experiment(clash), std::runtime_error);

  ordered_json ex = export_report(cfg.out_dir);
  for (const char* p : {"export/latency_table.csv", "export/agreement_table.csv",
                        "export/importance_top3.csv", "export/model_graph_table.csv"})
    CHECK(file_exists(cfg.out_dir + "/" + p));
  CHECK(ex.at("files").size() >= 4);

  std::string empty = run_dir("exp_empty");
  ensure_dir(empty);
  CHECK_THROWS_AS(export_report(empty), std::runtime_error);
}
