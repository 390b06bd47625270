// Command-line front end for the risk report graph pipeline.
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "riskgraph/anchors.hpp"
#include "riskgraph/explain.hpp"
#include "riskgraph/fsutil.hpp"
#include "riskgraph/harness.hpp"
#include "riskgraph/hetero_graph.hpp"
#include "riskgraph/metrics.hpp"
#include "riskgraph/models.hpp"
#include "riskgraph/prune.hpp"
#include "riskgraph/record.hpp"
#include "riskgraph/synthgen.hpp"

namespace rg = riskgraph;
using riskgraph::ordered_json;

namespace {

void print_json(const ordered_json& j) { std::printf("%s\n", j.dump(2).c_str()); }

ordered_json read_json_file(const std::string& path) {
  return ordered_json::parse(rg::read_text_file(path));
}

rg::SplitInfo make_split(const std::vector<rg::ReportRecord>& records, uint64_t seed,
                         double labeled_ratio) {
  rg::SplitSpec spec;
  spec.seed = seed;
  spec.labeled_ratio = labeled_ratio;
  return rg::split_dataset(records, spec);
}

std::vector<size_t> train_indices(const rg::SplitInfo& split) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < split.part.size(); ++i)
    if (split.part[i] == int8_t(rg::SplitPart::kTrain)) idx.push_back(i);
  return idx;
}

std::vector<rg::ReportRecord> test_records(const std::vector<rg::ReportRecord>& records,
                                           const rg::SplitInfo& split) {
  std::vector<rg::ReportRecord> out;
  for (size_t i = 0; i < records.size(); ++i)
    if (split.part[i] == int8_t(rg::SplitPart::kTest)) out.push_back(records[i]);
  return out;
}

rg::MetricsReport test_metrics(const rg::Model& model, const rg::HeteroGraph& g) {
  std::vector<int64_t> ids;
  std::vector<int> labels;
  for (int64_t i = 0; i < g.report_count(); ++i) {
    if (g.split[size_t(i)] == int8_t(rg::SplitPart::kTest)) {
      ids.push_back(i);
      labels.push_back(int(g.labels[size_t(i)]));
    }
  }
  return rg::compute_metrics(rg::predict(model, g, ids), labels);
}

rg::InferenceEngine engine_from(const std::string& ckpt_dir, const std::string& strategy,
                                std::string anchors_path) {
  rg::Checkpoint ckpt = rg::load_checkpoint(ckpt_dir);
  if (anchors_path.empty()) anchors_path = ckpt_dir + "/anchors_" + strategy + ".json";
  rg::AnchorSet anchors = rg::load_anchor_set(anchors_path);
  if (rg::anchor_strategy_name(anchors.strategy) != strategy)
    throw std::runtime_error("anchor set at " + anchors_path + " uses strategy " +
                             rg::anchor_strategy_name(anchors.strategy));
  return rg::make_engine(ckpt, anchors);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"risk report graph pipeline"};
  app.require_subcommand(1);

  // --- gen ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a synthetic incident dataset");
  rg::DatasetParams gen_params;
  std::vector<double> gen_risk = {0.25, 0.35, 0.40};
  std::string gen_out;
  gen->add_option("--n", gen_params.n, "record count");
  gen->add_option("--year", gen_params.year, "calendar year for timestamps");
  gen->add_option("--risk-dist", gen_risk, "low,medium,high probabilities")
      ->expected(3)
      ->delimiter(',');
  gen->add_option("--seed", gen_params.seed, "generator seed");
  gen->add_option("--out", gen_out, "output NDJSON path")->required();
  gen->callback([&] {
    for (int i = 0; i < 3; ++i) gen_params.risk_dist[size_t(i)] = gen_risk[size_t(i)];
    auto records = rg::generate_dataset(gen_params, rg::GeneratorConfig::defaults());
    rg::write_dataset(gen_out, records, gen_params, rg::GeneratorConfig::defaults());
    auto audit = rg::validate_dataset(records);
    print_json({{"out", gen_out},
                {"records", records.size()},
                {"sha256", rg::dataset_file_hash(gen_out)},
                {"rule_satisfaction_pct", audit.overall_pct()}});
  });

  // --- validate ------------------------------------------------------------
  auto* val = app.add_subcommand("validate", "audit a dataset against the domain rules");
  std::string val_in, val_out;
  val->add_option("--in", val_in, "dataset NDJSON path")->required();
  val->add_option("--out", val_out, "also write the audit JSON here");
  val->callback([&] {
    auto audit = rg::validate_dataset(rg::load_dataset(val_in));
    ordered_json j = audit.to_json();
    print_json(j);
    if (!val_out.empty()) rg::write_text_file(val_out, j.dump(2) + "\n");
    if (audit.structural_violations > 0)
      throw std::runtime_error("dataset has structural violations");
  });

  // --- build-graph -----------------------------------------------------------
  auto* bg = app.add_subcommand("build-graph", "build the heterogeneous graph from a dataset");
  std::string bg_in, bg_out, bg_prune;
  uint64_t bg_seed = 7;
  double bg_labeled = 0.2;
  bg->add_option("--in", bg_in, "dataset NDJSON path")->required();
  bg->add_option("--out", bg_out, "output graph directory")->required();
  bg->add_option("--prune-spec", bg_prune, "prune spec JSON (omit for the full graph)");
  bg->add_option("--split-seed", bg_seed, "split seed");
  bg->add_option("--labeled-ratio", bg_labeled, "labeled fraction of the train split");
  bg->callback([&] {
    auto records = rg::load_dataset(bg_in);
    auto split = make_split(records, bg_seed, bg_labeled);
    auto q = rg::fit_quantizers(records, train_indices(split));
    rg::RetainedSlots retained = rg::RetainedSlots::all();
    std::string prune_hash = "original";
    if (!bg_prune.empty()) {
      auto spec = rg::PruneSpec::from_json(read_json_file(bg_prune));
      retained = spec.to_retained_slots();
      prune_hash = spec.hash();
    }
    auto g = rg::build_graph(records, q, split, retained, rg::dataset_file_hash(bg_in),
                             prune_hash);
    rg::save_graph(g, bg_out);
    print_json(rg::graph_stats(g).to_json());
  });

  // --- train -----------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train a classifier on a graph directory");
  std::string tr_graph, tr_variant = "inductive", tr_profile = "main", tr_out;
  uint64_t tr_seed = 1;
  int tr_epochs = 0;
  tr->add_option("--graph", tr_graph, "graph directory")->required();
  tr->add_option("--variant", tr_variant, "inductive | attention | multihead");
  tr->add_option("--profile", tr_profile, "main | pruning-bench");
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--epochs", tr_epochs, "override the profile's epoch count");
  tr->add_option("--out-ckpt", tr_out, "checkpoint directory")->required();
  tr->callback([&] {
    auto g = rg::load_graph(tr_graph);
    rg::ModelConfig mc;
    rg::TrainConfig tc;
    rg::apply_profile(tr_profile, mc, tc);
    mc.variant = rg::variant_from_name(tr_variant);
    if (tr_epochs > 0) tc.epochs = tr_epochs;
    tc.seed = tr_seed;
    auto result = rg::train_model(g, mc, tc);
    rg::save_checkpoint(tr_out, result, tc, g, tr_profile);
    print_json({{"ckpt", tr_out},
                {"variant", tr_variant},
                {"profile", tr_profile},
                {"best_epoch", result.best_epoch},
                {"best_val_acc", result.best_val_acc},
                {"stopped_epoch", result.stopped_epoch},
                {"test", test_metrics(result.model, g).to_json()}});
  });

  // --- anchors build -----------------------------------------------------------
  auto* an = app.add_subcommand("anchors", "anchor set operations");
  an->require_subcommand(1);
  auto* anb = an->add_subcommand("build", "build an anchor set from the training split");
  std::string anb_strategy, anb_train, anb_ckpt, anb_out;
  uint64_t anb_seed = 7;
  double anb_labeled = 0.2;
  int anb_k = 5;
  anb->add_option("--strategy", anb_strategy, "single_node | median | coverage | synthetic")
      ->required();
  anb->add_option("--train", anb_train, "dataset NDJSON (train split is selected)")->required();
  anb->add_option("--ckpt-dir", anb_ckpt, "checkpoint directory (supplies the quantizers)")
      ->required();
  anb->add_option("--out", anb_out, "output path (default <ckpt-dir>/anchors_<strategy>.json)");
  anb->add_option("--split-seed", anb_seed, "split seed");
  anb->add_option("--labeled-ratio", anb_labeled, "labeled fraction of the train split");
  anb->add_option("--k", anb_k, "anchors per category (coverage)");
  anb->callback([&] {
    auto records = rg::load_dataset(anb_train);
    auto split = make_split(records, anb_seed, anb_labeled);
    auto ckpt = rg::load_checkpoint(anb_ckpt);
    auto set = rg::build_anchor_set(records, split, rg::anchor_strategy_from_name(anb_strategy),
                                    ckpt.quantizers, anb_k);
    std::string out = anb_out.empty() ? anb_ckpt + "/anchors_" + anb_strategy + ".json" : anb_out;
    rg::save_anchor_set(set, out);
    int present = 0, short_count = 0;
    for (int c = 0; c < rg::kCategoryCount; ++c) {
      present += set.category_present[size_t(c)] ? 1 : 0;
      short_count += set.shortfall[size_t(c)] ? 1 : 0;
    }
    print_json({{"out", out},
                {"strategy", anb_strategy},
                {"categories_present", present},
                {"coverage_shortfalls", short_count},
                {"train_hash", set.train_hash}});
  });

  // --- infer -----------------------------------------------------------------
  auto* inf = app.add_subcommand("infer", "score one report and explain the prediction");
  std::string inf_report, inf_strategy = "median", inf_ckpt, inf_anchors;
  inf->add_option("--report", inf_report, "report record JSON path")->required();
  inf->add_option("--strategy", inf_strategy, "anchor strategy");
  inf->add_option("--ckpt-dir", inf_ckpt, "checkpoint directory")->required();
  inf->add_option("--anchors", inf_anchors, "anchor set path (default beside the checkpoint)");
  inf->callback([&] {
    auto eng = engine_from(inf_ckpt, inf_strategy, inf_anchors);
    auto r = rg::ReportRecord::from_json(read_json_file(inf_report));
    print_json(rg::infer_report(eng, r).to_json());
  });

  // --- prune derive / cycle -------------------------------------------------
  auto* pr = app.add_subcommand("prune", "explanation-driven pruning");
  pr->require_subcommand(1);
  auto* prd = pr->add_subcommand("derive", "derive a prune spec from an importance table");
  std::string prd_table, prd_strategy = "bottom_excluded", prd_out;
  prd->add_option("--table", prd_table, "importance table JSON")->required();
  prd->add_option("--strategy", prd_strategy, "bottom_excluded | top_only");
  prd->add_option("--out", prd_out, "output spec path")->required();
  prd->callback([&] {
    auto table = rg::ImportanceTable::from_json(read_json_file(prd_table));
    auto spec = rg::derive_prune_spec(prd_strategy, table);
    rg::write_text_file(prd_out, spec.to_json().dump(2) + "\n");
    print_json({{"out", prd_out}, {"strategy", prd_strategy}, {"table_hash", spec.table_hash}});
  });

  auto* prc = pr->add_subcommand("cycle", "train, prune, retrain, and compare");
  std::string prc_dataset, prc_variant = "inductive", prc_strategy = "bottom_excluded";
  std::string prc_profile = "main", prc_out;
  uint64_t prc_seed = 1, prc_split_seed = 7;
  int prc_epochs = 0, prc_cell = 100;
  prc->add_option("--dataset", prc_dataset, "dataset NDJSON path")->required();
  prc->add_option("--variant", prc_variant, "inductive | attention | multihead");
  prc->add_option("--strategy", prc_strategy, "bottom_excluded | top_only");
  prc->add_option("--profile", prc_profile, "main | pruning-bench");
  prc->add_option("--seed", prc_seed, "training seed");
  prc->add_option("--split-seed", prc_split_seed, "split seed");
  prc->add_option("--epochs", prc_epochs, "override the profile's epoch count");
  prc->add_option("--samples-per-cell", prc_cell, "explained samples per (category, risk)");
  prc->add_option("--out", prc_out, "directory for spec/reduction/comparison files");
  prc->callback([&] {
    auto records = rg::load_dataset(prc_dataset);
    auto split = make_split(records, prc_split_seed, 0.2);
    rg::ModelConfig mc;
    rg::TrainConfig tc;
    rg::apply_profile(prc_profile, mc, tc);
    if (prc_epochs > 0) tc.epochs = prc_epochs;
    tc.seed = prc_seed;
    auto variant = rg::variant_from_name(prc_variant);
    mc.variant = variant;
    auto report = rg::prune_retrain_cycle(records, split, rg::dataset_file_hash(prc_dataset),
                                          variant, prc_strategy, mc, tc, prc_cell);
    print_json(report.to_json());
    if (!prc_out.empty()) {
      rg::ensure_dir(prc_out);
      rg::write_text_file(prc_out + "/prune_spec.json", report.spec.to_json().dump(2) + "\n");
      rg::write_text_file(prc_out + "/prune_reduction.json",
                          report.reduction.to_json().dump(2) + "\n");
      rg::write_text_file(prc_out + "/prune_comparison.csv", report.to_csv());
    }
  });

  // --- run / export / bench ----------------------------------------------------
  auto* run = app.add_subcommand("run", "run a configured experiment end to end");
  std::string run_config;
  run->add_option("--config", run_config, "experiment config JSON")->required();
  run->callback([&] {
    auto cfg = rg::ExperimentConfig::from_json(read_json_file(run_config));
    print_json(rg::run_experiment(cfg));
  });

  auto* exp = app.add_subcommand("export", "export report tables from an experiment directory");
  std::string exp_dir;
  exp->add_option("--dir", exp_dir, "experiment output directory")->required();
  exp->callback([&] { print_json(rg::export_report(exp_dir)); });

  auto* bench = app.add_subcommand("bench", "measure single-report scoring latency");
  std::string bench_strategy, bench_ckpt, bench_dataset, bench_anchors;
  int bench_n = 200, bench_warmup = 10;
  uint64_t bench_seed = 7;
  bench->add_option("--strategy", bench_strategy, "anchor strategy")->required();
  bench->add_option("--n", bench_n, "timed samples");
  bench->add_option("--warmup", bench_warmup, "untimed warmup samples");
  bench->add_option("--ckpt-dir", bench_ckpt, "checkpoint directory")->required();
  bench->add_option("--dataset", bench_dataset, "dataset NDJSON (test split supplies samples)")
      ->required();
  bench->add_option("--anchors", bench_anchors, "anchor set path (default beside the checkpoint)");
  bench->add_option("--split-seed", bench_seed, "split seed");
  bench->callback([&] {
    auto records = rg::load_dataset(bench_dataset);
    auto split = make_split(records, bench_seed, 0.2);
    auto samples = test_records(records, split);
    if (int64_t(samples.size()) > bench_n) samples.resize(size_t(bench_n));
    auto eng = engine_from(bench_ckpt, bench_strategy, bench_anchors);
    print_json(rg::latency_bench(eng, samples, bench_warmup).to_json());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
