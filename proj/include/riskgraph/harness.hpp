#pragma once

#include <string>
#include <vector>

#include "riskgraph/anchors.hpp"
#include "riskgraph/config.hpp"
#include "riskgraph/metrics.hpp"
#include "riskgraph/prune.hpp"

namespace riskgraph {

// One full experiment: generate -> audit -> split -> build -> train ->
// metrics -> anchors -> importance -> agreement -> latency -> prune cycle.
// Every stochastic stage's seed lives here, so the config pins the run.
struct ExperimentConfig {
  DatasetParams dataset;
  SplitSpec split;
  std::string variant = "inductive";
  std::string profile = "main";
  int epochs_override = 0;  // 0 keeps the profile's epoch count
  uint64_t train_seed = 1;
  std::vector<std::string> anchor_strategies = {"single_node", "median", "coverage", "synthetic"};
  std::string prune_strategy = "bottom_excluded";  // empty skips the prune cycle
  int samples_per_cell = 100;  // importance strata and agreement sampling
  int latency_samples = 200;
  int latency_warmup = 10;
  std::string out_dir = "out";

  ordered_json to_json() const;
  static ExperimentConfig from_json(const ordered_json& j);
  // 5k records, 10 samples/cell — the whole pipeline runs in minutes.
  static ExperimentConfig desk_defaults();
};

// ---------------------------------------------------------------------------
// Latency benchmarking
// ---------------------------------------------------------------------------

struct LatencyStats {
  std::string strategy;
  int64_t n = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double median_ms = 0.0;

  ordered_json to_json() const;
};

// Per-sample wall clock of graph assembly + forward over the engine's
// strategy. The first `warmup` scores are run but not counted.
LatencyStats latency_bench(InferenceEngine& eng, const std::vector<ReportRecord>& samples,
                           int warmup = 10);

// ---------------------------------------------------------------------------
// Experiment pipeline
// ---------------------------------------------------------------------------

// Runs (or resumes) the staged pipeline into cfg.out_dir and returns the
// final manifest. Every non-timing artifact is content-hashed into the
// manifest; wall-clock numbers live in timing artifacts listed by name only,
// so same-config re-runs produce byte-identical manifests. A stage whose
// artifacts already exist with matching hashes is loaded instead of re-run;
// a stage failure aborts with the stage name, keeping partial outputs.
ordered_json run_experiment(const ExperimentConfig& cfg);

// Consolidated per-table CSVs plus (series, x, y) plot-data files under
// <dir>/export. Rejects incomplete experiment directories, listing what's
// missing. Returns the export manifest.
ordered_json export_report(const std::string& dir);

// Full split serialization (summary_json covers only the counts).
ordered_json split_info_to_json(const SplitInfo& s);
SplitInfo split_info_from_json(const ordered_json& j);

}  // namespace riskgraph
