#include "riskgraph/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "riskgraph/fsutil.hpp"
#include "riskgraph/sha256.hpp"

namespace riskgraph {

namespace {

constexpr const char* kConfigFormat = "riskgraph-experiment-v1";
constexpr const char* kManifestFormat = "riskgraph-experiment-manifest-v1";
// Published benchmark the agreement report is compared against (never gated).
constexpr double kAgreementReferencePct = 97.5;

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ordered_json ExperimentConfig::to_json() const {
  ordered_json strategies = ordered_json::array();
  for (const std::string& s : anchor_strategies) strategies.push_back(s);
  return ordered_json{
      {"format", kConfigFormat},
      {"dataset", dataset.to_json()},
      {"split",
       ordered_json{{"ratios", split.ratios}, {"labeled_ratio", split.labeled_ratio},
                    {"seed", split.seed}}},
      {"variant", variant},
      {"profile", profile},
      {"epochs_override", epochs_override},
      {"train_seed", train_seed},
      {"anchor_strategies", strategies},
      {"prune_strategy", prune_strategy},
      {"samples_per_cell", samples_per_cell},
      {"latency_samples", latency_samples},
      {"latency_warmup", latency_warmup},
      {"out_dir", out_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const ordered_json& j) {
  if (j.at("format").get<std::string>() != kConfigFormat)
    throw std::invalid_argument("experiment config: unknown format");
  ExperimentConfig c;
  c.dataset = DatasetParams::from_json(j.at("dataset"));
  const ordered_json& js = j.at("split");
  c.split.ratios = js.at("ratios").get<std::array<double, 3>>();
  c.split.labeled_ratio = js.at("labeled_ratio").get<double>();
  c.split.seed = js.at("seed").get<uint64_t>();
  c.variant = j.at("variant").get<std::string>();
  c.profile = j.at("profile").get<std::string>();
  c.epochs_override = j.value("epochs_override", 0);
  c.train_seed = j.value("train_seed", uint64_t(1));
  c.anchor_strategies.clear();
  for (const ordered_json& s : j.at("anchor_strategies"))
    c.anchor_strategies.push_back(s.get<std::string>());
  c.prune_strategy = j.value("prune_strategy", std::string());
  c.samples_per_cell = j.value("samples_per_cell", 100);
  c.latency_samples = j.value("latency_samples", 200);
  c.latency_warmup = j.value("latency_warmup", 10);
  c.out_dir = j.value("out_dir", std::string("out"));
  return c;
}

ExperimentConfig ExperimentConfig::desk_defaults() {
  ExperimentConfig c;
  c.samples_per_cell = 10;
  return c;
}

// ---------------------------------------------------------------------------
// Split serialization
// ---------------------------------------------------------------------------

ordered_json split_info_to_json(const SplitInfo& s) {
  ordered_json part = ordered_json::array();
  for (int8_t p : s.part) part.push_back(int(p));
  ordered_json labeled = ordered_json::array();
  for (uint8_t l : s.labeled) labeled.push_back(int(l));
  return ordered_json{{"spec",
                       ordered_json{{"ratios", s.spec.ratios},
                                    {"labeled_ratio", s.spec.labeled_ratio},
                                    {"seed", s.spec.seed}}},
                      {"part_counts", s.part_counts},
                      {"labeled_count", s.labeled_count},
                      {"part", part},
                      {"labeled", labeled}};
}

SplitInfo split_info_from_json(const ordered_json& j) {
  SplitInfo s;
  const ordered_json& spec = j.at("spec");
  s.spec.ratios = spec.at("ratios").get<std::array<double, 3>>();
  s.spec.labeled_ratio = spec.at("labeled_ratio").get<double>();
  s.spec.seed = spec.at("seed").get<uint64_t>();
  s.part_counts = j.at("part_counts").get<std::array<int64_t, 3>>();
  s.labeled_count = j.at("labeled_count").get<int64_t>();
  for (const ordered_json& p : j.at("part")) s.part.push_back(int8_t(p.get<int>()));
  for (const ordered_json& l : j.at("labeled")) s.labeled.push_back(uint8_t(l.get<int>()));
  if (s.part.size() != s.labeled.size())
    throw std::invalid_argument("split info: part/labeled length mismatch");
  return s;
}

// ---------------------------------------------------------------------------
// Latency benchmarking
// ---------------------------------------------------------------------------

ordered_json LatencyStats::to_json() const {
  return ordered_json{{"strategy", strategy},
                      {"n", n},
                      {"mean_ms", mean_ms},
                      {"std_ms", std_ms},
                      {"median_ms", median_ms}};
}

LatencyStats latency_bench(InferenceEngine& eng, const std::vector<ReportRecord>& samples,
                           int warmup) {
  if (samples.empty()) throw std::invalid_argument("latency_bench: no samples");
  for (size_t i = 0; i < size_t(std::max(warmup, 0)) && i < samples.size(); ++i)
    score_report(eng, samples[i]);
  std::vector<double> ms;
  ms.reserve(samples.size());
  for (const ReportRecord& r : samples) ms.push_back(score_report(eng, r).latency_ms);

  LatencyStats st;
  st.strategy = anchor_strategy_name(eng.anchors.strategy);
  st.n = int64_t(ms.size());
  double sum = 0.0;
  for (double v : ms) sum += v;
  st.mean_ms = sum / double(ms.size());
  double var = 0.0;
  for (double v : ms) var += (v - st.mean_ms) * (v - st.mean_ms);
  st.std_ms = std::sqrt(var / double(ms.size()));
  std::sort(ms.begin(), ms.end());
  size_t n = ms.size();
  st.median_ms = n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  return st;
}

// ---------------------------------------------------------------------------
// Pipeline plumbing
// ---------------------------------------------------------------------------

namespace {

class Pipeline {
 public:
  explicit Pipeline(const ExperimentConfig& cfg) : dir_(cfg.out_dir) {
    ensure_dir(dir_);
    config_ = cfg.to_json();
    manifest_ = ordered_json{{"format", kManifestFormat},
                             {"config", config_},
                             {"stages", ordered_json::array()},
                             {"timing_artifacts", ordered_json::array()},
                             {"complete", false}};
    if (file_exists(path("manifest.json"))) {
      ordered_json prev = ordered_json::parse(read_text_file(path("manifest.json")));
      if (prev.at("config").dump() != config_.dump())
        throw std::runtime_error(
            "run_experiment: output directory already holds a different experiment config");
      prev_ = std::move(prev);
      chain_ = true;
    }
    if (file_exists(path("timings.json")))
      prev_timings_ = ordered_json::parse(read_text_file(path("timings.json")));
    write_text_file(path("config.json"), config_.dump(2) + "\n");
  }

  std::string path(const std::string& rel) const { return dir_ + "/" + rel; }

  // Attempts to carry the stage over from the previous run: every listed
  // artifact must be recorded with a matching on-disk hash and every timing
  // file must still exist. A failed check breaks the resume chain for all
  // later stages.
  bool resume(const std::string& name, const std::vector<std::string>& files,
              const std::vector<std::string>& timing_files) {
    current_ = name;
    t0_ = std::chrono::steady_clock::now();
    if (!chain_) return false;
    const ordered_json* entry = find_prev(name);
    bool ok = entry != nullptr;
    if (ok) {
      std::map<std::string, std::string> recorded;
      for (const ordered_json& a : entry->at("artifacts"))
        recorded[a.at("path").get<std::string>()] = a.at("sha256").get<std::string>();
      ok = recorded.size() == files.size();
      for (const std::string& f : files) {
        if (!ok) break;
        auto it = recorded.find(f);
        ok = it != recorded.end() && file_exists(path(f)) &&
             sha256_file_hex(path(f)) == it->second;
      }
      for (const std::string& f : timing_files) ok = ok && file_exists(path(f));
    }
    if (!ok) {
      chain_ = false;
      return false;
    }
    append_entry(name, files, timing_files, prev_seconds(name));
    return true;
  }

  void commit(const std::vector<std::string>& files,
              const std::vector<std::string>& timing_files) {
    append_entry(current_, files, timing_files, seconds_since(t0_));
  }

  double stage_seconds(const std::string& name) const {
    auto it = timings_.find(name);
    return it == timings_.end() ? 0.0 : it->second;
  }

  ordered_json finish() {
    manifest_["complete"] = true;
    write();
    return manifest_;
  }

 private:
  const ordered_json* find_prev(const std::string& name) const {
    if (prev_.is_null()) return nullptr;
    for (const ordered_json& e : prev_.at("stages"))
      if (e.at("name").get<std::string>() == name) return &e;
    return nullptr;
  }

  double prev_seconds(const std::string& name) const {
    if (prev_timings_.is_object() && prev_timings_.contains("stages") &&
        prev_timings_.at("stages").contains(name))
      return prev_timings_.at("stages").at(name).get<double>();
    return 0.0;
  }

  void append_entry(const std::string& name, const std::vector<std::string>& files,
                    const std::vector<std::string>& timing_files, double secs) {
    ordered_json arts = ordered_json::array();
    for (const std::string& f : files)
      arts.push_back(ordered_json{{"path", f}, {"sha256", sha256_file_hex(path(f))}});
    ordered_json tf = ordered_json::array();
    for (const std::string& f : timing_files) {
      tf.push_back(f);
      manifest_["timing_artifacts"].push_back(f);
    }
    manifest_["stages"].push_back(
        ordered_json{{"name", name}, {"artifacts", arts}, {"timing_files", tf}});
    timings_[name] = secs;
    write();
  }

  void write() {
    write_text_file(path("manifest.json"), manifest_.dump(2) + "\n");
    ordered_json stages = ordered_json::object();
    double total = 0.0;
    for (const ordered_json& e : manifest_.at("stages")) {
      const std::string& name = e.at("name").get_ref<const std::string&>();
      stages[name] = timings_.at(name);
      total += timings_.at(name);
    }
    ordered_json t{{"stages", stages}, {"total_seconds", total}};
    write_text_file(path("timings.json"), t.dump(2) + "\n");
  }

  std::string dir_;
  ordered_json config_;
  ordered_json manifest_;
  ordered_json prev_;          // null unless resuming
  ordered_json prev_timings_;  // null unless present
  bool chain_ = false;
  std::string current_;
  std::chrono::steady_clock::time_point t0_;
  std::map<std::string, double> timings_;
};

void write_json_file(const std::string& path, const ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

ordered_json read_json_file(const std::string& path) {
  return ordered_json::parse(read_text_file(path));
}

// Up to per_cell test-split records per (category, risk), ascending id.
std::vector<const ReportRecord*> stratified_test_records(const std::vector<ReportRecord>& records,
                                                         const SplitInfo& split, int per_cell) {
  std::array<std::array<int, kRiskCount>, kCategoryCount> taken{};
  std::vector<const ReportRecord*> out;
  for (size_t i = 0; i < records.size(); ++i) {
    if (split.part[i] != int8_t(SplitPart::kTest)) continue;
    const ReportRecord& r = records[i];
    int c = int(r.category), k = int(r.risk);
    if (taken[size_t(c)][size_t(k)] >= per_cell) continue;
    taken[size_t(c)][size_t(k)]++;
    out.push_back(&r);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

ordered_json run_experiment(const ExperimentConfig& cfg) {
  Variant variant = variant_from_name(cfg.variant);
  ModelConfig mc;
  TrainConfig tc;
  apply_profile(cfg.profile, mc, tc);
  mc.variant = variant;
  if (cfg.epochs_override > 0) tc.epochs = cfg.epochs_override;
  tc.seed = cfg.train_seed;
  if (cfg.samples_per_cell <= 0)
    throw std::invalid_argument("run_experiment: samples_per_cell must be positive");
  if (cfg.latency_samples <= 0)
    throw std::invalid_argument("run_experiment: latency_samples must be positive");
  std::vector<AnchorStrategy> strategies;
  for (const std::string& s : cfg.anchor_strategies)
    strategies.push_back(anchor_strategy_from_name(s));
  if (strategies.empty()) throw std::invalid_argument("run_experiment: no anchor strategies");
  if (!cfg.prune_strategy.empty() && cfg.prune_strategy != "bottom_excluded" &&
      cfg.prune_strategy != "top_only")
    throw std::invalid_argument("run_experiment: unknown prune strategy " + cfg.prune_strategy);

  Pipeline pipe(cfg);
  auto stage = [&](const std::string& name, const std::vector<std::string>& files,
                   const std::vector<std::string>& timing_files, auto&& load_fn,
                   auto&& compute_fn) {
    try {
      if (pipe.resume(name, files, timing_files)) {
        load_fn();
        return;
      }
      compute_fn();
      pipe.commit(files, timing_files);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_experiment: stage '" + name + "' failed: " + e.what());
    }
  };

  GeneratorConfig gen_cfg = GeneratorConfig::defaults();

  std::vector<ReportRecord> records;
  stage(
      "gen", {"dataset.ndjson", "dataset.ndjson.meta.json"}, {},
      [&] { records = load_dataset(pipe.path("dataset.ndjson")); },
      [&] {
        records = generate_dataset(cfg.dataset, gen_cfg);
        write_dataset(pipe.path("dataset.ndjson"), records, cfg.dataset, gen_cfg);
      });

  stage(
      "audit", {"audit.json"}, {}, [] {},
      [&] { write_json_file(pipe.path("audit.json"), validate_dataset(records).to_json()); });

  SplitInfo split;
  stage(
      "split", {"split.json"}, {},
      [&] { split = split_info_from_json(read_json_file(pipe.path("split.json"))); },
      [&] {
        split = split_dataset(records, cfg.split);
        write_json_file(pipe.path("split.json"), split_info_to_json(split));
      });

  HeteroGraph graph;
  stage(
      "build", {"graph/manifest.json"}, {},
      [&] { graph = load_graph(pipe.path("graph")); },
      [&] {
        std::vector<size_t> train_idx;
        for (size_t i = 0; i < records.size(); ++i)
          if (split.part[i] == int8_t(SplitPart::kTrain)) train_idx.push_back(i);
        QuantizerSet quantizers = fit_quantizers(records, train_idx);
        std::string dataset_hash = dataset_file_hash(pipe.path("dataset.ndjson"));
        graph = build_graph(records, quantizers, split, RetainedSlots::all(), dataset_hash,
                            "original");
        save_graph(graph, pipe.path("graph"));
      });

  Model model;
  stage(
      "train", {"ckpt/manifest.json", "ckpt/params.bin"}, {"ckpt/history.csv"},
      [&] {
        Checkpoint ck = load_checkpoint(pipe.path("ckpt"));
        if (ck.graph_hash != graph.content_hash())
          throw std::runtime_error("checkpoint was trained on a different graph");
        model = std::move(ck.model);
      },
      [&] {
        TrainResult tr = train_model(graph, mc, tc);
        save_checkpoint(pipe.path("ckpt"), tr, tc, graph, cfg.profile);
        model = std::move(tr.model);
      });
  double train_seconds = pipe.stage_seconds("train");

  std::vector<int64_t> test_ids;
  std::vector<int> test_labels;
  for (int64_t i = 0; i < graph.report_count(); ++i)
    if (graph.split[size_t(i)] == int8_t(SplitPart::kTest)) {
      test_ids.push_back(i);
      test_labels.push_back(graph.labels[size_t(i)]);
    }

  stage(
      "metrics", {"metrics.json"}, {}, [] {},
      [&] {
        MetricsReport mr = compute_metrics(predict(model, graph, test_ids), test_labels);
        write_json_file(pipe.path("metrics.json"),
                        ordered_json{{"model", cfg.variant},
                                     {"graph", "original"},
                                     {"split", "test"},
                                     {"edges", graph.total_edges()},
                                     {"metrics", mr.to_json()}});
      });

  std::map<std::string, AnchorSet> anchor_sets;
  std::vector<std::string> anchor_files;
  for (const std::string& s : cfg.anchor_strategies) anchor_files.push_back("anchors_" + s + ".json");
  stage(
      "anchors", anchor_files, {},
      [&] {
        for (const std::string& f : anchor_files)
          anchor_sets[f] = load_anchor_set(pipe.path(f));
      },
      [&] {
        for (size_t i = 0; i < strategies.size(); ++i) {
          AnchorSet a = build_anchor_set(records, split, strategies[i], graph.quantizers);
          save_anchor_set(a, pipe.path(anchor_files[i]));
          anchor_sets[anchor_files[i]] = std::move(a);
        }
      });

  ImportanceTable table;
  stage(
      "importance", {"importance_table.json", "importance_table.csv"}, {},
      [&] { table = ImportanceTable::from_json(read_json_file(pipe.path("importance_table.json"))); },
      [&] {
        std::vector<int64_t> ids = stratified_train_sample(graph, cfg.samples_per_cell);
        std::vector<SampleNeighborhood> samples;
        samples.reserve(ids.size());
        for (int64_t id : ids) samples.push_back(extract_neighborhood(graph, id));
        std::string method = default_explain_method(variant);
        std::vector<ImportanceVector> vecs = explain_batch(model, samples, ids, method);
        table = aggregate_importance(vecs, method, cfg.variant, graph.content_hash());
        write_json_file(pipe.path("importance_table.json"), table.to_json());
        write_text_file(pipe.path("importance_table.csv"), table.to_csv());
      });

  stage(
      "agreement", {"agreement.json"}, {}, [] {},
      [&] {
        ordered_json out;
        if (strategies.size() < 2) {
          out = ordered_json{{"skipped", "needs at least two anchor strategies"}};
        } else {
          std::vector<const ReportRecord*> sel =
              stratified_test_records(records, split, cfg.samples_per_cell);
          if (sel.empty()) throw std::runtime_error("agreement: empty test sample");
          std::vector<std::vector<ImportanceVector>> per_strategy;
          for (size_t i = 0; i < strategies.size(); ++i) {
            InferenceEngine eng =
                make_engine(model, graph.quantizers, anchor_sets[anchor_files[i]]);
            std::vector<ImportanceVector> vecs;
            vecs.reserve(sel.size());
            for (const ReportRecord* r : sel) vecs.push_back(infer_report(eng, *r).importance);
            per_strategy.push_back(std::move(vecs));
          }
          AgreementReport agr = top1_agreement(per_strategy);
          out = ordered_json{{"samples", int64_t(sel.size())},
                             {"reference_overall_pct", kAgreementReferencePct},
                             {"report", agr.to_json()}};
        }
        write_json_file(pipe.path("agreement.json"), out);
      });

  stage(
      "latency", {}, {"latency.json", "latency.csv"}, [] {},
      [&] {
        std::vector<ReportRecord> lat;
        for (size_t i = 0; i < records.size() && int(lat.size()) < cfg.latency_samples; ++i)
          if (split.part[i] == int8_t(SplitPart::kTest)) lat.push_back(records[i]);
        if (lat.empty()) throw std::runtime_error("latency: empty test split");
        ordered_json rows = ordered_json::array();
        std::ostringstream csv;
        csv << "strategy,n,mean_ms,std_ms,median_ms\n";
        for (size_t i = 0; i < strategies.size(); ++i) {
          InferenceEngine eng = make_engine(model, graph.quantizers, anchor_sets[anchor_files[i]]);
          LatencyStats st = latency_bench(eng, lat, cfg.latency_warmup);
          rows.push_back(st.to_json());
          csv << st.strategy << "," << st.n << "," << fmt_num(st.mean_ms) << ","
              << fmt_num(st.std_ms) << "," << fmt_num(st.median_ms) << "\n";
        }
        write_json_file(pipe.path("latency.json"),
                        ordered_json{{"warmup", cfg.latency_warmup}, {"rows", rows}});
        write_text_file(pipe.path("latency.csv"), csv.str());
      });

  if (!cfg.prune_strategy.empty()) {
    stage(
        "prune", {"prune_spec.json", "prune_reduction.json", "prune_metrics.json"},
        {"prune_comparison.csv"}, [] {},
        [&] {
          CycleReport rep = prune_cycle_from(records, split, graph, model, train_seconds, table,
                                             cfg.prune_strategy, mc, tc);
          write_json_file(pipe.path("prune_spec.json"), rep.spec.to_json());
          write_json_file(pipe.path("prune_reduction.json"), rep.reduction.to_json());
          ordered_json rows = ordered_json::array();
          for (const CycleRow& r : rep.rows)
            rows.push_back(ordered_json{{"model", r.model},
                                        {"graph", r.graph},
                                        {"edges", r.edges},
                                        {"accuracy_pct", r.accuracy_pct},
                                        {"fp_high_pct", r.fp_high_pct},
                                        {"fn_high_pct", r.fn_high_pct}});
          write_json_file(pipe.path("prune_metrics.json"), ordered_json{{"rows", rows}});
          write_text_file(pipe.path("prune_comparison.csv"), rep.to_csv());
        });
  }

  return pipe.finish();
}

// ---------------------------------------------------------------------------
// export_report
// ---------------------------------------------------------------------------

ordered_json export_report(const std::string& dir) {
  std::string mpath = dir + "/manifest.json";
  if (!file_exists(mpath))
    throw std::runtime_error("export: incomplete experiment directory, missing: manifest.json");
  ordered_json manifest = ordered_json::parse(read_text_file(mpath));

  std::vector<std::string> missing;
  if (!manifest.value("complete", false)) missing.push_back("<final manifest: run incomplete>");
  for (const ordered_json& e : manifest.at("stages")) {
    for (const ordered_json& a : e.at("artifacts")) {
      std::string p = a.at("path").get<std::string>();
      if (!file_exists(dir + "/" + p)) missing.push_back(p);
    }
    for (const ordered_json& f : e.at("timing_files")) {
      std::string p = f.get<std::string>();
      if (!file_exists(dir + "/" + p)) missing.push_back(p);
    }
  }
  if (!missing.empty())
    throw std::runtime_error("export: incomplete experiment directory, missing: " +
                             join(missing, ", "));

  std::string ex = dir + "/export";
  ensure_dir(ex);
  ensure_dir(ex + "/plotdata");
  std::vector<std::string> produced;
  auto emit = [&](const std::string& rel, const std::string& text) {
    write_text_file(ex + "/" + rel, text);
    produced.push_back("export/" + rel);
  };

  // Latency table + plot series.
  {
    ordered_json lat = ordered_json::parse(read_text_file(dir + "/latency.json"));
    std::ostringstream tbl, plot;
    tbl << "strategy,n,mean_ms,std_ms,median_ms\n";
    plot << "series,x,y\n";
    for (const ordered_json& r : lat.at("rows")) {
      std::string s = r.at("strategy").get<std::string>();
      tbl << s << "," << r.at("n").get<int64_t>() << "," << fmt_num(r.at("mean_ms").get<double>())
          << "," << fmt_num(r.at("std_ms").get<double>()) << ","
          << fmt_num(r.at("median_ms").get<double>()) << "\n";
      plot << "mean_ms," << s << "," << fmt_num(r.at("mean_ms").get<double>()) << "\n";
      plot << "median_ms," << s << "," << fmt_num(r.at("median_ms").get<double>()) << "\n";
    }
    emit("latency_table.csv", tbl.str());
    emit("plotdata/latency.csv", plot.str());
  }

  // Agreement table + plot series.
  {
    ordered_json agr = ordered_json::parse(read_text_file(dir + "/agreement.json"));
    std::ostringstream tbl, plot;
    tbl << "scope,key,agreement_pct\n";
    plot << "series,x,y\n";
    if (agr.contains("report")) {
      const ordered_json& rep = agr.at("report");
      tbl << "overall,overall," << fmt_num(rep.at("overall_pct").get<double>()) << "\n";
      plot << "overall,overall," << fmt_num(rep.at("overall_pct").get<double>()) << "\n";
      for (auto& [key, val] : rep.at("by_risk").items())
        if (!val.is_null()) {
          tbl << "risk," << key << "," << fmt_num(val.get<double>()) << "\n";
          plot << "risk," << key << "," << fmt_num(val.get<double>()) << "\n";
        }
      for (auto& [key, val] : rep.at("by_category").items())
        if (!val.is_null()) {
          tbl << "category," << key << "," << fmt_num(val.get<double>()) << "\n";
          plot << "category," << key << "," << fmt_num(val.get<double>()) << "\n";
        }
    }
    emit("agreement_table.csv", tbl.str());
    emit("plotdata/agreement.csv", plot.str());
  }

  // Importance top-3 table + plot series.
  {
    ImportanceTable table =
        ImportanceTable::from_json(ordered_json::parse(read_text_file(dir + "/importance_table.json")));
    std::ostringstream tbl, plot;
    tbl << "category,risk,rank,type,mean_importance\n";
    plot << "series,x,y\n";
    for (int c = 0; c < kCategoryCount; ++c)
      for (int r = 0; r < kRiskCount; ++r) {
        const ImportanceCell* cell = table.cell(Category(c), Risk(r));
        if (!cell) continue;
        std::vector<NodeType> top = top_k_types(*cell, 3);
        for (size_t rank = 0; rank < top.size(); ++rank) {
          double mean = cell->mean[size_t(top[rank])];
          tbl << category_info(Category(c)).id << "," << risk_name(Risk(r)) << "," << rank + 1
              << "," << node_type_name(top[rank]) << "," << fmt_num(mean) << "\n";
          plot << category_info(Category(c)).id << ":" << risk_name(Risk(r)) << ","
               << node_type_name(top[rank]) << "," << fmt_num(mean) << "\n";
        }
      }
    emit("importance_top3.csv", tbl.str());
    emit("plotdata/importance.csv", plot.str());
  }

  // Model x graph table + plot series.
  {
    std::ostringstream tbl, plot;
    tbl << "model,graph,edges,accuracy,fp_high,fn_high\n";
    plot << "series,x,y\n";
    auto add_row = [&](const std::string& model, const std::string& graph, int64_t edges,
                       double acc, double fp, double fn) {
      tbl << model << "," << graph << "," << edges << "," << fmt_num(acc) << "," << fmt_num(fp)
          << "," << fmt_num(fn) << "\n";
      std::string series = model + ":" + graph;
      plot << series << ",edges," << edges << "\n";
      plot << series << ",accuracy," << fmt_num(acc) << "\n";
      plot << series << ",fp_high," << fmt_num(fp) << "\n";
      plot << series << ",fn_high," << fmt_num(fn) << "\n";
    };
    if (file_exists(dir + "/prune_metrics.json")) {
      ordered_json pm = ordered_json::parse(read_text_file(dir + "/prune_metrics.json"));
      for (const ordered_json& r : pm.at("rows"))
        add_row(r.at("model").get<std::string>(), r.at("graph").get<std::string>(),
                r.at("edges").get<int64_t>(), r.at("accuracy_pct").get<double>(),
                r.at("fp_high_pct").get<double>(), r.at("fn_high_pct").get<double>());
    } else {
      ordered_json mj = ordered_json::parse(read_text_file(dir + "/metrics.json"));
      const ordered_json& m = mj.at("metrics");
      double fp = m.at("fp_high_pct").is_null() ? 100.0 : m.at("fp_high_pct").get<double>();
      double fn = m.at("fn_high_pct").is_null() ? 100.0 : m.at("fn_high_pct").get<double>();
      add_row(mj.at("model").get<std::string>(), mj.at("graph").get<std::string>(),
              mj.at("edges").get<int64_t>(), m.at("accuracy_pct").get<double>(), fp, fn);
    }
    emit("model_graph_table.csv", tbl.str());
    emit("plotdata/model_graph.csv", plot.str());
  }

  ordered_json files = ordered_json::array();
  for (const std::string& p : produced)
    files.push_back(ordered_json{{"path", p}, {"sha256", sha256_file_hex(dir + "/" + p)}});
  ordered_json out{{"format", "riskgraph-export-v1"}, {"files", files}};
  write_json_file(ex + "/export_manifest.json", out);
  return out;
}

}  // namespace riskgraph
