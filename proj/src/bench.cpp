#include "airtree/bench.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "airtree/errors.hpp"
#include "airtree/rng.hpp"
#include "airtree/serialize.hpp"

namespace airtree {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng::mix(seed ^ stream * 0x9e3779b97f4a7c15ull);
}

std::string alpha_name(double target) { return format_double(target); }

void expect_keys(const json& j, std::initializer_list<const char*> keys, const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw UsageError("config: unknown key \"" + item.key() + "\" in " + where);
    }
  }
}

json read_json_artifact(const std::filesystem::path& path, const char* what) {
  if (!std::filesystem::exists(path)) {
    throw DataError(std::string(what) + " missing: " + path.string() +
                    " (run the earlier pipeline stage first)");
  }
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + " unreadable: " + e.what());
  }
}

// --- result-set comparison against the brute-force oracle ---------------

std::vector<Point> sorted_points(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  return pts;
}

std::vector<Point> brute_range(const std::vector<Point>& pts, const Rect& q) {
  std::vector<Point> hits;
  for (const Point& p : pts) {
    if (q.contains(p)) hits.push_back(p);
  }
  return sorted_points(std::move(hits));
}

// --- small statistics ----------------------------------------------------

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += (x - mean) * (x - mean);
  return std::sqrt(sum / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

// --- config --------------------------------------------------------------

std::string DatasetSource::label() const {
  if (kind == Kind::kCsv) return csv_path.stem().string();
  const char* dist = distribution == PointDistribution::kUniform ? "uniform" : "clusters";
  return std::string(dist) + "-" + std::to_string(count);
}

void BenchConfig::validate() const {
  if (dataset.kind == DatasetSource::Kind::kSynthetic) {
    if (dataset.count == 0) throw UsageError("dataset: synthetic count must be positive");
    if (dataset.distribution == PointDistribution::kGaussianClusters && dataset.clusters == 0) {
      throw UsageError("dataset: clusters must be positive");
    }
  } else if (dataset.csv_path.empty()) {
    throw UsageError("dataset: csv source needs a path");
  }
  rtree.resolved();  // throws UsageError on a bad M/m pair
  if (!(tau > 0.0 && tau < 1.0)) throw UsageError("tau must lie in (0,1)");
  if (max_grid < 2) throw UsageError("max_grid must be at least 2");
  cost.validate();
  if (router_trees == 0) throw UsageError("router_trees must be positive");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw UsageError("test_fraction must lie in [0,1)");
  }
  if (reps == 0) throw UsageError("reps must be positive");
  if (out_dir.empty()) throw UsageError("out_dir must not be empty");
}

std::uint64_t BenchConfig::dataset_seed() const { return derive_seed(seed, 1); }
std::uint64_t BenchConfig::workload_seed() const { return derive_seed(seed, 2); }
std::uint64_t BenchConfig::router_seed() const { return derive_seed(seed, 3); }
std::uint64_t BenchConfig::split_seed() const { return derive_seed(seed, 4); }

void BenchConfig::merge_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }

  try {
    expect_keys(j,
                {"dataset", "rtree", "workload", "tau", "max_grid", "io_ms_per_leaf",
                 "router_trees", "test_fraction", "train_union", "reps", "threads", "seed",
                 "out_dir"},
                "config");

    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      expect_keys(d,
                  {"kind", "count", "distribution", "clusters", "path", "x_column", "y_column",
                   "delimiter", "head_limit", "has_header"},
                  "dataset");
      const std::string kind = d.value("kind", std::string("synthetic"));
      if (kind == "synthetic") {
        dataset.kind = DatasetSource::Kind::kSynthetic;
        dataset.count = d.value("count", dataset.count);
        if (d.contains("distribution")) {
          const std::string dist = d.at("distribution");
          if (dist == "uniform") {
            dataset.distribution = PointDistribution::kUniform;
          } else if (dist == "clusters") {
            dataset.distribution = PointDistribution::kGaussianClusters;
          } else {
            throw UsageError("dataset: unknown distribution \"" + dist + "\"");
          }
        }
        dataset.clusters = d.value("clusters", dataset.clusters);
      } else if (kind == "csv") {
        dataset.kind = DatasetSource::Kind::kCsv;
        dataset.csv_path = d.value("path", dataset.csv_path.string());
        dataset.csv.x_column = d.value("x_column", dataset.csv.x_column);
        dataset.csv.y_column = d.value("y_column", dataset.csv.y_column);
        if (d.contains("delimiter")) {
          const std::string delim = d.at("delimiter");
          if (delim.size() != 1) throw UsageError("dataset: delimiter must be one character");
          dataset.csv.delimiter = delim[0];
        }
        dataset.csv.head_limit = d.value("head_limit", dataset.csv.head_limit);
        if (d.contains("has_header") && !d.at("has_header").is_null()) {
          dataset.csv.has_header = d.at("has_header").get<bool>();
        }
      } else {
        throw UsageError("dataset: unknown kind \"" + kind + "\"");
      }
    }

    if (j.contains("rtree")) {
      const json& r = j.at("rtree");
      expect_keys(r, {"max_entries", "min_entries"}, "rtree");
      rtree.max_entries = r.value("max_entries", rtree.max_entries);
      rtree.min_entries = r.value("min_entries", rtree.min_entries);
    }

    if (j.contains("workload")) {
      const json& w = j.at("workload");
      expect_keys(w, {"selectivity", "query_count", "alpha_targets", "alpha_tolerance"},
                  "workload");
      workload.selectivity = w.value("selectivity", workload.selectivity);
      workload.query_count = w.value("query_count", workload.query_count);
      if (w.contains("alpha_targets")) {
        workload.alpha_targets = w.at("alpha_targets").get<std::vector<double>>();
      }
      workload.alpha_tolerance = w.value("alpha_tolerance", workload.alpha_tolerance);
    }

    tau = j.value("tau", tau);
    max_grid = j.value("max_grid", max_grid);
    cost.io_ms_per_leaf = j.value("io_ms_per_leaf", cost.io_ms_per_leaf);
    router_trees = j.value("router_trees", router_trees);
    test_fraction = j.value("test_fraction", test_fraction);
    train_union = j.value("train_union", train_union);
    reps = j.value("reps", reps);
    threads = j.value("threads", threads);
    seed = j.value("seed", seed);
    out_dir = j.value("out_dir", out_dir.string());
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  validate();
}

BenchConfig BenchConfig::from_json_text(const std::string& text) {
  BenchConfig config;
  config.merge_json_text(text);
  return config;
}

BenchConfig BenchConfig::from_json_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return from_json_text(text);
}

std::string BenchConfig::to_json_text() const {
  json d;
  if (dataset.kind == DatasetSource::Kind::kSynthetic) {
    d["kind"] = "synthetic";
    d["count"] = dataset.count;
    d["distribution"] =
        dataset.distribution == PointDistribution::kUniform ? "uniform" : "clusters";
    d["clusters"] = dataset.clusters;
  } else {
    d["kind"] = "csv";
    d["path"] = dataset.csv_path.string();
    d["x_column"] = dataset.csv.x_column;
    d["y_column"] = dataset.csv.y_column;
    d["delimiter"] = std::string(1, dataset.csv.delimiter);
    d["head_limit"] = dataset.csv.head_limit;
    if (dataset.csv.has_header.has_value()) {
      d["has_header"] = *dataset.csv.has_header;
    } else {
      d["has_header"] = nullptr;
    }
  }

  json j;
  j["dataset"] = std::move(d);
  j["rtree"] = {{"max_entries", rtree.max_entries}, {"min_entries", rtree.min_entries}};
  j["workload"] = {{"selectivity", workload.selectivity},
                   {"query_count", workload.query_count},
                   {"alpha_targets", workload.alpha_targets},
                   {"alpha_tolerance", workload.alpha_tolerance}};
  j["tau"] = tau;
  j["max_grid"] = max_grid;
  j["io_ms_per_leaf"] = cost.io_ms_per_leaf;
  j["router_trees"] = router_trees;
  j["test_fraction"] = test_fraction;
  j["train_union"] = train_union;
  j["reps"] = reps;
  j["threads"] = threads;
  j["seed"] = seed;
  j["out_dir"] = out_dir.string();
  return j.dump(2) + "\n";
}

Dataset load_dataset(const BenchConfig& config) {
  if (config.dataset.kind == DatasetSource::Kind::kCsv) {
    return ingest_csv(config.dataset.csv_path, config.dataset.csv);
  }
  return synth_points(config.dataset.count, config.dataset.distribution, config.dataset_seed(),
                      config.dataset.clusters);
}

// --- build ---------------------------------------------------------------

BuildResult cmd_build(const BenchConfig& config, std::ostream& log) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);

  Dataset ds = load_dataset(config);
  RTree tree(config.rtree);
  for (const Point& p : ds.points) tree.insert(p);
  tree.assign_leaf_ids();
  tree.save_file(config.out_dir / "rtree.bin");

  BuildResult result;
  result.point_count = ds.points.size();
  result.leaf_count = tree.leaf_count();
  result.tree_size_bytes = tree.size_bytes();
  result.tree_fingerprint = tree.fingerprint();

  json meta;
  meta["format"] = "airtree build";
  meta["version"] = 1;
  // The echo records what shaped the artifact bytes; where the run directory
  // lives is not part of that, and same-seed runs in different directories
  // must stay byte-identical.
  json config_echo = json::parse(config.to_json_text());
  config_echo.erase("out_dir");
  meta["config"] = config_echo;
  meta["dataset"] = config.dataset.label();
  meta["dataset_fingerprint"] = hex64(ds.fingerprint());
  meta["point_count"] = result.point_count;
  meta["leaf_count"] = result.leaf_count;
  meta["tree_size_bytes"] = result.tree_size_bytes;
  meta["tree_fingerprint"] = hex64(result.tree_fingerprint);
  write_file(config.out_dir / "build.json", meta.dump(2) + "\n");

  log << "build: " << result.point_count << " points -> " << result.leaf_count << " leaves, "
      << result.tree_size_bytes << " bytes (M=" << config.rtree.resolved().max_entries << ")\n";
  return result;
}

namespace {

// Loads the snapshot pair (dataset, tree) and cross-checks both against
// build.json so a config edited after `build` fails loudly.
struct Snapshot {
  Dataset ds;
  RTree tree;
};

Snapshot load_snapshot(const BenchConfig& config) {
  const json build = read_json_artifact(config.out_dir / "build.json", "build metadata");
  Snapshot snap{load_dataset(config), RTree::load_file(config.out_dir / "rtree.bin")};
  try {
    if (parse_hex64(build.at("dataset_fingerprint")) != snap.ds.fingerprint()) {
      throw DataError("snapshot was built from a different dataset; re-run build");
    }
    if (parse_hex64(build.at("tree_fingerprint")) != snap.tree.fingerprint()) {
      throw DataError("rtree.bin does not match build.json; re-run build");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("build metadata malformed: ") + e.what());
  }
  return snap;
}

}  // namespace

// --- gen -----------------------------------------------------------------

GenResult cmd_gen(const BenchConfig& config, bool verify, std::ostream& log) {
  config.validate();
  Snapshot snap = load_snapshot(config);

  WorkloadSpec spec = config.workload;
  spec.rng_seed = config.workload_seed();

  GenResult result;
  std::vector<LabeledQuery> queries = synth_queries(snap.ds, snap.tree, spec, &result.warnings);
  result.total = queries.size();
  result.workload_fingerprint = ::airtree::workload_fingerprint(queries);

  std::vector<std::vector<LabeledQuery>> buckets(spec.alpha_targets.size());
  for (const LabeledQuery& q : queries) {
    const int b = bucket_of(q.alpha, spec);
    if (b < 0) throw DataError("generated query fell outside every alpha bucket");
    buckets[static_cast<std::size_t>(b)].push_back(q);
  }

  json bucket_meta = json::array();
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    GenBucket gb;
    gb.alpha_target = spec.alpha_targets[i];
    gb.fill = buckets[i].size();
    if (!buckets[i].empty()) {
      double alpha_sum = 0.0;
      double sel_sum = 0.0;
      for (const LabeledQuery& q : buckets[i]) {
        alpha_sum += q.alpha;
        sel_sum += q.selectivity_actual;
      }
      gb.mean_alpha = alpha_sum / static_cast<double>(gb.fill);
      gb.mean_selectivity = sel_sum / static_cast<double>(gb.fill);
      gb.file = "workload_alpha_" + alpha_name(gb.alpha_target) + ".txt";
      save_workload(config.out_dir / gb.file, buckets[i]);
    }
    log << "gen: bucket " << alpha_name(gb.alpha_target) << " -> " << gb.fill << " queries";
    if (gb.fill > 0) {
      log << " (mean alpha " << format_double(gb.mean_alpha) << ", mean selectivity "
          << format_double(gb.mean_selectivity) << ")";
    }
    log << "\n";
    bucket_meta.push_back({{"alpha_target", gb.alpha_target},
                           {"file", gb.file},
                           {"fill", gb.fill},
                           {"mean_alpha", gb.mean_alpha},
                           {"mean_selectivity", gb.mean_selectivity}});
    result.buckets.push_back(std::move(gb));
  }
  for (const std::string& w : result.warnings) log << "warning: " << w << "\n";

  json meta;
  meta["format"] = "airtree gen";
  meta["version"] = 1;
  meta["tree_fingerprint"] = hex64(snap.tree.fingerprint());
  meta["workload_fingerprint"] = hex64(result.workload_fingerprint);
  meta["total"] = result.total;
  meta["buckets"] = std::move(bucket_meta);
  meta["warnings"] = result.warnings;
  write_file(config.out_dir / "gen.json", meta.dump(2) + "\n");

  if (verify) {
    std::size_t checked = 0;
    for (std::size_t i = 0; i < buckets.size(); ++i) {
      if (buckets[i].empty()) continue;
      const auto reloaded = load_workload(config.out_dir / result.buckets[i].file);
      if (reloaded != buckets[i]) {
        throw DataError("workload verification failed: " + result.buckets[i].file +
                        " did not round-trip");
      }
      for (const LabeledQuery& q : reloaded) {
        QueryTrace trace = snap.tree.range_query(q.rect);
        const auto tn = static_cast<std::uint32_t>(trace.true_leaves.size());
        const auto vn = static_cast<std::uint32_t>(trace.visited_leaves.size());
        std::vector<std::uint32_t> true_ids = trace.true_leaves;
        std::sort(true_ids.begin(), true_ids.end());
        if (tn != q.tn || vn != q.vn || true_ids != q.true_leaf_ids ||
            q.alpha != static_cast<double>(tn) / static_cast<double>(vn)) {
          throw DataError("workload verification failed: persisted labels disagree with "
                          "the tree for a query in " +
                          result.buckets[i].file);
        }
        ++checked;
      }
    }
    log << "verify: " << checked << " queries re-derived exactly\n";
  }
  return result;
}

// --- train ---------------------------------------------------------------

namespace {

struct LoadedWorkload {
  std::vector<double> targets;                     // ascending, nonempty buckets only
  std::vector<std::vector<LabeledQuery>> buckets;  // parallel to targets
  std::vector<LabeledQuery> pooled;                // ascending-bucket order
};

LoadedWorkload load_buckets(const BenchConfig& config, const RTree& tree) {
  const json gen = read_json_artifact(config.out_dir / "gen.json", "workload metadata");
  LoadedWorkload w;
  try {
    if (parse_hex64(gen.at("tree_fingerprint")) != tree.fingerprint()) {
      throw DataError("workloads were generated against a different R-tree snapshot; "
                      "re-run gen");
    }
    for (const json& b : gen.at("buckets")) {
      if (b.at("fill").get<std::size_t>() == 0) continue;
      w.targets.push_back(b.at("alpha_target").get<double>());
      w.buckets.push_back(load_workload(config.out_dir / b.at("file").get<std::string>()));
      w.pooled.insert(w.pooled.end(), w.buckets.back().begin(), w.buckets.back().end());
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("workload metadata malformed: ") + e.what());
  }
  if (w.pooled.empty()) throw DataError("no workload buckets to train on; re-run gen");
  return w;
}

}  // namespace

TrainResult cmd_train(const BenchConfig& config, std::ostream& log) {
  config.validate();
  Snapshot snap = load_snapshot(config);
  LoadedWorkload w = load_buckets(config, snap.tree);
  const Rect bounds = snap.tree.bounds();

  TrainResult result;
  json bucket_meta = json::array();
  auto fit_one = [&](const std::string& name, const std::vector<LabeledQuery>& queries) {
    AiTree ai = AiTree::fit(queries, snap.tree, bounds, config.max_grid, &result.warnings);
    TrainBucket tb;
    tb.name = name;
    tb.grid_dim = ai.grid().grid_dim();
    tb.training_fit = ai.training_fit();
    tb.model_bytes = ai.size_bytes();
    tb.dir = "ai_" + name;
    ai.save_bundle(config.out_dir / tb.dir);
    log << "train: " << name << " -> grid " << tb.grid_dim << "x" << tb.grid_dim << ", fit "
        << format_double(tb.training_fit) << ", " << tb.model_bytes << " bytes\n";
    bucket_meta.push_back({{"name", tb.name},
                           {"dir", tb.dir},
                           {"grid_dim", tb.grid_dim},
                           {"training_fit", tb.training_fit},
                           {"model_bytes", tb.model_bytes}});
    result.buckets.push_back(tb);
  };

  if (config.train_union) {
    fit_one("union", w.pooled);
  } else {
    for (std::size_t i = 0; i < w.targets.size(); ++i) {
      fit_one("alpha_" + alpha_name(w.targets[i]), w.buckets[i]);
    }
  }

  const auto binary = make_binary_training(w.pooled, config.tau);
  BinarySplit split = stratified_split(binary, config.test_fraction, config.split_seed());
  RandomForest router = train_forest(split.train, config.router_trees, config.router_seed());
  router.save_file(config.out_dir / "router.bin");

  const std::vector<BinaryExample>& eval = split.test.empty() ? split.train : split.test;
  if (split.test.empty()) {
    result.warnings.push_back("test_fraction left no held-out set; router accuracy is "
                              "measured on the training set");
    log << "warning: " << result.warnings.back() << "\n";
  }
  result.router_holdout_accuracy = binary_accuracy(router, eval);
  std::size_t zeros = 0;
  for (const BinaryExample& e : eval) zeros += e.label == 0 ? 1 : 0;
  result.majority_baseline =
      static_cast<double>(std::max(zeros, eval.size() - zeros)) / static_cast<double>(eval.size());
  result.router_bytes = router.size_bytes();
  result.ml_total_bytes = result.router_bytes;
  for (const TrainBucket& tb : result.buckets) result.ml_total_bytes += tb.model_bytes;

  log << "router: " << config.router_trees << " trees, " << result.router_bytes
      << " bytes, held-out accuracy " << format_double(result.router_holdout_accuracy)
      << " (majority baseline " << format_double(result.majority_baseline) << ")\n";
  log << "ml total: " << result.ml_total_bytes << " bytes ("
      << format_double(100.0 * static_cast<double>(result.ml_total_bytes) /
                       static_cast<double>(snap.tree.size_bytes()))
      << "% of the rtree)\n";

  json meta;
  meta["format"] = "airtree train";
  meta["version"] = 1;
  meta["tree_fingerprint"] = hex64(snap.tree.fingerprint());
  meta["tau_bits"] = hex64(std::bit_cast<std::uint64_t>(config.tau));
  meta["tau"] = config.tau;
  meta["train_union"] = config.train_union;
  meta["buckets"] = std::move(bucket_meta);
  meta["router"] = {{"file", "router.bin"},
                    {"fingerprint", hex64(router.fingerprint())},
                    {"trees", config.router_trees},
                    {"bytes", result.router_bytes},
                    {"holdout_accuracy", result.router_holdout_accuracy},
                    {"majority_baseline", result.majority_baseline},
                    {"train_examples", split.train.size()},
                    {"test_examples", split.test.size()}};
  meta["ml_total_bytes"] = result.ml_total_bytes;
  meta["warnings"] = result.warnings;
  write_file(config.out_dir / "train.json", meta.dump(2) + "\n");

  // model-size table mirroring the per-alpha layout of the benchmark report
  const std::string sel = format_double(config.workload.selectivity);
  const std::string m = std::to_string(config.rtree.resolved().max_entries);
  const std::string rtree_bytes = std::to_string(snap.tree.size_bytes());
  std::ostringstream sizes;
  sizes << "selectivity,M,alpha_target,rtree_bytes,ml_bytes\n";
  for (const TrainBucket& tb : result.buckets) {
    sizes << sel << "," << m << "," << tb.name << "," << rtree_bytes << "," << tb.model_bytes
          << "\n";
  }
  sizes << sel << "," << m << ",router," << rtree_bytes << "," << result.router_bytes << "\n";
  sizes << sel << "," << m << ",total," << rtree_bytes << "," << result.ml_total_bytes << "\n";
  write_file(config.out_dir / "model_sizes.csv", sizes.str());
  return result;
}

// --- bench ---------------------------------------------------------------

namespace {

constexpr const char* kPerQueryHeader =
    "dataset,selectivity,M,alpha_target,query_id,variant,result_count,leaf_accesses,io_ms,"
    "route,ai_path,predict_ms_mean,predict_ms_stddev,cpu_ms_mean,cpu_ms_stddev,total_ms_mean,"
    "total_ms_stddev";

constexpr const char* kSummaryHeader =
    "dataset,selectivity,M,alpha_target,variant,query_count,mean_leaf_accesses,"
    "mean_result_count,mean_total_ms,median_total_ms,speedup_vs_rtree";

struct VariantCells {
  std::size_t result_count = 0;
  std::size_t leaf_accesses = 0;
  double io_ms = 0.0;
  std::string route;    // hybrid only
  std::string ai_path;  // ai-touching variants only
  double predict_mean = 0.0;
  double predict_sd = 0.0;
  double cpu_mean = 0.0;
  double cpu_sd = 0.0;
  double total_mean = 0.0;
  double total_sd = 0.0;
};

struct QueryOutcomeRows {
  std::array<VariantCells, 3> cells;  // rtree, aitree, hybrid
  std::string mismatch;               // empty when the three answers agree
};

constexpr std::array<const char*, 3> kVariants{"rtree", "aitree", "hybrid"};

VariantCells summarize(std::size_t result_count, std::size_t accesses, double io_rate,
                       const std::vector<double>& predict, const std::vector<double>& cpu) {
  VariantCells cells;
  cells.result_count = result_count;
  cells.leaf_accesses = accesses;
  cells.io_ms = static_cast<double>(accesses) * io_rate;
  cells.predict_mean = mean_of(predict);
  cells.predict_sd = stddev_of(predict, cells.predict_mean);
  cells.cpu_mean = mean_of(cpu);
  cells.cpu_sd = stddev_of(cpu, cells.cpu_mean);
  // the accounting identity total = cpu + predict + io holds exactly
  cells.total_mean = cells.cpu_mean + cells.predict_mean + cells.io_ms;
  std::vector<double> totals(predict.size());
  for (std::size_t r = 0; r < predict.size(); ++r) totals[r] = cpu[r] + predict[r] + cells.io_ms;
  cells.total_sd = stddev_of(totals, cells.total_mean);
  return cells;
}

QueryOutcomeRows run_query(const Dataset& ds, const RTree& tree, const AiTree& ai,
                           const HybridIndex& hybrid, const Rect& q, std::uint32_t reps,
                           double io_rate) {
  QueryOutcomeRows out;
  const std::vector<Point> want = brute_range(ds.points, q);

  std::vector<double> predict(reps, 0.0);
  std::vector<double> cpu(reps, 0.0);

  QueryTrace trace;
  for (std::uint32_t r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    trace = tree.range_query(q);
    cpu[r] = ms_since(t0);
  }
  out.cells[0] = summarize(trace.results.size(), trace.leaf_accesses, io_rate, predict, cpu);

  AiQueryOutcome ai_out;
  for (std::uint32_t r = 0; r < reps; ++r) {
    ai_out = ai.query(q);
    predict[r] = ai_out.predict_ms;
    cpu[r] = ai_out.cpu_ms;
  }
  out.cells[1] = summarize(ai_out.results.size(), ai_out.leaf_accesses, io_rate, predict, cpu);
  out.cells[1].ai_path = to_string(ai_out.path);

  CostReport report;
  std::vector<Point> hybrid_results;
  for (std::uint32_t r = 0; r < reps; ++r) {
    auto [results, rep] = hybrid.query(q);
    report = rep;
    hybrid_results = std::move(results);
    predict[r] = rep.predict_ms;
    cpu[r] = rep.cpu_ms;
  }
  out.cells[2] = summarize(report.result_count, report.leaf_accesses, io_rate, predict, cpu);
  out.cells[2].route = to_string(report.route);
  if (report.route == Route::kAi) out.cells[2].ai_path = to_string(report.ai_path);

  const auto rtree_pts = sorted_points(trace.results);
  const auto ai_pts = sorted_points(ai_out.results);
  const auto hybrid_pts = sorted_points(std::move(hybrid_results));
  if (rtree_pts != want || ai_pts != want || hybrid_pts != want) {
    std::ostringstream note;
    note << "rect [" << format_double(q.xmin) << ", " << format_double(q.ymin) << ", "
         << format_double(q.xmax) << ", " << format_double(q.ymax) << "] brute=" << want.size()
         << " rtree=" << rtree_pts.size() << " aitree=" << ai_pts.size()
         << " hybrid=" << hybrid_pts.size();
    out.mismatch = note.str();
  }
  return out;
}

unsigned resolve_threads(std::uint32_t configured) {
  if (configured != 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : std::min(hw, 8u);
}

}  // namespace

BenchResult cmd_bench(const BenchConfig& config, std::ostream& log) {
  config.validate();
  Snapshot snap = load_snapshot(config);
  LoadedWorkload w = load_buckets(config, snap.tree);

  const json train = read_json_artifact(config.out_dir / "train.json", "training metadata");
  RandomForest router;
  bool union_model = false;
  std::map<std::string, std::string> bundle_dirs;
  try {
    if (parse_hex64(train.at("tree_fingerprint")) != snap.tree.fingerprint()) {
      throw DataError("models were trained against a different R-tree snapshot; re-run train");
    }
    if (std::bit_cast<double>(parse_hex64(train.at("tau_bits"))) != config.tau) {
      throw DataError("models were trained with a different tau; re-run train");
    }
    union_model = train.at("train_union").get<bool>();
    for (const json& b : train.at("buckets")) {
      bundle_dirs[b.at("name").get<std::string>()] = b.at("dir").get<std::string>();
    }
    router = RandomForest::load_file(config.out_dir /
                                     train.at("router").at("file").get<std::string>());
    if (router.fingerprint() != parse_hex64(train.at("router").at("fingerprint"))) {
      throw DataError("router.bin does not match train.json; re-run train");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("training metadata malformed: ") + e.what());
  }

  const double io_rate = config.cost.io_ms_per_leaf;
  const unsigned threads = resolve_threads(config.threads);
  const std::string dataset_label = config.dataset.label();
  const std::string sel = format_double(config.workload.selectivity);
  const std::string m = std::to_string(config.rtree.resolved().max_entries);

  BenchResult result;
  std::ostringstream perquery;
  perquery << kPerQueryHeader << "\n";

  struct BucketStats {
    std::vector<double> totals;  // per query, per variant
    double access_sum = 0.0;
    double result_sum = 0.0;
  };

  std::ostringstream summary_csv;
  summary_csv << kSummaryHeader << "\n";
  std::ostringstream table;
  table << "dataset " << dataset_label << ", selectivity " << sel << ", M=" << m << ", io "
        << format_double(io_rate) << " ms/leaf, reps " << config.reps << ", threads " << threads
        << "\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-8s %8s %12s %10s %12s %12s %9s\n", "alpha", "variant",
                "queries", "leaf_acc", "results", "mean_ms", "median_ms", "speedup");
  table << line;

  for (std::size_t bi = 0; bi < w.targets.size(); ++bi) {
    const double target = w.targets[bi];
    const std::vector<LabeledQuery>& queries = w.buckets[bi];
    const std::string bundle_name =
        union_model ? std::string("union") : "alpha_" + alpha_name(target);
    const auto dir_it = bundle_dirs.find(bundle_name);
    if (dir_it == bundle_dirs.end()) {
      throw DataError("no trained model for bucket " + alpha_name(target) + "; re-run train");
    }
    AiTree ai = AiTree::load_bundle(config.out_dir / dir_it->second, snap.tree);
    const auto expected_fp = union_model ? ::airtree::workload_fingerprint(w.pooled)
                                         : ::airtree::workload_fingerprint(queries);
    if (ai.workload_fingerprint() != expected_fp) {
      throw DataError("bundle " + dir_it->second +
                      " was trained on a different workload; re-run train");
    }
    HybridIndex hybrid(snap.tree, ai, router, config.tau, config.cost);

    std::vector<QueryOutcomeRows> rows(queries.size());
    auto worker = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        rows[i] = run_query(snap.ds, snap.tree, ai, hybrid, queries[i].rect, config.reps,
                            io_rate);
      }
    };
    if (threads <= 1 || queries.size() < 2) {
      worker(0, queries.size());
    } else {
      const std::size_t n = queries.size();
      const unsigned workers = static_cast<unsigned>(
          std::min<std::size_t>(threads, n));
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (unsigned t = 0; t < workers; ++t) {
        const std::size_t begin = n * t / workers;
        const std::size_t end = n * (t + 1) / workers;
        pool.emplace_back(worker, begin, end);
      }
      for (std::thread& t : pool) t.join();
    }

    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].mismatch.empty()) continue;
      log << "correctness gate: bucket " << alpha_name(target) << " query " << i << ": "
          << rows[i].mismatch << "\n";
      throw CorrectnessError("result sets disagree on bucket " + alpha_name(target) +
                             " query " + std::to_string(i) + " (" + rows[i].mismatch + ")");
    }

    std::array<BucketStats, 3> stats;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t v = 0; v < kVariants.size(); ++v) {
        const VariantCells& c = rows[i].cells[v];
        perquery << dataset_label << "," << sel << "," << m << "," << alpha_name(target) << ","
                 << i << "," << kVariants[v] << "," << c.result_count << "," << c.leaf_accesses
                 << "," << format_double(c.io_ms) << "," << c.route << "," << c.ai_path << ","
                 << format_double(c.predict_mean) << "," << format_double(c.predict_sd) << ","
                 << format_double(c.cpu_mean) << "," << format_double(c.cpu_sd) << ","
                 << format_double(c.total_mean) << "," << format_double(c.total_sd) << "\n";
        stats[v].totals.push_back(c.total_mean);
        stats[v].access_sum += static_cast<double>(c.leaf_accesses);
        stats[v].result_sum += static_cast<double>(c.result_count);
      }
    }

    const double rtree_mean = mean_of(stats[0].totals);
    for (std::size_t v = 0; v < kVariants.size(); ++v) {
      BenchAggregate agg;
      agg.alpha_target = target;
      agg.variant = kVariants[v];
      agg.query_count = queries.size();
      agg.mean_leaf_accesses = stats[v].access_sum / static_cast<double>(queries.size());
      agg.mean_result_count = stats[v].result_sum / static_cast<double>(queries.size());
      agg.mean_total_ms = mean_of(stats[v].totals);
      agg.median_total_ms = median_of(stats[v].totals);
      agg.speedup_vs_rtree = rtree_mean / agg.mean_total_ms;
      summary_csv << dataset_label << "," << sel << "," << m << "," << alpha_name(target) << ","
                  << agg.variant << "," << agg.query_count << ","
                  << format_double(agg.mean_leaf_accesses) << ","
                  << format_double(agg.mean_result_count) << ","
                  << format_double(agg.mean_total_ms) << ","
                  << format_double(agg.median_total_ms) << ","
                  << format_double(agg.speedup_vs_rtree) << "\n";
      std::snprintf(line, sizeof line, "%-8s %-8s %8zu %12.2f %10.1f %12.3f %12.3f %9.2f\n",
                    alpha_name(target).c_str(), agg.variant.c_str(), agg.query_count,
                    agg.mean_leaf_accesses, agg.mean_result_count, agg.mean_total_ms,
                    agg.median_total_ms, agg.speedup_vs_rtree);
      table << line;
      result.rows.push_back(std::move(agg));
    }
    result.queries_run += queries.size();
  }

  result.perquery_csv = config.out_dir / "perquery.csv";
  result.summary_csv = config.out_dir / "bench_summary.csv";
  result.table_txt = config.out_dir / "bench_table.txt";
  write_file(result.perquery_csv, perquery.str());
  write_file(result.summary_csv, summary_csv.str());
  write_file(result.table_txt, table.str());
  log << table.str();
  log << "bench: " << result.queries_run
      << " queries, three-way result equality held for every query\n";
  return result;
}

// --- report ----------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

ReportResult cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                        const std::filesystem::path& out_dir, std::ostream& log) {
  if (run_dirs.empty()) throw UsageError("report: no run directories given");
  std::filesystem::create_directories(out_dir);

  ReportResult result;

  // group: (dataset, selectivity, M, alpha) -> variant -> per-query totals
  struct Group {
    std::map<std::string, std::vector<double>> totals;
    std::map<std::string, double> access_sum;
    std::map<std::string, std::size_t> count;
  };
  std::map<std::array<std::string, 4>, Group> groups;
  std::vector<std::string> size_lines;

  for (const std::filesystem::path& dir : run_dirs) {
    const auto perquery = dir / "perquery.csv";
    if (!std::filesystem::exists(perquery)) {
      result.missing.push_back(perquery.string());
      log << "missing: " << perquery.string() << "\n";
      continue;
    }
    std::istringstream in(read_file(perquery));
    std::string header;
    std::getline(in, header);
    const auto names = split_csv(header);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < names.size(); ++i) col[names[i]] = i;
    for (const char* need : {"dataset", "selectivity", "M", "alpha_target", "variant",
                             "leaf_accesses", "total_ms_mean"}) {
      if (col.find(need) == col.end()) {
        throw DataError("report: " + perquery.string() + " lacks column " + need);
      }
    }
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != names.size()) {
        throw DataError("report: ragged row in " + perquery.string());
      }
      const std::array<std::string, 4> key{cells[col["dataset"]], cells[col["selectivity"]],
                                           cells[col["M"]], cells[col["alpha_target"]]};
      Group& g = groups[key];
      const std::string& variant = cells[col["variant"]];
      g.totals[variant].push_back(std::strtod(cells[col["total_ms_mean"]].c_str(), nullptr));
      g.access_sum[variant] += std::strtod(cells[col["leaf_accesses"]].c_str(), nullptr);
      g.count[variant] += 1;
    }

    const auto sizes = dir / "model_sizes.csv";
    if (!std::filesystem::exists(sizes)) {
      result.missing.push_back(sizes.string());
      log << "missing: " << sizes.string() << "\n";
      continue;
    }
    std::istringstream sin(read_file(sizes));
    std::string sline;
    std::getline(sin, sline);  // header
    while (std::getline(sin, sline)) {
      if (!sline.empty()) size_lines.push_back(sline);
    }
  }

  std::ostringstream time_csv;
  time_csv << "dataset,selectivity,M,alpha_target,variant,query_count,mean_leaf_accesses,"
              "mean_total_ms,median_total_ms,speedup_vs_rtree\n";
  for (const auto& [key, group] : groups) {
    const auto rt = group.totals.find("rtree");
    const double rtree_mean = rt == group.totals.end() ? 0.0 : mean_of(rt->second);
    for (const char* variant : kVariants) {
      const auto it = group.totals.find(variant);
      if (it == group.totals.end()) continue;
      const double mean = mean_of(it->second);
      time_csv << key[0] << "," << key[1] << "," << key[2] << "," << key[3] << "," << variant
               << "," << group.count.at(variant) << ","
               << format_double(group.access_sum.at(variant) /
                                static_cast<double>(group.count.at(variant)))
               << "," << format_double(mean) << "," << format_double(median_of(it->second))
               << "," << format_double(rtree_mean == 0.0 ? 0.0 : rtree_mean / mean) << "\n";
      ++result.aggregate_rows;
    }
  }

  std::ostringstream sizes_csv;
  sizes_csv << "selectivity,M,alpha_target,rtree_bytes,ml_bytes\n";
  for (const std::string& l : size_lines) sizes_csv << l << "\n";

  result.time_csv = out_dir / "report_time_by_alpha.csv";
  result.sizes_csv = out_dir / "report_model_sizes.csv";
  write_file(result.time_csv, time_csv.str());
  write_file(result.sizes_csv, sizes_csv.str());
  log << "report: " << result.aggregate_rows << " aggregate rows from " << run_dirs.size()
      << " run dir(s)\n";
  return result;
}

}  // namespace airtree
