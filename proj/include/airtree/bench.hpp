#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "airtree/dataset.hpp"
#include "airtree/hybrid.hpp"
#include "airtree/rtree.hpp"
#include "airtree/workload.hpp"

namespace airtree {

// Where the benchmark's points come from: a CSV file or the deterministic
// synthesizer.
struct DatasetSource {
  enum class Kind { kSynthetic, kCsv };

  Kind kind = Kind::kSynthetic;
  // synthetic
  std::size_t count = 100000;
  PointDistribution distribution = PointDistribution::kGaussianClusters;
  std::uint32_t clusters = 4;
  // csv
  std::filesystem::path csv_path;
  CsvOptions csv;

  std::string label() const;  // dataset column in logs
};

// One config drives every subcommand. The master seed fans out to each
// stochastic stage through fixed derivation streams, so (config, seed)
// pins every output byte except wall-clock timing fields.
struct BenchConfig {
  DatasetSource dataset;
  RTreeConfig rtree;
  WorkloadSpec workload;  // rng_seed is ignored; the master seed drives it
  double tau = 0.75;
  std::uint32_t max_grid = AiTree::kDefaultMaxGrid;
  CostModel cost;
  std::uint32_t router_trees = RandomForest::kDefaultTrees;
  double test_fraction = 0.2;  // router held-out split
  bool train_union = false;    // one bundle on the pooled workload
  std::uint32_t reps = 3;      // timing repetitions per query
  std::uint32_t threads = 0;   // bench worker threads; 0 = auto, 1 = serial
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";

  void validate() const;

  std::uint64_t dataset_seed() const;
  std::uint64_t workload_seed() const;
  std::uint64_t router_seed() const;
  std::uint64_t split_seed() const;

  // JSON round-trip; unknown keys are rejected (UsageError) so config
  // typos fail loudly. Absent keys keep their current values, which is how
  // a --config file overrides command-line flags.
  void merge_json_text(const std::string& text);
  static BenchConfig from_json_text(const std::string& text);
  static BenchConfig from_json_file(const std::filesystem::path& path);
  std::string to_json_text() const;
};

// Synthesizes or ingests the configured dataset.
Dataset load_dataset(const BenchConfig& config);

struct BuildResult {
  std::size_t point_count = 0;
  std::uint32_t leaf_count = 0;
  std::size_t tree_size_bytes = 0;
  std::uint64_t tree_fingerprint = 0;
};

struct GenBucket {
  double alpha_target = 0.0;
  std::size_t fill = 0;
  double mean_alpha = 0.0;
  double mean_selectivity = 0.0;
  std::string file;  // empty when the bucket came back empty
};

struct GenResult {
  std::vector<GenBucket> buckets;
  std::size_t total = 0;
  std::uint64_t workload_fingerprint = 0;
  std::vector<std::string> warnings;
};

struct TrainBucket {
  std::string name;  // alpha target rendered as text, or "union"
  std::uint32_t grid_dim = 0;
  double training_fit = 0.0;
  std::size_t model_bytes = 0;
  std::string dir;
};

struct TrainResult {
  std::vector<TrainBucket> buckets;
  double router_holdout_accuracy = 0.0;
  double majority_baseline = 0.0;  // majority-class share of the held-out set
  std::size_t router_bytes = 0;
  std::size_t ml_total_bytes = 0;  // bundles + router
  std::vector<std::string> warnings;
};

struct BenchAggregate {
  double alpha_target = 0.0;
  std::string variant;  // rtree | aitree | hybrid
  std::size_t query_count = 0;
  double mean_leaf_accesses = 0.0;
  double mean_result_count = 0.0;
  double mean_total_ms = 0.0;
  double median_total_ms = 0.0;
  double speedup_vs_rtree = 1.0;  // rtree mean total / this variant's mean total
};

struct BenchResult {
  std::vector<BenchAggregate> rows;
  std::size_t queries_run = 0;
  std::filesystem::path perquery_csv;
  std::filesystem::path summary_csv;
  std::filesystem::path table_txt;
};

struct ReportResult {
  std::filesystem::path time_csv;
  std::filesystem::path sizes_csv;
  std::size_t aggregate_rows = 0;
  std::vector<std::string> missing;  // run dirs lacking logs
};

// Subcommand bodies. Each reads/writes config.out_dir and narrates to
// `log`; results carry the numbers tests assert on. Artifact mismatches
// throw DataError, config problems UsageError, and cmd_bench throws
// CorrectnessError the moment any query's three answers disagree.
BuildResult cmd_build(const BenchConfig& config, std::ostream& log);
GenResult cmd_gen(const BenchConfig& config, bool verify, std::ostream& log);
TrainResult cmd_train(const BenchConfig& config, std::ostream& log);
BenchResult cmd_bench(const BenchConfig& config, std::ostream& log);
ReportResult cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                        const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace airtree
