#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "airtree/dataset.hpp"
#include "airtree/geometry.hpp"
#include "airtree/rtree.hpp"

namespace airtree {

// Parameters for synthesizing a fixed-selectivity query workload bucketed
// by overlap ratio. query_count is the per-bucket quota.
struct WorkloadSpec {
  double selectivity = 0.00001;
  std::size_t query_count = 1000;
  std::vector<double> alpha_targets{0.1, 0.25, 0.5, 0.75, 1.0};
  double alpha_tolerance = 0.05;
  std::uint64_t rng_seed = 1;

  // Throws UsageError on out-of-range fields; needs the dataset size to
  // check selectivity * n >= 1.
  void validate(std::size_t dataset_size) const;
};

// One synthesized range query together with the R-tree trace facts that
// drive training and bucketing: alpha = tn / vn.
struct LabeledQuery {
  Rect rect;
  double alpha = 0.0;
  std::uint32_t tn = 0;                       // true (contributing) leaves
  std::uint32_t vn = 0;                       // visited leaves
  std::vector<std::uint32_t> true_leaf_ids;   // sorted ascending, size == tn
  double selectivity_actual = 0.0;

  friend bool operator==(const LabeledQuery&, const LabeledQuery&) = default;
};

// Multi-label example: raw rectangle coordinates in, one bit per R-tree
// leaf out. Labels are stored sparsely as sorted leaf IDs.
struct TrainingExample {
  std::array<double, 4> features{};           // xmin, ymin, xmax, ymax
  std::vector<std::uint32_t> label_ids;       // sorted ascending, nonempty
  std::uint32_t leaf_count = 0;

  bool label_bit(std::uint32_t leaf) const;
  // Bit string reading left to right, position i = leaf i: true leaves {2}
  // over 8 leaves render as "00100000".
  std::string label_bits() const;
};

struct BinaryExample {
  std::array<double, 4> features{};  // xmin, ymin, xmax, ymax
  int label = 0;                     // 0: high-overlap (alpha <= tau), 1: low-overlap
};

// Seed-point rectangle growth with rejection sampling into alpha buckets.
// Fills each alpha_target bucket up to query_count queries whose result
// count is within +-20% of round(selectivity * n) and whose alpha lies
// within alpha_tolerance of the target. Returns queries grouped by bucket
// in ascending-target order. Buckets may come back partially full (noted in
// *warnings); throws DataError only if every bucket is empty when the
// attempt budget (200x the requested total) runs out.
std::vector<LabeledQuery> synth_queries(const Dataset& ds, const RTree& tree,
                                        const WorkloadSpec& spec,
                                        std::vector<std::string>* warnings = nullptr);

// Band membership |alpha - target| <= tolerance, with a hair of relative
// slack so boundary ratios (e.g. 19/20 against target 1.0) are not dropped
// by one rounding step in the subtraction.
bool alpha_within(double alpha, double target, double tolerance);

// Index into spec.alpha_targets of the bucket owning this alpha: the
// nearest target, provided alpha_within(alpha, target, tolerance); -1
// otherwise.
int bucket_of(double alpha, const WorkloadSpec& spec);

// round(selectivity * n): the per-query result-count target the generator
// aims for (accepted window is +-20% around it).
std::size_t result_target(double selectivity, std::size_t dataset_size);

// Queries with no true leaves are skipped with a warning (nothing to
// learn); any leaf ID >= leaf_count is a DataError.
std::vector<TrainingExample> make_multilabel_training(const std::vector<LabeledQuery>& queries,
                                                      std::uint32_t leaf_count,
                                                      std::vector<std::string>* warnings = nullptr);

// Label 0 iff alpha <= tau else 1. tau must lie in (0,1).
std::vector<BinaryExample> make_binary_training(const std::vector<LabeledQuery>& queries,
                                                double tau);

struct BinarySplit {
  std::vector<BinaryExample> train;
  std::vector<BinaryExample> test;
};

// Deterministic stratified split: shuffles within each class with the given
// seed and moves round(test_fraction * class size) examples to test.
BinarySplit stratified_split(const std::vector<BinaryExample>& examples, double test_fraction,
                             std::uint64_t seed);

// Text persistence; doubles use shortest round-trip formatting so
// load(save(w)) == w bit-exactly.
void save_workload(const std::filesystem::path& path, const std::vector<LabeledQuery>& queries);
std::vector<LabeledQuery> load_workload(const std::filesystem::path& path);

std::uint64_t workload_fingerprint(const std::vector<LabeledQuery>& queries);

}  // namespace airtree
