#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "airtree/workload.hpp"

namespace airtree {

// Accuracy/size bundle reported by training commands.
struct ModelMetrics {
  double subset_accuracy = 0.0;  // multi-label: predicted set == label set exactly
  double binary_accuracy = 0.0;
  std::size_t size_bytes = 0;
};

// Multi-label CART decision tree trained in the overfitting regime: splits
// minimize the summed per-label Gini impurity, thresholds are midpoints
// between consecutive distinct feature values, and leaves hold the
// per-label majority (ties set the bit). No pruning.
//
// Size accounting mirrors the serialized node payload: 13 bytes per
// internal node (feature tag, threshold, right-child index; left child is
// the next preorder node), 5 bytes + 4 per stored label ID per leaf.
class MultiLabelTree {
 public:
  struct Node {
    std::int16_t feature = -1;  // -1: leaf
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::vector<std::uint32_t> labels;  // leaf only; sorted ascending
  };

  static constexpr int kDefaultMaxDepth = 30;
  static constexpr int kMinSamplesSplit = 2;

  // Predicted leaf IDs for a rectangle, sorted ascending; may be empty.
  std::vector<std::uint32_t> predict(const std::array<double, 4>& features) const;

  std::uint32_t leaf_count() const { return leaf_count_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t train_examples() const { return train_examples_; }
  int max_depth() const { return max_depth_; }
  std::size_t size_bytes() const;
  std::uint64_t fingerprint() const;

  void save(std::ostream& out) const;
  static MultiLabelTree load(std::istream& in);
  void save_file(const std::filesystem::path& path) const;
  static MultiLabelTree load_file(const std::filesystem::path& path);

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  friend MultiLabelTree train_mltree(const std::vector<TrainingExample>&, int);

  std::vector<Node> nodes_;  // preorder; root at 0
  std::uint32_t leaf_count_ = 0;
  std::uint32_t max_depth_ = kDefaultMaxDepth;
  std::uint64_t train_examples_ = 0;
};

// Greedy CART growth; deterministic (impurity ties broken by lowest
// feature index, then lowest threshold). Throws DataError on an empty
// training set or inconsistent label-vector lengths.
MultiLabelTree train_mltree(const std::vector<TrainingExample>& examples,
                            int max_depth = MultiLabelTree::kDefaultMaxDepth);

// Fraction of examples whose predicted set equals the label set exactly.
double subset_accuracy(const MultiLabelTree& model, const std::vector<TrainingExample>& examples);

}  // namespace airtree
