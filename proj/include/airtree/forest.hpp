#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "airtree/workload.hpp"

namespace airtree {

// One bootstrap-trained Gini decision tree of the routing forest. Nodes are
// preorder; the left child is the next node. Size accounting mirrors the
// serialized payload: 13 bytes per internal node, 2 per leaf.
struct BinaryTree {
  struct Node {
    std::int16_t feature = -1;  // -1: leaf
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint8_t label = 0;  // leaf only
  };

  std::vector<Node> nodes;

  int predict(const std::array<double, 4>& features) const;
  std::size_t size_bytes() const;
};

// Random-forest binary classifier for query routing: bootstrap sampling
// with replacement, 2-of-4 random feature subset per split (remaining
// features are tried when the sampled ones are constant), trees grown to
// purity, majority vote with ties toward label 0 (high-overlap).
class RandomForest {
 public:
  static constexpr std::uint32_t kDefaultTrees = 100;

  RandomForest() = default;

  int predict(const std::array<double, 4>& features) const;

  const std::vector<BinaryTree>& trees() const { return trees_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size_bytes() const;
  std::uint64_t fingerprint() const;

  void save(std::ostream& out) const;
  static RandomForest load(std::istream& in);
  void save_file(const std::filesystem::path& path) const;
  static RandomForest load_file(const std::filesystem::path& path);

  // Assembles a forest from handcrafted trees (tests exercise vote ties
  // and permutation invariance through this).
  static RandomForest from_trees(std::vector<BinaryTree> trees);

 private:
  friend RandomForest train_forest(const std::vector<BinaryExample>&, std::uint32_t,
                                   std::uint64_t);

  std::vector<BinaryTree> trees_;
  std::uint64_t seed_ = 0;
  std::uint64_t train_examples_ = 0;
};

// Deterministic for a fixed seed. Throws DataError when the training data
// contains a single class (widen the workload to span both overlap
// classes) and UsageError on n_trees == 0.
RandomForest train_forest(const std::vector<BinaryExample>& examples,
                          std::uint32_t n_trees = RandomForest::kDefaultTrees,
                          std::uint64_t seed = 1);

double binary_accuracy(const RandomForest& model, const std::vector<BinaryExample>& examples);

}  // namespace airtree
