#include "airtree/forest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "airtree/errors.hpp"
#include "airtree/rng.hpp"
#include "airtree/serialize.hpp"

namespace airtree {
namespace {

constexpr char kMagic[] = "airtree forest";
constexpr std::uint32_t kVersion = 1;

// Minimizes c0L*c1L/nL + c0R*c1R/nR (weighted binary Gini up to constants);
// 128-bit cross-multiplication keeps comparisons exact.
struct SplitScore {
  __int128 num = 0;
  std::int64_t den = 1;

  bool better_than(const SplitScore& other) const {
    return num * other.den < other.num * den;
  }
};

struct Candidate {
  bool found = false;
  int feature = 0;
  double threshold = 0.0;
  SplitScore score;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<BinaryExample>& examples, Rng& rng)
      : x_(examples), rng_(rng) {}

  std::vector<BinaryTree::Node> run(std::vector<std::uint32_t> idx) {
    nodes_.reserve(2 * idx.size());
    build(idx);
    return std::move(nodes_);
  }

 private:
  // Scans one feature for the best threshold; counts c1 prefix sums over
  // the sorted order give both sides' class tallies.
  void scan_feature(std::vector<std::uint32_t>& idx, int f, std::int64_t ones,
                    Candidate* best) const {
    const auto n = static_cast<std::int64_t>(idx.size());
    std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
      const double va = x_[a].features[f], vb = x_[b].features[f];
      return va != vb ? va < vb : a < b;
    });
    std::int64_t ones_left = 0;
    for (std::int64_t j = 0; j + 1 < n; ++j) {
      ones_left += x_[idx[static_cast<std::size_t>(j)]].label;
      const double v = x_[idx[static_cast<std::size_t>(j)]].features[f];
      const double vnext = x_[idx[static_cast<std::size_t>(j + 1)]].features[f];
      if (v == vnext) continue;
      double thr = 0.5 * (v + vnext);
      if (!(thr < vnext)) thr = v;

      const std::int64_t nl = j + 1, nr = n - nl;
      const std::int64_t c1l = ones_left, c0l = nl - c1l;
      const std::int64_t c1r = ones - ones_left, c0r = nr - c1r;
      SplitScore score{static_cast<__int128>(c0l) * c1l * nr + static_cast<__int128>(c0r) * c1r * nl,
                       nl * nr};
      if (!best->found || score.better_than(best->score)) {
        *best = Candidate{true, f, thr, score};
      }
    }
  }

  std::uint32_t make_leaf(std::int64_t n, std::int64_t ones) {
    BinaryTree::Node node;
    node.label = 2 * ones > n ? 1 : 0;  // tie -> 0 (high-overlap)
    nodes_.push_back(node);
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  std::uint32_t build(std::vector<std::uint32_t>& idx) {
    const auto n = static_cast<std::int64_t>(idx.size());
    std::int64_t ones = 0;
    for (std::uint32_t i : idx) ones += x_[i].label;
    if (ones == 0 || ones == n || n < 2) return make_leaf(n, ones);

    // Random 2-of-4 feature subset, falling through to the remaining
    // features only when the sampled ones admit no split.
    std::array<int, 4> order{0, 1, 2, 3};
    for (std::size_t i = 3; i > 0; --i) {
      std::swap(order[i], order[rng_.index(i + 1)]);
    }
    Candidate best;
    scan_feature(idx, order[0], ones, &best);
    scan_feature(idx, order[1], ones, &best);
    for (std::size_t k = 2; k < 4 && !best.found; ++k) {
      scan_feature(idx, order[k], ones, &best);
    }
    if (!best.found) return make_leaf(n, ones);

    std::vector<std::uint32_t> left, right;
    left.reserve(idx.size());
    for (std::uint32_t i : idx) {
      (x_[i].features[best.feature] <= best.threshold ? left : right).push_back(i);
    }

    const auto me = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    const std::uint32_t left_id = build(left);
    const std::uint32_t right_id = build(right);
    BinaryTree::Node& node = nodes_[me];
    node.feature = static_cast<std::int16_t>(best.feature);
    node.threshold = best.threshold;
    node.left = left_id;  // == me + 1 (preorder)
    node.right = right_id;
    return me;
  }

  const std::vector<BinaryExample>& x_;
  Rng& rng_;
  std::vector<BinaryTree::Node> nodes_;
};

}  // namespace

int BinaryTree::predict(const std::array<double, 4>& features) const {
  if (nodes.empty()) throw DataError("predict on an empty tree");
  std::uint32_t at = 0;
  while (nodes[at].feature >= 0) {
    const Node& node = nodes[at];
    at = features[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                            : node.right;
  }
  return nodes[at].label;
}

std::size_t BinaryTree::size_bytes() const {
  std::size_t total = 0;
  for (const Node& node : nodes) total += node.feature >= 0 ? 13 : 2;
  return total;
}

RandomForest train_forest(const std::vector<BinaryExample>& examples, std::uint32_t n_trees,
                          std::uint64_t seed) {
  if (n_trees == 0) throw UsageError("train_forest: n_trees must be positive");
  if (examples.empty()) throw DataError("train_forest: empty training set");
  const bool has0 = std::any_of(examples.begin(), examples.end(),
                                [](const BinaryExample& e) { return e.label == 0; });
  const bool has1 = std::any_of(examples.begin(), examples.end(),
                                [](const BinaryExample& e) { return e.label == 1; });
  if (!has0 || !has1) {
    throw DataError(
        "train_forest: training data has a single class; widen the workload to "
        "cover both high- and low-overlap queries");
  }
  for (const BinaryExample& ex : examples) {
    if (ex.label != 0 && ex.label != 1) throw DataError("train_forest: label must be 0 or 1");
  }

  RandomForest forest;
  forest.seed_ = seed;
  forest.train_examples_ = examples.size();
  forest.trees_.reserve(n_trees);
  const std::size_t n = examples.size();
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    Rng rng = Rng::derived(seed, t);
    std::vector<std::uint32_t> bootstrap(n);
    for (std::uint32_t& i : bootstrap) i = static_cast<std::uint32_t>(rng.index(n));
    BinaryTree tree;
    tree.nodes = TreeBuilder(examples, rng).run(std::move(bootstrap));
    forest.trees_.push_back(std::move(tree));
  }
  return forest;
}

int RandomForest::predict(const std::array<double, 4>& features) const {
  if (trees_.empty()) throw DataError("predict on an untrained forest");
  std::size_t ones = 0;
  for (const BinaryTree& tree : trees_) ones += static_cast<std::size_t>(tree.predict(features));
  return 2 * ones > trees_.size() ? 1 : 0;  // tie -> 0
}

std::size_t RandomForest::size_bytes() const {
  std::size_t total = 0;
  for (const BinaryTree& tree : trees_) total += tree.size_bytes();
  return total;
}

RandomForest RandomForest::from_trees(std::vector<BinaryTree> trees) {
  if (trees.empty()) throw UsageError("from_trees: need at least one tree");
  RandomForest forest;
  forest.trees_ = std::move(trees);
  return forest;
}

void RandomForest::save(std::ostream& out) const {
  if (trees_.empty()) throw DataError("cannot save an untrained forest");
  BinaryWriter w(out);
  w.str(kMagic);
  w.u32(kVersion);
  w.u64(seed_);
  w.u64(train_examples_);
  w.u32(static_cast<std::uint32_t>(trees_.size()));
  for (const BinaryTree& tree : trees_) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const BinaryTree::Node& node : tree.nodes) {
      if (node.feature >= 0) {
        w.u8(static_cast<std::uint8_t>(node.feature));
        w.f64(node.threshold);
        w.u32(node.right);
      } else {
        w.u8(0xFF);
        w.u8(node.label);
      }
    }
  }
}

RandomForest RandomForest::load(std::istream& in) {
  BinaryReader r(in);
  if (r.str() != kMagic) throw DataError("not a forest model");
  if (r.u32() != kVersion) throw DataError("unsupported forest version");
  RandomForest forest;
  forest.seed_ = r.u64();
  forest.train_examples_ = r.u64();
  const std::uint32_t tree_count = r.u32();
  if (tree_count == 0) throw DataError("forest model has no trees");
  forest.trees_.resize(tree_count);
  for (BinaryTree& tree : forest.trees_) {
    const std::uint32_t count = r.u32();
    if (count == 0) throw DataError("forest model tree has no nodes");
    tree.nodes.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      BinaryTree::Node& node = tree.nodes[i];
      const std::uint8_t tag = r.u8();
      if (tag == 0xFF) {
        node.feature = -1;
        node.label = r.u8();
        if (node.label > 1) throw DataError("corrupt forest: bad leaf label");
      } else {
        if (tag > 3) throw DataError("corrupt forest: bad feature tag");
        node.feature = tag;
        node.threshold = r.f64();
        node.left = i + 1;
        node.right = r.u32();
        if (node.left >= count || node.right >= count || node.right <= i) {
          throw DataError("corrupt forest: child index out of range");
        }
      }
    }
  }
  if (!in) throw DataError("truncated forest model");
  return forest;
}

void RandomForest::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path.string());
  save(out);
  if (!out.flush()) throw DataError("failed writing model file: " + path.string());
}

RandomForest RandomForest::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  return load(in);
}

std::uint64_t RandomForest::fingerprint() const {
  std::ostringstream bytes;
  save(bytes);
  return fnv1a64(bytes.str());
}

double binary_accuracy(const RandomForest& model, const std::vector<BinaryExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const BinaryExample& ex : examples) {
    if (model.predict(ex.features) == ex.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace airtree
