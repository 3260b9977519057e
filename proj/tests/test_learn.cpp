#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "airtree/dataset.hpp"
#include "airtree/errors.hpp"
#include "airtree/forest.hpp"
#include "airtree/mltree.hpp"
#include "airtree/rng.hpp"
#include "airtree/serialize.hpp"
#include "test_helpers.hpp"

using namespace airtree;
using testing::TempDir;

namespace {

TrainingExample example(std::array<double, 4> f, std::vector<std::uint32_t> labels,
                        std::uint32_t leaf_count = 8) {
  TrainingExample ex;
  ex.features = f;
  ex.label_ids = std::move(labels);
  ex.leaf_count = leaf_count;
  return ex;
}

BinaryExample bexample(std::array<double, 4> f, int label) {
  BinaryExample ex;
  ex.features = f;
  ex.label = label;
  return ex;
}

// Random rectangles with random nonempty label sets: distinct features with
// probability 1, adversarial labels for the splitter.
std::vector<TrainingExample> random_examples(std::size_t n, std::uint32_t leaf_count,
                                             std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform01(), y = rng.uniform01();
    TrainingExample ex;
    ex.features = {x, y, x + rng.uniform(0.01, 0.3), y + rng.uniform(0.01, 0.3)};
    ex.leaf_count = leaf_count;
    std::set<std::uint32_t> labels;
    const std::size_t k = 1 + rng.index(3);
    while (labels.size() < k) labels.insert(static_cast<std::uint32_t>(rng.index(leaf_count)));
    ex.label_ids.assign(labels.begin(), labels.end());
    out.push_back(std::move(ex));
  }
  return out;
}

// Shared across the workload-driven cases: one clustered dataset and tree.
struct LearnFixture {
  Dataset ds;
  RTree tree;

  LearnFixture() : ds(synth_points(20000, PointDistribution::kGaussianClusters, 31, 4)) {
    for (const Point& p : ds.points) tree.insert(p);
    tree.assign_leaf_ids();
  }

  std::vector<LabeledQuery> queries(std::size_t per_bucket, std::uint64_t seed) const {
    WorkloadSpec spec;
    spec.selectivity = 0.001;
    spec.query_count = per_bucket;
    spec.rng_seed = seed;
    return synth_queries(ds, tree, spec);
  }
};

LearnFixture& fixture() {
  static LearnFixture fx;
  return fx;
}

BinaryTree constant_tree(int label) {
  BinaryTree tree;
  BinaryTree::Node leaf;
  leaf.feature = -1;
  leaf.label = static_cast<std::uint8_t>(label);
  tree.nodes.push_back(leaf);
  return tree;
}

// Stump: xmin <= threshold -> left label, else right label.
BinaryTree stump(double threshold, int left_label, int right_label) {
  BinaryTree tree;
  BinaryTree::Node root;
  root.feature = 0;
  root.threshold = threshold;
  root.left = 1;
  root.right = 2;
  tree.nodes.push_back(root);
  BinaryTree::Node l;
  l.feature = -1;
  l.label = static_cast<std::uint8_t>(left_label);
  tree.nodes.push_back(l);
  BinaryTree::Node r;
  r.feature = -1;
  r.label = static_cast<std::uint8_t>(right_label);
  tree.nodes.push_back(r);
  return tree;
}

}  // namespace

TEST_CASE("single example trains to a single-leaf tree") {
  auto model = train_mltree({example({0.1, 0.2, 0.3, 0.4}, {2, 5})});
  CHECK(model.node_count() == 1);
  CHECK(model.predict({0.1, 0.2, 0.3, 0.4}) == std::vector<std::uint32_t>{2, 5});
  // single-leaf trees answer every input identically (total function)
  CHECK(model.predict({100, 100, 200, 200}) == std::vector<std::uint32_t>{2, 5});
  CHECK(model.size_bytes() == 5 + 4 * 2);
}

TEST_CASE("training input validation") {
  CHECK_THROWS_AS(train_mltree({}), DataError);
  CHECK_THROWS_AS(train_mltree({example({0, 0, 1, 1}, {1}, 8), example({1, 1, 2, 2}, {1}, 9)}),
                  DataError);
  CHECK_THROWS_AS(train_mltree({example({0, 0, 1, 1}, {})}), DataError);
  CHECK_THROWS_AS(train_mltree({example({0, 0, 1, 1}, {8}, 8)}), DataError);
  CHECK_THROWS_AS(train_mltree({example({0, 0, 1, 1}, {1})}, 0), UsageError);
}

TEST_CASE("two distinct examples split exactly") {
  auto model = train_mltree({example({0, 0, 1, 1}, {0}), example({2, 2, 3, 3}, {7})});
  CHECK(model.node_count() == 3);
  CHECK(model.predict({0, 0, 1, 1}) == std::vector<std::uint32_t>{0});
  CHECK(model.predict({2, 2, 3, 3}) == std::vector<std::uint32_t>{7});
  CHECK(model.size_bytes() == 13 + (5 + 4) + (5 + 4));
}

TEST_CASE("identical features with conflicting labels fall to per-label majority") {
  // label 0 in 2/3, label 1 in 2/3 -> both set
  auto model = train_mltree({example({1, 1, 2, 2}, {0}), example({1, 1, 2, 2}, {0, 1}),
                             example({1, 1, 2, 2}, {1})});
  CHECK(model.node_count() == 1);
  CHECK(model.predict({1, 1, 2, 2}) == std::vector<std::uint32_t>{0, 1});

  // exact 1/2 tie -> bit set
  auto tie = train_mltree({example({1, 1, 2, 2}, {3}), example({1, 1, 2, 2}, {6})});
  CHECK(tie.predict({1, 1, 2, 2}) == std::vector<std::uint32_t>{3, 6});

  // 1/3 minority -> bit cleared
  auto minority = train_mltree({example({1, 1, 2, 2}, {0}), example({1, 1, 2, 2}, {0}),
                                example({1, 1, 2, 2}, {0, 1})});
  CHECK(minority.predict({1, 1, 2, 2}) == std::vector<std::uint32_t>{0});
}

TEST_CASE("overfit regime: distinct features reach subset accuracy 1.0") {
  // Uncorrelated random labels: the splitter has no geometric structure to
  // exploit, yet must still isolate every example.
  for (std::size_t n : {10UL, 100UL}) {
    auto examples = random_examples(n, 12, 1000 + n);
    auto model = train_mltree(examples);
    CHECK(subset_accuracy(model, examples) == 1.0);
    CHECK(model.max_depth() == 30);
  }

  // Full-size case: 1000 distinct queries whose labels come from real
  // R-tree traces, the domain these models actually train on.
  LearnFixture& fx = fixture();
  auto queries = fx.queries(200, 55);
  REQUIRE(queries.size() == 1000);
  auto examples = make_multilabel_training(queries, fx.tree.leaf_count());
  auto model = train_mltree(examples);
  CHECK(subset_accuracy(model, examples) == 1.0);
}

TEST_CASE("prediction is pure and total") {
  auto examples = random_examples(50, 8, 3);
  auto model = train_mltree(examples);
  const std::array<double, 4> inside = examples[7].features;
  const std::array<double, 4> outside{-5, -5, -4, -4};
  CHECK(model.predict(inside) == model.predict(inside));
  CHECK_NOTHROW(model.predict(outside));
  CHECK(model.predict(outside) == model.predict(outside));
}

TEST_CASE("mltree training is deterministic and serialization round-trips bit-exactly") {
  auto examples = random_examples(200, 10, 11);
  auto a = train_mltree(examples);
  auto b = train_mltree(examples);
  CHECK(a.fingerprint() == b.fingerprint());

  std::stringstream buf;
  a.save(buf);
  auto loaded = MultiLabelTree::load(buf);
  CHECK(loaded.fingerprint() == a.fingerprint());
  CHECK(loaded.node_count() == a.node_count());
  CHECK(loaded.size_bytes() == a.size_bytes());
  for (const TrainingExample& ex : examples) {
    CHECK(loaded.predict(ex.features) == a.predict(ex.features));
  }

  TempDir dir("learn");
  const auto path = dir.path() / "model.mlt";
  a.save_file(path);
  CHECK(MultiLabelTree::load_file(path).fingerprint() == a.fingerprint());

  write_file(path, "not a model");
  CHECK_THROWS_AS(MultiLabelTree::load_file(path), DataError);
}

TEST_CASE("mltree size accounting is monotone in node count") {
  auto small = train_mltree(random_examples(10, 8, 5));
  auto large = train_mltree(random_examples(400, 8, 5));
  CHECK(large.node_count() > small.node_count());
  CHECK(large.size_bytes() > small.size_bytes());

  std::size_t internals = 0, leaf_bytes = 0;
  for (const auto& node : large.nodes()) {
    if (node.feature >= 0) {
      ++internals;
    } else {
      leaf_bytes += 5 + 4 * node.labels.size();
    }
  }
  CHECK(large.size_bytes() == internals * 13 + leaf_bytes);
}

TEST_CASE("split determinism: equal-impurity candidates pick lowest feature then threshold") {
  // Two examples differing in every coordinate: any single-feature split is
  // perfect, so the tie must resolve to feature 0 with the lower midpoint.
  auto model = train_mltree({example({0, 10, 100, 1000}, {1}), example({1, 11, 101, 1001}, {2})});
  REQUIRE(model.node_count() == 3);
  CHECK(model.nodes()[0].feature == 0);
  CHECK(model.nodes()[0].threshold == 0.5);
}

TEST_CASE("forest input validation") {
  CHECK_THROWS_AS(train_forest({}, 10, 1), DataError);
  CHECK_THROWS_AS(train_forest({bexample({0, 0, 1, 1}, 0)}, 10, 1), DataError);
  CHECK_THROWS_AS(
      train_forest({bexample({0, 0, 1, 1}, 1), bexample({1, 1, 2, 2}, 1)}, 10, 1), DataError);
  CHECK_THROWS_AS(
      train_forest({bexample({0, 0, 1, 1}, 0), bexample({1, 1, 2, 2}, 1)}, 0, 1), UsageError);
}

TEST_CASE("separable toy set reaches perfect accuracy") {
  // label 0 rectangles live in the left half of space, label 1 in the right
  std::vector<BinaryExample> train, test;
  Rng rng(99);
  for (int i = 0; i < 120; ++i) {
    const int label = i % 2;
    const double base = label == 0 ? 0.0 : 10.0;
    const double x = base + rng.uniform(0.0, 4.0), y = rng.uniform(0.0, 4.0);
    BinaryExample ex = bexample({x, y, x + 0.5, y + 0.5}, label);
    (i < 100 ? train : test).push_back(ex);
  }
  auto forest = train_forest(train, 25, 7);
  CHECK(binary_accuracy(forest, train) == 1.0);
  CHECK(binary_accuracy(forest, test) == 1.0);
  CHECK(forest.trees().size() == 25);
}

TEST_CASE("forest training is deterministic per seed") {
  auto examples = [] {
    std::vector<BinaryExample> out;
    Rng rng(5);
    for (int i = 0; i < 80; ++i) {
      const double x = rng.uniform01(), y = rng.uniform01();
      out.push_back(bexample({x, y, x + 0.2, y + 0.2}, (x + y > 1.0) ? 1 : 0));
    }
    return out;
  }();
  auto a = train_forest(examples, 15, 42);
  auto b = train_forest(examples, 15, 42);
  CHECK(a.fingerprint() == b.fingerprint());
  auto c = train_forest(examples, 15, 43);
  CHECK(a.fingerprint() != c.fingerprint());

  std::stringstream buf;
  a.save(buf);
  auto loaded = RandomForest::load(buf);
  CHECK(loaded.fingerprint() == a.fingerprint());
  CHECK(loaded.size_bytes() == a.size_bytes());
  for (const BinaryExample& ex : examples) {
    CHECK(loaded.predict(ex.features) == a.predict(ex.features));
  }

  TempDir dir("forest");
  const auto path = dir.path() / "router.rf";
  a.save_file(path);
  CHECK(RandomForest::load_file(path).fingerprint() == a.fingerprint());
  write_file(path, "garbage");
  CHECK_THROWS_AS(RandomForest::load_file(path), DataError);
}

TEST_CASE("vote tie breaks toward label 0 and unanimity carries") {
  auto tie = RandomForest::from_trees({constant_tree(0), constant_tree(1)});
  CHECK(tie.predict({0, 0, 1, 1}) == 0);

  auto ones = RandomForest::from_trees({constant_tree(1), constant_tree(1), constant_tree(1)});
  CHECK(ones.predict({0, 0, 1, 1}) == 1);

  // 2 vs 2 via stumps: left side of space votes 0,0,1,1 -> tie -> 0
  auto mixed = RandomForest::from_trees(
      {stump(5, 0, 1), stump(5, 0, 1), constant_tree(1), constant_tree(1)});
  CHECK(mixed.predict({1, 1, 2, 2}) == 0);
  CHECK(mixed.predict({9, 1, 10, 2}) == 1);  // 4 vs 0 on the right side
}

TEST_CASE("prediction is invariant under tree order permutation") {
  std::vector<BinaryTree> trees{stump(3, 0, 1), stump(7, 1, 0), constant_tree(1),
                                stump(5, 0, 0), constant_tree(0)};
  auto f1 = RandomForest::from_trees(trees);
  std::vector<BinaryTree> shuffled{trees[4], trees[2], trees[0], trees[3], trees[1]};
  auto f2 = RandomForest::from_trees(shuffled);
  for (double x = 0.0; x <= 10.0; x += 0.5) {
    std::array<double, 4> q{x, 0.0, x + 1.0, 1.0};
    CHECK(f1.predict(q) == f2.predict(q));
  }
}

TEST_CASE("held-out accuracy beats the majority baseline on a generated workload") {
  auto queries = fixture().queries(40, 8);
  auto binary = make_binary_training(queries, 0.75);
  auto split = stratified_split(binary, 0.2, 17);
  REQUIRE_FALSE(split.test.empty());

  auto forest = train_forest(split.train, 60, 2025);
  const double accuracy = binary_accuracy(forest, split.test);

  std::size_t zeros = 0;
  for (const BinaryExample& ex : split.test) zeros += ex.label == 0 ? 1 : 0;
  const double baseline =
      std::max(zeros, split.test.size() - zeros) / static_cast<double>(split.test.size());
  MESSAGE("held-out accuracy " << accuracy << " vs baseline " << baseline);
  CHECK(accuracy >= baseline);
}

TEST_CASE("multi-label training replays a real workload exactly") {
  LearnFixture& fx = fixture();
  auto queries = fx.queries(25, 91);
  auto examples = make_multilabel_training(queries, fx.tree.leaf_count());
  REQUIRE_FALSE(examples.empty());

  auto model = train_mltree(examples);
  CHECK(subset_accuracy(model, examples) == 1.0);
  for (const TrainingExample& ex : examples) {
    CHECK(model.predict(ex.features) == ex.label_ids);
  }
}
