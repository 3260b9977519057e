#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <bit>
#include <map>
#include <set>

#include <json.hpp>

#include "airtree/aitree.hpp"
#include "airtree/dataset.hpp"
#include "airtree/errors.hpp"
#include "airtree/serialize.hpp"
#include "test_helpers.hpp"

using namespace airtree;
using testing::TempDir;

namespace {

LabeledQuery query_at(Rect r, std::vector<std::uint32_t> leaves) {
  LabeledQuery q;
  q.rect = r;
  q.tn = static_cast<std::uint32_t>(leaves.size());
  q.vn = q.tn;
  q.alpha = 1.0;
  q.true_leaf_ids = std::move(leaves);
  return q;
}

// Clustered dataset, tree, and a fitted AI-tree shared across cases.
struct AiFixture {
  Dataset ds;
  RTree tree;
  WorkloadSpec spec;
  std::vector<LabeledQuery> queries;
  AiTree ai;

  AiFixture() : ds(synth_points(20000, PointDistribution::kGaussianClusters, 77, 4)) {
    for (const Point& p : ds.points) tree.insert(p);
    tree.assign_leaf_ids();
    spec.selectivity = 0.001;
    spec.query_count = 60;
    spec.rng_seed = 311;
    queries = synth_queries(ds, tree, spec);
    ai = AiTree::fit(queries, tree, ds.bounds);
  }
};

AiFixture& fixture() {
  static AiFixture fx;
  return fx;
}

}  // namespace

TEST_CASE("grid cells tile the bounds exactly") {
  ModelGrid grid = ModelGrid::build(3, Rect{0.1, 0.2, 7.3, 5.9}, {}, 10);
  CHECK(grid.grid_dim() == 3);
  CHECK(grid.model_count() == 0);

  for (std::uint32_t row = 0; row < 3; ++row) {
    for (std::uint32_t col = 0; col < 3; ++col) {
      const Rect cell = grid.cell_rect(row * 3 + col);
      // shared edges are computed identically on both sides
      if (col + 1 < 3) CHECK(cell.xmax == grid.cell_rect(row * 3 + col + 1).xmin);
      if (row + 1 < 3) CHECK(cell.ymax == grid.cell_rect((row + 1) * 3 + col).ymin);
      if (col == 0) CHECK(cell.xmin == 0.1);
      if (col == 2) CHECK(cell.xmax == 7.3);
      if (row == 0) CHECK(cell.ymin == 0.2);
      if (row == 2) CHECK(cell.ymax == 5.9);
    }
  }
  CHECK_THROWS_AS(grid.cell_rect(9), DataError);
  CHECK_THROWS_AS(ModelGrid::build(0, Rect{0, 0, 1, 1}, {}, 4), UsageError);
}

TEST_CASE("overlapping cells under closed boundary semantics") {
  ModelGrid grid = ModelGrid::build(4, Rect{0, 0, 4, 4}, {}, 10);

  // entire bounds -> all 16 cells
  CHECK(grid.overlapping_cells(Rect{0, 0, 4, 4}).size() == 16);
  // disjoint from the grid -> none
  CHECK(grid.overlapping_cells(Rect{10, 10, 11, 11}).empty());
  // strictly interior to one cell -> that cell only
  CHECK(grid.overlapping_cells(Rect{1.25, 1.25, 1.75, 1.75}) ==
        std::vector<std::uint32_t>{5});
  // exactly one cell's rect -> closed overlap pulls in the 8 edge/corner neighbors
  CHECK(grid.overlapping_cells(Rect{1, 1, 2, 2}) ==
        std::vector<std::uint32_t>{0, 1, 2, 4, 5, 6, 8, 9, 10});
}

TEST_CASE("a query spanning the four central cells trains exactly those models") {
  // 4x4 grid over [0,4]^2; the central 2x2 block is rows/cols 1-2, i.e.
  // 0-based cell indices 5, 6, 9, 10 (models M6, M7, M10, M11 in 1-based
  // numbering).
  const Rect central{1.5, 1.5, 2.5, 2.5};
  ModelGrid grid = ModelGrid::build(4, Rect{0, 0, 4, 4}, {query_at(central, {3})}, 10);

  CHECK(grid.overlapping_cells(central) == std::vector<std::uint32_t>{5, 6, 9, 10});
  CHECK(grid.model_count() == 4);
  for (std::uint32_t cell : {5u, 6u, 9u, 10u}) {
    REQUIRE(grid.cell_model(cell) != nullptr);
    CHECK(grid.cell_model(cell)->predict({1.5, 1.5, 2.5, 2.5}) ==
          std::vector<std::uint32_t>{3});
  }
  for (std::uint32_t cell : {0u, 1u, 2u, 3u, 4u, 7u, 8u, 11u, 12u, 13u, 14u, 15u}) {
    CHECK(grid.cell_model(cell) == nullptr);
  }

  // a query strictly inside one cell trains exactly one model
  ModelGrid one = ModelGrid::build(4, Rect{0, 0, 4, 4},
                                   {query_at(Rect{0.2, 0.2, 0.8, 0.8}, {1})}, 10);
  CHECK(one.model_count() == 1);
  CHECK(one.cell_model(0) != nullptr);
}

TEST_CASE("predict union is deduplicated, sorted, and order-free") {
  // two queries in different cells sharing leaf 4
  std::vector<LabeledQuery> queries{query_at(Rect{0.1, 0.1, 0.9, 0.9}, {2, 4}),
                                    query_at(Rect{3.1, 3.1, 3.9, 3.9}, {4, 7})};
  ModelGrid grid = ModelGrid::build(2, Rect{0, 0, 4, 4}, queries, 10);
  CHECK(grid.model_count() == 2);

  // spans both cells: union of {2,4} and {4,7} without duplicates
  const std::vector<std::uint32_t> both = grid.predict_leaves(Rect{0.1, 0.1, 3.9, 3.9});
  CHECK(both == std::vector<std::uint32_t>{2, 4, 7});
  CHECK(grid.predict_leaves(Rect{0.1, 0.1, 3.9, 3.9}) == both);  // pure

  // only model-less regions -> empty prediction
  ModelGrid sparse = ModelGrid::build(4, Rect{0, 0, 4, 4},
                                      {query_at(Rect{0.2, 0.2, 0.8, 0.8}, {1})}, 10);
  CHECK(sparse.predict_leaves(Rect{3.2, 3.2, 3.8, 3.8}).empty());
}

TEST_CASE("fit input validation") {
  AiFixture& fx = fixture();
  CHECK_THROWS_AS(AiTree::fit({}, fx.tree, fx.ds.bounds), DataError);
  CHECK_THROWS_AS(AiTree::fit(fx.queries, fx.tree, fx.ds.bounds, 1), UsageError);
  RTree unindexed;
  unindexed.insert(Point{0, 0});
  CHECK_THROWS_AS(AiTree::fit(fx.queries, unindexed, fx.ds.bounds), DataError);
}

TEST_CASE("fit reaches training_fit 1.0 within the grid budget") {
  AiFixture& fx = fixture();
  CHECK(fx.ai.training_fit() == 1.0);
  CHECK(fx.ai.grid().grid_dim() >= 2);
  CHECK(fx.ai.grid().grid_dim() <= 20);
  CHECK(fx.ai.grid().model_count() <= fx.ai.grid().grid_dim() * fx.ai.grid().grid_dim());
  MESSAGE("fit grid " << fx.ai.grid().grid_dim() << "x" << fx.ai.grid().grid_dim() << ", "
                      << fx.ai.grid().model_count() << " models, "
                      << fx.ai.size_bytes() << " bytes");
}

TEST_CASE("training workload replays exactly with leaf_accesses = TN") {
  AiFixture& fx = fixture();
  for (const LabeledQuery& q : fx.queries) {
    CHECK(fx.ai.predict_leaves(q.rect) == q.true_leaf_ids);

    AiQueryOutcome out = fx.ai.query(q.rect);
    CHECK(out.path == AiPath::kPredicted);
    CHECK(out.leaf_accesses == q.tn);
    CHECK(out.predicted_leaf_ids == q.true_leaf_ids);

    QueryTrace trace = fx.tree.range_query(q.rect);
    CHECK(testing::same_point_set(out.results, trace.results));
    // no false positives: every returned point lies inside the query
    for (const Point& p : out.results) CHECK(q.rect.contains(p));
  }
}

TEST_CASE("per-bucket access ratio tracks the alpha target") {
  AiFixture& fx = fixture();
  std::map<int, std::pair<std::size_t, std::size_t>> sums;  // bucket -> (ai, rtree)
  for (const LabeledQuery& q : fx.queries) {
    AiQueryOutcome out = fx.ai.query(q.rect);
    auto& [ai_sum, rt_sum] = sums[bucket_of(q.alpha, fx.spec)];
    ai_sum += out.leaf_accesses;
    rt_sum += q.vn;
  }
  for (auto& [bucket, pair] : sums) {
    REQUIRE(bucket >= 0);
    const double ratio = static_cast<double>(pair.first) / static_cast<double>(pair.second);
    const double target = fx.spec.alpha_targets[static_cast<std::size_t>(bucket)];
    MESSAGE("bucket " << target << ": access ratio " << ratio);
    CHECK(alpha_within(ratio, target, fx.spec.alpha_tolerance));
  }
}

TEST_CASE("empty prediction falls back to the full R-tree search") {
  // data and training queries confined to the left cluster; the right
  // region has data but no trained models
  Rng rng(5);
  RTree tree(RTreeConfig{16, 0});
  std::vector<Point> pts;
  for (int i = 0; i < 400; ++i) {
    Point p{rng.uniform(0.0, 1.0), rng.uniform01()};
    pts.push_back(p);
    tree.insert(p);
  }
  for (int i = 0; i < 400; ++i) {
    Point p{rng.uniform(10.0, 11.0), rng.uniform01()};
    pts.push_back(p);
    tree.insert(p);
  }
  tree.assign_leaf_ids();

  WorkloadSpec spec;
  spec.selectivity = 0.02;
  spec.query_count = 10;
  spec.alpha_targets = {0.5, 1.0};
  spec.rng_seed = 21;
  // restrict seeds to the left cluster by synthesizing on the left points only
  Dataset left;
  left.points.assign(pts.begin(), pts.begin() + 400);
  left.name = "left";
  left.bounds = Rect{0, 0, 1, 1};
  for (const Point& p : left.points) left.bounds.expand(p);
  auto queries = synth_queries(left, tree, spec);
  REQUIRE_FALSE(queries.empty());

  Rect bounds = Rect::of_point(pts.front());
  for (const Point& p : pts) bounds.expand(p);
  AiTree ai = AiTree::fit(queries, tree, bounds);

  const Rect probe{10.2, 0.2, 10.8, 0.8};  // data-rich but model-less region
  REQUIRE(ai.predict_leaves(probe).empty());
  AiQueryOutcome out = ai.query(probe);
  CHECK(out.path == AiPath::kFallbackEmpty);
  QueryTrace trace = tree.range_query(probe);
  REQUIRE_FALSE(trace.results.empty());
  CHECK(testing::same_point_set(out.results, trace.results));
  CHECK(out.leaf_accesses == trace.leaf_accesses);
  CHECK(testing::same_point_set(out.results, testing::brute_force_range(pts, probe)));
}

TEST_CASE("a predicted leaf that scans empty triggers the mispredict fallback") {
  // Handcrafted bundle: a single-cell model that always predicts one leaf
  // whose MBR is disjoint from the probe query.
  Dataset ds = synth_points(500, PointDistribution::kUniform, 9);
  RTree tree(RTreeConfig{16, 0});
  for (const Point& p : ds.points) tree.insert(p);
  tree.assign_leaf_ids();

  const Rect probe{0.40, 0.40, 0.41, 0.41};
  std::uint32_t wrong_leaf = tree.leaf_count();
  for (std::uint32_t leaf = 0; leaf < tree.leaf_count(); ++leaf) {
    if (!tree.leaf_mbr(leaf).intersects(probe)) {
      wrong_leaf = leaf;
      break;
    }
  }
  REQUIRE(wrong_leaf < tree.leaf_count());

  TrainingExample ex;
  ex.features = {probe.xmin, probe.ymin, probe.xmax, probe.ymax};
  ex.label_ids = {wrong_leaf};
  ex.leaf_count = tree.leaf_count();
  MultiLabelTree bad_model = train_mltree({ex});

  TempDir dir("mispredict");
  bad_model.save_file(dir.path() / "cell_0.mlt");
  nlohmann::json manifest;
  manifest["format"] = "airtree aitree bundle";
  manifest["version"] = 1;
  manifest["grid_dim"] = 2;
  manifest["leaf_count"] = tree.leaf_count();
  manifest["bounds_bits"] = {hex64(std::bit_cast<std::uint64_t>(ds.bounds.xmin)),
                             hex64(std::bit_cast<std::uint64_t>(ds.bounds.ymin)),
                             hex64(std::bit_cast<std::uint64_t>(ds.bounds.xmax)),
                             hex64(std::bit_cast<std::uint64_t>(ds.bounds.ymax))};
  manifest["training_fit_bits"] = hex64(std::bit_cast<std::uint64_t>(1.0));
  manifest["rtree_fingerprint"] = hex64(tree.fingerprint());
  manifest["workload_fingerprint"] = hex64(std::uint64_t{0});
  manifest["cells"] = {{{"index", 0}, {"file", "cell_0.mlt"}}};
  write_file(dir.path() / "manifest.json", manifest.dump(2));

  AiTree ai = AiTree::load_bundle(dir.path(), tree);
  REQUIRE(ai.predict_leaves(probe) == std::vector<std::uint32_t>{wrong_leaf});

  AiQueryOutcome out = ai.query(probe);
  CHECK(out.path == AiPath::kFallbackMispredict);
  QueryTrace trace = tree.range_query(probe);
  CHECK(out.leaf_accesses == 1 + trace.leaf_accesses);
  CHECK(testing::same_point_set(out.results, trace.results));
  CHECK(testing::same_point_set(out.results, testing::brute_force_range(ds.points, probe)));
}

TEST_CASE("unseen queries: fallbacks are exact, predicted-path errors are pure false negatives") {
  // Out-of-workload queries carry a documented residual risk: the predicted
  // path can miss a true leaf while every predicted leaf scans nonempty.
  // The oracle comparison here is the detection mechanism; the invariants
  // that must hold unconditionally are (a) fallback paths match the R-tree
  // exactly, (b) no false positive ever, (c) any predicted-path mismatch is
  // a strict subset of the truth (dropped leaves, never invented points).
  AiFixture& fx = fixture();
  WorkloadSpec unseen = fx.spec;
  unseen.rng_seed = 9090;
  unseen.query_count = 25;
  auto probes = synth_queries(fx.ds, fx.tree, unseen);

  std::map<AiPath, int> paths;
  std::size_t predicted = 0, false_negatives = 0;
  for (const LabeledQuery& q : probes) {
    AiQueryOutcome out = fx.ai.query(q.rect);
    ++paths[out.path];
    auto oracle = testing::brute_force_range(fx.ds.points, q.rect);
    for (const Point& p : out.results) CHECK(q.rect.contains(p));

    if (out.path != AiPath::kPredicted) {
      CHECK(testing::same_point_set(out.results, oracle));
      continue;
    }
    ++predicted;
    if (!testing::same_point_set(out.results, oracle)) {
      ++false_negatives;
      // returned points are a subset of the oracle: sort both and include-check
      auto got = testing::sorted(out.results);
      auto want = testing::sorted(oracle);
      CHECK(std::includes(want.begin(), want.end(), got.begin(), got.end()));
      CHECK(got.size() < want.size());
    }
  }
  for (auto [path, count] : paths) {
    MESSAGE(std::string(to_string(path)) << ": " << count);
  }
  MESSAGE("predicted-path false negatives: " << false_negatives << "/" << predicted);
  REQUIRE(predicted > 0);
}

TEST_CASE("bundle round-trip preserves everything; stale pairing is rejected") {
  AiFixture& fx = fixture();
  TempDir dir("bundle");
  const auto bundle = dir.path() / "ai";
  fx.ai.save_bundle(bundle);

  AiTree loaded = AiTree::load_bundle(bundle, fx.tree);
  CHECK(loaded.training_fit() == fx.ai.training_fit());
  CHECK(loaded.grid().grid_dim() == fx.ai.grid().grid_dim());
  CHECK(loaded.grid().model_count() == fx.ai.grid().model_count());
  CHECK(loaded.size_bytes() == fx.ai.size_bytes());
  CHECK(loaded.workload_fingerprint() == fx.ai.workload_fingerprint());
  CHECK(loaded.workload_fingerprint() == workload_fingerprint(fx.queries));
  for (const LabeledQuery& q : fx.queries) {
    CHECK(loaded.predict_leaves(q.rect) == fx.ai.predict_leaves(q.rect));
  }

  // saving again is byte-identical
  const std::uint64_t manifest_fp = file_fingerprint(bundle / "manifest.json");
  std::map<std::string, std::uint64_t> model_fps;
  for (const auto& entry : std::filesystem::directory_iterator(bundle)) {
    model_fps[entry.path().filename().string()] = file_fingerprint(entry.path());
  }
  fx.ai.save_bundle(bundle);
  CHECK(file_fingerprint(bundle / "manifest.json") == manifest_fp);
  for (const auto& [name, fp] : model_fps) {
    CHECK(file_fingerprint(bundle / name) == fp);
  }

  // pairing with a different tree fails loudly
  RTree other(RTreeConfig{16, 0});
  for (const Point& p : fx.ds.points) other.insert(p);
  other.assign_leaf_ids();
  CHECK_THROWS_AS(AiTree::load_bundle(bundle, other), DataError);

  write_file(bundle / "manifest.json", "{broken");
  CHECK_THROWS_AS(AiTree::load_bundle(bundle, fx.tree), DataError);
}
