#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <set>
#include <sstream>

#include "airtree/errors.hpp"
#include "airtree/rtree.hpp"
#include "test_helpers.hpp"

using namespace airtree;
using namespace airtree::testing;

namespace {

RTree build_tree(const std::vector<Point>& pts, std::uint32_t max_entries,
                 std::uint32_t min_entries = 0) {
  RTree t(RTreeConfig{max_entries, min_entries});
  for (const Point& p : pts) t.insert(p);
  t.assign_leaf_ids();
  return t;
}

// The worked eight-leaf tree: root -> {R1, R2}, R1 -> {R3{R7,R8}, R5{R12,R13}},
// R2 -> {R4{R9,R10}, R6{R11,R14}}. DFS leaf order R7,R8,R12,R13,R9,R10,R11,R14.
// Leaf k occupies the unit cell [2k, 2k+1]^2 stretched along x so cells are
// disjoint; each holds two points.
RTree eight_leaf_tree() {
  auto leaf = [](int k) {
    RTree::NodeDesc d;
    d.is_leaf = true;
    double x = 2.0 * k;
    d.points = {{x, 0.0}, {x + 1.0, 1.0}};
    return d;
  };
  auto internal = [](std::vector<RTree::NodeDesc> kids) {
    RTree::NodeDesc d;
    d.is_leaf = false;
    d.children = std::move(kids);
    return d;
  };
  auto r3 = internal({leaf(0), leaf(1)});   // R7, R8
  auto r5 = internal({leaf(2), leaf(3)});   // R12, R13
  auto r4 = internal({leaf(4), leaf(5)});   // R9, R10
  auto r6 = internal({leaf(6), leaf(7)});   // R11, R14
  auto r1 = internal({std::move(r3), std::move(r5)});
  auto r2 = internal({std::move(r4), std::move(r6)});
  auto root = internal({std::move(r1), std::move(r2)});
  return RTree::build_explicit(RTreeConfig{4, 2}, root);
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS(RTree(RTreeConfig{3, 0}), UsageError);   // default m=1 < 2
  CHECK_THROWS_AS(RTree(RTreeConfig{10, 6}), UsageError);  // m > ceil(M/2)
  CHECK_THROWS_AS(RTree(RTreeConfig{10, 1}), UsageError);
  CHECK(RTree(RTreeConfig{4, 0}).config().min_entries == 2);
  CHECK(RTree(RTreeConfig{5, 3}).config().min_entries == 3);  // ceil(5/2) allowed
  CHECK(RTree(RTreeConfig{200, 0}).config().min_entries == 100);
}

TEST_CASE("insert rejects non-finite points") {
  RTree t(RTreeConfig{4, 2});
  CHECK_THROWS_AS(t.insert({std::nan(""), 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(t.insert({0.0, std::numeric_limits<double>::infinity()}),
                  std::invalid_argument);
  CHECK(t.empty());
}

TEST_CASE("first overflow forces exactly one split: 201 points, M=200") {
  Rng rng(7);
  auto pts = random_points(rng, 201);
  RTree t(RTreeConfig{200, 100});
  for (const Point& p : pts) t.insert(p);
  t.assign_leaf_ids();
  CHECK(t.leaf_count() == 2);
  CHECK(t.height() == 2);
  // Both leaves hold 100-101 entries.
  auto everything = Rect{-1.0, -1.0, 2.0, 2.0};
  auto a = t.scan_leaf(0, everything).size();
  auto b = t.scan_leaf(1, everything).size();
  CHECK(a + b == 201);
  CHECK(a >= 100);
  CHECK(b >= 100);
}

TEST_CASE("duplicates are stored, not merged") {
  RTree t(RTreeConfig{4, 2});
  t.insert({0.5, 0.5});
  t.insert({0.5, 0.5});
  t.assign_leaf_ids();
  auto trace = t.range_query(Rect{0.0, 0.0, 1.0, 1.0});
  CHECK(trace.results.size() == 2);
}

TEST_CASE("occupancy bounds after 2000 random inserts, M=200") {
  Rng rng(42);
  auto pts = random_points(rng, 2000);
  auto t = build_tree(pts, 200, 100);
  t.check_invariants();  // occupancy + MBR tightness by full walk
  CHECK(t.size() == 2000);
}

TEST_CASE("assign_leaf_ids: single leaf gets ID 0") {
  RTree t(RTreeConfig{4, 2});
  t.insert({1.0, 1.0});
  CHECK(t.assign_leaf_ids() == 1);
  auto trace = t.range_query(Rect{0.0, 0.0, 2.0, 2.0});
  REQUIRE(trace.visited_leaves.size() == 1);
  CHECK(trace.visited_leaves[0] == 0);
}

TEST_CASE("assign_leaf_ids: empty tree errors") {
  RTree t(RTreeConfig{4, 2});
  CHECK_THROWS_AS(t.assign_leaf_ids(), DataError);
}

TEST_CASE("assign_leaf_ids: DFS order on the eight-leaf worked tree") {
  auto t = eight_leaf_tree();
  CHECK(t.assign_leaf_ids() == 8);
  // Leaf k (in construction DFS order) covers x in [2k, 2k+1]; querying that
  // strip must visit exactly leaf ID k.
  for (std::uint32_t k = 0; k < 8; ++k) {
    auto trace = t.range_query(Rect{2.0 * k, 0.0, 2.0 * k + 1.0, 1.0});
    REQUIRE(trace.visited_leaves.size() == 1);
    CHECK(trace.visited_leaves[0] == k);
    CHECK(trace.results.size() == 2);
  }
  // Idempotent.
  CHECK(t.assign_leaf_ids() == 8);
  auto trace = t.range_query(Rect{4.0, 0.0, 5.0, 1.0});
  CHECK(trace.visited_leaves == std::vector<std::uint32_t>{2});
}

TEST_CASE("leaf IDs are dense 0..n-1") {
  Rng rng(3);
  auto pts = random_points(rng, 500);
  auto t = build_tree(pts, 8);
  auto n = t.leaf_count();
  std::set<std::uint32_t> seen;
  auto all = t.range_query(Rect{-1.0, -1.0, 2.0, 2.0});
  for (auto id : all.visited_leaves) seen.insert(id);
  CHECK(seen.size() == n);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == n - 1);
}

TEST_CASE("range query: disjoint rect yields empty trace") {
  Rng rng(5);
  auto t = build_tree(random_points(rng, 100), 8);
  auto trace = t.range_query(Rect{5.0, 5.0, 6.0, 6.0});
  CHECK(trace.results.empty());
  CHECK(trace.leaf_accesses == 0);
  CHECK(trace.visited_leaves.empty());
  CHECK(trace.true_leaves.empty());
}

TEST_CASE("visited-but-not-true leaves: VN=2 TN=1 scenario") {
  // Two leaves side by side; query overlaps both MBRs but only the left one
  // holds a qualifying point.
  RTree::NodeDesc left, right, root;
  left.points = {{0.0, 0.0}, {1.0, 1.0}};
  right.points = {{2.0, 6.0}, {3.0, 5.0}};  // MBR x:[2,3] y:[5,6], corners empty
  root.is_leaf = false;
  root.children = {left, right};
  auto t = RTree::build_explicit(RTreeConfig{4, 2}, root);
  t.assign_leaf_ids();
  // Query clips the right MBR's lower-left corner, where no point sits.
  auto trace = t.range_query(Rect{0.5, 0.0, 2.5, 5.2});
  CHECK(trace.visited_leaves.size() == 2);
  CHECK(trace.true_leaves.size() == 1);
  CHECK(trace.results.size() == 1);
  CHECK(trace.results[0] == Point{1.0, 1.0});
}

TEST_CASE("range query equals brute force on random trees") {
  Rng rng(11);
  for (int round = 0; round < 4; ++round) {
    auto pts = random_points(rng, 800);
    auto t = build_tree(pts, round % 2 ? 8 : 32);
    for (int i = 0; i < 250; ++i) {
      auto q = random_rect(rng);
      auto trace = t.range_query(q);
      CHECK(same_point_set(trace.results, brute_force_range(pts, q)));
      CHECK(trace.true_leaves.size() <= trace.visited_leaves.size());
      CHECK(trace.leaf_accesses == trace.visited_leaves.size());
      for (const Point& p : trace.results) CHECK(q.contains(p));
    }
  }
}

TEST_CASE("boundary semantics are closed") {
  RTree t(RTreeConfig{4, 2});
  t.insert({1.0, 1.0});
  t.insert({2.0, 2.0});
  t.assign_leaf_ids();
  auto trace = t.range_query(Rect{1.0, 1.0, 2.0, 2.0});
  CHECK(trace.results.size() == 2);  // both on the boundary
}

TEST_CASE("scan_leaf") {
  Rng rng(13);
  auto pts = random_points(rng, 400);
  auto t = build_tree(pts, 16);
  auto q = Rect{0.2, 0.2, 0.6, 0.6};
  auto trace = t.range_query(q);
  REQUIRE(!trace.true_leaves.empty());

  SUBCASE("true leaf yields results; union over true leaves equals the query") {
    std::vector<Point> collected;
    for (auto id : trace.true_leaves) {
      auto part = t.scan_leaf(id, q);
      CHECK(!part.empty());
      collected.insert(collected.end(), part.begin(), part.end());
    }
    CHECK(same_point_set(collected, trace.results));
  }

  SUBCASE("extraneous leaf scans are empty") {
    for (auto id : trace.visited_leaves) {
      bool is_true = std::find(trace.true_leaves.begin(), trace.true_leaves.end(), id) !=
                     trace.true_leaves.end();
      if (!is_true) CHECK(t.scan_leaf(id, q).empty());
    }
  }

  SUBCASE("unknown leaf id errors") {
    CHECK_THROWS_AS(t.scan_leaf(t.leaf_count(), q), DataError);
  }
}

TEST_CASE("size_bytes: header only when empty, monotone under insert, reproducible") {
  RTree t(RTreeConfig{8, 4});
  CHECK(t.size_bytes() == RTree::kNodeHeaderBytes);
  Rng rng(17);
  std::size_t prev = t.size_bytes();
  std::vector<Point> pts = random_points(rng, 300);
  for (const Point& p : pts) {
    t.insert(p);
    std::size_t now = t.size_bytes();
    CHECK(now >= prev + RTree::kLeafEntryBytes);
    prev = now;
  }
  auto again = build_tree(pts, 8, 4);
  t.assign_leaf_ids();
  CHECK(again.size_bytes() == t.size_bytes());
  CHECK(RTree::deep_equal(again, t));
}

TEST_CASE("snapshot round-trips bit-exactly") {
  Rng rng(23);
  auto pts = random_points(rng, 700);
  auto t = build_tree(pts, 16);
  std::stringstream buf;
  t.save(buf);
  auto loaded = RTree::load(buf);
  CHECK(RTree::deep_equal(t, loaded));
  CHECK(loaded.fingerprint() == t.fingerprint());
  CHECK(loaded.leaf_count() == t.leaf_count());

  // Same queries, same traces.
  for (int i = 0; i < 50; ++i) {
    auto q = random_rect(rng);
    auto a = t.range_query(q);
    auto b = loaded.range_query(q);
    CHECK(a.visited_leaves == b.visited_leaves);
    CHECK(a.true_leaves == b.true_leaves);
    CHECK(a.results == b.results);
  }

  TempDir dir("rtree_snapshot");
  t.save_file(dir.path() / "t.rtree");
  auto from_file = RTree::load_file(dir.path() / "t.rtree");
  CHECK(RTree::deep_equal(t, from_file));
}

TEST_CASE("snapshot rejects garbage") {
  std::stringstream buf("not a snapshot at all");
  CHECK_THROWS_AS(RTree::load(buf), DataError);
}

TEST_CASE("property: invariants hold across many random trees") {
  Rng rng(29);
  for (int round = 0; round < 60; ++round) {
    const std::uint32_t max_entries = 4 + static_cast<std::uint32_t>(rng.index(28));
    const std::size_t n = 1 + rng.index(300);
    auto pts = random_points(rng, n);
    RTree t(RTreeConfig{max_entries, 0});
    for (const Point& p : pts) t.insert(p);
    t.check_invariants();
    t.assign_leaf_ids();
    auto q = random_rect(rng);
    auto trace = t.range_query(q);
    CHECK(same_point_set(trace.results, brute_force_range(pts, q)));
  }
}
