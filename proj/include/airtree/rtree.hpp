#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "airtree/geometry.hpp"

namespace airtree {

struct RTreeConfig {
  std::uint32_t max_entries = 200;  // M
  std::uint32_t min_entries = 0;    // m; 0 means the default M/2

  // Validates 2 <= m <= ceil(M/2) and resolves the m = M/2 default.
  RTreeConfig resolved() const;

  friend bool operator==(const RTreeConfig&, const RTreeConfig&) = default;
};

// Instrumentation captured by a range query: which leaves the descent
// visited, which of those actually contributed results (the "true" leaves),
// and the result points themselves. Leaf IDs appear in visit order, which is
// DFS order, i.e. ascending once IDs are assigned.
struct QueryTrace {
  std::vector<std::uint32_t> visited_leaves;
  std::vector<std::uint32_t> true_leaves;
  std::vector<Point> results;
  std::size_t leaf_accesses = 0;  // == visited_leaves.size()
};

// Dynamic Guttman R-tree over 2-d points: one-at-a-time insertion, linear
// node splitting, DFS leaf-ID assignment, and instrumented search. Build is
// single-writer; after assign_leaf_ids the tree is treated as immutable and
// is safe for concurrent read-only queries.
class RTree {
 public:
  explicit RTree(RTreeConfig config = {});
  RTree(RTree&&) noexcept;
  RTree& operator=(RTree&&) noexcept;
  ~RTree();

  const RTreeConfig& config() const { return config_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  Rect bounds() const;  // MBR of the whole tree; invalid to call when empty

  // Inserts one point. Throws std::invalid_argument on non-finite
  // coordinates. Duplicates are stored as-is; deduplication is the
  // workload's concern. Invalidate previously assigned leaf IDs.
  void insert(const Point& p);

  // Assigns consecutive IDs 0..leaf_count-1 to leaf nodes in DFS order
  // (children visited in stored order) and returns the leaf count.
  // Idempotent. Throws DataError on an empty tree.
  std::uint32_t assign_leaf_ids();

  bool leaf_ids_assigned() const { return ids_assigned_; }
  std::uint32_t leaf_count() const;

  // Standard top-down range search, boundary-inclusive, recording the trace.
  QueryTrace range_query(const Rect& q) const;

  // Result count only; no trace allocation. Used by the workload generator.
  std::size_t count_in(const Rect& q) const;

  // Scans one leaf against q. Exactly one leaf access regardless of how many
  // results qualify. Throws DataError for an unknown leaf_id.
  std::vector<Point> scan_leaf(std::uint32_t leaf_id, const Rect& q) const;

  Rect leaf_mbr(std::uint32_t leaf_id) const;

  // Deterministic size estimate, the figure reported next to model sizes:
  //   sum over nodes of NODE_HEADER_BYTES
  //     + 16 bytes per leaf entry (x, y)
  //     + 8 bytes per internal entry (child reference).
  // NODE_HEADER_BYTES = 48 (own MBR 32, kind/count/leaf-id 16).
  static constexpr std::size_t kNodeHeaderBytes = 48;
  static constexpr std::size_t kLeafEntryBytes = 16;
  static constexpr std::size_t kInternalEntryBytes = 8;
  std::size_t size_bytes() const;

  std::size_t node_count() const;
  std::size_t height() const;  // 1 for a single-leaf tree

  // Fingerprint of the canonical serialized form; pairs artifacts together.
  std::uint64_t fingerprint() const;

  // Versioned binary snapshot: config, topology, leaf IDs, points.
  // load(save(t)) reproduces t bit-exactly (deep_equal below).
  void save(std::ostream& out) const;
  static RTree load(std::istream& in);
  void save_file(const std::filesystem::path& path) const;
  static RTree load_file(const std::filesystem::path& path);

  static bool deep_equal(const RTree& a, const RTree& b);

  // Structural description used by tests and the snapshot loader to build a
  // tree with explicit topology. An entry is either a point (leaf parent) or
  // a nested node.
  struct NodeDesc {
    bool is_leaf = true;
    std::vector<Point> points;           // when is_leaf
    std::vector<NodeDesc> children;      // when !is_leaf
  };
  static RTree build_explicit(RTreeConfig config, const NodeDesc& root);

  // Full-tree invariant walk: occupancy bounds, MBR tightness, leaf depth
  // uniformity. Throws DataError with a description on violation.
  void check_invariants() const;

  struct Node;  // defined in rtree.cpp

 private:
  RTreeConfig config_;
  std::unique_ptr<Node> root_;
  std::size_t count_ = 0;
  bool ids_assigned_ = false;
  std::vector<Node*> leaf_index_;  // leaf_id -> node, valid when ids_assigned_
};

}  // namespace airtree
