#include "airtree/rtree.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "airtree/errors.hpp"
#include "airtree/serialize.hpp"

namespace airtree {

namespace {
constexpr char kMagic[9] = "AIRTREE1";
constexpr std::uint32_t kSnapshotVersion = 1;
}  // namespace

struct RTree::Node {
  Rect mbr;
  bool is_leaf = true;
  std::int64_t leaf_id = -1;
  std::vector<Point> points;
  std::vector<std::unique_ptr<Node>> children;

  std::size_t entry_count() const { return is_leaf ? points.size() : children.size(); }

  Rect tight_mbr() const {
    Rect r;
    if (is_leaf) {
      if (points.empty()) return Rect{};
      r = Rect::of_point(points.front());
      for (std::size_t i = 1; i < points.size(); ++i) r.expand(points[i]);
    } else {
      r = children.front()->mbr;
      for (std::size_t i = 1; i < children.size(); ++i) r.expand(children[i]->mbr);
    }
    return r;
  }
};

RTreeConfig RTreeConfig::resolved() const {
  RTreeConfig r = *this;
  if (r.min_entries == 0) r.min_entries = r.max_entries / 2;
  const std::uint32_t half_up = (r.max_entries + 1) / 2;
  if (r.min_entries < 2 || r.min_entries > half_up)
    throw UsageError("rtree config requires 2 <= m <= ceil(M/2), got M=" +
                     std::to_string(r.max_entries) + " m=" + std::to_string(r.min_entries));
  return r;
}

RTree::RTree(RTreeConfig config) : config_(config.resolved()) {
  root_ = std::make_unique<Node>();
}

RTree::RTree(RTree&&) noexcept = default;
RTree& RTree::operator=(RTree&&) noexcept = default;
RTree::~RTree() = default;

Rect RTree::bounds() const {
  if (empty()) throw DataError("bounds() on empty tree");
  return root_->mbr;
}

namespace {

// Guttman's linear PickSeeds over entry MBRs: per dimension take the entry
// with the highest low side and the one with the lowest high side, normalize
// their separation by the dimension's total width, and keep the dimension
// with the greatest normalized separation.
std::pair<std::size_t, std::size_t> linear_pick_seeds(const std::vector<Rect>& rects) {
  const std::size_t n = rects.size();
  double best_sep = -std::numeric_limits<double>::infinity();
  std::size_t seed_a = 0, seed_b = 1;
  for (int dim = 0; dim < 2; ++dim) {
    auto lo = [&](std::size_t i) { return dim == 0 ? rects[i].xmin : rects[i].ymin; };
    auto hi = [&](std::size_t i) { return dim == 0 ? rects[i].xmax : rects[i].ymax; };
    std::size_t highest_low = 0, lowest_high = 0;
    double min_lo = lo(0), max_hi = hi(0);
    for (std::size_t i = 1; i < n; ++i) {
      if (lo(i) > lo(highest_low)) highest_low = i;
      if (hi(i) < hi(lowest_high)) lowest_high = i;
      min_lo = std::min(min_lo, lo(i));
      max_hi = std::max(max_hi, hi(i));
    }
    if (highest_low == lowest_high) continue;  // degenerate pick, skip dimension
    const double width = max_hi - min_lo;
    if (!(width > 0.0)) continue;
    const double sep = (lo(highest_low) - hi(lowest_high)) / width;
    if (sep > best_sep) {
      best_sep = sep;
      seed_a = lowest_high;
      seed_b = highest_low;
    }
  }
  return {seed_a, seed_b};
}

// Distributes entries after seed picking. Remaining entries go, in stored
// order, to the group whose MBR needs least enlargement; ties by smaller
// area, then fewer entries. When one group must take every remaining entry
// to reach the m minimum, it does.
struct SplitAssignment {
  std::vector<std::size_t> group_a;
  std::vector<std::size_t> group_b;
};

SplitAssignment linear_split(const std::vector<Rect>& rects, std::uint32_t min_entries) {
  const std::size_t n = rects.size();
  auto [seed_a, seed_b] = linear_pick_seeds(rects);
  SplitAssignment out;
  out.group_a.push_back(seed_a);
  out.group_b.push_back(seed_b);
  Rect mbr_a = rects[seed_a];
  Rect mbr_b = rects[seed_b];

  std::vector<std::size_t> rest;
  rest.reserve(n - 2);
  for (std::size_t i = 0; i < n; ++i)
    if (i != seed_a && i != seed_b) rest.push_back(i);

  for (std::size_t k = 0; k < rest.size(); ++k) {
    const std::size_t left = rest.size() - k;
    const std::size_t need_a = min_entries > out.group_a.size() ? min_entries - out.group_a.size() : 0;
    const std::size_t need_b = min_entries > out.group_b.size() ? min_entries - out.group_b.size() : 0;
    if (need_a >= left) {
      for (std::size_t j = k; j < rest.size(); ++j) out.group_a.push_back(rest[j]);
      break;
    }
    if (need_b >= left) {
      for (std::size_t j = k; j < rest.size(); ++j) out.group_b.push_back(rest[j]);
      break;
    }
    const std::size_t i = rest[k];
    const double da = mbr_a.enlargement(rects[i]);
    const double db = mbr_b.enlargement(rects[i]);
    bool to_a;
    if (da != db) {
      to_a = da < db;
    } else if (mbr_a.area() != mbr_b.area()) {
      to_a = mbr_a.area() < mbr_b.area();
    } else {
      to_a = out.group_a.size() <= out.group_b.size();
    }
    if (to_a) {
      out.group_a.push_back(i);
      mbr_a.expand(rects[i]);
    } else {
      out.group_b.push_back(i);
      mbr_b.expand(rects[i]);
    }
  }
  return out;
}

}  // namespace

namespace {

std::size_t choose_subtree(const std::vector<std::unique_ptr<RTree::Node>>& children,
                           const Point& p) {
  const Rect pr = Rect::of_point(p);
  std::size_t best = 0;
  double best_enl = children[0]->mbr.enlargement(pr);
  double best_area = children[0]->mbr.area();
  for (std::size_t i = 1; i < children.size(); ++i) {
    const double enl = children[i]->mbr.enlargement(pr);
    const double area = children[i]->mbr.area();
    if (enl < best_enl || (enl == best_enl && area < best_area)) {
      best = i;
      best_enl = enl;
      best_area = area;
    }
  }
  return best;
}

}  // namespace

namespace detail {

std::unique_ptr<RTree::Node> split_leaf(RTree::Node& node, std::uint32_t min_entries) {
  std::vector<Point> entries = std::move(node.points);
  std::vector<Rect> rects;
  rects.reserve(entries.size());
  for (const Point& p : entries) rects.push_back(Rect::of_point(p));
  SplitAssignment split = linear_split(rects, min_entries);

  node.points.clear();
  for (std::size_t i : split.group_a) node.points.push_back(entries[i]);
  auto sibling = std::make_unique<RTree::Node>();
  sibling->is_leaf = true;
  for (std::size_t i : split.group_b) sibling->points.push_back(entries[i]);

  node.mbr = node.tight_mbr();
  sibling->mbr = sibling->tight_mbr();
  return sibling;
}

std::unique_ptr<RTree::Node> split_internal(RTree::Node& node, std::uint32_t min_entries) {
  std::vector<std::unique_ptr<RTree::Node>> entries = std::move(node.children);
  std::vector<Rect> rects;
  rects.reserve(entries.size());
  for (const auto& c : entries) rects.push_back(c->mbr);
  SplitAssignment split = linear_split(rects, min_entries);

  node.children.clear();
  for (std::size_t i : split.group_a) node.children.push_back(std::move(entries[i]));
  auto sibling = std::make_unique<RTree::Node>();
  sibling->is_leaf = false;
  for (std::size_t i : split.group_b) sibling->children.push_back(std::move(entries[i]));

  node.mbr = node.tight_mbr();
  sibling->mbr = sibling->tight_mbr();
  return sibling;
}

std::unique_ptr<RTree::Node> insert_rec(RTree::Node& node, const Point& p,
                                        const RTreeConfig& cfg) {
  if (node.is_leaf) {
    if (node.points.empty())
      node.mbr = Rect::of_point(p);
    else
      node.mbr.expand(p);
    node.points.push_back(p);
    if (node.points.size() > cfg.max_entries) return split_leaf(node, cfg.min_entries);
    return nullptr;
  }
  const std::size_t idx = choose_subtree(node.children, p);
  auto sibling = insert_rec(*node.children[idx], p, cfg);
  if (sibling) {
    node.children.insert(node.children.begin() + static_cast<std::ptrdiff_t>(idx) + 1,
                         std::move(sibling));
  }
  node.mbr = node.tight_mbr();
  if (node.children.size() > cfg.max_entries) return split_internal(node, cfg.min_entries);
  return nullptr;
}

}  // namespace detail

void RTree::insert(const Point& p) {
  if (!p.finite()) throw std::invalid_argument("insert: non-finite coordinates");
  ids_assigned_ = false;
  leaf_index_.clear();
  auto sibling = detail::insert_rec(*root_, p, config_);
  if (sibling) {
    auto new_root = std::make_unique<Node>();
    new_root->is_leaf = false;
    new_root->children.push_back(std::move(root_));
    new_root->children.push_back(std::move(sibling));
    new_root->mbr = new_root->tight_mbr();
    root_ = std::move(new_root);
  }
  ++count_;
}

std::uint32_t RTree::assign_leaf_ids() {
  if (empty()) throw DataError("assign_leaf_ids: tree is empty");
  leaf_index_.clear();
  auto walk = [&](auto&& self, Node& n) -> void {
    if (n.is_leaf) {
      n.leaf_id = static_cast<std::int64_t>(leaf_index_.size());
      leaf_index_.push_back(&n);
      return;
    }
    for (auto& c : n.children) self(self, *c);
  };
  walk(walk, *root_);
  ids_assigned_ = true;
  return static_cast<std::uint32_t>(leaf_index_.size());
}

std::uint32_t RTree::leaf_count() const {
  if (!ids_assigned_) throw DataError("leaf_count: leaf IDs not assigned");
  return static_cast<std::uint32_t>(leaf_index_.size());
}

QueryTrace RTree::range_query(const Rect& q) const {
  q.require_valid();
  QueryTrace trace;
  if (empty()) return trace;
  if (!ids_assigned_) throw DataError("range_query: assign_leaf_ids first");
  auto descend = [&](auto&& self, const Node& n) -> void {
    if (!n.mbr.intersects(q)) return;
    if (n.is_leaf) {
      trace.visited_leaves.push_back(static_cast<std::uint32_t>(n.leaf_id));
      bool any = false;
      for (const Point& p : n.points) {
        if (q.contains(p)) {
          trace.results.push_back(p);
          any = true;
        }
      }
      if (any) trace.true_leaves.push_back(static_cast<std::uint32_t>(n.leaf_id));
      return;
    }
    for (const auto& c : n.children) self(self, *c);
  };
  descend(descend, *root_);
  trace.leaf_accesses = trace.visited_leaves.size();
  return trace;
}

std::size_t RTree::count_in(const Rect& q) const {
  q.require_valid();
  if (empty()) return 0;
  std::size_t count = 0;
  auto descend = [&](auto&& self, const Node& n) -> void {
    if (!n.mbr.intersects(q)) return;
    if (n.is_leaf) {
      for (const Point& p : n.points)
        if (q.contains(p)) ++count;
      return;
    }
    for (const auto& c : n.children) self(self, *c);
  };
  descend(descend, *root_);
  return count;
}

std::vector<Point> RTree::scan_leaf(std::uint32_t leaf_id, const Rect& q) const {
  q.require_valid();
  if (!ids_assigned_ || leaf_id >= leaf_index_.size())
    throw DataError("scan_leaf: unknown leaf id " + std::to_string(leaf_id));
  std::vector<Point> results;
  for (const Point& p : leaf_index_[leaf_id]->points)
    if (q.contains(p)) results.push_back(p);
  return results;
}

Rect RTree::leaf_mbr(std::uint32_t leaf_id) const {
  if (!ids_assigned_ || leaf_id >= leaf_index_.size())
    throw DataError("leaf_mbr: unknown leaf id " + std::to_string(leaf_id));
  return leaf_index_[leaf_id]->mbr;
}

std::size_t RTree::size_bytes() const {
  std::size_t total = 0;
  auto walk = [&](auto&& self, const Node& n) -> void {
    total += kNodeHeaderBytes;
    if (n.is_leaf) {
      total += n.points.size() * kLeafEntryBytes;
      return;
    }
    total += n.children.size() * kInternalEntryBytes;
    for (const auto& c : n.children) self(self, *c);
  };
  walk(walk, *root_);
  return total;
}

std::size_t RTree::node_count() const {
  std::size_t total = 0;
  auto walk = [&](auto&& self, const Node& n) -> void {
    ++total;
    if (!n.is_leaf)
      for (const auto& c : n.children) self(self, *c);
  };
  walk(walk, *root_);
  return total;
}

std::size_t RTree::height() const {
  std::size_t h = 1;
  const Node* n = root_.get();
  while (!n->is_leaf) {
    ++h;
    n = n->children.front().get();
  }
  return h;
}

void RTree::save(std::ostream& out) const {
  BinaryWriter w(out);
  out.write(kMagic, 8);
  w.u32(kSnapshotVersion);
  w.u32(config_.max_entries);
  w.u32(config_.min_entries);
  w.u64(count_);
  w.u8(ids_assigned_ ? 1 : 0);
  auto walk = [&](auto&& self, const Node& n) -> void {
    w.u8(n.is_leaf ? 0 : 1);
    w.f64(n.mbr.xmin);
    w.f64(n.mbr.ymin);
    w.f64(n.mbr.xmax);
    w.f64(n.mbr.ymax);
    w.i64(n.leaf_id);
    w.u32(static_cast<std::uint32_t>(n.entry_count()));
    if (n.is_leaf) {
      for (const Point& p : n.points) {
        w.f64(p.x);
        w.f64(p.y);
      }
      return;
    }
    for (const auto& c : n.children) self(self, *c);
  };
  walk(walk, *root_);
}

RTree RTree::load(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::string(magic, 8) != std::string(kMagic, 8))
    throw DataError("rtree snapshot: bad magic");
  BinaryReader r(in);
  const std::uint32_t version = r.u32();
  if (version != kSnapshotVersion)
    throw DataError("rtree snapshot: unsupported version " + std::to_string(version));
  RTreeConfig cfg;
  cfg.max_entries = r.u32();
  cfg.min_entries = r.u32();
  RTree tree(cfg);
  const std::uint64_t count = r.u64();
  const bool ids = r.u8() != 0;

  auto read_node = [&](auto&& self) -> std::unique_ptr<Node> {
    auto n = std::make_unique<Node>();
    n->is_leaf = r.u8() == 0;
    n->mbr.xmin = r.f64();
    n->mbr.ymin = r.f64();
    n->mbr.xmax = r.f64();
    n->mbr.ymax = r.f64();
    n->leaf_id = r.i64();
    const std::uint32_t entries = r.u32();
    if (n->is_leaf) {
      n->points.reserve(entries);
      for (std::uint32_t i = 0; i < entries; ++i) {
        Point p{r.f64(), r.f64()};
        n->points.push_back(p);
      }
    } else {
      n->children.reserve(entries);
      for (std::uint32_t i = 0; i < entries; ++i) n->children.push_back(self(self));
    }
    return n;
  };
  tree.root_ = read_node(read_node);
  tree.count_ = count;
  if (ids) tree.assign_leaf_ids();
  if (!tree.empty()) tree.check_invariants();
  return tree;
}

void RTree::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create snapshot: " + path.string());
  save(out);
  if (!out) throw DataError("error writing snapshot: " + path.string());
}

RTree RTree::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot: " + path.string());
  return load(in);
}

std::uint64_t RTree::fingerprint() const {
  std::ostringstream buf;
  save(buf);
  return fnv1a64(buf.str());
}

bool RTree::deep_equal(const RTree& a, const RTree& b) {
  if (!(a.config_ == b.config_) || a.count_ != b.count_ || a.ids_assigned_ != b.ids_assigned_)
    return false;
  auto eq = [](auto&& self, const Node& x, const Node& y) -> bool {
    if (x.is_leaf != y.is_leaf || !(x.mbr == y.mbr) || x.leaf_id != y.leaf_id) return false;
    if (x.is_leaf) {
      if (x.points.size() != y.points.size()) return false;
      for (std::size_t i = 0; i < x.points.size(); ++i)
        if (!(x.points[i] == y.points[i])) return false;
      return true;
    }
    if (x.children.size() != y.children.size()) return false;
    for (std::size_t i = 0; i < x.children.size(); ++i)
      if (!self(self, *x.children[i], *y.children[i])) return false;
    return true;
  };
  return eq(eq, *a.root_, *b.root_);
}

RTree RTree::build_explicit(RTreeConfig config, const NodeDesc& root) {
  RTree tree(config);
  std::size_t count = 0;
  auto build = [&](auto&& self, const NodeDesc& d) -> std::unique_ptr<Node> {
    auto n = std::make_unique<Node>();
    n->is_leaf = d.is_leaf;
    if (d.is_leaf) {
      n->points = d.points;
      count += d.points.size();
    } else {
      if (d.children.empty()) throw UsageError("build_explicit: internal node with no children");
      for (const auto& c : d.children) n->children.push_back(self(self, c));
    }
    n->mbr = n->tight_mbr();
    return n;
  };
  tree.root_ = build(build, root);
  tree.count_ = count;
  if (!tree.empty()) tree.check_invariants();
  return tree;
}

void RTree::check_invariants() const {
  const auto& cfg = config_;
  std::int64_t leaf_depth = -1;
  auto walk = [&](auto&& self, const Node& n, std::size_t depth, bool is_root) -> void {
    const std::size_t entries = n.entry_count();
    if (is_root) {
      if (!n.is_leaf && entries < 2) throw DataError("invariant: internal root with <2 children");
    } else {
      if (entries < cfg.min_entries || entries > cfg.max_entries)
        throw DataError("invariant: node occupancy " + std::to_string(entries) +
                        " outside [" + std::to_string(cfg.min_entries) + ", " +
                        std::to_string(cfg.max_entries) + "]");
    }
    if (!(n.mbr == n.tight_mbr())) throw DataError("invariant: MBR not tight");
    if (n.is_leaf) {
      if (leaf_depth < 0)
        leaf_depth = static_cast<std::int64_t>(depth);
      else if (leaf_depth != static_cast<std::int64_t>(depth))
        throw DataError("invariant: leaves at different depths");
      return;
    }
    for (const auto& c : n.children) self(self, *c, depth + 1, false);
  };
  walk(walk, *root_, 0, true);
}

}  // namespace airtree
