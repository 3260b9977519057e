#include "airtree/mltree.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "airtree/errors.hpp"
#include "airtree/serialize.hpp"

namespace airtree {
namespace {

constexpr char kMagic[] = "airtree mltree";
constexpr std::uint32_t kVersion = 1;

// Splits are scored by maximizing S2L/nL + S2R/nR where S2 is the sum of
// squared per-label counts (equivalent to minimizing the summed per-label
// Gini). Comparisons cross-multiply in 128-bit so tie-breaking is exact.
struct SplitScore {
  __int128 num = -1;
  std::int64_t den = 1;

  bool better_than(const SplitScore& other) const {
    return num * other.den > other.num * den;
  }
};

struct Candidate {
  bool found = false;
  int feature = 0;
  double threshold = 0.0;
  SplitScore score;
};

class Builder {
 public:
  Builder(const std::vector<TrainingExample>& examples, std::uint32_t label_count, int max_depth)
      : x_(examples), max_depth_(max_depth), count_(label_count, 0), left_count_(label_count, 0) {}

  std::vector<MultiLabelTree::Node> run() {
    std::vector<std::uint32_t> idx(x_.size());
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    nodes_.reserve(2 * x_.size());
    build(idx, 0);
    return std::move(nodes_);
  }

 private:
  // Label ids present in the current node, with their counts in count_.
  // touched_ keeps clearing O(distinct labels) instead of O(label_count).
  void tally(const std::vector<std::uint32_t>& idx) {
    for (std::uint32_t t : touched_) count_[t] = 0;
    touched_.clear();
    for (std::uint32_t i : idx) {
      for (std::uint32_t l : x_[i].label_ids) {
        if (count_[l] == 0) touched_.push_back(l);
        ++count_[l];
      }
    }
    std::sort(touched_.begin(), touched_.end());
  }

  Candidate best_split(std::vector<std::uint32_t>& idx) {
    const auto n = static_cast<std::int64_t>(idx.size());
    Candidate best;
    for (int f = 0; f < 4; ++f) {
      std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double va = x_[a].features[f], vb = x_[b].features[f];
        return va != vb ? va < vb : a < b;
      });

      for (std::uint32_t l : touched_) left_count_[l] = 0;
      std::int64_t s2l = 0, s2r = 0;
      for (std::uint32_t l : touched_) s2r += count_[l] * count_[l];

      for (std::int64_t j = 0; j + 1 < n; ++j) {
        const TrainingExample& ex = x_[idx[static_cast<std::size_t>(j)]];
        for (std::uint32_t l : ex.label_ids) {
          const std::int64_t cl = left_count_[l]++;
          const std::int64_t cr = count_[l] - cl;  // right count before the move
          s2l += 2 * cl + 1;
          s2r -= 2 * cr - 1;
        }
        const double v = ex.features[f];
        const double vnext = x_[idx[static_cast<std::size_t>(j + 1)]].features[f];
        if (v == vnext) continue;
        double thr = 0.5 * (v + vnext);
        if (!(thr < vnext)) thr = v;  // midpoint rounded up to vnext: fall back

        const std::int64_t nl = j + 1, nr = n - nl;
        SplitScore score{static_cast<__int128>(s2l) * nr + static_cast<__int128>(s2r) * nl,
                         nl * nr};
        if (!best.found || score.better_than(best.score)) {
          best = Candidate{true, f, thr, score};
        }
      }
    }
    return best;
  }

  std::uint32_t make_leaf(const std::vector<std::uint32_t>& idx) {
    MultiLabelTree::Node node;
    const auto n = static_cast<std::int64_t>(idx.size());
    for (std::uint32_t l : touched_) {
      if (2 * count_[l] >= n) node.labels.push_back(l);  // majority; tie -> set
    }
    nodes_.push_back(std::move(node));
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  std::uint32_t build(std::vector<std::uint32_t>& idx, int depth) {
    tally(idx);
    const auto n = static_cast<std::int64_t>(idx.size());
    std::int64_t s1 = 0, s2 = 0;
    for (std::uint32_t l : touched_) {
      s1 += count_[l];
      s2 += count_[l] * count_[l];
    }
    const bool pure = s2 == n * s1;  // every label count is 0 or n
    if (pure || depth >= max_depth_ || n < MultiLabelTree::kMinSamplesSplit) {
      return make_leaf(idx);
    }

    Candidate split = best_split(idx);
    if (!split.found) return make_leaf(idx);  // all four features constant

    std::vector<std::uint32_t> left, right;
    left.reserve(idx.size());
    for (std::uint32_t i : idx) {
      (x_[i].features[split.feature] <= split.threshold ? left : right).push_back(i);
    }

    const auto me = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    const std::uint32_t left_id = build(left, depth + 1);
    const std::uint32_t right_id = build(right, depth + 1);
    MultiLabelTree::Node& node = nodes_[me];
    node.feature = static_cast<std::int16_t>(split.feature);
    node.threshold = split.threshold;
    node.left = left_id;  // == me + 1 (preorder)
    node.right = right_id;
    // tally() state was clobbered by the recursion; the caller retallies.
    return me;
  }

  const std::vector<TrainingExample>& x_;
  const int max_depth_;
  std::vector<MultiLabelTree::Node> nodes_;
  std::vector<std::int64_t> count_;
  std::vector<std::int64_t> left_count_;
  std::vector<std::uint32_t> touched_;
};

}  // namespace

MultiLabelTree train_mltree(const std::vector<TrainingExample>& examples, int max_depth) {
  if (examples.empty()) throw DataError("train_mltree: empty training set");
  if (max_depth < 1) throw UsageError("train_mltree: max_depth must be positive");
  const std::uint32_t label_count = examples.front().leaf_count;
  for (const TrainingExample& ex : examples) {
    if (ex.leaf_count != label_count) {
      throw DataError("train_mltree: inconsistent label-vector lengths");
    }
    if (ex.label_ids.empty()) throw DataError("train_mltree: example with no labels");
    for (std::uint32_t l : ex.label_ids) {
      if (l >= label_count) throw DataError("train_mltree: label id out of range");
    }
  }

  MultiLabelTree tree;
  tree.leaf_count_ = label_count;
  tree.max_depth_ = static_cast<std::uint32_t>(max_depth);
  tree.train_examples_ = examples.size();
  tree.nodes_ = Builder(examples, label_count, max_depth).run();
  return tree;
}

std::vector<std::uint32_t> MultiLabelTree::predict(const std::array<double, 4>& features) const {
  if (nodes_.empty()) throw DataError("predict on an untrained model");
  std::uint32_t at = 0;
  while (nodes_[at].feature >= 0) {
    const Node& node = nodes_[at];
    at = features[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                            : node.right;
  }
  return nodes_[at].labels;
}

std::size_t MultiLabelTree::size_bytes() const {
  std::size_t total = 0;
  for (const Node& node : nodes_) {
    total += node.feature >= 0 ? 13 : 5 + 4 * node.labels.size();
  }
  return total;
}

void MultiLabelTree::save(std::ostream& out) const {
  if (nodes_.empty()) throw DataError("cannot save an untrained model");
  BinaryWriter w(out);
  w.str(kMagic);
  w.u32(kVersion);
  w.u32(leaf_count_);
  w.u32(max_depth_);
  w.u32(kMinSamplesSplit);
  w.u64(train_examples_);
  w.u32(static_cast<std::uint32_t>(nodes_.size()));
  for (const Node& node : nodes_) {
    if (node.feature >= 0) {
      w.u8(static_cast<std::uint8_t>(node.feature));
      w.f64(node.threshold);
      w.u32(node.right);  // left child is implicit (next preorder node)
    } else {
      w.u8(0xFF);
      w.u32(static_cast<std::uint32_t>(node.labels.size()));
      for (std::uint32_t l : node.labels) w.u32(l);
    }
  }
}

MultiLabelTree MultiLabelTree::load(std::istream& in) {
  BinaryReader r(in);
  if (r.str() != kMagic) throw DataError("not a multi-label tree model");
  if (r.u32() != kVersion) throw DataError("unsupported multi-label tree version");
  MultiLabelTree tree;
  tree.leaf_count_ = r.u32();
  tree.max_depth_ = r.u32();
  if (r.u32() != kMinSamplesSplit) throw DataError("unexpected min_samples_split");
  tree.train_examples_ = r.u64();
  const std::uint32_t count = r.u32();
  if (count == 0) throw DataError("multi-label tree model has no nodes");
  tree.nodes_.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Node& node = tree.nodes_[i];
    const std::uint8_t tag = r.u8();
    if (tag == 0xFF) {
      node.feature = -1;
      const std::uint32_t k = r.u32();
      if (k > tree.leaf_count_) throw DataError("corrupt model: leaf label overflow");
      node.labels.resize(k);
      for (std::uint32_t j = 0; j < k; ++j) node.labels[j] = r.u32();
      if (!std::is_sorted(node.labels.begin(), node.labels.end())) {
        throw DataError("corrupt model: leaf labels not sorted");
      }
      for (std::uint32_t l : node.labels) {
        if (l >= tree.leaf_count_) throw DataError("corrupt model: label id out of range");
      }
    } else {
      if (tag > 3) throw DataError("corrupt model: bad feature tag");
      node.feature = tag;
      node.threshold = r.f64();
      node.left = i + 1;
      node.right = r.u32();
      if (node.left >= count || node.right >= count || node.right <= i) {
        throw DataError("corrupt model: child index out of range");
      }
    }
  }
  if (!in) throw DataError("truncated multi-label tree model");
  return tree;
}

void MultiLabelTree::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path.string());
  save(out);
  if (!out.flush()) throw DataError("failed writing model file: " + path.string());
}

MultiLabelTree MultiLabelTree::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  return load(in);
}

std::uint64_t MultiLabelTree::fingerprint() const {
  std::ostringstream bytes;
  save(bytes);
  return fnv1a64(bytes.str());
}

double subset_accuracy(const MultiLabelTree& model, const std::vector<TrainingExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const TrainingExample& ex : examples) {
    if (model.predict(ex.features) == ex.label_ids) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace airtree
