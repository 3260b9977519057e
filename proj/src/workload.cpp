#include "airtree/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <sstream>

#include "airtree/errors.hpp"
#include "airtree/rng.hpp"
#include "airtree/serialize.hpp"

namespace airtree {
namespace {

constexpr std::size_t kBucketQuotaCap = 1000;
constexpr std::size_t kBudgetFactor = 200;
constexpr double kCountWindow = 0.20;  // accept result counts within +-20% of target

// One attempt's rectangle family: anchored at a seed data point with a fixed
// aspect ratio and interior offset, parameterized by a single scale so the
// contained count is monotone in the scale (bisectable).
struct RectFamily {
  Point seed;
  double aspect;  // width / height skew, in [0.5, 2]
  double u, v;    // seed's relative position inside the rect, in (0,1)

  Rect at(double scale) const {
    const double w = scale * aspect;
    const double h = scale / aspect;
    return Rect{seed.x - u * w, seed.y - v * h, seed.x + (1.0 - u) * w, seed.y + (1.0 - v) * h};
  }
};

// Grows/bisects the family's scale until the tree reports a count inside
// [lo, hi]. Returns nullopt when the discrete count jumps over the window.
std::optional<Rect> fit_count_window(const RTree& tree, const RectFamily& fam, double start_scale,
                                     double lo, double hi) {
  const auto count_at = [&](double s) {
    return static_cast<double>(tree.count_in(fam.at(s)));
  };

  double below = 0.0;  // scale known to be under the window (count < lo)
  if (double c0 = count_at(0.0); c0 >= lo) {
    return c0 <= hi ? std::optional<Rect>(fam.at(0.0)) : std::nullopt;
  }

  double above = start_scale;
  double c = count_at(above);
  for (int i = 0; i < 64 && c < lo; ++i) {
    below = above;
    above *= 2.0;
    c = count_at(above);
  }
  if (c < lo) return std::nullopt;  // dataset smaller than the window floor
  if (c <= hi) return fam.at(above);

  for (int i = 0; i < 64; ++i) {
    const double mid = 0.5 * (below + above);
    const double cm = count_at(mid);
    if (cm < lo) {
      below = mid;
    } else if (cm <= hi) {
      return fam.at(mid);
    } else {
      above = mid;
    }
  }
  return std::nullopt;
}

void note(std::vector<std::string>* warnings, std::string msg) {
  if (warnings != nullptr) warnings->push_back(std::move(msg));
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_f64(const std::string& tok) {
  const char* start = tok.c_str();
  char* stop = nullptr;
  double v = std::strtod(start, &stop);
  if (stop != start + tok.size()) throw DataError("workload file: bad number '" + tok + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& tok) {
  const char* start = tok.c_str();
  char* stop = nullptr;
  unsigned long long v = std::strtoull(start, &stop, 10);
  if (stop != start + tok.size()) throw DataError("workload file: bad integer '" + tok + "'");
  return v;
}

void check_query(const LabeledQuery& q) {
  q.rect.require_valid();
  if (q.vn == 0 || q.tn > q.vn) throw DataError("workload file: tn/vn out of range");
  if (q.alpha != static_cast<double>(q.tn) / static_cast<double>(q.vn)) {
    throw DataError("workload file: alpha does not equal tn/vn");
  }
  if (q.true_leaf_ids.size() != q.tn || !std::is_sorted(q.true_leaf_ids.begin(), q.true_leaf_ids.end())) {
    throw DataError("workload file: true leaf list malformed");
  }
}

}  // namespace

void WorkloadSpec::validate(std::size_t dataset_size) const {
  if (!(selectivity > 0.0 && selectivity < 1.0)) {
    throw UsageError("selectivity must lie in (0,1)");
  }
  if (selectivity * static_cast<double>(dataset_size) < 1.0) {
    throw UsageError("selectivity * dataset size must be >= 1");
  }
  if (query_count == 0 || query_count > kBucketQuotaCap) {
    throw UsageError("query_count must be in [1, 1000] per alpha bucket");
  }
  if (alpha_targets.empty()) throw UsageError("alpha_targets must be nonempty");
  for (double t : alpha_targets) {
    if (!(t > 0.0 && t <= 1.0)) throw UsageError("alpha targets must lie in (0,1]");
  }
  if (!std::is_sorted(alpha_targets.begin(), alpha_targets.end()) ||
      std::adjacent_find(alpha_targets.begin(), alpha_targets.end()) != alpha_targets.end()) {
    throw UsageError("alpha targets must be strictly ascending");
  }
  if (!(alpha_tolerance > 0.0 && alpha_tolerance < 0.5)) {
    throw UsageError("alpha_tolerance must lie in (0, 0.5)");
  }
}

std::size_t result_target(double selectivity, std::size_t dataset_size) {
  return static_cast<std::size_t>(std::llround(selectivity * static_cast<double>(dataset_size)));
}

bool alpha_within(double alpha, double target, double tolerance) {
  return std::abs(alpha - target) <= tolerance * (1.0 + 1e-9);
}

int bucket_of(double alpha, const WorkloadSpec& spec) {
  int best = -1;
  double best_dist = 0.0;
  for (std::size_t i = 0; i < spec.alpha_targets.size(); ++i) {
    const double d = std::abs(alpha - spec.alpha_targets[i]);
    if (best < 0 || d < best_dist) {
      best = static_cast<int>(i);
      best_dist = d;
    }
  }
  if (best < 0) return -1;
  return alpha_within(alpha, spec.alpha_targets[static_cast<std::size_t>(best)],
                      spec.alpha_tolerance)
             ? best
             : -1;
}

std::vector<LabeledQuery> synth_queries(const Dataset& ds, const RTree& tree,
                                        const WorkloadSpec& spec,
                                        std::vector<std::string>* warnings) {
  spec.validate(ds.points.size());
  if (tree.leaf_count() == 0) throw DataError("synth_queries: tree has no assigned leaf IDs");

  const std::size_t n = ds.points.size();
  const double target = static_cast<double>(result_target(spec.selectivity, n));
  const double lo = std::max(1.0, (1.0 - kCountWindow) * target);
  const double hi = (1.0 + kCountWindow) * target;
  // Initial scale so a square at mean density holds ~target points.
  const double span = std::max(ds.bounds.width(), ds.bounds.height());
  const double start_scale =
      std::max(span * std::sqrt(target / static_cast<double>(n)), span * 1e-12);

  const std::size_t nbuckets = spec.alpha_targets.size();
  std::vector<std::vector<LabeledQuery>> buckets(nbuckets);
  const std::size_t budget = kBudgetFactor * spec.query_count * nbuckets;

  Rng rng(spec.rng_seed);
  std::size_t full = 0;
  for (std::size_t attempt = 0; attempt < budget && full < nbuckets; ++attempt) {
    RectFamily fam;
    fam.seed = ds.points[rng.index(n)];
    fam.aspect = std::exp(rng.uniform(-std::numbers::ln2, std::numbers::ln2));
    fam.u = rng.uniform(0.1, 0.9);
    fam.v = rng.uniform(0.1, 0.9);

    std::optional<Rect> rect = fit_count_window(tree, fam, start_scale, lo, hi);
    if (!rect) continue;

    QueryTrace trace = tree.range_query(*rect);
    if (trace.results.empty() || trace.leaf_accesses == 0) continue;
    const double count = static_cast<double>(trace.results.size());
    if (count < lo || count > hi) continue;

    const double alpha = static_cast<double>(trace.true_leaves.size()) /
                         static_cast<double>(trace.visited_leaves.size());
    const int b = bucket_of(alpha, spec);
    if (b < 0 || buckets[b].size() >= spec.query_count) continue;

    LabeledQuery q;
    q.rect = *rect;
    q.alpha = alpha;
    q.tn = static_cast<std::uint32_t>(trace.true_leaves.size());
    q.vn = static_cast<std::uint32_t>(trace.visited_leaves.size());
    q.true_leaf_ids = trace.true_leaves;
    std::sort(q.true_leaf_ids.begin(), q.true_leaf_ids.end());
    q.selectivity_actual = count / static_cast<double>(n);
    buckets[b].push_back(std::move(q));
    if (buckets[b].size() == spec.query_count) ++full;
  }

  std::vector<LabeledQuery> out;
  bool any = false;
  for (std::size_t i = 0; i < nbuckets; ++i) {
    if (!buckets[i].empty()) any = true;
    if (buckets[i].size() < spec.query_count) {
      std::ostringstream msg;
      msg << "alpha bucket " << format_double(spec.alpha_targets[i]) << " filled "
          << buckets[i].size() << "/" << spec.query_count << " before the attempt budget ran out";
      note(warnings, msg.str());
    }
    out.insert(out.end(), buckets[i].begin(), buckets[i].end());
  }
  if (!any) {
    throw DataError("synth_queries: attempt budget exhausted with every alpha bucket empty");
  }
  return out;
}

bool TrainingExample::label_bit(std::uint32_t leaf) const {
  return std::binary_search(label_ids.begin(), label_ids.end(), leaf);
}

std::string TrainingExample::label_bits() const {
  std::string bits(leaf_count, '0');
  for (std::uint32_t id : label_ids) bits[id] = '1';
  return bits;
}

std::vector<TrainingExample> make_multilabel_training(const std::vector<LabeledQuery>& queries,
                                                      std::uint32_t leaf_count,
                                                      std::vector<std::string>* warnings) {
  std::vector<TrainingExample> out;
  out.reserve(queries.size());
  std::size_t skipped = 0;
  for (const LabeledQuery& q : queries) {
    if (q.true_leaf_ids.empty()) {
      ++skipped;
      continue;
    }
    for (std::uint32_t id : q.true_leaf_ids) {
      if (id >= leaf_count) throw DataError("training query references unknown leaf ID");
    }
    TrainingExample ex;
    ex.features = {q.rect.xmin, q.rect.ymin, q.rect.xmax, q.rect.ymax};
    ex.label_ids = q.true_leaf_ids;
    ex.leaf_count = leaf_count;
    out.push_back(std::move(ex));
  }
  if (skipped > 0) {
    note(warnings, std::to_string(skipped) + " zero-result queries excluded from training");
  }
  return out;
}

std::vector<BinaryExample> make_binary_training(const std::vector<LabeledQuery>& queries,
                                                double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw UsageError("tau must lie in (0,1)");
  std::vector<BinaryExample> out;
  out.reserve(queries.size());
  for (const LabeledQuery& q : queries) {
    BinaryExample ex;
    ex.features = {q.rect.xmin, q.rect.ymin, q.rect.xmax, q.rect.ymax};
    ex.label = q.alpha <= tau ? 0 : 1;
    out.push_back(ex);
  }
  return out;
}

BinarySplit stratified_split(const std::vector<BinaryExample>& examples, double test_fraction,
                             std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw UsageError("test_fraction must lie in [0,1)");
  }
  BinarySplit split;
  for (int label : {0, 1}) {
    std::vector<BinaryExample> group;
    for (const BinaryExample& ex : examples) {
      if (ex.label == label) group.push_back(ex);
    }
    Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(label));
    for (std::size_t i = group.size(); i > 1; --i) {
      std::swap(group[i - 1], group[rng.index(i)]);
    }
    const auto test_n = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(group.size())));
    for (std::size_t i = 0; i < group.size(); ++i) {
      (i < test_n ? split.test : split.train).push_back(group[i]);
    }
  }
  return split;
}

void save_workload(const std::filesystem::path& path, const std::vector<LabeledQuery>& queries) {
  std::ostringstream out;
  out << "airtree workload v1\n";
  out << "count " << queries.size() << "\n";
  for (const LabeledQuery& q : queries) {
    out << format_double(q.rect.xmin) << ' ' << format_double(q.rect.ymin) << ' '
        << format_double(q.rect.xmax) << ' ' << format_double(q.rect.ymax) << ' '
        << format_double(q.alpha) << ' ' << q.tn << ' ' << q.vn << ' '
        << format_double(q.selectivity_actual);
    for (std::uint32_t id : q.true_leaf_ids) out << ' ' << id;
    out << '\n';
  }
  write_file(path, out.str());
}

std::vector<LabeledQuery> load_workload(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "airtree workload v1") {
    throw DataError("not a workload file: " + path.string());
  }
  if (!std::getline(in, line)) throw DataError("workload file truncated: " + path.string());
  std::vector<std::string> head = split_ws(line);
  if (head.size() != 2 || head[0] != "count") throw DataError("workload file: bad count line");
  const std::uint64_t count = parse_u64(head[1]);

  std::vector<LabeledQuery> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw DataError("workload file truncated: " + path.string());
    std::vector<std::string> tok = split_ws(line);
    if (tok.size() < 8) throw DataError("workload file: short record");
    LabeledQuery q;
    q.rect = Rect{parse_f64(tok[0]), parse_f64(tok[1]), parse_f64(tok[2]), parse_f64(tok[3])};
    q.alpha = parse_f64(tok[4]);
    q.tn = static_cast<std::uint32_t>(parse_u64(tok[5]));
    q.vn = static_cast<std::uint32_t>(parse_u64(tok[6]));
    q.selectivity_actual = parse_f64(tok[7]);
    if (tok.size() != 8 + q.tn) throw DataError("workload file: leaf list length mismatch");
    for (std::size_t j = 8; j < tok.size(); ++j) {
      q.true_leaf_ids.push_back(static_cast<std::uint32_t>(parse_u64(tok[j])));
    }
    check_query(q);
    out.push_back(std::move(q));
  }
  return out;
}

std::uint64_t workload_fingerprint(const std::vector<LabeledQuery>& queries) {
  std::ostringstream bytes;
  BinaryWriter w(bytes);
  w.u64(queries.size());
  for (const LabeledQuery& q : queries) {
    w.f64(q.rect.xmin);
    w.f64(q.rect.ymin);
    w.f64(q.rect.xmax);
    w.f64(q.rect.ymax);
    w.f64(q.alpha);
    w.u32(q.tn);
    w.u32(q.vn);
    w.f64(q.selectivity_actual);
    for (std::uint32_t id : q.true_leaf_ids) w.u32(id);
  }
  return fnv1a64(bytes.str());
}

}  // namespace airtree
