#include "airtree/aitree.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "airtree/errors.hpp"
#include "airtree/serialize.hpp"

namespace airtree {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

const char* to_string(AiPath path) {
  switch (path) {
    case AiPath::kPredicted:
      return "predicted";
    case AiPath::kFallbackEmpty:
      return "fallback_empty";
    case AiPath::kFallbackMispredict:
      return "fallback_mispredict";
  }
  return "unknown";
}

ModelGrid ModelGrid::build(std::uint32_t grid_dim, const Rect& bounds,
                           const std::vector<LabeledQuery>& queries, std::uint32_t leaf_count) {
  if (grid_dim == 0) throw UsageError("grid dimension must be positive");
  bounds.require_valid();

  ModelGrid grid;
  grid.g_ = grid_dim;
  grid.bounds_ = bounds;
  grid.leaf_count_ = leaf_count;
  grid.cells_.resize(static_cast<std::size_t>(grid_dim) * grid_dim);

  std::vector<std::vector<TrainingExample>> per_cell(grid.cells_.size());
  for (const LabeledQuery& q : queries) {
    if (q.true_leaf_ids.empty()) continue;  // filtered upstream with a warning
    TrainingExample ex;
    ex.features = {q.rect.xmin, q.rect.ymin, q.rect.xmax, q.rect.ymax};
    ex.label_ids = q.true_leaf_ids;
    ex.leaf_count = leaf_count;
    for (std::uint32_t cell : grid.overlapping_cells(q.rect)) {
      per_cell[cell].push_back(ex);
    }
  }
  for (std::size_t i = 0; i < per_cell.size(); ++i) {
    if (!per_cell[i].empty()) {
      grid.cells_[i] = std::make_unique<MultiLabelTree>(train_mltree(per_cell[i]));
    }
  }
  return grid;
}

Rect ModelGrid::cell_rect(std::uint32_t index) const {
  if (index >= cells_.size()) throw DataError("cell index out of range");
  const std::uint32_t row = index / g_, col = index % g_;
  const double w = bounds_.width(), h = bounds_.height();
  const auto edge_x = [&](std::uint32_t c) {
    return c == g_ ? bounds_.xmax : bounds_.xmin + w * static_cast<double>(c) / g_;
  };
  const auto edge_y = [&](std::uint32_t r) {
    return r == g_ ? bounds_.ymax : bounds_.ymin + h * static_cast<double>(r) / g_;
  };
  return Rect{edge_x(col), edge_y(row), edge_x(col + 1), edge_y(row + 1)};
}

std::vector<std::uint32_t> ModelGrid::overlapping_cells(const Rect& q) const {
  q.require_valid();
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < cells_.size(); ++i) {
    if (cell_rect(i).intersects(q)) out.push_back(i);
  }
  return out;
}

const MultiLabelTree* ModelGrid::cell_model(std::uint32_t index) const {
  if (index >= cells_.size()) throw DataError("cell index out of range");
  return cells_[index].get();
}

std::size_t ModelGrid::model_count() const {
  std::size_t count = 0;
  for (const auto& cell : cells_) count += cell != nullptr ? 1 : 0;
  return count;
}

std::size_t ModelGrid::size_bytes() const {
  std::size_t total = 0;
  for (const auto& cell : cells_) {
    if (cell) total += cell->size_bytes();
  }
  return total;
}

std::vector<std::uint32_t> ModelGrid::predict_leaves(const Rect& q) const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t cell : overlapping_cells(q)) {
    if (cells_[cell] == nullptr) continue;
    std::vector<std::uint32_t> p = cells_[cell]->predict({q.xmin, q.ymin, q.xmax, q.ymax});
    out.insert(out.end(), p.begin(), p.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

AiTree AiTree::fit(const std::vector<LabeledQuery>& queries, const RTree& tree, const Rect& bounds,
                   std::uint32_t max_grid, std::vector<std::string>* warnings) {
  if (queries.empty()) throw DataError("AiTree::fit: empty training workload");
  if (max_grid < 2) throw UsageError("AiTree::fit: max_grid must be at least 2");
  if (tree.leaf_count() == 0) throw DataError("AiTree::fit: tree has no assigned leaf IDs");

  std::vector<LabeledQuery> usable;
  usable.reserve(queries.size());
  for (const LabeledQuery& q : queries) {
    if (q.true_leaf_ids.empty()) {
      if (warnings != nullptr) {
        warnings->push_back("query with no true leaves excluded from AI-tree training");
      }
      continue;
    }
    usable.push_back(q);
  }
  if (usable.empty()) throw DataError("AiTree::fit: no query has true leaves");

  AiTree best;
  best.rtree_ = &tree;
  best.rtree_fingerprint_ = tree.fingerprint();
  best.workload_fingerprint_ = ::airtree::workload_fingerprint(queries);
  double best_fit = -1.0;

  for (std::uint32_t g = 2; g <= max_grid; ++g) {
    ModelGrid grid = ModelGrid::build(g, bounds, usable, tree.leaf_count());
    std::size_t hits = 0;
    for (const LabeledQuery& q : usable) {
      if (grid.predict_leaves(q.rect) == q.true_leaf_ids) ++hits;
    }
    const double fit = static_cast<double>(hits) / static_cast<double>(usable.size());
    if (fit > best_fit) {
      best_fit = fit;
      best.grid_ = std::move(grid);
    }
    if (fit == 1.0) break;
  }

  best.training_fit_ = best_fit;
  if (best_fit < 1.0 && warnings != nullptr) {
    std::ostringstream msg;
    msg << "AI-tree training fit stopped at " << best_fit << " with grid "
        << best.grid_.grid_dim() << "x" << best.grid_.grid_dim()
        << " (max " << max_grid << "); fallbacks keep answers exact";
    warnings->push_back(msg.str());
  }
  return best;
}

std::vector<std::uint32_t> AiTree::predict_leaves(const Rect& q) const {
  return grid_.predict_leaves(q);
}

AiQueryOutcome AiTree::query(const Rect& q) const {
  if (rtree_ == nullptr) throw DataError("AI-tree has no companion R-tree");
  AiQueryOutcome out;

  const auto t_predict = Clock::now();
  out.predicted_leaf_ids = predict_leaves(q);
  out.predict_ms = ms_since(t_predict);

  const auto t_scan = Clock::now();
  if (out.predicted_leaf_ids.empty()) {
    QueryTrace trace = rtree_->range_query(q);
    out.results = std::move(trace.results);
    out.leaf_accesses = trace.leaf_accesses;
    out.path = AiPath::kFallbackEmpty;
    out.cpu_ms = ms_since(t_scan);
    return out;
  }

  bool mispredicted = false;
  std::vector<Point> gathered;
  for (std::uint32_t leaf : out.predicted_leaf_ids) {
    std::vector<Point> pts = rtree_->scan_leaf(leaf, q);
    if (pts.empty()) {
      mispredicted = true;
      break;
    }
    gathered.insert(gathered.end(), pts.begin(), pts.end());
  }

  if (mispredicted) {
    QueryTrace trace = rtree_->range_query(q);
    out.results = std::move(trace.results);
    out.leaf_accesses = out.predicted_leaf_ids.size() + trace.leaf_accesses;
    out.path = AiPath::kFallbackMispredict;
  } else {
    out.results = std::move(gathered);
    out.leaf_accesses = out.predicted_leaf_ids.size();
    out.path = AiPath::kPredicted;
  }
  out.cpu_ms = ms_since(t_scan);
  return out;
}

void AiTree::save_bundle(const std::filesystem::path& dir) const {
  if (grid_.grid_dim() == 0) throw DataError("cannot save an unfitted AI-tree");
  std::filesystem::create_directories(dir);

  nlohmann::json cells = nlohmann::json::array();
  for (std::uint32_t i = 0; i < grid_.g_ * grid_.g_; ++i) {
    const MultiLabelTree* model = grid_.cell_model(i);
    if (model == nullptr) continue;
    const std::string file = "cell_" + std::to_string(i) + ".mlt";
    model->save_file(dir / file);
    cells.push_back({{"index", i}, {"file", file}});
  }

  nlohmann::json manifest;
  manifest["format"] = "airtree aitree bundle";
  manifest["version"] = 1;
  manifest["grid_dim"] = grid_.g_;
  manifest["leaf_count"] = grid_.leaf_count_;
  // bounds as IEEE-754 bit patterns (authoritative) plus readable echoes
  manifest["bounds_bits"] = {hex64(std::bit_cast<std::uint64_t>(grid_.bounds_.xmin)),
                             hex64(std::bit_cast<std::uint64_t>(grid_.bounds_.ymin)),
                             hex64(std::bit_cast<std::uint64_t>(grid_.bounds_.xmax)),
                             hex64(std::bit_cast<std::uint64_t>(grid_.bounds_.ymax))};
  manifest["bounds"] = {grid_.bounds_.xmin, grid_.bounds_.ymin, grid_.bounds_.xmax,
                        grid_.bounds_.ymax};
  manifest["training_fit_bits"] = hex64(std::bit_cast<std::uint64_t>(training_fit_));
  manifest["training_fit"] = training_fit_;
  manifest["rtree_fingerprint"] = hex64(rtree_fingerprint_);
  manifest["workload_fingerprint"] = hex64(workload_fingerprint_);
  manifest["cells"] = std::move(cells);

  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

AiTree AiTree::load_bundle(const std::filesystem::path& dir, const RTree& tree) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bundle manifest unreadable: " + std::string(e.what()));
  }

  try {
    if (manifest.at("format") != "airtree aitree bundle" || manifest.at("version") != 1) {
      throw DataError("not a supported AI-tree bundle: " + dir.string());
    }
    AiTree ai;
    ai.rtree_ = &tree;
    ai.rtree_fingerprint_ = parse_hex64(manifest.at("rtree_fingerprint"));
    ai.workload_fingerprint_ = parse_hex64(manifest.at("workload_fingerprint"));
    ai.training_fit_ =
        std::bit_cast<double>(parse_hex64(manifest.at("training_fit_bits")));

    if (ai.rtree_fingerprint_ != tree.fingerprint()) {
      throw DataError("AI-tree bundle was trained against a different R-tree snapshot");
    }

    ModelGrid& grid = ai.grid_;
    grid.g_ = manifest.at("grid_dim").get<std::uint32_t>();
    if (grid.g_ == 0) throw DataError("bundle manifest: zero grid dimension");
    grid.leaf_count_ = manifest.at("leaf_count").get<std::uint32_t>();
    const auto& bits = manifest.at("bounds_bits");
    if (!bits.is_array() || bits.size() != 4) throw DataError("bundle manifest: bad bounds");
    grid.bounds_ = Rect{std::bit_cast<double>(parse_hex64(bits[0])),
                        std::bit_cast<double>(parse_hex64(bits[1])),
                        std::bit_cast<double>(parse_hex64(bits[2])),
                        std::bit_cast<double>(parse_hex64(bits[3]))};
    grid.bounds_.require_valid();
    grid.cells_.resize(static_cast<std::size_t>(grid.g_) * grid.g_);

    for (const auto& cell : manifest.at("cells")) {
      const auto index = cell.at("index").get<std::uint32_t>();
      if (index >= grid.cells_.size()) throw DataError("bundle manifest: cell index out of range");
      if (grid.cells_[index] != nullptr) throw DataError("bundle manifest: duplicate cell");
      auto model = std::make_unique<MultiLabelTree>(
          MultiLabelTree::load_file(dir / cell.at("file").get<std::string>()));
      if (model->leaf_count() != grid.leaf_count_) {
        throw DataError("bundle cell model disagrees on leaf count");
      }
      grid.cells_[index] = std::move(model);
    }
    return ai;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bundle manifest malformed: " + std::string(e.what()));
  }
}

}  // namespace airtree
