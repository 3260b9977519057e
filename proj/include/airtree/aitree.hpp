#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "airtree/mltree.hpp"
#include "airtree/rtree.hpp"
#include "airtree/workload.hpp"

namespace airtree {

// g x g grid over the dataset bounds indexing localized multi-label models.
// Cells tile the bounds exactly (shared edges computed identically on both
// sides; the last row/column ends exactly at the bounds). Overlap tests for
// routing are closed, so a boundary-touching query may consult an extra
// model — harmless, never wrong.
class ModelGrid {
 public:
  // Trains one tree per cell over every query whose rectangle overlaps the
  // cell; cells no query overlaps hold no model.
  static ModelGrid build(std::uint32_t grid_dim, const Rect& bounds,
                         const std::vector<LabeledQuery>& queries, std::uint32_t leaf_count);

  std::uint32_t grid_dim() const { return g_; }
  const Rect& bounds() const { return bounds_; }
  std::uint32_t leaf_count() const { return leaf_count_; }

  // Cell index = row * g + col, rows bottom-up.
  Rect cell_rect(std::uint32_t index) const;
  std::vector<std::uint32_t> overlapping_cells(const Rect& q) const;
  const MultiLabelTree* cell_model(std::uint32_t index) const;

  std::size_t model_count() const;
  std::size_t size_bytes() const;

  // Union of the overlapping cells' predictions, sorted, deduplicated.
  std::vector<std::uint32_t> predict_leaves(const Rect& q) const;

 private:
  friend class AiTree;
  ModelGrid() = default;

  std::uint32_t g_ = 0;
  Rect bounds_;
  std::uint32_t leaf_count_ = 0;
  std::vector<std::unique_ptr<MultiLabelTree>> cells_;  // g*g slots; null = no model
};

enum class AiPath {
  kPredicted,          // scanned exactly the predicted leaves
  kFallbackEmpty,      // empty prediction -> full R-tree search
  kFallbackMispredict  // a predicted leaf scanned empty -> full R-tree search
};

const char* to_string(AiPath path);

struct AiQueryOutcome {
  std::vector<Point> results;
  std::size_t leaf_accesses = 0;
  AiPath path = AiPath::kPredicted;
  std::vector<std::uint32_t> predicted_leaf_ids;
  // Wall-clock instrumentation (excluded from determinism guarantees).
  double predict_ms = 0.0;
  double cpu_ms = 0.0;
};

// The AI-tree: answers range queries by scanning only the leaves its grid
// of models predicts, falling back to the companion R-tree whenever the
// prediction is empty or any predicted leaf scans empty. Fallbacks make
// answers exact on the training workload and whenever they trigger; the
// benchmark harness cross-checks the remaining predicted-path queries.
class AiTree {
 public:
  static constexpr std::uint32_t kDefaultMaxGrid = 20;

  AiTree() = default;  // unfitted; query/save guard against use

  // Sweeps g = 2..max_grid and keeps the first grid whose full pipeline
  // replays the training workload with subset accuracy 1.0; otherwise keeps
  // the best-scoring g and records training_fit < 1.0 with a warning.
  static AiTree fit(const std::vector<LabeledQuery>& queries, const RTree& tree,
                    const Rect& bounds, std::uint32_t max_grid = kDefaultMaxGrid,
                    std::vector<std::string>* warnings = nullptr);

  std::vector<std::uint32_t> predict_leaves(const Rect& q) const;
  AiQueryOutcome query(const Rect& q) const;

  const ModelGrid& grid() const { return grid_; }
  double training_fit() const { return training_fit_; }
  std::size_t size_bytes() const { return grid_.size_bytes(); }
  std::uint64_t rtree_fingerprint() const { return rtree_fingerprint_; }
  std::uint64_t workload_fingerprint() const { return workload_fingerprint_; }
  const RTree& rtree() const { return *rtree_; }

  // Bundle directory: manifest.json + one model file per nonempty cell.
  // load checks the companion tree's fingerprint so stale pairings fail
  // loudly with DataError.
  void save_bundle(const std::filesystem::path& dir) const;
  static AiTree load_bundle(const std::filesystem::path& dir, const RTree& tree);

 private:
  ModelGrid grid_;
  const RTree* rtree_ = nullptr;
  double training_fit_ = 0.0;
  std::uint64_t rtree_fingerprint_ = 0;
  std::uint64_t workload_fingerprint_ = 0;
};

}  // namespace airtree
