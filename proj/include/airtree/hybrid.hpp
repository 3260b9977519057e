#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <utility>
#include <vector>

#include "airtree/aitree.hpp"
#include "airtree/forest.hpp"
#include "airtree/rtree.hpp"

namespace airtree {

enum class Route { kAi, kRtree };

const char* to_string(Route route);

// Simulated disk cost: every leaf access is charged a fixed I/O latency.
struct CostModel {
  double io_ms_per_leaf = 13.0;

  void validate() const;
};

struct CostReport {
  Route route = Route::kRtree;
  double predict_ms = 0.0;   // router + any multi-label prediction time
  double cpu_ms = 0.0;       // measured query CPU time
  std::size_t leaf_accesses = 0;
  double io_ms = 0.0;        // leaf_accesses * io_ms_per_leaf exactly
  double total_ms = 0.0;     // cpu_ms + predict_ms + io_ms
  std::size_t result_count = 0;
  AiPath ai_path = AiPath::kPredicted;  // meaningful only when route == kAi
};

// Cost difference between the taken route and the counterfactual one;
// positive delta means the taken route was more expensive.
struct RouteCostDelta {
  CostReport taken;
  CostReport alternative;
  bool correctly_routed = true;  // taken route == the alpha/tau-intended route
  double delta_total_ms = 0.0;
  double delta_io_ms = 0.0;
};

// The "AI+R"-tree: the router classifies each query as high-overlap
// (label 0 -> AI-tree) or low-overlap (label 1 -> R-tree) and the routed
// index answers it. Exactness on the AI path inherits the AI-tree contract.
// Non-owning views: the referenced indexes must outlive the hybrid.
class HybridIndex {
 public:
  HybridIndex(const RTree& rtree, const AiTree& ai, const RandomForest& router, double tau = 0.75,
              CostModel cost = {});

  Route route(const Rect& q) const;
  std::pair<std::vector<Point>, CostReport> query(const Rect& q) const;

  // Runs both routes on the same query and reports taken-minus-alternative
  // cost deltas; diagnostic for router-error analysis. true_alpha selects
  // which route *should* have been taken (alpha <= tau -> ai).
  RouteCostDelta mispredicted_route_cost(const Rect& q, double true_alpha) const;

  double tau() const { return tau_; }
  const CostModel& cost_model() const { return cost_; }
  const RTree& rtree() const { return *rtree_; }
  const AiTree& ai() const { return *ai_; }
  const RandomForest& router() const { return *router_; }

 private:
  CostReport run_ai(const Rect& q, double router_ms, std::vector<Point>* results) const;
  CostReport run_rtree(const Rect& q, double router_ms, std::vector<Point>* results) const;

  const RTree* rtree_;
  const AiTree* ai_;
  const RandomForest* router_;
  double tau_;
  CostModel cost_;
};

// Owning counterpart of HybridIndex for persistence round-trips. The R-tree
// sits behind a stable pointer because the loaded AI-tree refers to it.
struct HybridBundle {
  std::unique_ptr<RTree> rtree;
  AiTree ai;
  RandomForest router;
  double tau = 0.75;
  CostModel cost;

  HybridIndex index() const { return {*rtree, ai, router, tau, cost}; }
};

// Directory layout: hybrid.json (manifest) + rtree.bin + router.bin + ai/
// bundle. load re-fingerprints every artifact against the manifest, so a
// partially regenerated directory fails with DataError instead of silently
// pairing stale models.
void save_hybrid(const std::filesystem::path& dir, const HybridIndex& h);
HybridBundle load_hybrid(const std::filesystem::path& dir);

}  // namespace airtree
