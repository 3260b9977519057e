#include "airtree/hybrid.hpp"

#include <bit>
#include <chrono>
#include <string>

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

const char* to_string(Route route) {
  return route == Route::kAi ? "ai" : "rtree";
}

void CostModel::validate() const {
  if (!(io_ms_per_leaf > 0.0)) throw UsageError("io_ms_per_leaf must be positive");
}

HybridIndex::HybridIndex(const RTree& rtree, const AiTree& ai, const RandomForest& router,
                         double tau, CostModel cost)
    : rtree_(&rtree), ai_(&ai), router_(&router), tau_(tau), cost_(cost) {
  if (!(tau_ > 0.0 && tau_ < 1.0)) throw UsageError("tau must lie in (0,1)");
  cost_.validate();
  if (ai.rtree_fingerprint() != rtree.fingerprint()) {
    throw DataError("hybrid index: AI-tree and R-tree come from different builds");
  }
}

Route HybridIndex::route(const Rect& q) const {
  q.require_valid();
  return router_->predict({q.xmin, q.ymin, q.xmax, q.ymax}) == 0 ? Route::kAi : Route::kRtree;
}

CostReport HybridIndex::run_ai(const Rect& q, double router_ms, std::vector<Point>* results) const {
  AiQueryOutcome out = ai_->query(q);
  CostReport report;
  report.route = Route::kAi;
  report.ai_path = out.path;
  report.predict_ms = router_ms + out.predict_ms;
  report.cpu_ms = out.cpu_ms;
  report.leaf_accesses = out.leaf_accesses;
  report.io_ms = static_cast<double>(out.leaf_accesses) * cost_.io_ms_per_leaf;
  report.total_ms = report.cpu_ms + report.predict_ms + report.io_ms;
  report.result_count = out.results.size();
  if (results != nullptr) *results = std::move(out.results);
  return report;
}

CostReport HybridIndex::run_rtree(const Rect& q, double router_ms,
                                  std::vector<Point>* results) const {
  const auto t_scan = Clock::now();
  QueryTrace trace = rtree_->range_query(q);
  CostReport report;
  report.route = Route::kRtree;
  report.predict_ms = router_ms;  // router time only on this path
  report.cpu_ms = ms_since(t_scan);
  report.leaf_accesses = trace.leaf_accesses;
  report.io_ms = static_cast<double>(trace.leaf_accesses) * cost_.io_ms_per_leaf;
  report.total_ms = report.cpu_ms + report.predict_ms + report.io_ms;
  report.result_count = trace.results.size();
  if (results != nullptr) *results = std::move(trace.results);
  return report;
}

std::pair<std::vector<Point>, CostReport> HybridIndex::query(const Rect& q) const {
  const auto t_route = Clock::now();
  const Route taken = route(q);
  const double router_ms = ms_since(t_route);

  std::vector<Point> results;
  CostReport report = taken == Route::kAi ? run_ai(q, router_ms, &results)
                                          : run_rtree(q, router_ms, &results);
  return {std::move(results), report};
}

RouteCostDelta HybridIndex::mispredicted_route_cost(const Rect& q, double true_alpha) const {
  const auto t_route = Clock::now();
  const Route taken = route(q);
  const double router_ms = ms_since(t_route);
  const Route intended = true_alpha <= tau_ ? Route::kAi : Route::kRtree;

  RouteCostDelta delta;
  delta.correctly_routed = taken == intended;
  if (taken == Route::kAi) {
    delta.taken = run_ai(q, router_ms, nullptr);
    delta.alternative = run_rtree(q, router_ms, nullptr);
  } else {
    delta.taken = run_rtree(q, router_ms, nullptr);
    delta.alternative = run_ai(q, router_ms, nullptr);
  }
  delta.delta_total_ms = delta.taken.total_ms - delta.alternative.total_ms;
  delta.delta_io_ms = delta.taken.io_ms - delta.alternative.io_ms;
  return delta;
}

void save_hybrid(const std::filesystem::path& dir, const HybridIndex& h) {
  std::filesystem::create_directories(dir);
  h.rtree().save_file(dir / "rtree.bin");
  h.router().save_file(dir / "router.bin");
  h.ai().save_bundle(dir / "ai");

  nlohmann::json manifest;
  manifest["format"] = "airtree hybrid bundle";
  manifest["version"] = 1;
  // doubles as IEEE-754 bit patterns (authoritative) plus readable echoes
  manifest["tau_bits"] = hex64(std::bit_cast<std::uint64_t>(h.tau()));
  manifest["tau"] = h.tau();
  manifest["io_ms_per_leaf_bits"] = hex64(std::bit_cast<std::uint64_t>(h.cost_model().io_ms_per_leaf));
  manifest["io_ms_per_leaf"] = h.cost_model().io_ms_per_leaf;
  manifest["rtree_fingerprint"] = hex64(h.rtree().fingerprint());
  manifest["router_fingerprint"] = hex64(h.router().fingerprint());
  manifest["rtree_file"] = "rtree.bin";
  manifest["router_file"] = "router.bin";
  manifest["ai_dir"] = "ai";

  write_file(dir / "hybrid.json", manifest.dump(2) + "\n");
}

HybridBundle load_hybrid(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "hybrid.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("hybrid manifest unreadable: " + std::string(e.what()));
  }

  try {
    if (manifest.at("format") != "airtree hybrid bundle" || manifest.at("version") != 1) {
      throw DataError("not a supported hybrid bundle: " + dir.string());
    }
    HybridBundle bundle;
    bundle.rtree = std::make_unique<RTree>(
        RTree::load_file(dir / manifest.at("rtree_file").get<std::string>()));
    if (bundle.rtree->fingerprint() != parse_hex64(manifest.at("rtree_fingerprint"))) {
      throw DataError("hybrid bundle: R-tree snapshot does not match the manifest");
    }
    bundle.router =
        RandomForest::load_file(dir / manifest.at("router_file").get<std::string>());
    if (bundle.router.fingerprint() != parse_hex64(manifest.at("router_fingerprint"))) {
      throw DataError("hybrid bundle: router model does not match the manifest");
    }
    bundle.ai =
        AiTree::load_bundle(dir / manifest.at("ai_dir").get<std::string>(), *bundle.rtree);
    bundle.tau = std::bit_cast<double>(parse_hex64(manifest.at("tau_bits")));
    bundle.cost.io_ms_per_leaf =
        std::bit_cast<double>(parse_hex64(manifest.at("io_ms_per_leaf_bits")));
    return bundle;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("hybrid manifest malformed: " + std::string(e.what()));
  }
}

}  // namespace airtree
