#include "airtree/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "airtree/errors.hpp"
#include "airtree/rng.hpp"
#include "airtree/serialize.hpp"

namespace airtree {
namespace {

struct PointHash {
  std::size_t operator()(const Point& p) const {
    std::uint64_t h = Rng::mix(std::bit_cast<std::uint64_t>(p.x));
    h ^= Rng::mix(std::bit_cast<std::uint64_t>(p.y) + 0x9e3779b97f4a7c15ULL);
    return static_cast<std::size_t>(h);
  }
};

std::vector<std::string> split_row(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::optional<double> parse_number(const std::string& raw) {
  std::size_t begin = raw.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return std::nullopt;
  std::size_t end = raw.find_last_not_of(" \t\r");
  std::string token = raw.substr(begin, end - begin + 1);
  if (token.empty()) return std::nullopt;
  const char* start = token.c_str();
  char* stop = nullptr;
  double value = std::strtod(start, &stop);
  if (stop != start + token.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

Rect bounds_of(const std::vector<Point>& points) {
  Rect b = Rect::of_point(points.front());
  for (const Point& p : points) b.expand(p);
  return b;
}

Dataset finalize(std::vector<Point> raw, std::string name, IngestStats* stats) {
  std::vector<Point> unique_points;
  unique_points.reserve(raw.size());
  std::unordered_set<Point, PointHash> seen;
  seen.reserve(raw.size() * 2);
  for (const Point& p : raw) {
    if (seen.insert(p).second) {
      unique_points.push_back(p);
    } else if (stats != nullptr) {
      ++stats->duplicates_dropped;
    }
  }
  if (unique_points.empty()) {
    throw DataError("dataset '" + name + "' has no usable points");
  }
  Dataset ds;
  ds.points = std::move(unique_points);
  ds.name = std::move(name);
  ds.bounds = bounds_of(ds.points);
  return ds;
}

}  // namespace

std::uint64_t Dataset::fingerprint() const {
  std::ostringstream bytes;
  BinaryWriter w(bytes);
  w.str(name);
  w.u64(points.size());
  for (const Point& p : points) {
    w.f64(p.x);
    w.f64(p.y);
  }
  return fnv1a64(bytes.str());
}

Dataset ingest_csv(const std::filesystem::path& path, const CsvOptions& options,
                   IngestStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv file: " + path.string());

  IngestStats local;
  IngestStats* st = stats != nullptr ? stats : &local;
  *st = IngestStats{};

  const std::size_t need = std::max(options.x_column, options.y_column) + 1;
  std::vector<Point> raw;
  std::string line;
  bool first_line = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields = split_row(line, options.delimiter);
    std::optional<double> x, y;
    if (fields.size() >= need) {
      x = parse_number(fields[options.x_column]);
      y = parse_number(fields[options.y_column]);
    }

    if (first_line) {
      first_line = false;
      const bool skip_header = options.has_header.value_or(!(x && y));
      if (skip_header) continue;
    }

    ++st->rows_read;
    if (!x || !y) {
      ++st->rows_dropped;
      continue;
    }
    raw.push_back(Point{*x, *y});
    if (options.head_limit != 0 && raw.size() >= options.head_limit) break;
  }

  return finalize(std::move(raw), path.filename().string(), st);
}

Dataset synth_points(std::size_t count, PointDistribution dist, std::uint64_t seed,
                     std::uint32_t clusters) {
  if (count == 0) throw DataError("synth_points: count must be positive");
  if (dist == PointDistribution::kGaussianClusters && clusters == 0) {
    throw DataError("synth_points: clusters must be positive");
  }

  Rng rng(seed);
  std::vector<Point> centers;
  if (dist == PointDistribution::kGaussianClusters) {
    centers.reserve(clusters);
    for (std::uint32_t c = 0; c < clusters; ++c) {
      centers.push_back(Point{rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)});
    }
  }

  std::vector<Point> points;
  points.reserve(count);
  std::unordered_set<Point, PointHash> seen;
  seen.reserve(count * 2);
  while (points.size() < count) {
    Point p;
    if (dist == PointDistribution::kUniform) {
      p = Point{rng.uniform01(), rng.uniform01()};
    } else {
      const Point& c = centers[rng.index(centers.size())];
      p = Point{c.x + rng.normal(0.0, 0.06), c.y + rng.normal(0.0, 0.06)};
    }
    if (!p.finite()) continue;  // unreachable in practice, cheap guard
    if (seen.insert(p).second) points.push_back(p);
  }

  Dataset ds;
  ds.points = std::move(points);
  ds.name = dist == PointDistribution::kUniform ? "synthetic-uniform" : "synthetic-clusters";
  ds.bounds = bounds_of(ds.points);
  return ds;
}

}  // namespace airtree
