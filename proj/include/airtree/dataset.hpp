#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "airtree/geometry.hpp"

namespace airtree {

// A cleaned point collection: finite coordinates only, exact duplicates
// removed, first-seen order preserved.
struct Dataset {
  std::vector<Point> points;
  std::string name;
  Rect bounds;  // tight bounding box of points

  std::uint64_t fingerprint() const;
};

struct CsvOptions {
  std::size_t x_column = 0;
  std::size_t y_column = 1;
  char delimiter = ',';
  // Keep at most this many usable rows (counted before deduplication),
  // mirroring "first N records" truncation. 0 = no limit.
  std::size_t head_limit = 0;
  // nullopt: auto-detect (first row whose target columns do not parse as
  // numbers is treated as a header).
  std::optional<bool> has_header;
};

struct IngestStats {
  std::size_t rows_read = 0;      // data rows seen (header excluded)
  std::size_t rows_dropped = 0;   // missing/non-numeric/non-finite coordinates
  std::size_t duplicates_dropped = 0;
};

// Reads a point CSV. Rows with missing or non-numeric coordinates are
// dropped, then exact-duplicate points are dropped. Throws DataError when
// the file is unreadable or no usable rows remain.
Dataset ingest_csv(const std::filesystem::path& path, const CsvOptions& options = {},
                   IngestStats* stats = nullptr);

enum class PointDistribution {
  kUniform,
  kGaussianClusters,
};

// Deterministic synthetic datasets over roughly the unit square; duplicate
// draws are resampled so the no-duplicates invariant holds by construction.
Dataset synth_points(std::size_t count, PointDistribution dist, std::uint64_t seed,
                     std::uint32_t clusters = 4);

}  // namespace airtree
