#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace airtree {

struct Point {
  double x = 0.0;
  double y = 0.0;

  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
  friend bool operator==(const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }
  friend bool operator<(const Point& a, const Point& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  }
};

// Axis-aligned rectangle. Doubles as a data MBR and as a range query
// (xmin, ymin, xmax, ymax). All containment/overlap tests are closed:
// boundary points count as inside, touching edges count as overlap.
struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  bool valid() const {
    return std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) &&
           std::isfinite(ymax) && xmin <= xmax && ymin <= ymax;
  }

  void require_valid() const {
    if (!valid()) throw std::invalid_argument("invalid rectangle");
  }

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }

  bool contains(const Point& p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }

  bool contains(const Rect& r) const {
    return r.xmin >= xmin && r.xmax <= xmax && r.ymin >= ymin && r.ymax <= ymax;
  }

  bool intersects(const Rect& r) const {
    return xmin <= r.xmax && r.xmin <= xmax && ymin <= r.ymax && r.ymin <= ymax;
  }

  void expand(const Point& p) {
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
  }

  void expand(const Rect& r) {
    xmin = std::min(xmin, r.xmin);
    ymin = std::min(ymin, r.ymin);
    xmax = std::max(xmax, r.xmax);
    ymax = std::max(ymax, r.ymax);
  }

  Rect united(const Rect& r) const {
    Rect u = *this;
    u.expand(r);
    return u;
  }

  static Rect of_point(const Point& p) { return Rect{p.x, p.y, p.x, p.y}; }

  // Area growth needed to absorb r; the insert/split heuristics minimize this.
  double enlargement(const Rect& r) const { return united(r).area() - area(); }

  friend bool operator==(const Rect& a, const Rect& b) {
    return a.xmin == b.xmin && a.ymin == b.ymin && a.xmax == b.xmax && a.ymax == b.ymax;
  }
};

}  // namespace airtree
