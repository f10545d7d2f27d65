#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace icseg {

// Axis-aligned rectangle on the integer grid, half-open: it covers cells
// x1 <= x < x2, y1 <= y < y2.
struct Box {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  std::int64_t width() const { return std::max(0, x2 - x1); }
  std::int64_t height() const { return std::max(0, y2 - y1); }
  std::int64_t area() const { return width() * height(); }
  bool empty() const { return area() == 0; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool contains_cell(int x, int y) const { return x >= x1 && x < x2 && y >= y1 && y < y2; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct Point {
  double x = 0.0, y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Sorts each coordinate pair so that x1 <= x2 and y1 <= y2.
inline Box canonical(Box b) {
  if (b.x1 > b.x2) std::swap(b.x1, b.x2);
  if (b.y1 > b.y2) std::swap(b.y1, b.y2);
  return b;
}

inline std::int64_t intersection_area(const Box& a, const Box& b) {
  const std::int64_t w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const std::int64_t h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0 && h > 0) ? w * h : 0;
}

inline std::int64_t union_area(const Box& a, const Box& b) {
  return a.area() + b.area() - intersection_area(a, b);
}

inline double iou(const Box& a, const Box& b) {
  const std::int64_t u = union_area(a, b);
  return u == 0 ? 0.0 : static_cast<double>(intersection_area(a, b)) / static_cast<double>(u);
}

inline double center_l1(const Box& a, const Box& b) {
  return std::abs(a.cx() - b.cx()) + std::abs(a.cy() - b.cy());
}

inline double center_l2(const Box& a, const Box& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

// Closed containment: a point on the edge counts as inside.
inline bool contains(const Box& b, const Point& p) {
  return p.x >= b.x1 && p.x <= b.x2 && p.y >= b.y1 && p.y <= b.y2;
}

}  // namespace icseg
