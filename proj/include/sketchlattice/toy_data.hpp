#pragma once

// Synthetic two-category sketch corpus ("circle", "house") in QuickDraw
// layout: integer coordinates on a 256 canvas, y pointing down.  Stands in
// for downloaded category files in tests and small experiments.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sketchlattice/lattice.hpp"
#include "sketchlattice/sketch.hpp"

namespace sketchlattice {

using Polylines = std::vector<std::vector<Point2>>;

namespace detail {

inline double clamp_coord(double v) { return std::clamp(std::round(v), 0.0, 255.0); }

inline Point2 jittered(double x, double y, double amount, Rng& rng) {
  std::uniform_real_distribution<double> j(-amount, amount);
  return {clamp_coord(x + j(rng)), clamp_coord(y + j(rng))};
}

}  // namespace detail

/// A jittered ellipse loop, occasionally drawn as two arcs.
inline Polylines toy_circle(Rng& rng) {
  std::uniform_real_distribution<double> center(100.0, 156.0), radius(55.0, 95.0),
      phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> count(14, 22);
  std::bernoulli_distribution split(0.25);
  const double cx = center(rng), cy = center(rng), rx = radius(rng), ry = radius(rng), a0 = phase(rng);
  const int k = count(rng);
  std::vector<Point2> loop;
  for (int i = 0; i <= k; ++i) {
    const double a = a0 + 2.0 * std::numbers::pi * i / k;
    loop.push_back(detail::jittered(cx + rx * std::cos(a), cy + ry * std::sin(a), 4.0, rng));
  }
  if (!split(rng)) return {loop};
  const auto mid = loop.begin() + static_cast<std::ptrdiff_t>(loop.size() / 2);
  return {std::vector<Point2>(loop.begin(), mid + 1), std::vector<Point2>(mid, loop.end())};
}

/// A box body, a roof over it, and sometimes a door.
inline Polylines toy_house(Rng& rng) {
  std::uniform_real_distribution<double> left(20.0, 70.0), width(110.0, 170.0), top(100.0, 130.0),
      height(80.0, 115.0), roof(50.0, 85.0);
  std::bernoulli_distribution door(0.5);
  const double x0 = left(rng), x1 = std::min(235.0, x0 + width(rng));
  const double y0 = top(rng), y1 = std::min(250.0, y0 + height(rng));
  const double apex = std::max(5.0, y0 - roof(rng));
  const double j = 3.0;
  Polylines out;
  out.push_back({detail::jittered(x0, y0, j, rng), detail::jittered(x0, y1, j, rng),
                 detail::jittered(x1, y1, j, rng), detail::jittered(x1, y0, j, rng),
                 detail::jittered(x0, y0, j, rng)});
  out.push_back({detail::jittered(x0, y0, j, rng), detail::jittered((x0 + x1) / 2.0, apex, j, rng),
                 detail::jittered(x1, y0, j, rng)});
  if (door(rng)) {
    const double dw = (x1 - x0) * 0.2, dx = (x0 + x1) / 2.0, dh = (y1 - y0) * 0.5;
    out.push_back({detail::jittered(dx - dw / 2, y1, 1.5, rng), detail::jittered(dx - dw / 2, y1 - dh, 1.5, rng),
                   detail::jittered(dx + dw / 2, y1 - dh, 1.5, rng), detail::jittered(dx + dw / 2, y1, 1.5, rng)});
  }
  return out;
}

inline const std::vector<std::string>& toy_categories() {
  static const std::vector<std::string> names{"circle", "house"};
  return names;
}

inline Polylines toy_sketch(const std::string& category, Rng& rng) {
  if (category == "circle") return toy_circle(rng);
  if (category == "house") return toy_house(rng);
  fail(ErrorCode::Usage, "unknown toy category " + category);
}

/// QuickDraw-format JSON lines for `count` sketches of one category.
inline std::vector<std::string> toy_records(const std::string& category, std::size_t count, Rng& rng) {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < count; ++i) {
    nlohmann::json drawing = nlohmann::json::array();
    for (const auto& stroke : toy_sketch(category, rng)) {
      nlohmann::json xs = nlohmann::json::array(), ys = nlohmann::json::array();
      for (const auto& p : stroke) {
        xs.push_back(static_cast<int>(p.x));
        ys.push_back(static_cast<int>(p.y));
      }
      drawing.push_back({xs, ys});
    }
    lines.push_back(nlohmann::json{{"word", category}, {"drawing", drawing}}.dump());
  }
  return lines;
}

}  // namespace sketchlattice
