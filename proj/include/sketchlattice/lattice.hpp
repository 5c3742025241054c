#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sketchlattice/error.hpp"
#include "sketchlattice/sketch.hpp"

namespace sketchlattice {

using Rng = std::mt19937_64;

/// Grid of n horizontal and n vertical sampling lines on a side x side canvas.
struct LatticeConfig {
  int n = 32;
  int side = 256;
};

struct LatticePoint {
  int x = 0;  // column
  int y = 0;  // row

  friend bool operator==(const LatticePoint&, const LatticePoint&) = default;
  friend bool operator<(const LatticePoint& a, const LatticePoint& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  }
};

struct SketchLattice {
  int side = 256;
  int n = 32;
  std::vector<LatticePoint> points;  // row-major, unique

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  friend bool operator==(const SketchLattice&, const SketchLattice&) = default;
};

inline void validate(const LatticeConfig& cfg) {
  if (cfg.side < 1 || cfg.n < 1 || cfg.n > cfg.side)
    fail(ErrorCode::InvalidConfig, "lattice needs 1 <= n <= side");
}

/// pos_k = round((k + 0.5) * side / n), ties rounded down so that n == side
/// gives 0..side-1.
inline std::vector<int> line_positions(const LatticeConfig& cfg) {
  validate(cfg);
  std::vector<int> pos(static_cast<std::size_t>(cfg.n));
  const long b = 2L * cfg.n;
  for (int k = 0; k < cfg.n; ++k) {
    const long a = (2L * k + 1) * cfg.side;
    pos[static_cast<std::size_t>(k)] = static_cast<int>((2 * a + b - 1) / (2 * b));
  }
  return pos;
}

/// Every dark pixel lying on a lattice line, once, in row-major order.
inline SketchLattice sample_lattice(const RasterSketch& r, const LatticeConfig& cfg) {
  validate(cfg);
  if (r.width != cfg.side || r.height != cfg.side)
    fail(ErrorCode::ShapeMismatch, "raster is not " + std::to_string(cfg.side) + " square");
  const auto pos = line_positions(cfg);
  std::vector<char> on_line(static_cast<std::size_t>(cfg.side), 0);
  for (int p : pos) on_line[static_cast<std::size_t>(p)] = 1;

  SketchLattice out{cfg.side, cfg.n, {}};
  for (int y = 0; y < cfg.side; ++y) {
    if (on_line[static_cast<std::size_t>(y)]) {
      for (int x = 0; x < cfg.side; ++x)
        if (r.at(x, y)) out.points.push_back({x, y});
    } else {
      for (int p : pos)
        if (r.at(p, y)) out.points.push_back({p, y});
    }
  }
  return out;
}

/// Keeps each point independently with probability 1 - p_mask.
inline SketchLattice mask_lattice(const SketchLattice& lattice, double p_mask, Rng& rng) {
  if (!(p_mask >= 0.0 && p_mask <= 1.0)) fail(ErrorCode::OutOfRange, "p_mask must be in [0, 1]");
  SketchLattice out{lattice.side, lattice.n, {}};
  out.points.reserve(lattice.points.size());
  std::bernoulli_distribution keep(1.0 - p_mask);
  for (const auto& p : lattice.points)
    if (keep(rng)) out.points.push_back(p);
  return out;
}

inline nlohmann::json to_json(const SketchLattice& l) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : l.points) pts.push_back({p.x, p.y});
  return {{"side", l.side}, {"n", l.n}, {"points", pts}};
}

inline SketchLattice lattice_from_json(const nlohmann::json& j) {
  try {
    SketchLattice l;
    l.side = j.at("side").get<int>();
    l.n = j.at("n").get<int>();
    for (const auto& p : j.at("points")) l.points.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    std::sort(l.points.begin(), l.points.end());
    l.points.erase(std::unique(l.points.begin(), l.points.end()), l.points.end());
    return l;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedRecord, std::string("bad lattice JSON: ") + e.what());
  }
}

}  // namespace sketchlattice
