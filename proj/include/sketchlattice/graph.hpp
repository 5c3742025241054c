#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sketchlattice/error.hpp"
#include "sketchlattice/lattice.hpp"

namespace sketchlattice {

enum class Proximity { nearest, nearby };
enum class EmbedMode { joint, factorized };

struct GraphConfig {
  Proximity proximity = Proximity::nearby;
  double distance_threshold = 0.2;  // d_T, on normalized distances
  EmbedMode embed_mode = EmbedMode::factorized;
  bool self_loops = true;
};

inline void validate(const GraphConfig& cfg) {
  if (!(cfg.distance_threshold > 0.0 && cfg.distance_threshold < 1.0))
    fail(ErrorCode::InvalidConfig, "distance threshold must be in (0, 1)");
}

/// Embedding lookup key for one lattice point.  Joint mode uses `joint`
/// (vocabulary side^2); factorized mode uses `x` and `y` (vocabulary side
/// each).  Fields unused by the mode are -1.
struct Token {
  int joint = -1;
  int x = -1;
  int y = -1;

  friend bool operator==(const Token&, const Token&) = default;
};

inline Token tokenize(const LatticePoint& p, int side, EmbedMode mode) {
  if (p.x < 0 || p.y < 0 || p.x >= side || p.y >= side)
    fail(ErrorCode::OutOfRange, "point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                    ") outside canvas");
  if (mode == EmbedMode::joint) return {p.y * side + p.x, -1, -1};
  return {-1, p.x, p.y};
}

struct SketchGraph {
  int side = 256;
  EmbedMode embed_mode = EmbedMode::factorized;
  std::vector<Token> tokens;
  Eigen::MatrixXd adjacency;

  std::size_t size() const { return tokens.size(); }
};

/// Euclidean pixel distances between every pair of points.
inline Eigen::MatrixXd pairwise_distances(const SketchLattice& l) {
  const Eigen::Index m = static_cast<Eigen::Index>(l.points.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double dx = l.points[static_cast<std::size_t>(i)].x - l.points[static_cast<std::size_t>(j)].x;
      const double dy = l.points[static_cast<std::size_t>(i)].y - l.points[static_cast<std::size_t>(j)].y;
      d(i, j) = d(j, i) = std::sqrt(dx * dx + dy * dy);
    }
  return d;
}

/// norm(d) = d / (side * sqrt(2)), so every in-canvas distance lies in [0, 1).
inline double normalized_distance(double d, int side) {
  return d / (static_cast<double>(side) * std::sqrt(2.0));
}

inline SketchGraph build_adjacency(const SketchLattice& l, const GraphConfig& cfg) {
  validate(cfg);
  if (l.points.empty()) fail(ErrorCode::EmptyLattice, "lattice has no points");
  SketchGraph g;
  g.side = l.side;
  g.embed_mode = cfg.embed_mode;
  g.tokens.reserve(l.points.size());
  for (const auto& p : l.points) g.tokens.push_back(tokenize(p, l.side, cfg.embed_mode));

  const Eigen::MatrixXd d = pairwise_distances(l);
  const Eigen::Index m = d.rows();
  g.adjacency = Eigen::MatrixXd::Zero(m, m);
  auto link = [&](Eigen::Index i, Eigen::Index j) {
    const double a = 1.0 - normalized_distance(d(i, j), l.side);
    g.adjacency(i, j) = g.adjacency(j, i) = a;
  };
  if (cfg.proximity == Proximity::nearby) {
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j)
        if (normalized_distance(d(i, j), l.side) < cfg.distance_threshold) link(i, j);
  } else {
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::Index best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j == i) continue;
        if (d(i, j) < best_d) {  // strict: ties keep the lower index
          best_d = d(i, j);
          best = j;
        }
      }
      if (best >= 0) link(i, best);
    }
  }
  if (cfg.self_loops) g.adjacency.diagonal().setOnes();
  return g;
}

inline SketchGraph build_graph(const SketchLattice& l, const GraphConfig& cfg) {
  return build_adjacency(l, cfg);
}

inline nlohmann::json to_json(const SketchGraph& g) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : g.tokens) {
    if (g.embed_mode == EmbedMode::joint)
      tokens.push_back(t.joint);
    else
      tokens.push_back({t.x, t.y});
  }
  nlohmann::json adj = nlohmann::json::array();
  for (Eigen::Index i = 0; i < g.adjacency.rows(); ++i)
    for (Eigen::Index j = 0; j < g.adjacency.cols(); ++j) adj.push_back(g.adjacency(i, j));
  return {{"side", g.side},
          {"embed_mode", g.embed_mode == EmbedMode::joint ? "joint" : "factorized"},
          {"m", g.tokens.size()},
          {"tokens", tokens},
          {"adjacency", adj}};
}

}  // namespace sketchlattice
