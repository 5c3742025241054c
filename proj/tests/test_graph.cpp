#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "sketchlattice.hpp"

using namespace sketchlattice;

namespace {

GraphConfig nearby(double dt = 0.2) { return {Proximity::nearby, dt, EmbedMode::factorized, true}; }
GraphConfig nearest() { return {Proximity::nearest, 0.2, EmbedMode::factorized, true}; }

// Naive adjacency straight from the definitions.
Eigen::MatrixXd naive_adjacency(const SketchLattice& l, const GraphConfig& c) {
  const auto m = static_cast<Eigen::Index>(l.points.size());
  const double diag = l.side * std::sqrt(2.0);
  auto dist = [&](Eigen::Index i, Eigen::Index j) {
    return std::hypot(l.points[static_cast<std::size_t>(i)].x - l.points[static_cast<std::size_t>(j)].x,
                      l.points[static_cast<std::size_t>(i)].y - l.points[static_cast<std::size_t>(j)].y);
  };
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (c.proximity == Proximity::nearby) {
      for (Eigen::Index j = 0; j < m; ++j)
        if (i != j && dist(i, j) / diag < c.distance_threshold) a(i, j) = 1 - dist(i, j) / diag;
    } else {
      Eigen::Index best = -1;
      for (Eigen::Index j = 0; j < m; ++j)
        if (j != i && (best < 0 || dist(i, j) < dist(i, best))) best = j;
      if (best >= 0) a(i, best) = a(best, i) = 1 - dist(i, best) / diag;
    }
  }
  if (c.self_loops) a.diagonal().setOnes();
  return a;
}

}  // namespace

TEST(Tokenize, JointExamples) {
  EXPECT_EQ(tokenize({0, 0}, 256, EmbedMode::joint).joint, 0);
  EXPECT_EQ(tokenize({255, 255}, 256, EmbedMode::joint).joint, 65535);
  EXPECT_EQ(tokenize({3, 7}, 256, EmbedMode::joint).joint, 1795);
}

TEST(Tokenize, FactorizedAndOutOfRange) {
  const Token t = tokenize({3, 7}, 256, EmbedMode::factorized);
  EXPECT_EQ(t.x, 3);
  EXPECT_EQ(t.y, 7);
  for (LatticePoint p : {LatticePoint{-1, 0}, LatticePoint{0, 256}, LatticePoint{256, 3}}) {
    try {
      tokenize(p, 256, EmbedMode::joint);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
    }
  }
}

TEST(PairwiseDistances, Examples) {
  EXPECT_EQ(pairwise_distances(SketchLattice{256, 32, {{4, 4}}}), Eigen::MatrixXd::Zero(1, 1));
  const Eigen::MatrixXd d = pairwise_distances(SketchLattice{256, 32, {{0, 0}, {3, 4}}});
  EXPECT_EQ(d(0, 1), 5.0);
  EXPECT_EQ(d(1, 0), 5.0);
}

TEST(PairwiseDistances, MatchesNaiveLoop) {
  Rng rng(6);
  const SketchLattice l = gen::lattice(rng, 10);
  const Eigen::MatrixXd d = pairwise_distances(l);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      const double dx = l.points[static_cast<std::size_t>(i)].x - l.points[static_cast<std::size_t>(j)].x;
      const double dy = l.points[static_cast<std::size_t>(i)].y - l.points[static_cast<std::size_t>(j)].y;
      EXPECT_EQ(d(i, j), std::sqrt(dx * dx + dy * dy));
    }
}

TEST(BuildAdjacency, SingleNodeSelfLoop) {
  const SketchGraph g = build_adjacency(SketchLattice{256, 32, {{1, 1}}}, nearby());
  EXPECT_EQ(g.adjacency, Eigen::MatrixXd::Ones(1, 1));
}

TEST(BuildAdjacency, ClosePairLinksWithStrengthNearPointNine) {
  // distance sqrt(36^2 + 3^2) = 36.12..., norm ~ 0.0998
  const SketchGraph g = build_adjacency(SketchLattice{256, 32, {{0, 0}, {36, 3}}}, nearby());
  const double norm = std::hypot(36.0, 3.0) / (256 * std::sqrt(2.0));
  EXPECT_NEAR(norm, 0.1, 1e-3);
  EXPECT_DOUBLE_EQ(g.adjacency(0, 1), 1.0 - norm);
  EXPECT_NEAR(g.adjacency(0, 1), 0.9, 1e-3);
}

TEST(BuildAdjacency, ThresholdIsStrictAndNearestIgnoresIt) {
  // Two points exactly 0.25 apart in normalized distance: (0,0) and (64,64).
  const SketchLattice l{256, 32, {{0, 0}, {64, 64}}};
  EXPECT_DOUBLE_EQ(normalized_distance(std::hypot(64.0, 64.0), 256), 0.25);
  EXPECT_EQ(build_adjacency(l, nearby(0.25)).adjacency(0, 1), 0.0);
  EXPECT_EQ(build_adjacency(l, nearby(0.2)).adjacency(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(build_adjacency(l, nearest()).adjacency(0, 1), 0.75);
}

TEST(BuildAdjacency, NearestTieKeepsLowerIndexThenUnion) {
  // Node 1 is equidistant from 0 and 2 and picks 0.  Nodes 2 and 3 pick each
  // other, so nothing else links 1 to 2.
  const SketchLattice l{256, 32, {{0, 0}, {10, 0}, {20, 0}, {21, 0}}};
  const Eigen::MatrixXd a = build_adjacency(l, nearest()).adjacency;
  EXPECT_GT(a(0, 1), 0.0);
  EXPECT_EQ(a(1, 2), 0.0);
  EXPECT_GT(a(2, 3), 0.0);
  EXPECT_EQ(a(0, 2), 0.0);
}

TEST(BuildAdjacency, EmptyLatticeRejected) {
  try {
    build_adjacency(SketchLattice{}, nearby());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyLattice);
  }
}

TEST(BuildAdjacency, MatchesNaiveOracleBothModes) {
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const SketchLattice l = gen::lattice(rng, gen::uniform_int(rng, 1, 40));
    for (const GraphConfig& c : {nearby(gen::uniform(rng, 0.01, 0.99)), nearest()}) {
      GraphConfig cc = c;
      cc.self_loops = gen::uniform_int(rng, 0, 1) == 1;
      const Eigen::MatrixXd a = build_adjacency(l, cc).adjacency;
      const Eigen::MatrixXd o = naive_adjacency(l, cc);
      EXPECT_LE((a - o).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(AdjacencyProperties, SymmetricBoundedAndSupportMonotone) {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const SketchLattice l = gen::lattice(rng, gen::uniform_int(rng, 1, 30));
    const double lo = gen::uniform(rng, 0.05, 0.5), hi = lo + gen::uniform(rng, 0.01, 0.4);
    const Eigen::MatrixXd a = build_adjacency(l, nearby(lo)).adjacency;
    const Eigen::MatrixXd b = build_adjacency(l, nearby(hi)).adjacency;
    EXPECT_EQ(a, a.transpose());
    EXPECT_GE(a.minCoeff(), 0.0);
    EXPECT_LE(a.maxCoeff(), 1.0);
    EXPECT_TRUE((a.diagonal().array() == 1.0).all());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c)
        if (a(r, c) > 0) {
          EXPECT_GT(b(r, c), 0.0);
        }
  }
}

TEST(AdjacencyProperties, TranslationInvariant) {
  Rng rng(14);
  for (int i = 0; i < 50; ++i) {
    SketchLattice l = gen::lattice(rng, 15, 128);
    l.side = 256;
    SketchLattice moved = l;
    const int tx = gen::uniform_int(rng, 0, 127), ty = gen::uniform_int(rng, 0, 127);
    for (auto& p : moved.points) p = {p.x + tx, p.y + ty};
    for (const GraphConfig& c : {nearby(), nearest()}) {
      const SketchGraph a = build_adjacency(l, c), b = build_adjacency(moved, c);
      EXPECT_LE((a.adjacency - b.adjacency).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_NE(a.tokens, b.tokens);
    }
  }
}

TEST(GraphJson, DenseRowMajorAdjacency) {
  const SketchGraph g = build_adjacency(SketchLattice{256, 32, {{0, 0}, {3, 4}}}, nearby());
  const auto j = to_json(g);
  EXPECT_EQ(j.at("m"), 2);
  ASSERT_EQ(j.at("adjacency").size(), 4u);
  EXPECT_EQ(j.at("adjacency")[0], 1.0);
  EXPECT_DOUBLE_EQ(j.at("adjacency")[1].get<double>(), 1.0 - 5.0 / (256 * std::sqrt(2.0)));
  EXPECT_EQ(j.at("tokens")[1], (nlohmann::json{3, 4}));
}
