#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "generators.hpp"
#include "sketchlattice.hpp"

using namespace sketchlattice;
namespace fs = std::filesystem;

namespace {

RunConfig eval_config() {
  RunConfig c;
  c.encoder.dim = 16;
  c.decoder.hidden = 32;
  c.decoder.mixtures = 3;
  c.decoder.n_max = 48;
  c.train.batch_size = 16;
  c.train.iterations = 400;
  c.train.seed = 21;
  return c;
}

Dataset toy_split(std::size_t per_category, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (const auto& cat : toy_categories())
    for (std::size_t i = 0; i < per_category; ++i) {
      d.sketches.push_back(from_polylines(toy_sketch(cat, rng)));
      d.labels.push_back(cat);
    }
  return d;
}

// A briefly trained model shared by the tests that need one.
const Model<float>& trained_model() {
  static const Model<float> model = [] {
    const fs::path dir = fs::temp_directory_path() / "sketchlattice_eval_model";
    fs::remove_all(dir);
    const FitResult r = fit(toy_split(40, 3), eval_config(), dir.string());
    return load_checkpoint<float>(r.final_checkpoint).model;
  }();
  return model;
}

const Model<float>& untrained_model() {
  static const Model<float> model = [] {
    Rng rng(5);
    RunConfig c = eval_config();
    c.decoder.offset_scale = 20.0;
    return Model<float>::init(c, rng);
  }();
  return model;
}

RasterSketch square_outline(int lo, int hi) {
  RasterSketch r(256, 256);
  draw_line(r, lo, lo, hi, lo);
  draw_line(r, hi, lo, hi, hi);
  draw_line(r, hi, hi, lo, hi);
  draw_line(r, lo, hi, lo, lo);
  return r;
}

}  // namespace

TEST(Heal, BlankRasterIsEmptyLattice) {
  for (double p : {0.0, 0.5}) {
    try {
      heal(HealRequest{RasterSketch(256, 256), p, 32, 1}, untrained_model());
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::EmptyLattice);
    }
  }
}

TEST(Heal, FullMaskIsEmptyLattice) {
  try {
    heal(HealRequest{square_outline(40, 200), 1.0, 32, 1}, untrained_model());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyLattice);
  }
}

TEST(Heal, ZeroMaskEqualsPlainGeneration) {
  const RasterSketch r = square_outline(30, 180);
  const HealResult h = heal(HealRequest{r, 0.0, 32, 9}, untrained_model());
  const SketchLattice full = sample_lattice(r, {32, 256});
  EXPECT_EQ(h.lattice, full);
  EXPECT_EQ(h.sketch.steps, generate_from_lattice(full, untrained_model(), 9).steps);
  EXPECT_EQ(edge_to_sketch(r, untrained_model(), 32, 9).steps, h.sketch.steps);
}

TEST(Heal, DeterministicPerSeed) {
  const RasterSketch r = square_outline(60, 160);
  const HealResult a = heal(HealRequest{r, 0.3, 32, 4}, untrained_model());
  const HealResult b = heal(HealRequest{r, 0.3, 32, 4}, untrained_model());
  EXPECT_EQ(a.lattice, b.lattice);
  EXPECT_EQ(a.sketch.steps, b.sketch.steps);
}

TEST(Heal, NonSquareRasterIsCanonicalized) {
  RasterSketch r(100, 50);
  draw_line(r, 10, 10, 90, 40);
  const HealResult h = heal(HealRequest{r, 0.0, 32, 1}, untrained_model());
  EXPECT_EQ(h.lattice.side, 256);
  EXPECT_FALSE(h.lattice.empty());
}

TEST(EdgeToSketch, SquareOutlineLatticeLiesOnOutline) {
  const int lo = 40, hi = 200;
  const RasterSketch r = square_outline(lo, hi);
  const HealResult h = heal(HealRequest{r, 0.0, 32, 1}, untrained_model());
  // Crossings of the grid lines 4 + 8k with the outline.
  std::vector<LatticePoint> want;
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) {
      const bool on_outline = ((x == lo || x == hi) && y >= lo && y <= hi) || ((y == lo || y == hi) && x >= lo && x <= hi);
      const bool on_grid = x % 8 == 4 || y % 8 == 4;
      if (on_outline && on_grid) want.push_back({x, y});
    }
  EXPECT_EQ(h.lattice.points, want);
  for (const auto& p : h.lattice.points)
    EXPECT_TRUE(p.x == lo || p.x == hi || p.y == lo || p.y == hi);
}

TEST(Gallery, RowsAreDeterministicUnitAndEquivariant) {
  Rng rng(3);
  std::vector<RasterSketch> rasters;
  for (int i = 0; i < 8; ++i) rasters.push_back(rasterize(from_polylines(toy_sketch(i % 2 ? "circle" : "house", rng))));
  rasters.push_back(rasters[2]);
  rasters.push_back(RasterSketch(256, 256));
  const GalleryEmbedding g = embed_gallery(rasters, untrained_model(), 32);
  ASSERT_EQ(g.rows.rows(), 9);
  EXPECT_EQ(g.excluded, std::vector<std::size_t>{9});
  EXPECT_EQ(g.rows.row(2), g.rows.row(8));
  for (Eigen::Index i = 0; i < g.rows.rows(); ++i) EXPECT_NEAR(g.rows.row(i).norm(), 1.0, 1e-6);

  const std::vector<int> perm = gen::permutation(rng, 9);
  std::vector<RasterSketch> shuffled;
  for (int k : perm) shuffled.push_back(rasters[static_cast<std::size_t>(k)]);
  const GalleryEmbedding s = embed_gallery(shuffled, untrained_model(), 32);
  for (std::size_t i = 0; i < perm.size(); ++i)
    EXPECT_EQ(s.rows.row(static_cast<Eigen::Index>(i)), g.rows.row(perm[i]));
}

TEST(Retrieve, SelfRetrievalIsPerfect) {
  Rng rng(4);
  Eigen::MatrixXd e = Eigen::MatrixXd::Random(20, 8);
  std::vector<std::string> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(std::to_string(i % 4));
  const RetrievalReport r = retrieve(e, labels, e, labels);
  EXPECT_EQ(r.top1, 1.0);
  EXPECT_EQ(r.top3, 1.0);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(r.rankings[i].front(), i);
  for (const auto& ranking : r.rankings) {
    std::vector<std::size_t> sorted = ranking;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t j = 0; j < sorted.size(); ++j) EXPECT_EQ(sorted[j], j);
  }
}

TEST(Retrieve, OneHotEmbeddingsMatchingLabels) {
  Eigen::MatrixXd gallery = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd queries(3, 3);
  queries << 0, 0, 2, 5, 0, 0, 0, 1, 0;
  const RetrievalReport r = retrieve(queries, {"c", "a", "b"}, gallery, {"a", "b", "c"});
  EXPECT_EQ(r.top1, 1.0);
  EXPECT_EQ(r.confusion.at("a").at("a"), 1);
}

TEST(Retrieve, RandomEmbeddingsSitAtChance) {
  double sum = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(static_cast<std::uint64_t>(100 + s));
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(100, 16), q(100, 16);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = normal(rng);
    std::vector<std::string> gl, ql;
    for (int i = 0; i < 100; ++i) {
      gl.push_back(std::to_string(i % 10));
      ql.push_back(std::to_string(gen::uniform_int(rng, 0, 9)));
    }
    sum += retrieve(q, ql, g, gl).top1;
  }
  EXPECT_NEAR(sum / seeds, 0.1, 0.06);
}

TEST(Retrieve, TiesRankByGalleryIndexAndExclusionApplies) {
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(5, 3);
  const Eigen::MatrixXd q = Eigen::MatrixXd::Ones(2, 3);
  const RetrievalReport a = retrieve(q, {"x", "y"}, g, {"y", "x", "x", "y", "x"}, {std::nullopt, std::size_t{0}});
  EXPECT_EQ(a.rankings[0], (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(a.rankings[1], (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(a.top1, 0.0);
  EXPECT_EQ(a.top3, 1.0);
  const RetrievalReport b = retrieve(q, {"x", "y"}, g, {"y", "x", "x", "y", "x"}, {std::nullopt, std::size_t{0}});
  EXPECT_EQ(a.rankings, b.rankings);
}

TEST(Retrieve, ShapeMismatchRejected) {
  try {
    retrieve(Eigen::MatrixXd::Ones(2, 3), {"a", "b"}, Eigen::MatrixXd::Ones(2, 4), {"a", "b"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
  EXPECT_THROW(retrieve(Eigen::MatrixXd::Ones(2, 3), {"a"}, Eigen::MatrixXd::Ones(2, 3), {"a", "b"}), Error);
}

TEST(Sweep, SurvivingPointsFollowBernoulliMasking) {
  const Dataset d = toy_split(15, 6);
  const std::vector<double> levels{0.0, 0.1, 0.3, 0.5, 0.8};
  const SweepReport r = healing_sweep(d.sketches, d.labels, untrained_model(), levels, 32, 3);
  ASSERT_EQ(r.rows.size(), levels.size());
  const double n = static_cast<double>(d.sketches.size());
  for (const auto& row : r.rows) {
    const double p = row.p_mask;
    const double sigma = std::sqrt(r.mean_full_points * n * p * (1 - p)) / n;
    EXPECT_NEAR(row.mean_points, (1 - p) * r.mean_full_points, 3 * sigma + 1e-12) << p;
    EXPECT_GE(row.top1, 0.0);
    EXPECT_LE(row.top1, row.top3);
    EXPECT_LE(row.top3, 1.0);
  }
  for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_LE(r.rows[i].mean_points, r.rows[i - 1].mean_points);
}

TEST(Sweep, ZeroMaskRowEqualsManualHealAndRetrieve) {
  const Dataset d = toy_split(6, 7);
  const Model<float>& m = untrained_model();
  const SweepReport r = healing_sweep(d.sketches, d.labels, m, {0.0}, 32, 40);
  std::vector<RasterSketch> rasters;
  for (const auto& s : d.sketches) rasters.push_back(rasterize(s));
  const GalleryEmbedding g = embed_gallery(rasters, m, 32);
  ASSERT_TRUE(g.excluded.empty());
  Eigen::MatrixXd q(0, g.rows.cols());
  std::vector<std::string> ql;
  std::vector<std::optional<std::size_t>> ex;
  for (std::size_t i = 0; i < rasters.size(); ++i) {
    const HealResult h = heal(HealRequest{rasters[i], 0.0, 32, 40 + i}, m);
    if (h.sketch.empty() || !is_valid(h.sketch)) continue;
    q.conservativeResize(q.rows() + 1, Eigen::NoChange);
    q.row(q.rows() - 1) = embed_raster(rasterize(h.sketch), m, 32).transpose();
    ql.push_back(d.labels[i]);
    ex.push_back(i);
  }
  const RetrievalReport rr = retrieve(q, ql, g.rows, d.labels, ex);
  const double scale = static_cast<double>(ql.size()) / static_cast<double>(rasters.size());
  EXPECT_DOUBLE_EQ(r.rows[0].top1, rr.top1 * scale);
  EXPECT_DOUBLE_EQ(r.rows[0].top3, rr.top3 * scale);
}

TEST(Sweep, CsvAndTableLayout) {
  SweepReport r;
  r.mean_full_points = 200.0;
  r.rows.push_back({0.1, 0.75, 0.9, 180.0, 0.02, std::nullopt});
  EXPECT_EQ(sweep_csv(r), "p_mask,top1,top3,mean_points,failures\n0.1,0.750000,0.900000,180.0000,0.020000\n");
  EXPECT_NE(sweep_table(r).find("full lattice: 200.0 points"), std::string::npos);
}

TEST(Sweep, ClassifierAgreementIsReported) {
  const Dataset d = toy_split(3, 9);
  const SweepReport r = healing_sweep(d.sketches, d.labels, untrained_model(), {0.0}, 32, 1,
                                      [](const RasterSketch&) { return std::string("circle"); });
  ASSERT_TRUE(r.rows[0].accuracy.has_value());
  EXPECT_LE(*r.rows[0].accuracy, 0.5 + 1e-12);
}

TEST(DeskScale, HealingAtThirtyPercentMostlyYieldsValidSketches) {
  const Dataset test = toy_split(50, 77);
  const Model<float>& m = trained_model();
  int valid = 0;
  for (std::size_t i = 0; i < test.sketches.size(); ++i) {
    const HealResult h = heal(HealRequest{rasterize(test.sketches[i]), 0.3, 32, 1000 + i}, m);
    if (!h.sketch.empty() && is_valid(h.sketch)) ++valid;
  }
  EXPECT_GE(valid, 95);
}
