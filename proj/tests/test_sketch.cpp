#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <utility>

#include "generators.hpp"
#include "sketchlattice.hpp"

using namespace sketchlattice;

namespace {

VectorSketch steps(std::initializer_list<Step> s) { return VectorSketch{std::vector<Step>(s)}; }

// Independent rasterizer: absolute points by cumulative sum, the canvas fit
// recomputed from scratch, and every segment enumerated with the closed form
// minor = floor((2 i |d_minor| + |d_major|) / (2 |d_major|)).
std::set<std::pair<int, int>> oracle_pixels(const VectorSketch& s, int side) {
  std::vector<std::vector<std::pair<double, double>>> runs;
  double x = 0, y = 0;
  std::vector<std::pair<double, double>> cur{{0, 0}};
  bool pen_down = true, any = false;
  for (const auto& st : s.steps) {
    if (st.pen == Pen::end) break;
    any = true;
    x += st.dx;
    y += st.dy;
    if (pen_down) {
      cur.emplace_back(x, y);
    } else {
      runs.push_back(cur);
      cur = {{x, y}};
    }
    pen_down = st.pen == Pen::down;
  }
  if (any) runs.push_back(cur);
  std::set<std::pair<int, int>> px;
  if (runs.empty()) return px;
  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  for (const auto& r : runs)
    for (const auto& [a, b] : r) {
      lo_x = std::min(lo_x, a), hi_x = std::max(hi_x, a);
      lo_y = std::min(lo_y, b), hi_y = std::max(hi_y, b);
    }
  const double margin = side >= 8 ? 2 : 0;
  const double extent = side >= 8 ? side - 4 : side - 1;
  const double longest = std::max(hi_x - lo_x, hi_y - lo_y);
  const double scale = longest > 0 ? extent / longest : 1.0;
  const double ox = margin + (extent - (hi_x - lo_x) * scale) / 2;
  const double oy = margin + (extent - (hi_y - lo_y) * scale) / 2;
  auto to_px = [&](double a, double lo, double o) { return static_cast<int>(std::lround(o + (a - lo) * scale)); };
  auto segment = [&](int x0, int y0, int x1, int y1) {
    const int dx = x1 - x0, dy = y1 - y0;
    const long adx = std::abs(dx), ady = std::abs(dy);
    const int sx = dx >= 0 ? 1 : -1, sy = dy >= 0 ? 1 : -1;
    if (adx == 0 && ady == 0) {
      px.insert({x0, y0});
      return;
    }
    if (adx >= ady) {
      for (long i = 0; i <= adx; ++i)
        px.insert({x0 + sx * static_cast<int>(i), y0 + sy * static_cast<int>((2 * i * ady + adx) / (2 * adx))});
    } else {
      for (long i = 0; i <= ady; ++i)
        px.insert({x0 + sx * static_cast<int>((2 * i * adx + ady) / (2 * ady)), y0 + sy * static_cast<int>(i)});
    }
  };
  for (const auto& r : runs) {
    if (r.size() == 1) segment(to_px(r[0].first, lo_x, ox), to_px(r[0].second, lo_y, oy),
                               to_px(r[0].first, lo_x, ox), to_px(r[0].second, lo_y, oy));
    for (std::size_t k = 1; k < r.size(); ++k)
      segment(to_px(r[k - 1].first, lo_x, ox), to_px(r[k - 1].second, lo_y, oy), to_px(r[k].first, lo_x, ox),
              to_px(r[k].second, lo_y, oy));
  }
  std::set<std::pair<int, int>> inside;
  for (const auto& p : px)
    if (p.first >= 0 && p.second >= 0 && p.first < side && p.second < side) inside.insert(p);
  return inside;
}

std::set<std::pair<int, int>> dark_set(const RasterSketch& r) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      if (r.at(x, y)) out.insert({x, y});
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Ingestion

TEST(ParseQuickDraw, EmptyDrawingGivesEmptySketch) {
  EXPECT_TRUE(parse_quickdraw_line(R"({"drawing": []})").steps.empty());
}

TEST(ParseQuickDraw, TwoPointPolylineIsOneLiftedSegment) {
  const VectorSketch s = parse_quickdraw_line(R"({"drawing": [[[0,10],[0,0]]]})");
  EXPECT_EQ(s, steps({{10, 0, Pen::lift}, {0, 0, Pen::end}}));
  const auto runs = pen_down_runs(s);
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_EQ(runs[0].size(), 2u);  // exactly one drawn segment
}

TEST(ParseQuickDraw, SinglePointIsZeroDownStepThenEnd) {
  EXPECT_EQ(parse_quickdraw_line(R"({"drawing": [[[0],[0]]]})"),
            steps({{0, 0, Pen::down}, {0, 0, Pen::end}}));
}

TEST(ParseQuickDraw, LoneAnchorBeforeOtherStrokesLifts) {
  const VectorSketch s = parse_quickdraw_line(R"({"drawing": [[[5],[5]], [[8,9],[5,5]]]})");
  EXPECT_EQ(s, steps({{0, 0, Pen::lift}, {3, 0, Pen::down}, {1, 0, Pen::lift}, {0, 0, Pen::end}}));
  const auto runs = pen_down_runs(s);
  ASSERT_EQ(runs.size(), 2u);
  // The dot survives as a zero-length run at the origin.
  ASSERT_FALSE(runs[0].empty());
  for (const auto& p : runs[0]) EXPECT_TRUE(p.x == 0.0 && p.y == 0.0);
}

TEST(ParseQuickDraw, MultiStrokeOffsetsAndPens) {
  const VectorSketch s = parse_quickdraw_line(R"({"word":"x","drawing": [[[1,4,4],[1,1,5]], [[10,10],[0,2]]]})");
  EXPECT_EQ(s, steps({{3, 0, Pen::down}, {0, 4, Pen::lift}, {6, -5, Pen::down}, {0, 2, Pen::lift}, {0, 0, Pen::end}}));
  EXPECT_EQ(parse_quickdraw_record(R"({"word":"x","drawing": [[[1],[1]]]})").word, "x");
}

TEST(ParseQuickDraw, MalformedRecordsAreRejected) {
  for (const char* bad : {R"({"word": "cat"})", R"({"drawing": 3})", R"({"drawing": [[[0,1],[0]]]})",
                          R"({"drawing": [[["a"],[0]]]})", R"({"drawing": [[1,2]]})", "not json", "[1,2]"}) {
    try {
      parse_quickdraw_line(bad);
      ADD_FAILURE() << "accepted " << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MalformedRecord) << bad;
    }
  }
}

TEST(ParseQuickDraw, QuickDrawLineRoundTrip) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const VectorSketch s = gen::sketch(rng);
    ASSERT_TRUE(is_valid(s));
    EXPECT_EQ(pen_down_runs(parse_quickdraw_line(to_quickdraw_line(s))).size(), pen_down_runs(s).size());
    EXPECT_EQ(rasterize(parse_quickdraw_line(to_quickdraw_line(s)), 64), rasterize(s, 64));
  }
}

TEST(SketchInvariants, ValidityRules) {
  EXPECT_TRUE(is_valid(VectorSketch{}));
  EXPECT_TRUE(is_valid(steps({{1, 0, Pen::down}, {0, 0, Pen::end}})));
  EXPECT_TRUE(is_valid(steps({{1, 0, Pen::lift}})));
  EXPECT_FALSE(is_valid(steps({{0, 0, Pen::end}})));
  EXPECT_FALSE(is_valid(steps({{0, 0, Pen::end}, {1, 0, Pen::down}})));
  EXPECT_FALSE(is_valid(steps({{1, 0, Pen::down}, {0, 0, Pen::end}, {0, 0, Pen::end}})));
  EXPECT_FALSE(is_valid(steps({{std::nan(""), 0, Pen::down}})));
}

// ---------------------------------------------------------------------------
// Stroke-5

TEST(Stroke5, EmptySketchIsAllPadding) {
  const Stroke5Sequence seq = to_stroke5(VectorSketch{}, 4);
  ASSERT_EQ(seq.rows.size(), 4u);
  for (const auto& r : seq.rows) EXPECT_EQ(r, kPaddingRow);
}

TEST(Stroke5, ExactFitHasNoPadding) {
  const Stroke5Sequence seq = to_stroke5(steps({{2, 3, Pen::down}, {0, 0, Pen::end}}), 2);
  ASSERT_EQ(seq.rows.size(), 2u);
  EXPECT_EQ(seq.rows[0], (Stroke5Row{2, 3, 1, 0, 0}));
  EXPECT_EQ(seq.rows[1], kPaddingRow);
}

TEST(Stroke5, ShortSketchIsPaddedToNMax) {
  const Stroke5Sequence seq = to_stroke5(steps({{1, 1, Pen::down}, {1, 0, Pen::lift}, {0, 0, Pen::end}}), 200);
  ASSERT_EQ(seq.rows.size(), 200u);
  EXPECT_EQ(seq.rows[1], (Stroke5Row{1, 0, 0, 1, 0}));
  for (std::size_t i = 3; i < 200; ++i) EXPECT_EQ(seq.rows[i], kPaddingRow);
  EXPECT_EQ(seq.active_length(), 3u);
}

TEST(Stroke5, TooLongIsRejected) {
  try {
    to_stroke5(steps({{1, 0, Pen::down}, {1, 0, Pen::down}, {0, 0, Pen::end}}), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SequenceTooLong);
  }
}

TEST(Stroke5, OneHotAndPaddingInvariantAndRoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const VectorSketch s = gen::sketch(rng);
    const auto n_max = s.steps.size() + static_cast<std::size_t>(gen::uniform_int(rng, 0, 5));
    const Stroke5Sequence seq = to_stroke5(s, n_max);
    bool ended = false;
    for (const auto& r : seq.rows) {
      EXPECT_EQ(r[2] + r[3] + r[4], 1.0);
      if (ended) {
        EXPECT_EQ(r, kPaddingRow);
      }
      ended = ended || r[4] == 1.0;
    }
    EXPECT_EQ(from_stroke5(seq), s);
    EXPECT_EQ(to_stroke5(from_stroke5(seq), n_max), seq);
  }
}

// ---------------------------------------------------------------------------
// Rasterization

TEST(Rasterize, EmptySketchIsBlank) {
  const RasterSketch r = rasterize(VectorSketch{});
  EXPECT_EQ(r.width, 256);
  EXPECT_EQ(r.height, 256);
  EXPECT_EQ(r.dark_count(), 0u);
}

TEST(Rasterize, HorizontalSegmentHasLengthPlusOnePixels) {
  // Any horizontal segment scales to the full extent, 252 px at side 256.
  const RasterSketch r = rasterize(steps({{37, 0, Pen::down}, {0, 0, Pen::end}}));
  EXPECT_EQ(r.dark_count(), 253u);
  EXPECT_EQ(raster_extent(256), 252);
  for (int x = 2; x <= 254; ++x) EXPECT_EQ(r.at(x, 128), 1) << x;
}

TEST(Rasterize, SinglePointIsOnePixel) {
  const RasterSketch r = rasterize(steps({{0, 0, Pen::down}, {0, 0, Pen::end}}));
  EXPECT_EQ(r.dark_count(), 1u);
}

TEST(Rasterize, MatchesSegmentWalkOracle) {
  Rng rng(21);
  for (int i = 0; i < 300; ++i) {
    const VectorSketch s = gen::sketch(rng);
    for (int side : {256, 64, 7, 2}) ASSERT_EQ(dark_set(rasterize(s, side)), oracle_pixels(s, side)) << i << " " << side;
  }
}

TEST(Rasterize, FractionalOffsetsMatchOracle) {
  Rng rng(22);
  for (int i = 0; i < 200; ++i) {
    VectorSketch s;
    const int n = gen::uniform_int(rng, 1, 12);
    for (int k = 0; k < n; ++k)
      s.steps.push_back({gen::uniform(rng, -50, 50), gen::uniform(rng, -50, 50),
                         gen::uniform_int(rng, 0, 3) == 0 ? Pen::lift : Pen::down});
    s.steps.push_back({0, 0, Pen::end});
    ASSERT_EQ(dark_set(rasterize(s, 256)), oracle_pixels(s, 256));
  }
}

TEST(Rasterize, LineWalkCoversMajorAxisInAllOctants) {
  // Every octant: endpoints present, exactly max(|dx|,|dy|)+1 pixels, 8-connected.
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    RasterSketch r(64, 64);
    const int x0 = gen::uniform_int(rng, 0, 63), y0 = gen::uniform_int(rng, 0, 63);
    const int x1 = gen::uniform_int(rng, 0, 63), y1 = gen::uniform_int(rng, 0, 63);
    draw_line(r, x0, y0, x1, y1);
    EXPECT_EQ(r.at(x0, y0), 1);
    EXPECT_EQ(r.at(x1, y1), 1);
    EXPECT_EQ(r.dark_count(), static_cast<std::size_t>(std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1));
  }
}

TEST(Rasterize, AspectRatioIsPreserved) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const VectorSketch s = gen::sketch(rng, 3, 6);
    const auto runs = pen_down_runs(s);
    double lx = 1e9, ly = 1e9, hx = -1e9, hy = -1e9;
    for (const auto& r : runs)
      for (const auto& p : r) lx = std::min(lx, p.x), hx = std::max(hx, p.x), ly = std::min(ly, p.y), hy = std::max(hy, p.y);
    const double a = hx - lx, b = hy - ly;
    if (std::max(a, b) == 0) continue;
    const RasterSketch r = rasterize(s, 256);
    int px_lx = 256, px_ly = 256, px_hx = -1, px_hy = -1;
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x)
        if (r.at(x, y)) px_lx = std::min(px_lx, x), px_hx = std::max(px_hx, x), px_ly = std::min(px_ly, y), px_hy = std::max(px_hy, y);
    const double a2 = px_hx - px_lx, b2 = px_hy - px_ly;
    EXPECT_EQ(std::max(a2, b2), 256 - 2 * raster_margin(256));
    // Within one pixel of the exactly scaled extent.
    const double scale = 252.0 / std::max(a, b);
    EXPECT_NEAR(a2, a * scale, 1.0);
    EXPECT_NEAR(b2, b * scale, 1.0);
    EXPECT_GE(std::min(px_lx, px_ly), 2);
    EXPECT_LE(std::max(px_hx, px_hy), 254);
  }
}

TEST(Rasterize, CanonicalizePadsAndKeepsAspect) {
  RasterSketch wide(100, 50);
  for (int x = 0; x < 100; ++x) wide.set(x, 0);
  const RasterSketch c = canonicalize(wide, 256);
  EXPECT_EQ(c.width, 256);
  // The 50-pixel height maps to 128 rows centred: rows 64..191.
  for (int x = 0; x < 256; ++x) EXPECT_EQ(c.at(x, 64), 1);
  EXPECT_EQ(c.at(0, 63), 0);
  EXPECT_EQ(c.at(0, 66), 0);
  EXPECT_EQ(canonicalize(c, 256), c);
}

// ---------------------------------------------------------------------------
// PGM and SVG

TEST(Pgm, RoundTripAndAsciiVariant) {
  Rng rng(2);
  const RasterSketch r = gen::raster(rng, 17);
  const std::string bytes = to_pgm(r);
  EXPECT_EQ(bytes.substr(0, 3), "P5\n");
  EXPECT_EQ(parse_pgm(bytes), r);
  const RasterSketch a = parse_pgm("P2\n# comment\n3 1\n15\n0 15 7\n");
  EXPECT_EQ(a.pixels, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_THROW(parse_pgm("P6\n1 1\n255\nx"), Error);
  EXPECT_THROW(parse_pgm("P5\n4 4\n255\nab"), Error);
}

TEST(Svg, EmptySketchHasNoPaths) {
  const std::string svg = render_svg(VectorSketch{});
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(svg.find("<path"), std::string::npos);
}

TEST(Svg, OneSegmentIsOnePath) {
  const std::string svg = render_svg(steps({{10, 5, Pen::down}, {0, 0, Pen::end}}));
  std::size_t count = 0;
  for (std::size_t p = svg.find("<path"); p != std::string::npos; p = svg.find("<path", p + 1)) ++count;
  EXPECT_EQ(count, 1u);
  EXPECT_NE(svg.find("viewBox=\"-1.0000 -1.0000 12.0000 7.0000\""), std::string::npos);
}

TEST(Svg, PathCoordinatesRoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    VectorSketch s;
    const int n = gen::uniform_int(rng, 1, 10);
    for (int k = 0; k < n; ++k)
      s.steps.push_back({gen::uniform(rng, -30, 30), gen::uniform(rng, -30, 30),
                         gen::uniform_int(rng, 0, 2) == 0 ? Pen::lift : Pen::down});
    s.steps.push_back({0, 0, Pen::end});
    const auto runs = pen_down_runs(s);
    const auto parsed = parse_svg_paths(render_svg(s));
    ASSERT_EQ(parsed.size(), runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const std::size_t expect = runs[r].size() == 1 ? 2 : runs[r].size();
      ASSERT_EQ(parsed[r].size(), expect);
      for (std::size_t k = 0; k < parsed[r].size(); ++k) {
        const auto& p = runs[r][std::min(k, runs[r].size() - 1)];
        EXPECT_NEAR(parsed[r][k].x, p.x, 1e-3);
        EXPECT_NEAR(parsed[r][k].y, p.y, 1e-3);
      }
    }
  }
}
