#pragma once

// Vector sketches in QuickDraw / stroke-3 form, stroke-5 sequences, binary
// rasters, SVG and PGM I/O.
//
// Pen semantics follow the stroke-3 convention: the pen value of a step
// describes the pen *after* reaching that step's point.  Drawing starts at
// the origin with the pen down, so the segment leading into step k is drawn
// iff step k-1 (or the implicit start) has pen == down.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sketchlattice/error.hpp"

namespace sketchlattice {

enum class Pen : std::uint8_t { down = 0, lift = 1, end = 2 };

struct Step {
  double dx = 0.0;
  double dy = 0.0;
  Pen pen = Pen::down;

  friend bool operator==(const Step&, const Step&) = default;
};

struct VectorSketch {
  std::vector<Step> steps;

  bool empty() const { return steps.empty(); }
  std::size_t size() const { return steps.size(); }

  friend bool operator==(const VectorSketch&, const VectorSketch&) = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Checks the structural invariants: at most one end step and only in last
/// position, every value finite, and a non-empty sketch moves the pen at
/// least once (has a step that is not an end step).
inline bool is_valid(const VectorSketch& s) {
  if (s.steps.empty()) return true;
  bool drawing_step = false;
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    const Step& st = s.steps[i];
    if (!std::isfinite(st.dx) || !std::isfinite(st.dy)) return false;
    if (st.pen == Pen::end) {
      if (i + 1 != s.steps.size()) return false;
    } else {
      drawing_step = true;
    }
  }
  return drawing_step;
}

// ---------------------------------------------------------------------------
// QuickDraw ingestion

struct QuickDrawRecord {
  std::string word;
  VectorSketch sketch;
};

/// Converts absolute polylines to offset steps.  The very first point is the
/// origin anchor and emits no step; the last point of every polyline lifts
/// the pen; a zero-offset end step closes the sketch.
inline VectorSketch from_polylines(const std::vector<std::vector<Point2>>& polylines) {
  VectorSketch out;
  std::vector<const std::vector<Point2>*> strokes;
  for (const auto& p : polylines)
    if (!p.empty()) strokes.push_back(&p);
  if (strokes.empty()) return out;

  Point2 prev = strokes.front()->front();
  for (std::size_t si = 0; si < strokes.size(); ++si) {
    const auto& pts = *strokes[si];
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const bool last_in_stroke = k + 1 == pts.size();
      if (si == 0 && k == 0) {
        // A lone anchor point still has to leave a mark.
        if (pts.size() == 1)
          out.steps.push_back({0.0, 0.0, strokes.size() > 1 ? Pen::lift : Pen::down});
        continue;
      }
      out.steps.push_back({pts[k].x - prev.x, pts[k].y - prev.y,
                           last_in_stroke ? Pen::lift : Pen::down});
      prev = pts[k];
    }
  }
  out.steps.push_back({0.0, 0.0, Pen::end});
  return out;
}

namespace detail {

inline std::vector<std::vector<Point2>> parse_drawing(const nlohmann::json& drawing) {
  if (!drawing.is_array()) fail(ErrorCode::MalformedRecord, "\"drawing\" is not an array");
  std::vector<std::vector<Point2>> polylines;
  for (const auto& stroke : drawing) {
    if (!stroke.is_array() || stroke.size() < 2 || !stroke[0].is_array() || !stroke[1].is_array())
      fail(ErrorCode::MalformedRecord, "stroke must be [[x...],[y...]]");
    const auto& xs = stroke[0];
    const auto& ys = stroke[1];
    if (xs.size() != ys.size())
      fail(ErrorCode::MalformedRecord, "stroke x and y arrays differ in length");
    std::vector<Point2> pts;
    pts.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i].is_number() || !ys[i].is_number())
        fail(ErrorCode::MalformedRecord, "stroke coordinate is not a number");
      pts.push_back({xs[i].get<double>(), ys[i].get<double>()});
    }
    polylines.push_back(std::move(pts));
  }
  return polylines;
}

}  // namespace detail

inline QuickDrawRecord parse_quickdraw_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedRecord, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("drawing"))
    fail(ErrorCode::MalformedRecord, "record has no \"drawing\" key");
  QuickDrawRecord rec;
  if (j.contains("word") && j["word"].is_string()) rec.word = j["word"].get<std::string>();
  rec.sketch = from_polylines(detail::parse_drawing(j["drawing"]));
  return rec;
}

inline VectorSketch parse_quickdraw_line(std::string_view line) {
  return parse_quickdraw_record(line).sketch;
}

/// Reads a JSON-lines file; blank lines are ignored.  Records without a
/// "word" get `default_word`.
inline std::vector<QuickDrawRecord> read_quickdraw_file(const std::string& path,
                                                        const std::string& default_word = "") {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::vector<QuickDrawRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_quickdraw_record(line));
    } catch (const Error& e) {
      fail(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (out.back().word.empty()) out.back().word = default_word;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Absolute geometry

/// Maximal pen-down runs as absolute polylines, starting from the origin.
/// A run of a single point is a dot.
inline std::vector<std::vector<Point2>> pen_down_runs(const VectorSketch& s) {
  std::vector<std::vector<Point2>> runs;
  Point2 pos{0.0, 0.0};
  std::vector<Point2> current{pos};
  Pen prev = Pen::down;
  bool moved = false;
  for (const Step& st : s.steps) {
    if (st.pen == Pen::end) break;
    moved = true;
    pos = {pos.x + st.dx, pos.y + st.dy};
    if (prev == Pen::down) {
      current.push_back(pos);
    } else {
      runs.push_back(std::move(current));
      current = {pos};
    }
    prev = st.pen;
  }
  if (moved) runs.push_back(std::move(current));
  return runs;
}

/// Serializes as a QuickDraw-style JSON object whose "drawing" holds the
/// absolute pen-down runs.
inline std::string to_quickdraw_line(const VectorSketch& s, const std::string& word = "") {
  nlohmann::json drawing = nlohmann::json::array();
  for (const auto& run : pen_down_runs(s)) {
    nlohmann::json xs = nlohmann::json::array(), ys = nlohmann::json::array();
    // A dot is written as a two-point polyline so that it survives re-parsing.
    const std::size_t reps = run.size() == 1 ? 2 : 1;
    for (std::size_t r = 0; r < reps; ++r)
      for (const auto& p : run) {
        xs.push_back(p.x);
        ys.push_back(p.y);
      }
    drawing.push_back({xs, ys});
  }
  nlohmann::json j;
  if (!word.empty()) j["word"] = word;
  j["drawing"] = drawing;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Stroke-5

using Stroke5Row = std::array<double, 5>;

inline constexpr Stroke5Row kPaddingRow{0.0, 0.0, 0.0, 0.0, 1.0};
inline constexpr Stroke5Row kStartRow{0.0, 0.0, 1.0, 0.0, 0.0};

struct Stroke5Sequence {
  std::vector<Stroke5Row> rows;

  std::size_t n_max() const { return rows.size(); }
  /// Rows up to and including the first end row (the whole sequence if none).
  std::size_t active_length() const {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i][4] == 1.0) return i + 1;
    return rows.size();
  }

  friend bool operator==(const Stroke5Sequence&, const Stroke5Sequence&) = default;
};

inline Stroke5Row to_row(const Step& st) {
  return {st.dx, st.dy, st.pen == Pen::down ? 1.0 : 0.0, st.pen == Pen::lift ? 1.0 : 0.0,
          st.pen == Pen::end ? 1.0 : 0.0};
}

inline Stroke5Sequence to_stroke5(const VectorSketch& s, std::size_t n_max) {
  if (s.steps.size() > n_max)
    fail(ErrorCode::SequenceTooLong, "sketch has " + std::to_string(s.steps.size()) +
                                         " steps, n_max is " + std::to_string(n_max));
  Stroke5Sequence out;
  out.rows.reserve(n_max);
  for (const Step& st : s.steps) out.rows.push_back(to_row(st));
  out.rows.resize(n_max, kPaddingRow);
  return out;
}

/// Inverse of to_stroke5: rows up to the first end row become steps.
inline VectorSketch from_stroke5(const Stroke5Sequence& seq) {
  VectorSketch out;
  for (const auto& r : seq.rows) {
    const Pen pen = r[4] == 1.0 ? Pen::end : (r[3] == 1.0 ? Pen::lift : Pen::down);
    out.steps.push_back({r[0], r[1], pen});
    if (pen == Pen::end) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rasters

struct RasterSketch {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 1 = dark

  RasterSketch() = default;
  RasterSketch(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  void set(int x, int y, std::uint8_t v = 1) {
    pixels[static_cast<std::size_t>(y) * width + x] = v;
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t dark_count() const {
    return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), 1));
  }

  friend bool operator==(const RasterSketch&, const RasterSketch&) = default;
};

/// Integer midpoint line walk along the major axis.  The minor coordinate at
/// major step i is round-half-up(i * |d_minor| / |d_major|) from the start.
inline void draw_line(RasterSketch& r, int x0, int y0, int x1, int y1) {
  const int adx = std::abs(x1 - x0), ady = std::abs(y1 - y0);
  const int sx = x1 >= x0 ? 1 : -1, sy = y1 >= y0 ? 1 : -1;
  const bool x_major = adx >= ady;
  const int major = x_major ? adx : ady;
  const int minor = x_major ? ady : adx;
  auto plot = [&](int x, int y) {
    if (r.contains(x, y)) r.set(x, y);
  };
  plot(x0, y0);
  // residual = 2*i*minor + major - 2*major*offset, kept in [0, 2*major)
  long residual = major;
  int x = x0, y = y0;
  for (int i = 1; i <= major; ++i) {
    residual += 2L * minor;
    bool step_minor = false;
    if (residual >= 2L * major) {
      residual -= 2L * major;
      step_minor = true;
    }
    if (x_major) {
      x += sx;
      if (step_minor) y += sy;
    } else {
      y += sy;
      if (step_minor) x += sx;
    }
    plot(x, y);
  }
}

/// Margin inside the canvas kept free of strokes.
constexpr int raster_margin(int side) { return side >= 8 ? 2 : 0; }

/// Longest scaled bounding-box extent, in pixels.
constexpr int raster_extent(int side) {
  return raster_margin(side) > 0 ? side - 2 * raster_margin(side) : side - 1;
}

/// Maps absolute sketch coordinates onto the side x side canvas: uniform
/// scale so the longer bounding-box side spans raster_extent(side), centred.
struct CanvasTransform {
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  double min_x = 0.0;
  double min_y = 0.0;

  double fx(double x) const { return offset_x + (x - min_x) * scale; }
  double fy(double y) const { return offset_y + (y - min_y) * scale; }
  int px(double x) const { return static_cast<int>(std::lround(fx(x))); }
  int py(double y) const { return static_cast<int>(std::lround(fy(y))); }
};

inline CanvasTransform fit_to_canvas(const std::vector<std::vector<Point2>>& runs, int side) {
  CanvasTransform t;
  double max_x = 0, max_y = 0;
  bool first = true;
  for (const auto& run : runs)
    for (const auto& p : run) {
      if (first) {
        t.min_x = max_x = p.x;
        t.min_y = max_y = p.y;
        first = false;
      }
      t.min_x = std::min(t.min_x, p.x);
      t.min_y = std::min(t.min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
  const double a = max_x - t.min_x, b = max_y - t.min_y;
  const double extent = raster_extent(side);
  const double longest = std::max(a, b);
  t.scale = longest > 0.0 ? extent / longest : 1.0;
  const double margin = raster_margin(side);
  t.offset_x = margin + (extent - a * t.scale) / 2.0;
  t.offset_y = margin + (extent - b * t.scale) / 2.0;
  return t;
}

/// Renders to a side x side binary raster with 1-pixel lines.
inline RasterSketch rasterize(const VectorSketch& s, int side = 256) {
  if (side < 2) fail(ErrorCode::OutOfRange, "raster side must be >= 2");
  RasterSketch r(side, side);
  const auto runs = pen_down_runs(s);
  if (runs.empty()) return r;
  const CanvasTransform t = fit_to_canvas(runs, side);
  for (const auto& run : runs) {
    if (run.size() == 1) {
      draw_line(r, t.px(run[0].x), t.py(run[0].y), t.px(run[0].x), t.py(run[0].y));
      continue;
    }
    for (std::size_t k = 1; k < run.size(); ++k)
      draw_line(r, t.px(run[k - 1].x), t.py(run[k - 1].y), t.px(run[k].x), t.py(run[k].y));
  }
  return r;
}

/// Resizes an arbitrary raster to side x side keeping the aspect ratio; the
/// shorter dimension is centred with background padding.
inline RasterSketch canonicalize(const RasterSketch& src, int side = 256) {
  if (src.width == side && src.height == side) return src;
  RasterSketch out(side, side);
  if (src.width <= 0 || src.height <= 0) return out;
  const double s = static_cast<double>(side) / std::max(src.width, src.height);
  const int off_x = static_cast<int>((side - std::lround(src.width * s)) / 2);
  const int off_y = static_cast<int>((side - std::lround(src.height * s)) / 2);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      if (!src.at(x, y)) continue;
      const int x0 = off_x + static_cast<int>(std::floor(x * s));
      const int y0 = off_y + static_cast<int>(std::floor(y * s));
      const int x1 = std::max(x0 + 1, off_x + static_cast<int>(std::floor((x + 1) * s)));
      const int y1 = std::max(y0 + 1, off_y + static_cast<int>(std::floor((y + 1) * s)));
      for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx)
          if (out.contains(xx, yy)) out.set(xx, yy);
    }
  return out;
}

// ---------------------------------------------------------------------------
// PGM

/// Binary PGM (P5, maxval 255): background 255, strokes 0.
inline std::string to_pgm(const RasterSketch& r) {
  std::string out = "P5\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  out.reserve(out.size() + r.pixels.size());
  for (auto v : r.pixels) out.push_back(static_cast<char>(v ? 0 : 255));
  return out;
}

inline void write_pgm(const std::string& path, const RasterSketch& r) {
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = to_pgm(r);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
}

/// Parses P5 or P2 data.  A pixel is dark when its value is below half of
/// maxval.
inline RasterSketch parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  const std::string magic = next_token();
  if (magic != "P5" && magic != "P2") fail(ErrorCode::MalformedRecord, "not a PGM image");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    fail(ErrorCode::MalformedRecord, "bad PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    fail(ErrorCode::MalformedRecord, "bad PGM header");
  RasterSketch r(w, h);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const int threshold = (maxval + 1) / 2;
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    if (bytes.size() < pos + n * bpp) fail(ErrorCode::MalformedRecord, "truncated PGM data");
    for (std::size_t i = 0; i < n; ++i) {
      int v = static_cast<unsigned char>(bytes[pos + i * bpp]);
      if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + i * bpp + 1]);
      r.pixels[i] = v < threshold ? 1 : 0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string tok = next_token();
      if (tok.empty()) fail(ErrorCode::MalformedRecord, "truncated PGM data");
      r.pixels[i] = std::stoi(tok) < threshold ? 1 : 0;
    }
  }
  return r;
}

inline RasterSketch read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pgm(ss.str());
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {
inline std::string fmt_coord(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v == 0.0 ? 0.0 : v);
  return buf;
}
}  // namespace detail

/// SVG 1.1 document with one path per pen-down run, in absolute sketch
/// coordinates.
inline std::string render_svg(const VectorSketch& s) {
  const auto runs = pen_down_runs(s);
  double min_x = 0, min_y = 0, max_x = 1, max_y = 1;
  bool first = true;
  for (const auto& run : runs)
    for (const auto& p : run) {
      if (first) {
        min_x = max_x = p.x;
        min_y = max_y = p.y;
        first = false;
      }
      min_x = std::min(min_x, p.x);
      min_y = std::min(min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
  const double pad = 1.0;
  const double vw = std::max(max_x - min_x, 1.0) + 2 * pad;
  const double vh = std::max(max_y - min_y, 1.0) + 2 * pad;
  using detail::fmt_coord;
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"" +
         fmt_coord(min_x - pad) + " " + fmt_coord(min_y - pad) + " " + fmt_coord(vw) + " " +
         fmt_coord(vh) + "\">\n";
  for (const auto& run : runs) {
    std::string d = "M " + fmt_coord(run[0].x) + " " + fmt_coord(run[0].y);
    if (run.size() == 1) d += " L " + fmt_coord(run[0].x) + " " + fmt_coord(run[0].y);
    for (std::size_t k = 1; k < run.size(); ++k)
      d += " L " + fmt_coord(run[k].x) + " " + fmt_coord(run[k].y);
    out += "  <path d=\"" + d +
           "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\" stroke-linecap=\"round\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

/// Reads back the M/L polylines written by render_svg.
inline std::vector<std::vector<Point2>> parse_svg_paths(std::string_view svg) {
  std::vector<std::vector<Point2>> out;
  std::size_t pos = 0;
  while ((pos = svg.find(" d=\"", pos)) != std::string_view::npos) {
    pos += 4;
    const std::size_t end = svg.find('"', pos);
    if (end == std::string_view::npos) fail(ErrorCode::MalformedRecord, "unterminated path");
    std::istringstream in{std::string(svg.substr(pos, end - pos))};
    std::vector<Point2> poly;
    std::string cmd;
    while (in >> cmd) {
      if (cmd != "M" && cmd != "L") fail(ErrorCode::MalformedRecord, "unsupported path command");
      Point2 p;
      if (!(in >> p.x >> p.y)) fail(ErrorCode::MalformedRecord, "bad path coordinates");
      poly.push_back(p);
    }
    out.push_back(std::move(poly));
    pos = end;
  }
  return out;
}

}  // namespace sketchlattice
