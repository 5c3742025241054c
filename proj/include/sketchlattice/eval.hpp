#pragma once

// Inference harnesses: healing a (possibly corrupted) raster, edge maps to
// sketches, embedding galleries, cosine retrieval and the healing sweep.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sketchlattice/decoder.hpp"
#include "sketchlattice/encoder.hpp"
#include "sketchlattice/graph.hpp"
#include "sketchlattice/lattice.hpp"
#include "sketchlattice/model.hpp"
#include "sketchlattice/sketch.hpp"
#include "sketchlattice/trainer.hpp"

namespace sketchlattice {

struct HealRequest {
  RasterSketch raster;
  double p_mask = 0.0;
  int n = 32;
  std::uint64_t seed = 1;
};

struct HealResult {
  VectorSketch sketch;
  SketchLattice lattice;  // points that survived masking
};

namespace detail {

template <typename S>
RasterSketch canonical_raster(const RasterSketch& r, const Model<S>& model) {
  const int side = model.config.lattice.side;
  return r.width == side && r.height == side ? r : canonicalize(r, side);
}

}  // namespace detail

/// Encodes a lattice and decodes a sketch, with latent noise and sampling
/// drawn from the seed's sampling stream.
template <typename S>
VectorSketch generate_from_lattice(const SketchLattice& lattice, const Model<S>& model, std::uint64_t seed) {
  if (lattice.points.empty()) fail(ErrorCode::EmptyLattice, "lattice has no points");
  const SketchGraph g = build_graph(lattice, model.config.graph);
  Rng rng = stream_rng(seed, kSampleStream);
  const auto psi = encode<S>(g, model.encoder, model.config.encoder, false, rng);
  const LatentSample<S> ls = reparameterize<S>(psi, model.encoder, rng, true);
  return generate<S>(ls.z, model.decoder, model.config.decoder, rng);
}

/// raster -> lattice -> mask -> graph -> psi -> z -> sketch.
template <typename S>
HealResult heal(const HealRequest& req, const Model<S>& model) {
  LatticeConfig lc = model.config.lattice;
  lc.n = req.n;
  const SketchLattice full = sample_lattice(detail::canonical_raster(req.raster, model), lc);
  Rng mask_rng = stream_rng(req.seed, kMaskStream);
  HealResult out{{}, mask_lattice(full, req.p_mask, mask_rng)};
  if (out.lattice.points.empty()) fail(ErrorCode::EmptyLattice, "no lattice points survive masking");
  out.sketch = generate_from_lattice(out.lattice, model, req.seed);
  return out;
}

/// Edge map to sketch: healing without corruption.
template <typename S>
VectorSketch edge_to_sketch(const RasterSketch& edges, const Model<S>& model, int n, std::uint64_t seed) {
  return heal(HealRequest{edges, 0.0, n, seed}, model).sketch;
}

// ---------------------------------------------------------------------------
// Embeddings and retrieval

/// Eval-mode psi of one raster.
template <typename S>
Eigen::VectorXd embed_raster(const RasterSketch& raster, const Model<S>& model, int n) {
  LatticeConfig lc = model.config.lattice;
  lc.n = n;
  const SketchLattice l = sample_lattice(detail::canonical_raster(raster, model), lc);
  if (l.points.empty()) fail(ErrorCode::EmptyLattice, "raster has no lattice points");
  Rng unused(0);
  return encode<S>(build_graph(l, model.config.graph), model.encoder, model.config.encoder, false, unused)
      .template cast<double>();
}

inline void normalize_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm > 0.0) m.row(i) /= norm;
  }
}

struct GalleryEmbedding {
  Eigen::MatrixXd rows;                // one unit-norm embedding per kept item
  std::vector<std::size_t> source;     // input index of each row
  std::vector<std::size_t> excluded;   // inputs with an empty lattice
};

template <typename S>
GalleryEmbedding embed_gallery(const std::vector<RasterSketch>& rasters, const Model<S>& model, int n) {
  if (rasters.empty()) fail(ErrorCode::DatasetEmpty, "gallery is empty");
  GalleryEmbedding out;
  std::vector<Eigen::VectorXd> kept;
  for (std::size_t i = 0; i < rasters.size(); ++i) {
    try {
      kept.push_back(embed_raster(rasters[i], model, n));
      out.source.push_back(i);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyLattice) throw;
      out.excluded.push_back(i);
    }
  }
  out.rows.resize(static_cast<Eigen::Index>(kept.size()), model.config.encoder.dim);
  for (std::size_t i = 0; i < kept.size(); ++i) out.rows.row(static_cast<Eigen::Index>(i)) = kept[i].transpose();
  normalize_rows(out.rows);
  return out;
}

struct RetrievalReport {
  std::vector<std::vector<std::size_t>> rankings;  // gallery indices, best first
  double top1 = 0.0, top3 = 0.0;
  std::map<std::string, std::map<std::string, int>> confusion;  // query label -> top-1 label
};

/// Cosine-similarity retrieval.  A query hits at k when one of its k best
/// gallery items shares its label.  Equal similarities rank by gallery
/// index.  `exclude[q]`, when set, removes that gallery item from query q's
/// ranking.
inline RetrievalReport retrieve(const Eigen::MatrixXd& queries, const std::vector<std::string>& query_labels,
                                const Eigen::MatrixXd& gallery, const std::vector<std::string>& gallery_labels,
                                const std::vector<std::optional<std::size_t>>& exclude = {}) {
  if (queries.cols() != gallery.cols())
    fail(ErrorCode::ShapeMismatch, "query and gallery embeddings differ in width");
  if (static_cast<std::size_t>(queries.rows()) != query_labels.size() ||
      static_cast<std::size_t>(gallery.rows()) != gallery_labels.size())
    fail(ErrorCode::ShapeMismatch, "labels do not match embeddings");
  if (!exclude.empty() && exclude.size() != query_labels.size())
    fail(ErrorCode::ShapeMismatch, "exclusion list does not match queries");
  Eigen::MatrixXd q = queries, g = gallery;
  normalize_rows(q);
  normalize_rows(g);
  const Eigen::MatrixXd sim = q * g.transpose();
  RetrievalReport out;
  std::size_t hit1 = 0, hit3 = 0;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < gallery_labels.size(); ++j)
      if (exclude.empty() || exclude[static_cast<std::size_t>(i)] != j) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return sim(i, static_cast<Eigen::Index>(a)) > sim(i, static_cast<Eigen::Index>(b));
    });
    const std::string& label = query_labels[static_cast<std::size_t>(i)];
    bool hit = false;
    for (std::size_t r = 0; r < std::min<std::size_t>(3, order.size()); ++r) {
      if (gallery_labels[order[r]] != label) continue;
      if (r == 0) ++hit1;
      hit = true;
      break;
    }
    if (hit) ++hit3;
    if (!order.empty()) ++out.confusion[label][gallery_labels[order.front()]];
    out.rankings.push_back(std::move(order));
  }
  if (!query_labels.empty()) {
    out.top1 = static_cast<double>(hit1) / static_cast<double>(query_labels.size());
    out.top3 = static_cast<double>(hit3) / static_cast<double>(query_labels.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Healing sweep

using RasterClassifier = std::function<std::string(const RasterSketch&)>;

struct SweepRow {
  double p_mask = 0.0;
  double top1 = 0.0, top3 = 0.0;
  double mean_points = 0.0;  // surviving lattice points per query
  double failures = 0.0;     // fraction of queries without a usable healed sketch
  std::optional<double> accuracy;  // classifier agreement, when a classifier is given
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double mean_full_points = 0.0;  // lattice size before masking
};

/// For each corruption level every test sketch is rasterized, healed,
/// re-rasterized and embedded; the embedding is ranked against the clean
/// test gallery with the query's own source left out.  A query whose lattice
/// is empty or whose healed sketch is empty counts as a miss and a failure.
template <typename S>
SweepReport healing_sweep(const std::vector<VectorSketch>& sketches, const std::vector<std::string>& labels,
                          const Model<S>& model, const std::vector<double>& p_masks, int n, std::uint64_t seed,
                          const RasterClassifier& classifier = {}) {
  if (sketches.size() != labels.size()) fail(ErrorCode::ShapeMismatch, "labels do not match sketches");
  const int side = model.config.lattice.side;
  std::vector<RasterSketch> rasters;
  for (const auto& s : sketches) rasters.push_back(rasterize(s, side));
  const GalleryEmbedding gallery = embed_gallery(rasters, model, n);
  std::vector<std::string> gallery_labels;
  std::vector<std::optional<std::size_t>> row_of(sketches.size());
  for (std::size_t r = 0; r < gallery.source.size(); ++r) {
    gallery_labels.push_back(labels[gallery.source[r]]);
    row_of[gallery.source[r]] = r;
  }
  LatticeConfig lc = model.config.lattice;
  lc.n = n;
  SweepReport report;
  for (const auto& r : rasters) report.mean_full_points += static_cast<double>(sample_lattice(r, lc).points.size());
  report.mean_full_points /= static_cast<double>(rasters.size());

  const auto d = static_cast<Eigen::Index>(model.config.encoder.dim);
  for (double p : p_masks) {
    SweepRow row;
    row.p_mask = p;
    std::vector<std::size_t> ok;
    Eigen::MatrixXd queries(static_cast<Eigen::Index>(sketches.size()), d);
    std::size_t points = 0, failures = 0, agree = 0;
    for (std::size_t i = 0; i < sketches.size(); ++i) {
      try {
        const HealResult h = heal(HealRequest{rasters[i], p, n, seed + i}, model);
        points += h.lattice.points.size();
        if (h.sketch.steps.empty() || !is_valid(h.sketch)) {
          ++failures;
          continue;
        }
        const RasterSketch healed = rasterize(h.sketch, side);
        queries.row(static_cast<Eigen::Index>(ok.size())) = embed_raster(healed, model, n).transpose();
        if (classifier && classifier(healed) == labels[i]) ++agree;
        ok.push_back(i);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyLattice) throw;
        ++failures;
      }
    }
    queries.conservativeResize(static_cast<Eigen::Index>(ok.size()), d);
    std::vector<std::string> qlabels;
    std::vector<std::optional<std::size_t>> exclude;
    for (std::size_t i : ok) {
      qlabels.push_back(labels[i]);
      exclude.push_back(row_of[i]);
    }
    const RetrievalReport rr = retrieve(queries, qlabels, gallery.rows, gallery_labels, exclude);
    const double total = static_cast<double>(sketches.size());
    const double scale = static_cast<double>(ok.size()) / total;
    row.top1 = rr.top1 * scale;
    row.top3 = rr.top3 * scale;
    row.mean_points = static_cast<double>(points) / total;
    row.failures = static_cast<double>(failures) / total;
    if (classifier) row.accuracy = static_cast<double>(agree) / total;
    report.rows.push_back(row);
  }
  return report;
}

inline std::string sweep_csv(const SweepReport& r) {
  std::string out = "p_mask,top1,top3,mean_points,failures\n";
  char buf[160];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.4g,%.6f,%.6f,%.4f,%.6f\n", row.p_mask, row.top1, row.top3,
                  row.mean_points, row.failures);
    out += buf;
  }
  return out;
}

inline std::string sweep_table(const SweepReport& r) {
  std::string out = "  p_mask    top-1    top-3   points  failures  classifier\n";
  char buf[160];
  for (const auto& row : r.rows) {
    char acc[32] = "       -";
    if (row.accuracy) std::snprintf(acc, sizeof acc, "%8.3f", *row.accuracy);
    std::snprintf(buf, sizeof buf, "%8.2f %8.3f %8.3f %8.1f %9.3f  %s\n", row.p_mask, row.top1, row.top3,
                  row.mean_points, row.failures, acc);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "full lattice: %.1f points on average\n", r.mean_full_points);
  out += buf;
  return out;
}

}  // namespace sketchlattice
