#pragma once

// End-to-end training: batch loss with full backpropagation, one optimizer
// step, the fit loop with checkpoints and a loss log, and a central
// difference gradient audit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sketchlattice/config.hpp"
#include "sketchlattice/decoder.hpp"
#include "sketchlattice/encoder.hpp"
#include "sketchlattice/graph.hpp"
#include "sketchlattice/lattice.hpp"
#include "sketchlattice/model.hpp"
#include "sketchlattice/optim.hpp"
#include "sketchlattice/sketch.hpp"

namespace sketchlattice {

/// Rng for a (seed, stream, index) triple.  Independent streams keep e.g.
/// masking and sampling decoupled.
inline Rng stream_rng(std::uint64_t seed, std::uint32_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

enum RngStream : std::uint32_t { kInitStream = 0, kIterationStream = 1, kMaskStream = 2, kSampleStream = 3 };

// ---------------------------------------------------------------------------
// Data

struct Dataset {
  std::vector<VectorSketch> sketches;
  std::vector<std::string> labels;
  std::size_t dropped = 0;  // invalid, empty, or longer than n_max
};

/// Reads JSON-lines files.  The label of a record is its "word", falling
/// back to the file stem.
inline Dataset load_dataset(const std::vector<std::string>& paths, int n_max) {
  Dataset out;
  for (const auto& path : paths) {
    const std::string stem = std::filesystem::path(path).stem().string();
    for (auto& rec : read_quickdraw_file(path, stem)) {
      const auto& s = rec.sketch;
      if (s.steps.empty() || !is_valid(s) || s.steps.size() > static_cast<std::size_t>(n_max)) {
        ++out.dropped;
        continue;
      }
      out.sketches.push_back(std::move(rec.sketch));
      out.labels.push_back(rec.word);
    }
  }
  if (out.sketches.empty()) fail(ErrorCode::DatasetEmpty, "no usable sketches in the dataset");
  return out;
}

/// Standard deviation of all pixel offsets (dx and dy pooled, end steps
/// excluded); 1 when degenerate.
inline double offset_scale_of(const std::vector<VectorSketch>& sketches) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : sketches)
    for (const auto& st : s.steps) {
      if (st.pen == Pen::end) continue;
      sum += st.dx + st.dy;
      sq += st.dx * st.dx + st.dy * st.dy;
      n += 2;
    }
  if (n < 2) return 1.0;
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  return var > 0.0 ? std::sqrt(var) : 1.0;
}

struct TrainItem {
  SketchLattice lattice;   // full lattice of the rasterized sketch
  Stroke5Sequence target;  // unpadded, offsets in model units
};

inline TrainItem prepare_item(const VectorSketch& s, const RunConfig& c) {
  if (s.steps.size() > static_cast<std::size_t>(c.decoder.n_max))
    fail(ErrorCode::SequenceTooLong, "sketch longer than n_max");
  TrainItem item{sample_lattice(rasterize(s, c.lattice.side), c.lattice), {}};
  for (const auto& st : s.steps) {
    Stroke5Row r = to_row(st);
    r[0] /= c.decoder.offset_scale;
    r[1] /= c.decoder.offset_scale;
    item.target.rows.push_back(r);
  }
  return item;
}

/// Pads every target with end rows to the longest one.
inline std::vector<Stroke5Sequence> pad_targets(std::vector<Stroke5Sequence> targets, int n_max) {
  std::size_t len = 0;
  for (const auto& t : targets) len = std::max(len, t.rows.size());
  len = std::min(len, static_cast<std::size_t>(n_max));
  for (auto& t : targets) t.rows.resize(len, kPaddingRow);
  return targets;
}

// ---------------------------------------------------------------------------
// Batch loss

/// Teacher-forced NLL of a batch.  Dropout masks and latent noise are drawn
/// from `seed`, so two calls with the same seed see the same randomness.
/// With `grad`, gradients of the loss are accumulated into it; with
/// `head_cache`, the batch-norm statistics of the forward pass are kept.
template <typename S>
double batch_loss(const Model<S>& model, const std::vector<SketchGraph>& graphs,
                  const std::vector<Stroke5Sequence>& targets, bool train, std::uint64_t seed,
                  Model<S>* grad = nullptr, HeadCache<S>* head_cache = nullptr) {
  const auto& ec = model.config.encoder;
  if (graphs.size() != targets.size() || graphs.empty())
    fail(ErrorCode::ShapeMismatch, "graphs and targets differ in count");
  Rng rng(seed);
  const auto batch = static_cast<Eigen::Index>(graphs.size());
  Mat<S> pooled(ec.dim, batch);
  std::vector<NodeCache<S>> nodes(grad ? graphs.size() : 0);
  for (Eigen::Index b = 0; b < batch; ++b)
    pooled.col(b) = encode_nodes(graphs[static_cast<std::size_t>(b)], model.encoder, ec, train, rng,
                                 grad ? &nodes[static_cast<std::size_t>(b)] : nullptr);
  HeadCache<S> local;
  HeadCache<S>& hc = head_cache ? *head_cache : local;
  const Mat<S> psi = project(pooled, model.encoder, ec, train, &hc);
  const LatentBatch<S> lb = bridge<S>(psi, model.encoder, standard_normal<S>(ec.dim, batch, rng));
  Mat<S> d_z;
  const double loss = teacher_forced_nll<S>(lb.z, targets, model.decoder, model.config.decoder,
                                            grad ? &grad->decoder : nullptr, grad ? &d_z : nullptr);
  if (!grad) return loss;
  const Mat<S> d_psi = bridge_backward(lb, d_z, model.encoder, grad->encoder);
  const Mat<S> d_pooled = project_backward(hc, d_psi, model.encoder, grad->encoder);
  for (Eigen::Index b = 0; b < batch; ++b)
    encode_nodes_backward<S>(nodes[static_cast<std::size_t>(b)], d_pooled.col(b), model.encoder, ec,
                             grad->encoder);
  return loss;
}

// ---------------------------------------------------------------------------
// One optimizer step

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
  int skipped = 0;  // items whose masked lattice was empty
};

/// Masks, encodes, decodes and updates on one batch, drawing all randomness
/// from `rng`.  The Adam iteration counter advances by one.
template <typename S>
StepResult train_step(Model<S>& model, AdamState<S>& adam, const std::vector<const TrainItem*>& batch,
                      Rng& rng) {
  const RunConfig& c = model.config;
  if (batch.empty()) fail(ErrorCode::AllItemsSkipped, "empty batch");
  StepResult res;
  std::vector<SketchGraph> graphs;
  std::vector<Stroke5Sequence> targets;
  for (const TrainItem* item : batch) {
    SketchLattice masked = mask_lattice(item->lattice, c.train.p_mask_train, rng);
    if (masked.points.empty()) {
      ++res.skipped;
      continue;
    }
    graphs.push_back(build_graph(masked, c.graph));
    targets.push_back(item->target);
  }
  if (graphs.empty()) fail(ErrorCode::AllItemsSkipped, "every item in the batch had an empty lattice");
  targets = pad_targets(std::move(targets), c.decoder.n_max);
  const std::uint64_t forward_seed = rng();

  Model<S> grad = model.zeros_like();
  HeadCache<S> hc;
  res.loss = batch_loss(model, graphs, targets, true, forward_seed, &grad, &hc);
  if (!std::isfinite(res.loss)) fail(ErrorCode::NumericalUnderflow, "training loss is not finite");
  update_running_stats(model.encoder, hc, c.encoder);
  auto grads = collect_arrays<S>(grad);
  clip_gradients(grads, c.train.clip, c.train.clip_mode);
  res.lr = lr_schedule(c.train, adam.iteration);
  ++adam.iteration;
  adam_update(model, grad, adam, res.lr, c.train, adam.iteration);
  return res;
}

/// Uniform sampling with replacement.
inline std::vector<std::size_t> sample_batch(std::size_t dataset_size, int batch_size, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, dataset_size - 1);
  std::vector<std::size_t> out(static_cast<std::size_t>(batch_size));
  for (auto& i : out) i = pick(rng);
  return out;
}

// ---------------------------------------------------------------------------
// Fit loop

struct FitResult {
  std::vector<double> losses;  // iterations run by this call
  std::string final_checkpoint;
  long iteration = 0;
  std::size_t skipped_items = 0;
};

inline std::string format_loss_row(long iteration, double lr, double loss) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g\n", iteration, lr, loss);
  return buf;
}

/// Mean of losses[end - window, end) (1-based iteration `end`).
inline double smoothed_loss(const std::vector<double>& losses, std::size_t end, std::size_t window) {
  if (end > losses.size() || window == 0 || window > end)
    fail(ErrorCode::OutOfRange, "smoothing window outside the loss history");
  double s = 0.0;
  for (std::size_t i = end - window; i < end; ++i) s += losses[i];
  return s / static_cast<double>(window);
}

/// Trains for `cfg.train.iterations` total iterations and writes
/// `loss.csv`, `ckpt_<iter>.bin` every `checkpoint_every` iterations and
/// `final.bin` into `out_dir`.  With `resume`, model, optimizer state and
/// the iteration counter come from that checkpoint and the loss log lists
/// only the iterations run here.  Iteration i always draws from the same
/// random stream, so a resumed run continues exactly as an uninterrupted one.
inline FitResult fit(const Dataset& data, RunConfig cfg, const std::string& out_dir,
                     const std::optional<std::string>& resume = std::nullopt,
                     std::ostream* log = nullptr) {
  validate(cfg);
  std::filesystem::create_directories(out_dir);
  Model<float> model;
  AdamState<float> adam;
  if (resume) {
    auto loaded = load_checkpoint<float>(*resume);
    const TrainConfig train = cfg.train;
    model = std::move(loaded.model);
    model.config.train = train;
    adam = loaded.adam ? std::move(*loaded.adam) : AdamState<float>::for_params(model);
    adam.iteration = loaded.iteration;
  } else {
    cfg.decoder.offset_scale = offset_scale_of(data.sketches);
    Rng init_rng = stream_rng(cfg.train.seed, kInitStream);
    model = Model<float>::init(cfg, init_rng);
    adam = AdamState<float>::for_params(model);
  }
  const RunConfig& c = model.config;

  std::vector<TrainItem> items;
  items.reserve(data.sketches.size());
  for (const auto& s : data.sketches) items.push_back(prepare_item(s, c));

  FitResult out;
  const std::string csv_path = (std::filesystem::path(out_dir) / "loss.csv").string();
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) fail(ErrorCode::CheckpointWriteFailure, "cannot write " + csv_path);
  csv << "iteration,lr,loss\n";

  auto checkpoint_path = [&](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  while (adam.iteration < c.train.iterations) {
    Rng rng = stream_rng(c.train.seed, kIterationStream, static_cast<std::uint64_t>(adam.iteration));
    std::vector<const TrainItem*> batch;
    for (std::size_t i : sample_batch(items.size(), c.train.batch_size, rng)) batch.push_back(&items[i]);
    const StepResult r = train_step(model, adam, batch, rng);
    out.losses.push_back(r.loss);
    out.skipped_items += static_cast<std::size_t>(r.skipped);
    csv << format_loss_row(adam.iteration, r.lr, r.loss);
    if (log && (adam.iteration % 100 == 0 || adam.iteration == c.train.iterations))
      *log << "iteration " << adam.iteration << " loss " << r.loss << "\n";
    if (c.train.checkpoint_every > 0 && adam.iteration % c.train.checkpoint_every == 0)
      save_checkpoint(checkpoint_path("ckpt_" + std::to_string(adam.iteration) + ".bin"), model, &adam);
  }
  csv.flush();
  if (!csv) fail(ErrorCode::CheckpointWriteFailure, "cannot write " + csv_path);
  out.final_checkpoint = checkpoint_path("final.bin");
  save_checkpoint(out.final_checkpoint, model, &adam);
  out.iteration = adam.iteration;
  return out;
}

// ---------------------------------------------------------------------------
// Gradient audit

struct AuditEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

struct AuditReport {
  std::vector<AuditEntry> arrays;
  double worst = 0.0;
};

/// Analytic and numeric derivatives agreeing to within this absolute
/// amount are treated as equal; it sits at the O(h^2) truncation level of
/// central differences with h = 1e-4.
inline constexpr double kAuditAbsFloor = 1e-5;

inline double audit_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kAuditAbsFloor});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences with step `h` against the analytic gradient of
/// batch_loss (training mode, fixed seed) for every element of every
/// trainable array.
inline AuditReport finite_diff_audit(const Model<double>& model, const std::vector<SketchGraph>& graphs,
                                     const std::vector<Stroke5Sequence>& targets, std::uint64_t seed,
                                     double h = 1e-4) {
  Model<double> grad = model.zeros_like();
  batch_loss(model, graphs, targets, true, seed, &grad);
  Model<double> probe = model;
  auto params = collect_arrays<double>(probe);
  auto grads = collect_arrays<double>(grad);
  AuditReport report;
  for (std::size_t a = 0; a < params.size(); ++a) {
    if (!params[a].trainable) continue;
    AuditEntry e{params[a].name, 0, 0.0, 0.0};
    Mat<double>& w = *params[a].value;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + h;
      const double up = batch_loss(probe, graphs, targets, true, seed);
      w.data()[i] = orig - h;
      const double down = batch_loss(probe, graphs, targets, true, seed);
      w.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[a].value->data()[i];
      e.max_rel_error = std::max(e.max_rel_error, audit_relative_error(analytic, numeric));
      e.max_abs_grad = std::max(e.max_abs_grad, std::abs(analytic));
      ++e.checked;
    }
    report.worst = std::max(report.worst, e.max_rel_error);
    report.arrays.push_back(e);
  }
  return report;
}

/// Configuration small enough for an exhaustive audit.
inline RunConfig audit_config() {
  RunConfig c;
  c.lattice = {8, 64};
  c.encoder.side = 64;
  c.encoder.dim = 8;
  c.encoder.layers = 2;
  c.decoder.hidden = 8;
  c.decoder.mixtures = 2;
  c.decoder.n_max = 12;
  return c;
}

struct AuditProbe {
  std::vector<SketchGraph> graphs;
  std::vector<Stroke5Sequence> targets;
};

/// `batch` random graphs of at most 6 nodes with random short targets.
inline AuditProbe make_audit_probe(const RunConfig& c, std::uint64_t seed, int batch = 3) {
  Rng rng = stream_rng(seed, kSampleStream);
  std::uniform_int_distribution<int> coord(0, c.lattice.side - 1), nodes(2, 6),
      steps(3, std::max(3, c.decoder.n_max - 2)), pen(0, 3);
  std::normal_distribution<double> offset(0.0, 1.0);
  AuditProbe probe;
  for (int b = 0; b < batch; ++b) {
    SketchLattice l{c.lattice.side, c.lattice.n, {}};
    const int m = nodes(rng);
    while (static_cast<int>(l.points.size()) < m) {
      const LatticePoint p{coord(rng), coord(rng)};
      if (std::find(l.points.begin(), l.points.end(), p) == l.points.end()) l.points.push_back(p);
    }
    std::sort(l.points.begin(), l.points.end());
    probe.graphs.push_back(build_graph(l, c.graph));
    Stroke5Sequence t;
    const int len = steps(rng);
    for (int i = 0; i + 1 < len; ++i) {
      const bool lift = pen(rng) == 0;
      t.rows.push_back({offset(rng), offset(rng), lift ? 0.0 : 1.0, lift ? 1.0 : 0.0, 0.0});
    }
    t.rows.push_back(kPaddingRow);
    probe.targets.push_back(std::move(t));
  }
  probe.targets = pad_targets(std::move(probe.targets), c.decoder.n_max);
  return probe;
}

}  // namespace sketchlattice
