#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sketchlattice/checkpoint.hpp"
#include "sketchlattice/error.hpp"

namespace sketchlattice {

enum class ClipMode { elementwise, global_norm };

struct TrainConfig {
  double lr = 1e-3;
  double decay = 0.999;  // per iteration
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double clip = 1.0;
  ClipMode clip_mode = ClipMode::elementwise;
  int batch_size = 64;
  int iterations = 1000;
  double p_mask_train = 0.1;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0: final checkpoint only
};

inline void validate(const TrainConfig& c) {
  if (!(c.lr >= 0.0)) fail(ErrorCode::InvalidConfig, "lr must be >= 0");
  if (!(c.decay > 0.0 && c.decay <= 1.0)) fail(ErrorCode::InvalidConfig, "decay must be in (0, 1]");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    fail(ErrorCode::InvalidConfig, "Adam betas must be in [0, 1)");
  if (!(c.eps > 0.0)) fail(ErrorCode::InvalidConfig, "eps must be > 0");
  if (!(c.clip > 0.0)) fail(ErrorCode::InvalidConfig, "clip must be > 0");
  if (c.batch_size < 1) fail(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (c.iterations < 0) fail(ErrorCode::InvalidConfig, "iterations must be >= 0");
  if (!(c.p_mask_train >= 0.0 && c.p_mask_train <= 1.0))
    fail(ErrorCode::InvalidConfig, "p_mask_train must be in [0, 1]");
  if (c.checkpoint_every < 0) fail(ErrorCode::InvalidConfig, "checkpoint_every must be >= 0");
}

/// lr * decay^iteration.
inline double lr_schedule(const TrainConfig& c, long iteration) {
  return c.lr * std::pow(c.decay, static_cast<double>(iteration));
}

/// Clamps every gradient value into [-clip, clip].
template <typename S>
void clip_elementwise(Mat<S>& g, double clip) {
  const S lim = static_cast<S>(clip);
  g = g.cwiseMax(-lim).cwiseMin(lim);
}

/// Applies the configured clipping to every trainable gradient array.
template <typename S>
void clip_gradients(std::vector<ArrayRef<S>>& grads, double clip, ClipMode mode) {
  if (mode == ClipMode::elementwise) {
    for (auto& g : grads)
      if (g.trainable) clip_elementwise(*g.value, clip);
    return;
  }
  double sq = 0.0;
  for (const auto& g : grads)
    if (g.trainable) sq += static_cast<double>(g.value->squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > clip) {
    const S factor = static_cast<S>(clip / norm);
    for (auto& g : grads)
      if (g.trainable) *g.value *= factor;
  }
}

/// Adam moments for every trainable array, in visit order.
template <typename S>
struct AdamState {
  std::vector<std::string> names;
  std::vector<Mat<S>> m, v;
  long iteration = 0;

  template <typename Params>
  static AdamState for_params(Params& p) {
    AdamState st;
    for (const auto& ref : collect_arrays<S>(p)) {
      if (!ref.trainable) continue;
      st.names.push_back(ref.name);
      st.m.push_back(Mat<S>::Zero(ref.value->rows(), ref.value->cols()));
      st.v.push_back(Mat<S>::Zero(ref.value->rows(), ref.value->cols()));
    }
    return st;
  }
};

/// Bias-corrected Adam step with the given learning rate.  Does not touch
/// the iteration counter.
template <typename S, typename Params>
void adam_update(Params& params, Params& grads, AdamState<S>& st, double lr, const TrainConfig& c,
                 long step_number) {
  auto ps = collect_arrays<S>(params);
  auto gs = collect_arrays<S>(grads);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step_number));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step_number));
  std::size_t k = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i].trainable) continue;
    if (k >= st.names.size() || st.names[k] != ps[i].name)
      fail(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
    auto& m = st.m[k];
    auto& v = st.v[k];
    const auto& g = *gs[i].value;
    auto& w = *ps[i].value;
    m = static_cast<S>(c.beta1) * m + static_cast<S>(1.0 - c.beta1) * g;
    v = static_cast<S>(c.beta2) * v + static_cast<S>(1.0 - c.beta2) * g.cwiseProduct(g);
    const S step = static_cast<S>(lr / bc1);
    const S inv_bc2 = static_cast<S>(1.0 / bc2);
    w.array() -= step * m.array() / ((v.array() * inv_bc2).sqrt() + static_cast<S>(c.eps));
    ++k;
  }
}

}  // namespace sketchlattice
