#pragma once

// Mixture-density LSTM decoder.  The LSTM input at step t is the previous
// stroke-5 row concatenated with z; the linear head emits 6M+3 values laid
// out as [pi logits | mu_x | mu_y | log sigma_x | log sigma_y | rho (pre-tanh)
// | pen logits], each block M wide except the 3 pen logits.
//
// Mixture math always runs in double, independent of the network scalar.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sketchlattice/checkpoint.hpp"
#include "sketchlattice/error.hpp"
#include "sketchlattice/lattice.hpp"
#include "sketchlattice/sketch.hpp"

namespace sketchlattice {

struct DecoderConfig {
  int hidden = 512;
  int mixtures = 20;
  int n_max = 200;
  double temperature = 0.4;   // sampling temperature
  double offset_scale = 1.0;  // pixel offsets are divided by this before modelling
};

inline void validate(const DecoderConfig& c) {
  if (c.hidden < 1) fail(ErrorCode::InvalidConfig, "decoder hidden size must be >= 1");
  if (c.mixtures < 1) fail(ErrorCode::InvalidConfig, "mixture count must be >= 1");
  if (c.n_max < 1) fail(ErrorCode::InvalidConfig, "n_max must be >= 1");
  if (!(c.temperature > 0.0)) fail(ErrorCode::InvalidConfig, "temperature must be > 0");
  if (!(c.offset_scale > 0.0)) fail(ErrorCode::InvalidConfig, "offset scale must be > 0");
}

inline int head_width(int mixtures) { return 6 * mixtures + 3; }

template <typename S>
struct DecoderParams {
  Mat<S> init_w, init_b;            // z -> [h0; c0]
  Mat<S> lstm_wx, lstm_wh, lstm_b;  // gates ordered i, f, g, o
  Mat<S> head_w, head_b;            // W_s, b_s

  template <typename F>
  void visit(F&& f) {
    f("decoder.init_w", init_w, true);
    f("decoder.init_b", init_b, true);
    f("decoder.lstm_wx", lstm_wx, true);
    f("decoder.lstm_wh", lstm_wh, true);
    f("decoder.lstm_b", lstm_b, true);
    f("decoder.head_w", head_w, true);
    f("decoder.head_b", head_b, true);
  }

  static DecoderParams zeros(const DecoderConfig& c, int latent_dim) {
    validate(c);
    const Eigen::Index h = c.hidden, d = latent_dim;
    DecoderParams p;
    p.init_w = Mat<S>::Zero(2 * h, d);
    p.init_b = Mat<S>::Zero(2 * h, 1);
    p.lstm_wx = Mat<S>::Zero(4 * h, 5 + d);
    p.lstm_wh = Mat<S>::Zero(4 * h, h);
    p.lstm_b = Mat<S>::Zero(4 * h, 1);
    p.head_w = Mat<S>::Zero(head_width(c.mixtures), h);
    p.head_b = Mat<S>::Zero(head_width(c.mixtures), 1);
    return p;
  }

  /// Uniform(+-1/sqrt(fan_in)) weights, zero biases except forget gate = 1.
  static DecoderParams init(const DecoderConfig& c, int latent_dim, Rng& rng) {
    DecoderParams p = zeros(c, latent_dim);
    auto fill = [&](Mat<S>& m, double fan_in) {
      std::uniform_real_distribution<double> uni(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(uni(rng));
    };
    fill(p.init_w, latent_dim);
    fill(p.lstm_wx, c.hidden);
    fill(p.lstm_wh, c.hidden);
    p.lstm_b.middleRows(c.hidden, c.hidden).setOnes();
    fill(p.head_w, c.hidden);
    return p;
  }
};

// ---------------------------------------------------------------------------
// Mixture parameters

struct MixtureParams {
  Eigen::VectorXd pi_logits, pi, mu_x, mu_y, sigma_x, sigma_y, rho;
  Eigen::VectorXd pen_logits, pen;  // 3 entries: down, lift, end

  int mixtures() const { return static_cast<int>(pi.size()); }
};

/// Softmax that tolerates infinite logits: +inf entries share all mass.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd p(logits.size());
  if (std::isinf(mx) && mx > 0) {
    for (Eigen::Index i = 0; i < logits.size(); ++i) p[i] = logits[i] == mx ? 1.0 : 0.0;
  } else {
    p = (logits.array() - mx).exp().matrix();
  }
  return p / p.sum();
}

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

/// Applies the activations to a raw head vector (no temperature).
inline MixtureParams mixture_from_head(const Eigen::VectorXd& y, int m) {
  if (y.size() != head_width(m)) fail(ErrorCode::ShapeMismatch, "head output has wrong width");
  MixtureParams mp;
  mp.pi_logits = y.segment(0, m);
  mp.pi = softmax(mp.pi_logits);
  mp.mu_x = y.segment(m, m);
  mp.mu_y = y.segment(2 * m, m);
  mp.sigma_x = y.segment(3 * m, m).array().exp().matrix();
  mp.sigma_y = y.segment(4 * m, m).array().exp().matrix();
  mp.rho = y.segment(5 * m, m).array().tanh().matrix();
  mp.pen_logits = y.segment(6 * m, 3);
  mp.pen = softmax(mp.pen_logits);
  return mp;
}

/// Sampling-mode parameters: logits divided by tau, deviations scaled by
/// sqrt(tau).  tau = 1 returns the input unchanged.
inline MixtureParams temper(const MixtureParams& mp, double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::OutOfRange, "temperature must be > 0");
  if (tau == 1.0) return mp;
  MixtureParams out = mp;
  out.pi_logits = mp.pi_logits / tau;
  out.pi = softmax(out.pi_logits);
  out.pen_logits = mp.pen_logits / tau;
  out.pen = softmax(out.pen_logits);
  out.sigma_x = mp.sigma_x * std::sqrt(tau);
  out.sigma_y = mp.sigma_y * std::sqrt(tau);
  return out;
}

namespace detail {

struct BivariateTerms {
  double zx, zy, q, quad, log_density;
};

inline BivariateTerms bivariate(double x, double y, double mx, double my, double sx, double sy,
                                double rho) {
  BivariateTerms t;
  t.zx = (x - mx) / sx;
  t.zy = (y - my) / sy;
  t.q = std::max(1.0 - rho * rho, 1e-12);
  const double z = t.zx * t.zx + t.zy * t.zy - 2.0 * rho * t.zx * t.zy;
  t.quad = std::min(z, 1e300);
  t.log_density = -std::log(2.0 * std::numbers::pi) - std::log(sx) - std::log(sy) -
                  0.5 * std::log(t.q) - std::min(t.quad / (2.0 * t.q), 1e300);
  return t;
}

}  // namespace detail

/// -log sum_j pi_j N(dx, dy | mu_j, sigma_j, rho_j), via log-sum-exp.
inline double offset_nll(const MixtureParams& mp, double dx, double dy) {
  const int m = mp.mixtures();
  Eigen::VectorXd terms(m);
  for (int j = 0; j < m; ++j)
    terms[j] = std::log(mp.pi[j]) + detail::bivariate(dx, dy, mp.mu_x[j], mp.mu_y[j], mp.sigma_x[j],
                                                      mp.sigma_y[j], mp.rho[j])
                                        .log_density;
  return -log_sum_exp(terms);
}

inline int pen_index(const Stroke5Row& row) {
  if (row[4] == 1.0) return 2;
  if (row[3] == 1.0) return 1;
  return 0;
}

inline double pen_nll(const MixtureParams& mp, int pen) {
  return -std::log(std::max(mp.pen[pen], std::numeric_limits<double>::min()));
}

/// Per-step loss: offset term (when counted) plus pen term.
inline double gmm_nll(const MixtureParams& mp, const Stroke5Row& target, bool count_offset = true) {
  const double pen = pen_nll(mp, pen_index(target));
  return count_offset ? offset_nll(mp, target[0], target[1]) + pen : pen;
}

struct HeadLoss {
  double offset = 0.0;
  double pen = 0.0;
  Eigen::VectorXd grad;  // d(offset + pen) / d(raw head output)
};

/// Loss and its gradient with respect to the raw 6M+3 head vector.
inline HeadLoss head_loss(const Eigen::VectorXd& y, int m, const Stroke5Row& target,
                          bool count_offset) {
  HeadLoss out;
  out.grad = Eigen::VectorXd::Zero(y.size());
  const Eigen::VectorXd a = y.segment(0, m);
  const double lse_a = log_sum_exp(a);
  if (count_offset) {
    Eigen::VectorXd log_terms(m);
    std::vector<detail::BivariateTerms> terms(static_cast<std::size_t>(m));
    Eigen::VectorXd rho(m), sx(m), sy(m);
    for (int j = 0; j < m; ++j) {
      sx[j] = std::exp(y[3 * m + j]);
      sy[j] = std::exp(y[4 * m + j]);
      rho[j] = std::tanh(y[5 * m + j]);
      terms[static_cast<std::size_t>(j)] =
          detail::bivariate(target[0], target[1], y[m + j], y[2 * m + j], sx[j], sy[j], rho[j]);
      log_terms[j] = a[j] - lse_a + terms[static_cast<std::size_t>(j)].log_density;
    }
    const double lse = log_sum_exp(log_terms);
    out.offset = -lse;
    for (int j = 0; j < m; ++j) {
      const auto& t = terms[static_cast<std::size_t>(j)];
      const double gamma = std::exp(log_terms[j] - lse);
      const double pi_j = std::exp(a[j] - lse_a);
      const double r = rho[j], q = t.q;
      out.grad[j] += pi_j - gamma;
      out.grad[m + j] = -gamma * (t.zx - r * t.zy) / (q * sx[j]);
      out.grad[2 * m + j] = -gamma * (t.zy - r * t.zx) / (q * sy[j]);
      out.grad[3 * m + j] = -gamma * (-1.0 + t.zx * (t.zx - r * t.zy) / q);
      out.grad[4 * m + j] = -gamma * (-1.0 + t.zy * (t.zy - r * t.zx) / q);
      out.grad[5 * m + j] = -gamma * (r + t.zx * t.zy - r * t.quad / q);
    }
  }
  const Eigen::VectorXd pen_logits = y.segment(6 * m, 3);
  const Eigen::VectorXd pen = softmax(pen_logits);
  const int k = pen_index(target);
  out.pen = -(pen_logits[k] - log_sum_exp(pen_logits));
  for (int i = 0; i < 3; ++i) out.grad[6 * m + i] = pen[i] - (i == k ? 1.0 : 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Single-step recurrence (generation)

template <typename S>
struct DecoderState {
  Eigen::Matrix<S, Eigen::Dynamic, 1> h, c;
};

template <typename S>
DecoderState<S> init_state(const Eigen::Matrix<S, Eigen::Dynamic, 1>& z, const DecoderParams<S>& p) {
  if (z.size() != p.init_w.cols()) fail(ErrorCode::ShapeMismatch, "latent size mismatch");
  const Eigen::Index h = p.lstm_wh.cols();
  const Eigen::Matrix<S, Eigen::Dynamic, 1> hc = (p.init_w * z + p.init_b.col(0)).array().tanh().matrix();
  return {hc.head(h), hc.tail(h)};
}

namespace detail {
template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}
}  // namespace detail

/// One LSTM step on [prev; z] followed by the head.  When `temperature` is
/// given the returned parameters are in sampling mode.
template <typename S>
std::pair<MixtureParams, DecoderState<S>> step(const Stroke5Row& prev,
                                               const Eigen::Matrix<S, Eigen::Dynamic, 1>& z,
                                               const DecoderState<S>& state,
                                               const DecoderParams<S>& p, const DecoderConfig& c,
                                               std::optional<double> temperature = std::nullopt) {
  const Eigen::Index h = c.hidden;
  if (state.h.size() != h || state.c.size() != h || p.lstm_wh.cols() != h)
    fail(ErrorCode::ShapeMismatch, "decoder state does not match hidden size");
  if (z.size() + 5 != p.lstm_wx.cols()) fail(ErrorCode::ShapeMismatch, "latent size mismatch");
  Eigen::Matrix<S, Eigen::Dynamic, 1> x(5 + z.size());
  for (int i = 0; i < 5; ++i) x[i] = static_cast<S>(prev[static_cast<std::size_t>(i)]);
  x.tail(z.size()) = z;
  const Eigen::Matrix<S, Eigen::Dynamic, 1> gates = p.lstm_wx * x + p.lstm_wh * state.h + p.lstm_b.col(0);
  DecoderState<S> next;
  next.c.resize(h);
  next.h.resize(h);
  for (Eigen::Index k = 0; k < h; ++k) {
    const S i = detail::sigmoid(gates[k]);
    const S f = detail::sigmoid(gates[h + k]);
    const S g = std::tanh(gates[2 * h + k]);
    const S o = detail::sigmoid(gates[3 * h + k]);
    next.c[k] = f * state.c[k] + i * g;
    next.h[k] = o * std::tanh(next.c[k]);
  }
  const Eigen::VectorXd y = (p.head_w * next.h + p.head_b.col(0)).template cast<double>();
  MixtureParams mp = mixture_from_head(y, c.mixtures);
  if (temperature) mp = temper(mp, *temperature);
  return {std::move(mp), std::move(next)};
}

template <typename Dist>
int sample_index(const Eigen::VectorXd& probs, Rng& rng) {
  Dist dist(probs.data(), probs.data() + probs.size());
  return dist(rng);
}

/// Draws one stroke-5 row from the tempered mixture.
inline Stroke5Row sample_stroke(const MixtureParams& mp_in, double tau, Rng& rng) {
  const MixtureParams mp = temper(mp_in, tau);
  const int j = sample_index<std::discrete_distribution<int>>(mp.pi, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double n1 = normal(rng), n2 = normal(rng);
  const double r = mp.rho[j];
  const double dx = mp.mu_x[j] + mp.sigma_x[j] * n1;
  const double dy = mp.mu_y[j] + mp.sigma_y[j] * (r * n1 + std::sqrt(std::max(0.0, 1.0 - r * r)) * n2);
  const int pen = sample_index<std::discrete_distribution<int>>(mp.pen, rng);
  return {dx, dy, pen == 0 ? 1.0 : 0.0, pen == 1 ? 1.0 : 0.0, pen == 2 ? 1.0 : 0.0};
}

/// Autoregressive rollout from the (0,0,down) start row.  Offsets are mapped
/// back to pixels with the configured scale; the sketch always ends with a
/// zero-offset end step and never exceeds n_max steps.  A rollout that ends
/// immediately yields the empty sketch.
template <typename S>
VectorSketch generate(const Eigen::Matrix<S, Eigen::Dynamic, 1>& z, const DecoderParams<S>& p,
                      const DecoderConfig& c, Rng& rng) {
  validate(c);
  VectorSketch out;
  DecoderState<S> state = init_state(z, p);
  Stroke5Row prev = kStartRow;
  for (int t = 0; t < c.n_max; ++t) {
    auto [mp, next] = step(prev, z, state, p, c);
    state = std::move(next);
    Stroke5Row row = sample_stroke(mp, c.temperature, rng);
    if (row[4] == 1.0 || t + 1 == c.n_max) break;
    out.steps.push_back(
        {row[0] * c.offset_scale, row[1] * c.offset_scale, row[2] == 1.0 ? Pen::down : Pen::lift});
    prev = row;
  }
  if (!out.steps.empty()) out.steps.push_back({0.0, 0.0, Pen::end});
  return out;
}

// ---------------------------------------------------------------------------
// Teacher-forced batch loss and BPTT

/// Mean over the batch of (sum_t mask_t * offset_t + pen_t) / L, where every
/// target has the same length L and mask_t covers the rows up to and
/// including the first end row.  Targets are in model (scaled) units.  When
/// `grad` is given, parameter gradients are accumulated into it and
/// d(loss)/dz is written to `d_z`.
template <typename S>
double teacher_forced_nll(const Mat<S>& z, const std::vector<Stroke5Sequence>& targets,
                          const DecoderParams<S>& p, const DecoderConfig& c,
                          DecoderParams<S>* grad = nullptr, Mat<S>* d_z = nullptr) {
  const Eigen::Index batch = z.cols(), d = z.rows(), h = c.hidden;
  if (static_cast<std::size_t>(batch) != targets.size() || batch == 0)
    fail(ErrorCode::ShapeMismatch, "targets do not match latent batch");
  const Eigen::Index len = static_cast<Eigen::Index>(targets.front().rows.size());
  for (const auto& t : targets)
    if (static_cast<Eigen::Index>(t.rows.size()) != len)
      fail(ErrorCode::ShapeMismatch, "targets must share one padded length");
  if (len == 0) return 0.0;
  const Eigen::Index cols = len * batch;
  const int m = c.mixtures;

  // Inputs for every step: column t*B + b holds [s_{t-1}; z_b].
  Mat<S> x(5 + d, cols);
  for (Eigen::Index t = 0; t < len; ++t)
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Stroke5Row& prev =
          t == 0 ? kStartRow : targets[static_cast<std::size_t>(b)].rows[static_cast<std::size_t>(t - 1)];
      for (int i = 0; i < 5; ++i) x(i, t * batch + b) = static_cast<S>(prev[static_cast<std::size_t>(i)]);
      x.block(5, t * batch + b, d, 1) = z.col(b);
    }

  const Mat<S> hc0 = ((p.init_w * z).colwise() + p.init_b.col(0)).array().tanh().matrix();
  Mat<S> gates = (p.lstm_wx * x).colwise() + p.lstm_b.col(0);  // becomes activations in place
  Mat<S> cell(h, cols), tanh_cell(h, cols), hidden(h, cols), hidden_prev(h, cols);
  Mat<S> h_prev = hc0.topRows(h), c_prev = hc0.bottomRows(h);
  for (Eigen::Index t = 0; t < len; ++t) {
    auto g = gates.middleCols(t * batch, batch);
    g.noalias() += p.lstm_wh * h_prev;
    g.topRows(2 * h) = (S(1) / (S(1) + (-g.topRows(2 * h).array()).exp())).matrix();
    g.middleRows(2 * h, h) = g.middleRows(2 * h, h).array().tanh().matrix();
    g.bottomRows(h) = (S(1) / (S(1) + (-g.bottomRows(h).array()).exp())).matrix();
    hidden_prev.middleCols(t * batch, batch) = h_prev;
    auto ct = cell.middleCols(t * batch, batch);
    ct = g.middleRows(h, h).cwiseProduct(c_prev) + g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
    tanh_cell.middleCols(t * batch, batch) = ct.array().tanh().matrix();
    hidden.middleCols(t * batch, batch) =
        g.bottomRows(h).cwiseProduct(tanh_cell.middleCols(t * batch, batch));
    h_prev = hidden.middleCols(t * batch, batch);
    c_prev = ct;
  }

  const Mat<S> head = (p.head_w * hidden).colwise() + p.head_b.col(0);
  Mat<S> d_head(head.rows(), grad ? cols : 0);
  double total = 0.0;
  const double norm = 1.0 / (static_cast<double>(len) * static_cast<double>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& seq = targets[static_cast<std::size_t>(b)];
    const auto active = static_cast<Eigen::Index>(seq.active_length());
    for (Eigen::Index t = 0; t < len; ++t) {
      const Eigen::VectorXd y = head.col(t * batch + b).template cast<double>();
      const HeadLoss hl = head_loss(y, m, seq.rows[static_cast<std::size_t>(t)], t < active);
      total += hl.offset + hl.pen;
      if (grad) d_head.col(t * batch + b) = (hl.grad * norm).template cast<S>();
    }
  }
  const double loss = total * norm;
  if (!grad) return loss;

  grad->head_w.noalias() += d_head * hidden.transpose();
  grad->head_b += d_head.rowwise().sum();
  const Mat<S> d_hidden = p.head_w.transpose() * d_head;

  Mat<S> d_gates(4 * h, cols);
  Mat<S> dh_next = Mat<S>::Zero(h, batch), dc_next = Mat<S>::Zero(h, batch);
  for (Eigen::Index t = len; t-- > 0;) {
    const auto g = gates.middleCols(t * batch, batch);
    const auto i_g = g.topRows(h), f_g = g.middleRows(h, h), g_g = g.middleRows(2 * h, h),
               o_g = g.bottomRows(h);
    const auto tc = tanh_cell.middleCols(t * batch, batch);
    const Mat<S> c_before = t == 0 ? Mat<S>(hc0.bottomRows(h)) : Mat<S>(cell.middleCols((t - 1) * batch, batch));
    const Mat<S> dh = d_hidden.middleCols(t * batch, batch) + dh_next;
    const Mat<S> dc = dh.cwiseProduct(o_g).cwiseProduct((S(1) - tc.array().square()).matrix()) + dc_next;
    auto dg = d_gates.middleCols(t * batch, batch);
    dg.topRows(h) = dc.cwiseProduct(g_g).cwiseProduct(i_g.cwiseProduct((S(1) - i_g.array()).matrix()));
    dg.middleRows(h, h) =
        dc.cwiseProduct(c_before).cwiseProduct(f_g.cwiseProduct((S(1) - f_g.array()).matrix()));
    dg.middleRows(2 * h, h) =
        dc.cwiseProduct(i_g).cwiseProduct((S(1) - g_g.array().square()).matrix());
    dg.bottomRows(h) =
        dh.cwiseProduct(tc).cwiseProduct(o_g.cwiseProduct((S(1) - o_g.array()).matrix()));
    dh_next.noalias() = p.lstm_wh.transpose() * dg;
    dc_next = dc.cwiseProduct(f_g);
  }
  grad->lstm_wh.noalias() += d_gates * hidden_prev.transpose();
  grad->lstm_wx.noalias() += d_gates * x.transpose();
  grad->lstm_b += d_gates.rowwise().sum();
  const Mat<S> d_x = p.lstm_wx.transpose() * d_gates;

  Mat<S> d_hc(2 * h, batch);
  d_hc.topRows(h) = dh_next;
  d_hc.bottomRows(h) = dc_next;
  const Mat<S> d_pre0 = d_hc.cwiseProduct((S(1) - hc0.array().square()).matrix());
  grad->init_w.noalias() += d_pre0 * z.transpose();
  grad->init_b += d_pre0.rowwise().sum();
  if (d_z) {
    *d_z = p.init_w.transpose() * d_pre0;
    for (Eigen::Index t = 0; t < len; ++t) *d_z += d_x.block(5, t * batch, d, batch);
  }
  return loss;
}

}  // namespace sketchlattice
