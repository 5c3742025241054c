#pragma once

// Graph encoder: token embedding, K propagation + two-layer MLP blocks with
// dropout and residual, pooling, FC + batch norm + tanh, and the latent bridge
// mu / sigma / z.  Node features are stored column-wise (d x m).
//
// Every forward routine can fill a cache that the matching backward routine
// consumes; gradients accumulate into a parameter set of identical shape.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sketchlattice/checkpoint.hpp"
#include "sketchlattice/error.hpp"
#include "sketchlattice/graph.hpp"
#include "sketchlattice/lattice.hpp"

namespace sketchlattice {

enum class Pooling { mean, sum };

struct EncoderConfig {
  int dim = 128;
  int layers = 2;
  double dropout = 0.1;
  Pooling pooling = Pooling::mean;
  EmbedMode embed_mode = EmbedMode::factorized;
  int side = 256;
  bool residual = true;
  bool normalize_adjacency = false;  // row-normalize A before propagation
  double bn_momentum = 0.9;          // weight of the old running statistic
  double bn_eps = 1e-5;
};

inline void validate(const EncoderConfig& c) {
  if (c.dim < 1) fail(ErrorCode::InvalidConfig, "encoder dim must be >= 1");
  if (c.layers < 1) fail(ErrorCode::InvalidConfig, "encoder layers must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0))
    fail(ErrorCode::InvalidConfig, "dropout must be in [0, 1)");
  if (c.side < 1) fail(ErrorCode::InvalidConfig, "side must be >= 1");
}

template <typename S>
struct EncoderLayer {
  Mat<S> w1, b1, w2, b2;
};

template <typename S>
struct EncoderParams {
  Mat<S> embed_x, embed_y;  // factorized: d x side each
  Mat<S> embed_joint;       // joint: d x side^2
  std::vector<EncoderLayer<S>> layers;
  Mat<S> fc_w, fc_b;
  Mat<S> bn_gamma, bn_beta;
  Mat<S> bn_mean, bn_var;  // running statistics, not trained
  Mat<S> mu_w, mu_b, sigma_w, sigma_b;

  template <typename F>
  void visit(F&& f) {
    if (embed_joint.size() > 0) {
      f("encoder.embed_joint", embed_joint, true);
    } else {
      f("encoder.embed_x", embed_x, true);
      f("encoder.embed_y", embed_y, true);
    }
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const std::string p = "encoder.layer" + std::to_string(k) + ".";
      f(p + "w1", layers[k].w1, true);
      f(p + "b1", layers[k].b1, true);
      f(p + "w2", layers[k].w2, true);
      f(p + "b2", layers[k].b2, true);
    }
    f("encoder.fc_w", fc_w, true);
    f("encoder.fc_b", fc_b, true);
    f("encoder.bn_gamma", bn_gamma, true);
    f("encoder.bn_beta", bn_beta, true);
    f("encoder.bn_running_mean", bn_mean, false);
    f("encoder.bn_running_var", bn_var, false);
    f("latent.mu_w", mu_w, true);
    f("latent.mu_b", mu_b, true);
    f("latent.sigma_w", sigma_w, true);
    f("latent.sigma_b", sigma_b, true);
  }

  /// Correctly shaped, all zero (running variance included).
  static EncoderParams zeros(const EncoderConfig& c) {
    validate(c);
    const Eigen::Index d = c.dim;
    EncoderParams p;
    if (c.embed_mode == EmbedMode::joint) {
      p.embed_joint = Mat<S>::Zero(d, static_cast<Eigen::Index>(c.side) * c.side);
    } else {
      p.embed_x = Mat<S>::Zero(d, c.side);
      p.embed_y = Mat<S>::Zero(d, c.side);
    }
    p.layers.resize(static_cast<std::size_t>(c.layers));
    for (auto& l : p.layers) {
      l.w1 = Mat<S>::Zero(d, d);
      l.b1 = Mat<S>::Zero(d, 1);
      l.w2 = Mat<S>::Zero(d, d);
      l.b2 = Mat<S>::Zero(d, 1);
    }
    p.fc_w = Mat<S>::Zero(d, d);
    p.fc_b = Mat<S>::Zero(d, 1);
    p.bn_gamma = Mat<S>::Zero(d, 1);
    p.bn_beta = Mat<S>::Zero(d, 1);
    p.bn_mean = Mat<S>::Zero(d, 1);
    p.bn_var = Mat<S>::Zero(d, 1);
    p.mu_w = Mat<S>::Zero(d, d);
    p.mu_b = Mat<S>::Zero(d, 1);
    p.sigma_w = Mat<S>::Zero(d, d);
    p.sigma_b = Mat<S>::Zero(d, 1);
    return p;
  }

  /// Embeddings ~ N(0, 1); affine maps ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in));
  /// batch norm starts as the identity.
  static EncoderParams init(const EncoderConfig& c, Rng& rng) {
    EncoderParams p = zeros(c);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(c.dim));
    std::uniform_real_distribution<double> uni(-bound, bound);
    auto fill = [&](Mat<S>& m, auto& dist) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
    };
    fill(p.embed_x, normal);
    fill(p.embed_y, normal);
    fill(p.embed_joint, normal);
    for (auto& l : p.layers) {
      fill(l.w1, uni);
      fill(l.b1, uni);
      fill(l.w2, uni);
      fill(l.b2, uni);
    }
    fill(p.fc_w, uni);
    fill(p.fc_b, uni);
    p.bn_gamma.setOnes();
    p.bn_var.setOnes();
    fill(p.mu_w, uni);
    fill(p.mu_b, uni);
    fill(p.sigma_w, uni);
    fill(p.sigma_b, uni);
    return p;
  }
};

struct ParameterCount {
  std::vector<std::pair<std::string, std::size_t>> arrays;
  std::size_t total = 0;
};

/// Trainable scalar counts per array and in total.
template <typename S, typename Params>
ParameterCount count_parameters(Params& p) {
  ParameterCount out;
  for (const auto& ref : collect_arrays<S>(p)) {
    if (!ref.trainable) continue;
    const auto n = static_cast<std::size_t>(ref.value->size());
    out.arrays.emplace_back(ref.name, n);
    out.total += n;
  }
  return out;
}

/// Closed-form trainable count of the encoder including the latent bridge.
inline std::size_t encoder_parameter_count(const EncoderConfig& c) {
  const std::size_t d = static_cast<std::size_t>(c.dim);
  const std::size_t side = static_cast<std::size_t>(c.side);
  const std::size_t embed = c.embed_mode == EmbedMode::joint ? side * side * d : 2 * side * d;
  return embed + static_cast<std::size_t>(c.layers) * 2 * (d * d + d) + (d * d + d) + 2 * d +
         2 * (d * d + d);
}

// ---------------------------------------------------------------------------
// Node-level forward / backward

/// Looks up node features (d x m) for the graph's tokens.
template <typename S>
Mat<S> embed_nodes(const std::vector<Token>& tokens, const EncoderParams<S>& p) {
  const bool joint = p.embed_joint.size() > 0;
  const Eigen::Index d = joint ? p.embed_joint.rows() : p.embed_x.rows();
  Mat<S> v(d, static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    const auto col = static_cast<Eigen::Index>(i);
    if (joint) {
      if (t.joint < 0 || t.joint >= p.embed_joint.cols())
        fail(ErrorCode::TokenOutOfVocabulary, "joint token " + std::to_string(t.joint));
      v.col(col) = p.embed_joint.col(t.joint);
    } else {
      if (t.x < 0 || t.y < 0 || t.x >= p.embed_x.cols() || t.y >= p.embed_y.cols())
        fail(ErrorCode::TokenOutOfVocabulary,
             "factorized token (" + std::to_string(t.x) + "," + std::to_string(t.y) + ")");
      v.col(col) = p.embed_x.col(t.x) + p.embed_y.col(t.y);
    }
  }
  return v;
}

/// Column i of the result is sum_j a_ij v_j, i.e. V A^T.
template <typename S>
Mat<S> propagate(const Mat<S>& v, const Mat<S>& a) {
  if (a.rows() != a.cols() || v.cols() != a.cols())
    fail(ErrorCode::ShapeMismatch, "propagate: V has " + std::to_string(v.cols()) +
                                       " nodes, A is " + std::to_string(a.rows()) + "x" +
                                       std::to_string(a.cols()));
  return v * a.transpose();
}

template <typename S>
struct LayerCache {
  Mat<S> input, propagated, h1, h2, keep;  // keep: inverted-dropout scale per entry
};

/// V' = V + Dropout(ReLU(W2 ReLU(W1 (V A^T) + b1) + b2)).  The residual is
/// skipped when `residual` is false.
template <typename S>
Mat<S> encode_layer(const Mat<S>& v, const Mat<S>& a, const EncoderLayer<S>& layer,
                    double dropout, bool residual, bool train, Rng& rng,
                    LayerCache<S>* cache = nullptr) {
  if (layer.w1.cols() != v.rows()) fail(ErrorCode::ShapeMismatch, "encode_layer: width mismatch");
  Mat<S> prop = propagate(v, a);
  Mat<S> h1 = ((layer.w1 * prop).colwise() + layer.b1.col(0)).cwiseMax(S(0));
  Mat<S> h2 = ((layer.w2 * h1).colwise() + layer.b2.col(0)).cwiseMax(S(0));
  Mat<S> keep;
  Mat<S> branch = h2;
  if (train && dropout > 0.0) {
    keep.resize(h2.rows(), h2.cols());
    std::bernoulli_distribution bern(1.0 - dropout);
    const S scale = static_cast<S>(1.0 / (1.0 - dropout));
    for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = bern(rng) ? scale : S(0);
    branch = h2.cwiseProduct(keep);
  }
  Mat<S> out = residual ? Mat<S>(v + branch) : branch;
  if (cache) {
    cache->input = v;
    cache->propagated = std::move(prop);
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
    cache->keep = std::move(keep);
  }
  return out;
}

template <typename S>
struct NodeCache {
  std::vector<Token> tokens;
  Mat<S> adjacency;
  std::vector<LayerCache<S>> layers;
  Eigen::Index nodes = 0;
};

template <typename S>
Mat<S> prepared_adjacency(const SketchGraph& g, const EncoderConfig& c) {
  Mat<S> a = g.adjacency.cast<S>();
  if (c.normalize_adjacency) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const S s = a.row(i).sum();
      if (s > S(0)) a.row(i) /= s;
    }
  }
  return a;
}

/// Runs embedding and the K layers, returning the pooled d-vector.
template <typename S>
Mat<S> encode_nodes(const SketchGraph& g, const EncoderParams<S>& p, const EncoderConfig& c,
                    bool train, Rng& rng, NodeCache<S>* cache = nullptr) {
  if (g.tokens.empty()) fail(ErrorCode::EmptyLattice, "graph has no nodes");
  if (static_cast<std::size_t>(g.adjacency.rows()) != g.tokens.size())
    fail(ErrorCode::ShapeMismatch, "adjacency size differs from node count");
  Mat<S> a = prepared_adjacency<S>(g, c);
  Mat<S> v = embed_nodes(g.tokens, p);
  std::vector<LayerCache<S>> layer_caches(cache ? p.layers.size() : 0);
  for (std::size_t k = 0; k < p.layers.size(); ++k)
    v = encode_layer(v, a, p.layers[k], c.dropout, c.residual, train, rng,
                     cache ? &layer_caches[k] : nullptr);
  Mat<S> pooled = v.rowwise().sum();
  if (c.pooling == Pooling::mean) pooled /= static_cast<S>(v.cols());
  if (cache) {
    cache->tokens = g.tokens;
    cache->adjacency = std::move(a);
    cache->layers = std::move(layer_caches);
    cache->nodes = v.cols();
  }
  return pooled;
}

/// Accumulates parameter gradients given d(loss)/d(pooled).
template <typename S>
void encode_nodes_backward(const NodeCache<S>& cache, const Mat<S>& d_pooled,
                           const EncoderParams<S>& p, const EncoderConfig& c,
                           EncoderParams<S>& grad) {
  const Eigen::Index m = cache.nodes;
  Mat<S> dv = d_pooled.replicate(1, m);
  if (c.pooling == Pooling::mean) dv /= static_cast<S>(m);
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const auto& lc = cache.layers[k];
    const auto& layer = p.layers[k];
    auto& gl = grad.layers[k];
    Mat<S> d_branch = lc.keep.size() > 0 ? Mat<S>(dv.cwiseProduct(lc.keep)) : dv;
    Mat<S> d_pre2 = d_branch.cwiseProduct((lc.h2.array() > S(0)).matrix().template cast<S>());
    gl.w2.noalias() += d_pre2 * lc.h1.transpose();
    gl.b2 += d_pre2.rowwise().sum();
    Mat<S> d_pre1 = (layer.w2.transpose() * d_pre2)
                        .cwiseProduct((lc.h1.array() > S(0)).matrix().template cast<S>());
    gl.w1.noalias() += d_pre1 * lc.propagated.transpose();
    gl.b1 += d_pre1.rowwise().sum();
    Mat<S> d_prop = layer.w1.transpose() * d_pre1;
    Mat<S> d_in = d_prop * cache.adjacency;
    if (c.residual) d_in += dv;
    dv = std::move(d_in);
  }
  const bool joint = p.embed_joint.size() > 0;
  for (std::size_t i = 0; i < cache.tokens.size(); ++i) {
    const Token& t = cache.tokens[i];
    const auto col = static_cast<Eigen::Index>(i);
    if (joint) {
      grad.embed_joint.col(t.joint) += dv.col(col);
    } else {
      grad.embed_x.col(t.x) += dv.col(col);
      grad.embed_y.col(t.y) += dv.col(col);
    }
  }
}

// ---------------------------------------------------------------------------
// Projection head: FC -> batch norm -> tanh, over a batch (d x B)

template <typename S>
struct HeadCache {
  Mat<S> pooled, normalized, psi;
  Mat<S> batch_mean, batch_var, inv_std;
  bool train = false;
};

template <typename S>
Mat<S> project(const Mat<S>& pooled, const EncoderParams<S>& p, const EncoderConfig& c,
               bool train, HeadCache<S>* cache = nullptr) {
  if (pooled.rows() != p.fc_w.cols()) fail(ErrorCode::ShapeMismatch, "project: width mismatch");
  const Mat<S> y = (p.fc_w * pooled).colwise() + p.fc_b.col(0);
  Mat<S> mean, var;
  if (train) {
    mean = y.rowwise().mean();
    var = (y.colwise() - mean.col(0)).array().square().rowwise().mean().matrix();
  } else {
    mean = p.bn_mean;
    var = p.bn_var;
  }
  const Mat<S> inv_std = (var.array() + static_cast<S>(c.bn_eps)).rsqrt().matrix();
  Mat<S> normalized = (y.colwise() - mean.col(0)).array().colwise() * inv_std.col(0).array();
  Mat<S> psi = ((normalized.array().colwise() * p.bn_gamma.col(0).array()).colwise() +
                p.bn_beta.col(0).array())
                   .tanh()
                   .matrix();
  if (cache) {
    cache->pooled = pooled;
    cache->normalized = std::move(normalized);
    cache->psi = psi;
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
    cache->inv_std = inv_std;
    cache->train = train;
  }
  return psi;
}

/// Running-statistics update after a training forward pass (unbiased batch
/// variance, momentum on the old value).
template <typename S>
void update_running_stats(EncoderParams<S>& p, const HeadCache<S>& cache, const EncoderConfig& c) {
  const Eigen::Index b = cache.pooled.cols();
  const S mom = static_cast<S>(c.bn_momentum);
  const S unbias = b > 1 ? static_cast<S>(b) / static_cast<S>(b - 1) : S(1);
  p.bn_mean = mom * p.bn_mean + (S(1) - mom) * cache.batch_mean;
  p.bn_var = mom * p.bn_var + (S(1) - mom) * unbias * cache.batch_var;
}

/// Returns d(loss)/d(pooled) and accumulates FC / batch-norm gradients.
template <typename S>
Mat<S> project_backward(const HeadCache<S>& cache, const Mat<S>& d_psi, const EncoderParams<S>& p,
                        EncoderParams<S>& grad) {
  const Mat<S> d_out = d_psi.cwiseProduct((S(1) - cache.psi.array().square()).matrix());
  grad.bn_gamma += d_out.cwiseProduct(cache.normalized).rowwise().sum();
  grad.bn_beta += d_out.rowwise().sum();
  const Mat<S> d_norm = d_out.array().colwise() * p.bn_gamma.col(0).array();
  Mat<S> d_y;
  if (cache.train) {
    const auto b = static_cast<S>(cache.pooled.cols());
    const Mat<S> sum_d = d_norm.rowwise().sum();
    const Mat<S> sum_dn = d_norm.cwiseProduct(cache.normalized).rowwise().sum();
    d_y = ((b * d_norm.array()).colwise() - sum_d.col(0).array() -
           cache.normalized.array().colwise() * sum_dn.col(0).array())
              .colwise() *
          (cache.inv_std.col(0).array() / b);
  } else {
    d_y = d_norm.array().colwise() * cache.inv_std.col(0).array();
  }
  grad.fc_w.noalias() += d_y * cache.pooled.transpose();
  grad.fc_b += d_y.rowwise().sum();
  return p.fc_w.transpose() * d_y;
}

// ---------------------------------------------------------------------------
// Latent bridge

template <typename S>
struct LatentBatch {
  Mat<S> psi, mu, sigma, noise, z;  // d x B
};

/// mu = W_mu psi + b_mu, sigma = exp((W_sigma psi + b_sigma) / 2),
/// z = mu + sigma * noise.
template <typename S>
LatentBatch<S> bridge(const Mat<S>& psi, const EncoderParams<S>& p, const Mat<S>& noise) {
  if (noise.rows() != psi.rows() || noise.cols() != psi.cols())
    fail(ErrorCode::ShapeMismatch, "noise shape differs from psi");
  LatentBatch<S> out;
  out.psi = psi;
  out.mu = (p.mu_w * psi).colwise() + p.mu_b.col(0);
  out.sigma = (((p.sigma_w * psi).colwise() + p.sigma_b.col(0)).array() * S(0.5)).exp().matrix();
  out.noise = noise;
  out.z = out.mu + out.sigma.cwiseProduct(noise);
  return out;
}

template <typename S>
Mat<S> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(normal(rng));
  return m;
}

/// Returns d(loss)/d(psi) and accumulates bridge gradients.
template <typename S>
Mat<S> bridge_backward(const LatentBatch<S>& lb, const Mat<S>& d_z, const EncoderParams<S>& p,
                       EncoderParams<S>& grad) {
  const Mat<S>& d_mu = d_z;
  const Mat<S> d_pre = d_z.cwiseProduct(lb.noise).cwiseProduct(lb.sigma) * S(0.5);
  grad.mu_w.noalias() += d_mu * lb.psi.transpose();
  grad.mu_b += d_mu.rowwise().sum();
  grad.sigma_w.noalias() += d_pre * lb.psi.transpose();
  grad.sigma_b += d_pre.rowwise().sum();
  return p.mu_w.transpose() * d_mu + p.sigma_w.transpose() * d_pre;
}

// ---------------------------------------------------------------------------
// Single-graph conveniences

/// Sketch embedding psi for one graph.  In training mode batch norm uses
/// the statistics of this single-item batch.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> encode(const SketchGraph& g, const EncoderParams<S>& p,
                                           const EncoderConfig& c, bool train, Rng& rng) {
  const Mat<S> pooled = encode_nodes(g, p, c, train, rng);
  return project(pooled, p, c, train).col(0);
}

template <typename S>
struct LatentSample {
  Eigen::Matrix<S, Eigen::Dynamic, 1> psi, mu, sigma, z;
};

template <typename S>
LatentSample<S> reparameterize(const Eigen::Matrix<S, Eigen::Dynamic, 1>& psi,
                               const EncoderParams<S>& p, Rng& rng, bool with_noise = true) {
  const Mat<S> noise = with_noise ? standard_normal<S>(psi.size(), 1, rng)
                                  : Mat<S>::Zero(psi.size(), 1);
  const LatentBatch<S> lb = bridge<S>(psi, p, noise);
  return {psi, lb.mu.col(0), lb.sigma.col(0), lb.z.col(0)};
}

}  // namespace sketchlattice
