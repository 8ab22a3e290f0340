#pragma once

// Minimal trainable-network toolkit used by the encoder, condition branches,
// and denoiser. Everything is templated on the scalar type so the same model
// code runs in float for training and in double for finite-difference
// gradient verification. Layers own their parameters and gradient buffers;
// forward passes write whatever backward needs into explicit Cache structs
// (pass nullptr for inference). Parameters are exposed through collect() as
// (name, value, grad) triples consumed by the optimizer, the serializer, and
// the checksum.

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <string>
#include <vector>

#include "edk/common.hpp"

namespace edk::nn {

template <typename S>
struct ParamRef {
  std::string name;
  Mat<S>* value;
  Mat<S>* grad;
};

template <typename S>
using ParamList = std::vector<ParamRef<S>>;

template <typename S>
void zero_grads(ParamList<S>& params) {
  for (auto& p : params) p.grad->setZero();
}

template <typename S>
std::size_t param_count(const ParamList<S>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += std::size_t(p.value->size());
  return n;
}

// Order-sensitive FNV-1a over (name, shape, float32 payload) of every
// parameter; the freeze protocol compares this before/after Stage-2.
template <typename S>
std::uint64_t param_checksum(const ParamList<S>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    const std::int64_t shape[2] = {p.value->rows(), p.value->cols()};
    h = fnv1a64(shape, sizeof(shape), h);
    for (Eigen::Index i = 0; i < p.value->rows(); ++i)
      for (Eigen::Index j = 0; j < p.value->cols(); ++j) {
        const float v = float((*p.value)(i, j));
        h = fnv1a64(&v, sizeof(v), h);
      }
  }
  return h;
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

template <typename S>
struct Linear {
  Mat<S> W, b;    // (in × out), (1 × out)
  Mat<S> gW, gb;

  struct Cache {
    Mat<S> x;
  };

  // std_dev 0 gives exact zeros (identity-at-init tricks); identity=true sets
  // W to the identity (requires in == out) with zero bias.
  void init(int in, int out, Rng& rng, double std_dev, bool identity = false) {
    W.setZero(in, out);
    b.setZero(1, out);
    if (identity) {
      if (in != out) throw ConfigError("identity init requires square weights");
      W.setIdentity();
    } else if (std_dev > 0) {
      rng.fill_normal(W);
      W *= S(std_dev);
    }
    gW.setZero(in, out);
    gb.setZero(1, out);
  }

  Mat<S> forward(const Mat<S>& x, Cache* cache) const {
    if (cache) cache->x = x;
    Mat<S> y = x * W;
    y.rowwise() += b.row(0);
    return y;
  }

  // rvalue input moves into the cache instead of copying (hot training paths)
  Mat<S> forward(Mat<S>&& x, Cache* cache) const {
    if (!cache) return forward(x, nullptr);
    cache->x = std::move(x);
    Mat<S> y = cache->x * W;
    y.rowwise() += b.row(0);
    return y;
  }

  Mat<S> backward(const Cache& cache, const Mat<S>& gout) {
    gW.noalias() += cache.x.transpose() * gout;
    gb.row(0) += gout.colwise().sum();
    return gout * W.transpose();
  }

  // variant for callers that keep the input activation themselves
  Mat<S> backward_at(const Mat<S>& x, const Mat<S>& gout) {
    gW.noalias() += x.transpose() * gout;
    gb.row(0) += gout.colwise().sum();
    return gout * W.transpose();
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".W", &W, &gW});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

// ---------------------------------------------------------------------------
// dilated temporal convolution (kernel centered, length-preserving)
// ---------------------------------------------------------------------------

enum class Padding { Zero, Circular };

template <typename S>
struct Conv1d {
  int kernel = 3, dilation = 1, in_ch = 0, out_ch = 0;
  Padding padding = Padding::Zero;
  Mat<S> W, b;    // ((kernel·in_ch) × out_ch), (1 × out_ch)
  Mat<S> gW, gb;

  struct Cache {
    Mat<S> cols;  // im2col matrix, T × (kernel·in_ch)
  };

  void init(int in, int out, int k, int dil, Rng& rng, double std_dev,
            Padding pad = Padding::Zero) {
    if (k % 2 == 0) throw ConfigError("conv kernel must be odd to preserve length");
    kernel = k;
    dilation = dil;
    in_ch = in;
    out_ch = out;
    padding = pad;
    W.setZero(k * in, out);
    if (std_dev > 0) {
      rng.fill_normal(W);
      W *= S(std_dev);
    }
    b.setZero(1, out);
    gW.setZero(k * in, out);
    gb.setZero(1, out);
  }

  // maps tap position to a source frame, or -1 for zero padding
  int source_frame(int t, int j, int T) const {
    int u = t + (j - kernel / 2) * dilation;
    if (padding == Padding::Circular) return ((u % T) + T) % T;
    return (u >= 0 && u < T) ? u : -1;
  }

  Mat<S> im2col(const Mat<S>& x) const {
    const int T = int(x.rows());
    Mat<S> cols = Mat<S>::Zero(T, kernel * in_ch);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < kernel; ++j) {
        int u = source_frame(t, j, T);
        if (u >= 0) cols.block(t, j * in_ch, 1, in_ch) = x.row(u);
      }
    return cols;
  }

  Mat<S> forward(const Mat<S>& x, Cache* cache) const {
    if (int(x.cols()) != in_ch) throw DataError("conv input channel mismatch");
    Mat<S> cols = im2col(x);
    Mat<S> y = cols * W;
    y.rowwise() += b.row(0);
    if (cache) cache->cols = std::move(cols);
    return y;
  }

  Mat<S> backward(const Cache& cache, const Mat<S>& gout) {
    const int T = int(gout.rows());
    gW.noalias() += cache.cols.transpose() * gout;
    gb.row(0) += gout.colwise().sum();
    Mat<S> gcols = gout * W.transpose();
    Mat<S> gx = Mat<S>::Zero(T, in_ch);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < kernel; ++j) {
        int u = source_frame(t, j, T);
        if (u >= 0) gx.row(u) += gcols.block(t, j * in_ch, 1, in_ch);
      }
    return gx;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".W", &W, &gW});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename S>
struct ReLU {
  struct Cache {
    Mat<S> x;
  };
  Mat<S> forward(const Mat<S>& x, Cache* cache) const {
    if (cache) cache->x = x;
    return x.cwiseMax(S(0));
  }
  Mat<S> forward(Mat<S>&& x, Cache* cache) const {
    if (!cache) return forward(x, nullptr);
    cache->x = std::move(x);
    return cache->x.cwiseMax(S(0));
  }
  Mat<S> backward(const Cache& cache, const Mat<S>& gout) const {
    return (cache.x.array() > S(0)).template cast<S>() * gout.array();
  }
};

// exact GELU: x·Φ(x) with the Gaussian CDF via erf
template <typename S>
struct GELU {
  struct Cache {
    Mat<S> x;
  };
  // Φ and the Gaussian density as vectorized array expressions; erf comes from
  // Eigen's special-functions module so the float path stays SIMD-friendly.
  Mat<S> forward(const Mat<S>& x, Cache* cache) const {
    if (cache) cache->x = x;
    Mat<S> phi = (S(0.5) * ((x.array() * S(0.7071067811865475)).erf() + S(1))).matrix();
    return x.cwiseProduct(phi);
  }
  Mat<S> forward(Mat<S>&& x, Cache* cache) const {
    if (!cache) return forward(x, nullptr);
    cache->x = std::move(x);
    return forward(cache->x, nullptr);
  }
  Mat<S> backward(const Cache& cache, const Mat<S>& gout) const {
    auto xa = cache.x.array();
    Mat<S> d = (S(0.5) * ((xa * S(0.7071067811865475)).erf() + S(1)) +
                xa * (S(-0.5) * xa.square()).exp() * S(0.3989422804014327))
                   .matrix();
    return d.cwiseProduct(gout);
  }
};

// ---------------------------------------------------------------------------
// layer norm (per frame, learnable affine)
// ---------------------------------------------------------------------------

template <typename S>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Mat<S> gamma, beta;    // 1 × d
  Mat<S> ggamma, gbeta;

  struct Cache {
    Mat<S> xhat;       // T × d
    Vec<S> inv_sigma;  // T
  };

  void init(int d) {
    gamma.setOnes(1, d);
    beta.setZero(1, d);
    ggamma.setZero(1, d);
    gbeta.setZero(1, d);
  }

  Mat<S> forward(const Mat<S>& x, Cache* cache) const {
    const int T = int(x.rows()), d = int(x.cols());
    Mat<S> xhat(T, d);
    Vec<S> inv_sigma(T);
    for (int t = 0; t < T; ++t) {
      S mu = x.row(t).mean();
      S var = (x.row(t).array() - mu).square().mean();
      S inv = S(1) / S(std::sqrt(double(var) + kEps));
      xhat.row(t) = (x.row(t).array() - mu) * inv;
      inv_sigma(t) = inv;
    }
    Mat<S> y = xhat.array().rowwise() * gamma.row(0).array();
    y.array().rowwise() += beta.row(0).array();
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_sigma = std::move(inv_sigma);
    }
    return y;
  }

  Mat<S> backward(const Cache& cache, const Mat<S>& gout) {
    const int T = int(gout.rows()), d = int(gout.cols());
    ggamma.row(0) += (gout.array() * cache.xhat.array()).colwise().sum().matrix();
    gbeta.row(0) += gout.colwise().sum();
    Mat<S> gxhat = gout.array().rowwise() * gamma.row(0).array();
    Mat<S> gx(T, d);
    for (int t = 0; t < T; ++t) {
      S m1 = gxhat.row(t).mean();
      S m2 = (gxhat.row(t).cwiseProduct(cache.xhat.row(t))).mean();
      gx.row(t) =
          (gxhat.row(t).array() - m1 - cache.xhat.row(t).array() * m2) * cache.inv_sigma(t);
    }
    return gx;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".gamma", &gamma, &ggamma});
    out.push_back({prefix + ".beta", &beta, &gbeta});
  }
};

// ---------------------------------------------------------------------------
// dropout (inverted scaling; eval mode = pass-through)
// ---------------------------------------------------------------------------

template <typename S>
struct Dropout {
  double rate = 0.1;

  struct Cache {
    Mat<S> mask;
    bool active = false;
  };

  // rng == nullptr means eval mode
  Mat<S> forward(const Mat<S>& x, Rng* rng, Cache* cache) const {
    if (!rng || rate <= 0.0) {
      if (cache) cache->active = false;
      return x;
    }
    Mat<S> mask(x.rows(), x.cols());
    const S keep_inv = S(1.0 / (1.0 - rate));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        mask(i, j) = rng->uniform() < rate ? S(0) : keep_inv;
    Mat<S> y = x.cwiseProduct(mask);
    if (cache) {
      cache->mask = std::move(mask);
      cache->active = true;
    }
    return y;
  }

  Mat<S> backward(const Cache& cache, const Mat<S>& gout) const {
    return cache.active ? gout.cwiseProduct(cache.mask).eval() : gout;
  }
};

// ---------------------------------------------------------------------------
// softmax helpers and attention primitives (parameter-free; projections are
// Linear layers owned by callers)
// ---------------------------------------------------------------------------

template <typename S>
Mat<S> softmax_rows(const Mat<S>& x) {
  Mat<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    S mx = x.row(i).maxCoeff();
    Vec<S> e = (x.row(i).array() - mx).exp();
    y.row(i) = e.transpose() / e.sum();
  }
  return y;
}

template <typename S>
Mat<S> log_softmax_rows(const Mat<S>& x) {
  Mat<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    S mx = x.row(i).maxCoeff();
    S lse = S(std::log(double(((x.row(i).array() - mx).exp()).sum()))) + mx;
    y.row(i) = x.row(i).array() - lse;
  }
  return y;
}

// d softmax: given A = softmax(scores) and gA, return gScores
template <typename S>
Mat<S> softmax_rows_backward(const Mat<S>& A, const Mat<S>& gA) {
  Mat<S> g(A.rows(), A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    S dot = A.row(i).cwiseProduct(gA.row(i)).sum();
    g.row(i) = (A.row(i).array() * (gA.row(i).array() - dot)).matrix();
  }
  return g;
}

// Full bidirectional scaled-dot attention split into `heads` channel groups.
// Q, K, V are T×d with d divisible by heads.
template <typename S>
struct AttentionCache {
  Mat<S> Q, K, V;
  std::vector<Mat<S>> A;  // per head, T×T
};

template <typename S>
Mat<S> attention_forward(Mat<S> Q, Mat<S> K, Mat<S> V, int heads, AttentionCache<S>* cache) {
  const int T = int(Q.rows()), d = int(Q.cols());
  if (d % heads != 0) throw ConfigError("attention width not divisible by head count");
  const int dh = d / heads;
  const S scale = S(1.0 / std::sqrt(double(dh)));
  Mat<S> out(T, d);
  const Mat<S>*Qp = &Q, *Kp = &K, *Vp = &V;
  if (cache) {
    cache->Q = std::move(Q);
    cache->K = std::move(K);
    cache->V = std::move(V);
    Qp = &cache->Q;
    Kp = &cache->K;
    Vp = &cache->V;
    cache->A.assign(std::size_t(heads), Mat<S>());
  }
  for (int h = 0; h < heads; ++h) {
    auto Qh = Qp->middleCols(h * dh, dh);
    auto Kh = Kp->middleCols(h * dh, dh);
    auto Vh = Vp->middleCols(h * dh, dh);
    Mat<S> A = softmax_rows<S>((Qh * Kh.transpose() * scale).eval());
    out.middleCols(h * dh, dh) = A * Vh;
    if (cache) cache->A[std::size_t(h)] = std::move(A);
  }
  return out;
}

template <typename S>
void attention_backward(const AttentionCache<S>& cache, const Mat<S>& gout, int heads,
                        Mat<S>& gQ, Mat<S>& gK, Mat<S>& gV) {
  const int T = int(gout.rows()), d = int(gout.cols());
  const int dh = d / heads;
  const S scale = S(1.0 / std::sqrt(double(dh)));
  gQ.setZero(T, d);
  gK.setZero(T, d);
  gV.setZero(T, d);
  for (int h = 0; h < heads; ++h) {
    const Mat<S>& A = cache.A[std::size_t(h)];
    auto Qh = cache.Q.middleCols(h * dh, dh);
    auto Kh = cache.K.middleCols(h * dh, dh);
    auto Vh = cache.V.middleCols(h * dh, dh);
    auto gh = gout.middleCols(h * dh, dh);
    Mat<S> gA = gh * Vh.transpose();
    gV.middleCols(h * dh, dh) = A.transpose() * gh;
    Mat<S> gS = softmax_rows_backward(A, gA) * scale;
    gQ.middleCols(h * dh, dh) = gS * Kh;
    gK.middleCols(h * dh, dh) = gS.transpose() * Qh;
  }
}

// Single-head block-local attention: the sequence is chunked into windows of
// `window` frames and attention runs independently inside each chunk, so a
// window >= T is exactly full attention.
template <typename S>
struct WindowedAttentionCache {
  std::vector<AttentionCache<S>> chunks;
  std::vector<int> offsets;  // chunk start frames
  int window = 0;
};

template <typename S>
Mat<S> windowed_attention_forward(const Mat<S>& Q, const Mat<S>& K, const Mat<S>& V, int window,
                                  WindowedAttentionCache<S>* cache) {
  const int T = int(Q.rows());
  if (window < 1) throw ConfigError("attention window must be >= 1");
  Mat<S> out(T, Q.cols());
  if (cache) {
    cache->chunks.clear();
    cache->offsets.clear();
    cache->window = window;
  }
  for (int start = 0; start < T; start += window) {
    int len = std::min(window, T - start);
    AttentionCache<S> local;
    Mat<S> o = attention_forward<S>(Q.middleRows(start, len).eval(),
                                    K.middleRows(start, len).eval(),
                                    V.middleRows(start, len).eval(), 1,
                                    cache ? &local : nullptr);
    out.middleRows(start, len) = o;
    if (cache) {
      cache->chunks.push_back(std::move(local));
      cache->offsets.push_back(start);
    }
  }
  return out;
}

template <typename S>
void windowed_attention_backward(const WindowedAttentionCache<S>& cache, const Mat<S>& gout,
                                 Mat<S>& gQ, Mat<S>& gK, Mat<S>& gV) {
  const int T = int(gout.rows()), d = int(gout.cols());
  gQ.setZero(T, d);
  gK.setZero(T, d);
  gV.setZero(T, d);
  for (std::size_t i = 0; i < cache.chunks.size(); ++i) {
    int start = cache.offsets[i];
    int len = int(cache.chunks[i].Q.rows());
    Mat<S> q, k, v;
    attention_backward(cache.chunks[i], gout.middleRows(start, len).eval(), 1, q, k, v);
    gQ.middleRows(start, len) = q;
    gK.middleRows(start, len) = k;
    gV.middleRows(start, len) = v;
  }
}

// ---------------------------------------------------------------------------
// optimizer: AdamW with decoupled weight decay
// ---------------------------------------------------------------------------

template <typename S>
struct AdamW {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.01;
  long t = 0;
  std::vector<Mat<S>> m, v;

  void step(ParamList<S>& params) {
    if (m.empty()) {
      for (auto& p : params) {
        m.emplace_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
        v.emplace_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
      }
    }
    if (m.size() != params.size()) throw ProtocolError("optimizer state does not match params");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Mat<S>& g = *params[i].grad;
      m[i] = S(beta1) * m[i] + S(1.0 - beta1) * g;
      v[i] = (S(beta2) * v[i].array() + S(1.0 - beta2) * g.array().square()).matrix();
      Mat<S> mhat = m[i] / S(bc1);
      Mat<S> vhat = v[i] / S(bc2);
      params[i].value->array() -=
          S(lr) * (mhat.array() / (vhat.array().sqrt() + S(eps)) +
                   S(weight_decay) * params[i].value->array());
    }
  }
};

// Cosine decay from lr0 to lr_end across total steps (step in [0, total)).
inline double cosine_lr(double lr0, double lr_end, long step, long total) {
  if (total <= 1) return lr_end;
  double frac = double(step) / double(total - 1);
  return lr_end + 0.5 * (lr0 - lr_end) * (1.0 + std::cos(3.141592653589793 * frac));
}

// ---------------------------------------------------------------------------
// finite-difference gradient verification
// ---------------------------------------------------------------------------

// f() must zero grads, run forward+backward, and return the scalar loss; the
// analytic gradients are read from the refs afterwards. Returns the largest
// relative error over every coordinate of every parameter (central
// differences, double precision recommended).
template <typename S, typename F>
double max_grad_rel_error(ParamList<S>& params, F&& f, double h = 1e-5) {
  f();  // populate analytic gradients
  std::vector<Mat<S>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(*p.grad);

  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat<S>& W = *params[i].value;
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        const S keep = W(r, c);
        W(r, c) = keep + S(h);
        double up = f();
        W(r, c) = keep - S(h);
        double down = f();
        W(r, c) = keep;
        double fd = (up - down) / (2 * h);
        double an = double(analytic[i](r, c));
        double denom = std::max({1.0, std::abs(fd), std::abs(an)});
        worst = std::max(worst, std::abs(fd - an) / denom);
      }
  }
  f();  // restore analytic gradient state
  return worst;
}

}  // namespace edk::nn
