#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "edk/nn.hpp"
#include "edk/stage.hpp"

namespace edk {

// Cumulative noise coefficients ᾱ_t for t = 0..S. Cosine construction:
// ᾱ_t = f(t)/f(0) with f(t) = cos²(((t/S + 0.008)/1.008)·π/2); the per-step
// β_t = 1 − ᾱ_t/ᾱ_{t−1} is clipped to ≤ 0.999 (only the final step needs it)
// and ᾱ is then recomputed as the running product of (1 − β_t), which keeps
// ᾱ_S strictly positive.
struct NoiseSchedule {
  int S = 1000;
  std::vector<double> bar_alpha;  // length S+1, bar_alpha[0] == 1 exactly

  static NoiseSchedule cosine(int S);
  double alpha_bar(int t) const;
};

// Learnable class-embedding table. A lookup is the table row normalized to
// unit RMS and multiplied by `scale`, so every embedded frame has RMS equal
// to scale by construction.
template <typename S>
struct LabelEmbedding {
  Mat<S> table, gtable;  // c × d
  double scale = 0.1;

  struct Cache {
    std::vector<int> labels;
    Mat<S> rows;      // raw table rows per frame, T × d
    Vec<S> inv_rms;   // per frame
  };

  void init(int c, int d, Rng& rng, double sc = 0.1) {
    if (c < 2 || d < 1) throw ConfigError("label embedding needs c >= 2, d >= 1");
    if (sc <= 0) throw ConfigError("label embedding scale must be positive");
    scale = sc;
    table.setZero(c, d);
    rng.fill_normal(table);
    gtable.setZero(c, d);
  }

  int classes() const { return int(table.rows()); }
  int dim() const { return int(table.cols()); }

  Mat<S> forward(const StageSequence& seq, Cache* cache) const {
    const int T = seq.frames(), d = dim();
    if (seq.vocab().size() != classes())
      throw DataError("label embedding class count does not match sequence vocabulary");
    Mat<S> y(T, d);
    Mat<S> rows(T, d);
    Vec<S> inv_rms(T);
    for (int t = 0; t < T; ++t) {
      auto row = table.row(seq.label(t));
      S rms = S(std::sqrt(double(row.squaredNorm()) / double(d)));
      S inv = S(1) / rms;
      y.row(t) = row * (S(scale) * inv);
      rows.row(t) = row;
      inv_rms(t) = inv;
    }
    if (cache) {
      cache->labels = seq.labels();
      cache->rows = std::move(rows);
      cache->inv_rms = std::move(inv_rms);
    }
    return y;
  }

  // d(scale·r/rms)/dr = scale·(I − r rᵀ/(d·rms²))/rms, accumulated per class.
  void backward(const Cache& cache, const Mat<S>& gout) {
    const int T = int(gout.rows()), d = dim();
    for (int t = 0; t < T; ++t) {
      auto r = cache.rows.row(t);
      S inv = cache.inv_rms(t);
      S dot = gout.row(t).dot(r);
      gtable.row(cache.labels[std::size_t(t)]) +=
          S(scale) * inv * (gout.row(t) - r * (dot * inv * inv / S(d)));
    }
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    out.push_back({prefix + ".table", &table, &gtable});
  }
};

// Forward corruption: y_t = √ᾱ_t·y_0 + √(1−ᾱ_t)·noise, noise supplied by the
// caller so every draw is attributable to a seed.
template <typename S>
Mat<S> q_sample(const Mat<S>& y0, int t, const NoiseSchedule& sched, const Mat<S>& noise) {
  if (t < 0 || t > sched.S) throw ConfigError("q_sample timestep out of range");
  if (noise.rows() != y0.rows() || noise.cols() != y0.cols())
    throw DataError("q_sample noise shape mismatch");
  const double ab = sched.alpha_bar(t);
  return S(std::sqrt(ab)) * y0 + S(std::sqrt(1.0 - ab)) * noise;
}

// Sinusoidal timestep features: first half sin(t·ω_i), second half cos(t·ω_i)
// with ω_i = 10000^(−i/half), followed by a learned two-layer projection to
// the model width. The second layer is zero-initialized so the timestep
// signal vanishes at init and the fresh denoiser stays an identity map.
template <typename S>
struct TimeEmbedding {
  int dim = 0;
  nn::Linear<S> fc1, fc2;
  nn::GELU<S> act;

  struct Cache {
    typename nn::Linear<S>::Cache c1, c2;
    typename nn::GELU<S>::Cache ca;
  };

  static Mat<S> sinusoid(double t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep embedding dim must be even and >= 2");
    const int half = dim / 2;
    Mat<S> e(1, dim);
    for (int i = 0; i < half; ++i) {
      double omega = std::exp(-std::log(10000.0) * double(i) / double(half));
      e(0, i) = S(std::sin(t * omega));
      e(0, half + i) = S(std::cos(t * omega));
    }
    return e;
  }

  void init(int d, Rng& rng) {
    dim = d;
    fc1.init(d, d, rng, std::sqrt(1.0 / d));
    fc2.init(d, d, rng, 0.0);  // zero: no timestep signal until trained
  }

  Mat<S> forward(int t, Cache* cache) const {
    Mat<S> e = sinusoid(double(t), dim);
    Mat<S> h = fc1.forward(e, cache ? &cache->c1 : nullptr);
    h = act.forward(h, cache ? &cache->ca : nullptr);
    return fc2.forward(h, cache ? &cache->c2 : nullptr);
  }

  void backward(Cache& cache, const Mat<S>& gout) {
    Mat<S> g = fc2.backward(cache.c2, gout);
    g = act.backward(cache.ca, g);
    fc1.backward(cache.c1, g);
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }
};

// One reverse-process model call: y_t and t in, (ŷ_0, logits) out.
using DenoiseFn = std::function<std::pair<MatF, MatF>(const MatF& y_t, int t)>;

struct SampleResult {
  MatF logits;   // T × c, from the final model call
  MatF y0;       // T × d, final clean-sample estimate
  int model_calls = 0;
};

// DDIM sampling over K evenly spaced timesteps t_i = round(S·(K−i)/K),
// descending from S to 0. The model predicts the clean sample; ε is
// re-derived from it for the update. η=0 is fully deterministic given the
// initial y_T ~ N(0, I).
SampleResult ddim_sample(const DenoiseFn& model, int T, int d, const NoiseSchedule& sched, int K,
                         Rng& rng, double eta = 0.0);

// per-frame argmax with ties broken toward the smaller class index
StageSequence decode_logits(const MatF& logits, const StageVocabulary& vocab);

}  // namespace edk
