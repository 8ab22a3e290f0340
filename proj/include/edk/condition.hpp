#pragma once

#include <algorithm>
#include <vector>

#include "edk/nn.hpp"

namespace edk {

// Shared layout for both condition branches: a stack of encoder layers, each
// a dilated temporal convolution (kernel 3, dilation 2^(ℓ−1)) feeding a
// single-head block-windowed self-attention, joined to the layer input by a
// residual. Intermediate features are tapped from selected layers and
// concatenated channel-wise into the condition matrix.
struct TemporalEncoderConfig {
  int layers = 6;
  int hidden = 96;
  std::vector<int> tap_layers = {2, 4, 6};  // 1-based layer indices
  int base_window = 16;                     // layer ℓ attends within 2^(ℓ−1)·w0
  double dropout = 0.1;

  void validate() const {
    if (layers < 1 || layers > 16) throw ConfigError("encoder layer count must be in [1, 16]");
    if (hidden < 8) throw ConfigError("encoder hidden width must be >= 8");
    if (base_window < 1) throw ConfigError("attention base window must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
    if (tap_layers.empty()) throw ConfigError("at least one tap layer is required");
    for (std::size_t i = 0; i < tap_layers.size(); ++i) {
      if (tap_layers[i] < 1 || tap_layers[i] > layers)
        throw ConfigError("tap layer index out of range");
      for (std::size_t j = i + 1; j < tap_layers.size(); ++j)
        if (tap_layers[i] == tap_layers[j]) throw ConfigError("duplicate tap layer index");
    }
  }
};

template <typename S>
struct TemporalEncoder {
  struct Layer {
    nn::Conv1d<S> conv;
    nn::ReLU<S> relu;
    nn::Linear<S> wq, wk, wv, wo;
    nn::Dropout<S> drop;
  };

  struct LayerCache {
    typename nn::Conv1d<S>::Cache conv;
    typename nn::ReLU<S>::Cache relu;
    // cq holds the post-activation features shared by the q/k/v projections
    typename nn::Linear<S>::Cache cq, co;
    nn::WindowedAttentionCache<S> att;
    typename nn::Dropout<S>::Cache drop;
  };

  struct Cache {
    typename nn::Linear<S>::Cache proj;
    std::vector<LayerCache> layers;
    typename nn::Linear<S>::Cache head;
  };

  struct Output {
    Mat<S> cond;    // T × (|tap_layers|·H)
    Mat<S> logits;  // T × head width
  };

  TemporalEncoderConfig cfg;
  int in_dim = 0;
  nn::Linear<S> in_proj;  // framewise 1×1 projection D→H
  std::vector<Layer> layers_;
  nn::Linear<S> head;

  void init(int D, int head_out, const TemporalEncoderConfig& config, Rng& rng) {
    if (D < 1 || head_out < 1) throw ConfigError("encoder needs positive input and head widths");
    cfg = config;
    std::sort(cfg.tap_layers.begin(), cfg.tap_layers.end());  // set semantics
    cfg.validate();
    in_dim = D;
    const int H = cfg.hidden;
    in_proj.init(D, H, rng, std::sqrt(1.0 / D));
    layers_.assign(std::size_t(cfg.layers), Layer{});
    for (int l = 0; l < cfg.layers; ++l) {
      Layer& L = layers_[std::size_t(l)];
      L.conv.init(H, H, 3, 1 << l, rng, std::sqrt(1.0 / (3.0 * H)));
      const double sd = std::sqrt(1.0 / H);
      L.wq.init(H, H, rng, sd);
      L.wk.init(H, H, rng, sd);
      L.wv.init(H, H, rng, sd);
      L.wo.init(H, H, rng, sd);
      L.drop.rate = cfg.dropout;
    }
    head.init(H, head_out, rng, std::sqrt(1.0 / H));
  }

  int cond_width() const { return int(cfg.tap_layers.size()) * cfg.hidden; }

  int window_for(int layer, int T) const {
    long w = long(cfg.base_window) << (layer - 1);
    return int(std::min(long(T), w));
  }

  // One encoder layer. `tap` (optional) receives the post-residual,
  // pre-dropout activations used for condition taps.
  Mat<S> layer_forward(int idx, const Mat<S>& x, LayerCache* cache, Rng* drop_rng,
                       Mat<S>* tap = nullptr) const {
    const Layer& L = layers_[std::size_t(idx)];
    Mat<S> h = L.conv.forward(x, cache ? &cache->conv : nullptr);
    h = L.relu.forward(std::move(h), cache ? &cache->relu : nullptr);
    Mat<S> q = L.wq.forward(std::move(h), cache ? &cache->cq : nullptr);
    const Mat<S>& qkv_in = cache ? cache->cq.x : h;  // shared activations when training
    Mat<S> k = L.wk.forward(qkv_in, nullptr);
    Mat<S> v = L.wv.forward(qkv_in, nullptr);
    const int win = window_for(idx + 1, int(x.rows()));
    Mat<S> a = nn::windowed_attention_forward(q, k, v, win, cache ? &cache->att : nullptr);
    a = L.wo.forward(std::move(a), cache ? &cache->co : nullptr);
    Mat<S> r = x + a;
    if (tap) *tap = r;
    return L.drop.forward(r, drop_rng, cache ? &cache->drop : nullptr);
  }

  // drop_rng == nullptr runs in eval mode (deterministic, dropout off)
  Output forward(const Mat<S>& f, Cache* cache, Rng* drop_rng = nullptr) const {
    if (int(f.cols()) != in_dim) throw DataError("encoder input width mismatch");
    if (f.rows() < 1) throw DataError("encoder input must have at least one frame");
    const int T = int(f.rows()), H = cfg.hidden;
    if (cache) cache->layers.assign(layers_.size(), LayerCache{});

    Mat<S> x = in_proj.forward(f, cache ? &cache->proj : nullptr);
    Output out;
    out.cond.resize(T, cond_width());
    std::size_t tap_slot = 0;
    for (int l = 0; l < cfg.layers; ++l) {
      const bool tapped = tap_slot < cfg.tap_layers.size() && cfg.tap_layers[tap_slot] == l + 1;
      Mat<S> tap;
      x = layer_forward(l, x, cache ? &cache->layers[std::size_t(l)] : nullptr, drop_rng,
                        tapped ? &tap : nullptr);
      if (tapped) out.cond.middleCols(long(tap_slot++) * H, H) = tap;
    }
    out.logits = head.forward(x, cache ? &cache->head : nullptr);
    return out;
  }

  // Returns the gradient with respect to the input features.
  Mat<S> backward(Cache& cache, const Mat<S>& g_cond, const Mat<S>& g_logits) {
    const int H = cfg.hidden;
    Mat<S> g = head.backward(cache.head, g_logits);
    std::size_t tap_slot = cfg.tap_layers.size();
    for (int l = cfg.layers - 1; l >= 0; --l) {
      Layer& L = layers_[std::size_t(l)];
      LayerCache& lc = cache.layers[std::size_t(l)];
      Mat<S> gr = L.drop.backward(lc.drop, g);
      if (tap_slot > 0 && cfg.tap_layers[tap_slot - 1] == l + 1)
        gr += g_cond.middleCols(long(--tap_slot) * H, H);
      Mat<S> ga = L.wo.backward(lc.co, gr);
      Mat<S> gq, gk, gv;
      nn::windowed_attention_backward(lc.att, ga, gq, gk, gv);
      Mat<S> gh = L.wq.backward(lc.cq, gq);
      gh += L.wk.backward_at(lc.cq.x, gk);
      gh += L.wv.backward_at(lc.cq.x, gv);
      gh = L.relu.backward(lc.relu, gh);
      g = gr + L.conv.backward(lc.conv, gh);  // residual + conv path
    }
    return in_proj.backward(cache.proj, g);
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    in_proj.collect(prefix + ".proj", out);
    for (int l = 0; l < cfg.layers; ++l) {
      Layer& L = layers_[std::size_t(l)];
      const std::string base = prefix + ".layer" + std::to_string(l + 1);
      L.conv.collect(base + ".conv", out);
      L.wq.collect(base + ".wq", out);
      L.wk.collect(base + ".wk", out);
      L.wv.collect(base + ".wv", out);
      L.wo.collect(base + ".wo", out);
    }
    head.collect(prefix + ".head", out);
  }
};

// Complementary condition matrices with their auxiliary supervision logits.
template <typename S>
struct ConditionPairT {
  Mat<S> c_sem, c_bound;        // each T × (|tap_layers|·H)
  Mat<S> sem_logits;            // T × c
  Mat<S> bound_logits;          // T × 1
};

using ConditionPair = ConditionPairT<float>;

// The two independently parameterized branches used to condition the
// denoiser: a semantic branch supervised with stage classification and a
// boundary branch supervised with transition detection.
template <typename S>
struct ConditionEncoders {
  TemporalEncoder<S> semantic, boundary;

  struct Cache {
    typename TemporalEncoder<S>::Cache sem, bound;
  };

  void init(int D, int classes, const TemporalEncoderConfig& cfg, Rng& rng) {
    if (classes < 2) throw ConfigError("condition encoders need at least two classes");
    Rng rs = rng.derive(0), rb = rng.derive(1);
    semantic.init(D, classes, cfg, rs);
    boundary.init(D, 1, cfg, rb);
  }

  ConditionPairT<S> forward(const Mat<S>& f, Cache* cache, Rng* drop_rng = nullptr) const {
    typename TemporalEncoder<S>::Output s =
        semantic.forward(f, cache ? &cache->sem : nullptr, drop_rng);
    typename TemporalEncoder<S>::Output b =
        boundary.forward(f, cache ? &cache->bound : nullptr, drop_rng);
    ConditionPairT<S> pair;
    pair.c_sem = std::move(s.cond);
    pair.sem_logits = std::move(s.logits);
    pair.c_bound = std::move(b.cond);
    pair.bound_logits = std::move(b.logits);
    return pair;
  }

  void collect(nn::ParamList<S>& out) {
    semantic.collect("cond.sem", out);
    boundary.collect("cond.bound", out);
  }
};

}  // namespace edk
