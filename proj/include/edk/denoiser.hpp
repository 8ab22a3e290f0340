#pragma once

#include <vector>

#include "edk/diffusion.hpp"
#include "edk/nn.hpp"

namespace edk {

struct DenoiserConfig {
  int blocks = 8;
  int width = 128;   // d
  int heads = 4;
  int kernel = 3;
  int ffn_mult = 4;
  double dropout = 0.1;
  int cond_width = 288;  // |tap_layers|·H from the condition encoders

  void validate() const {
    if (blocks < 1) throw ConfigError("denoiser needs at least one block");
    if (width < 2 || width % 2 != 0)
      throw ConfigError("denoiser width must be even (timestep embedding)");
    if (heads < 1 || width % heads != 0)
      throw ConfigError("denoiser width must be divisible by the head count");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("denoiser conv kernel must be odd");
    if (ffn_mult < 1) throw ConfigError("FFN expansion must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
    if (cond_width < 1) throw ConfigError("condition width must be positive");
  }
};

template <typename S>
Mat<S> hcat(const Mat<S>& a, const Mat<S>& b) {
  Mat<S> m(a.rows(), a.cols() + b.cols());
  m << a, b;
  return m;
}

// One conditioning block. Boundary path: project concat(z, C_bound') back to
// width, then a temporal convolution for local interactions. Semantic path:
// queries and keys from concat(z, C_sem'), values from z alone, multi-head
// full attention. The two paths sum and pass through a normalized FFN, with
// a residual from z. The conv and the attention output projection start at
// zero, which already makes a fresh block exactly the identity: the merged
// pre-FFN signal is identically zero, and norm/GELU both map zero to zero,
// so the FFN contributes nothing. The FFN weights themselves stay live —
// zeroing them too would cut the only gradient route back into the two
// conditioning paths and the block could never learn to use its conditions.
template <typename S>
struct HybridBlock {
  int width = 0, heads = 0;
  nn::Linear<S> bproj;   // 2d → d
  nn::Conv1d<S> conv;    // d → d, zero-init
  nn::Linear<S> wq, wk;  // 2d → d
  nn::Linear<S> wv;      // d → d
  nn::Linear<S> wo;      // d → d, zero-init
  nn::LayerNorm<S> norm;
  nn::Linear<S> lin1, lin2;  // d → m·d → d
  nn::GELU<S> gelu;
  nn::Dropout<S> drop;

  struct Cache {
    Mat<S> u, ao;  // path activations, kept for isolation probes
    // cq holds the (z ‖ C_sem') concat shared by the query and key projections
    typename nn::Linear<S>::Cache cb, cq, cv, co, c1, c2;
    typename nn::Conv1d<S>::Cache cconv;
    nn::AttentionCache<S> att;
    typename nn::LayerNorm<S>::Cache ln;
    typename nn::GELU<S>::Cache cg;
    typename nn::Dropout<S>::Cache cd;
  };

  void init(const DenoiserConfig& cfg, Rng& rng) {
    width = cfg.width;
    heads = cfg.heads;
    const int d = cfg.width;
    bproj.init(2 * d, d, rng, std::sqrt(1.0 / (2.0 * d)));
    conv.init(d, d, cfg.kernel, 1, rng, 0.0);  // zero: boundary path silent at init
    wq.init(2 * d, d, rng, std::sqrt(1.0 / (2.0 * d)));
    wk.init(2 * d, d, rng, std::sqrt(1.0 / (2.0 * d)));
    wv.init(d, d, rng, std::sqrt(1.0 / d));
    wo.init(d, d, rng, 0.0);  // zero: attention path silent at init
    norm.init(d);
    lin1.init(d, cfg.ffn_mult * d, rng, std::sqrt(1.0 / d));
    lin2.init(cfg.ffn_mult * d, d, rng, std::sqrt(1.0 / (cfg.ffn_mult * d)));
    drop.rate = cfg.dropout;
  }

  Mat<S> forward(const Mat<S>& z, const Mat<S>& csem, const Mat<S>& cbound, Cache* cache,
                 Rng* drop_rng) const {
    Mat<S> u = conv.forward(bproj.forward(hcat(z, cbound), cache ? &cache->cb : nullptr),
                            cache ? &cache->cconv : nullptr);
    Mat<S> cs = hcat(z, csem);
    Mat<S> q = wq.forward(std::move(cs), cache ? &cache->cq : nullptr);
    const Mat<S>& qk_in = cache ? cache->cq.x : cs;  // concat lives in cq when training
    Mat<S> k = wk.forward(qk_in, nullptr);
    Mat<S> v = wv.forward(z, cache ? &cache->cv : nullptr);
    Mat<S> a = nn::attention_forward(std::move(q), std::move(k), std::move(v), heads,
                                     cache ? &cache->att : nullptr);
    Mat<S> ao = wo.forward(std::move(a), cache ? &cache->co : nullptr);
    Mat<S> merged = u + ao;
    if (cache) {
      cache->u = std::move(u);
      cache->ao = std::move(ao);
    }
    Mat<S> n = norm.forward(merged, cache ? &cache->ln : nullptr);
    Mat<S> h = lin1.forward(std::move(n), cache ? &cache->c1 : nullptr);
    h = gelu.forward(std::move(h), cache ? &cache->cg : nullptr);
    h = lin2.forward(std::move(h), cache ? &cache->c2 : nullptr);
    h = drop.forward(h, drop_rng, cache ? &cache->cd : nullptr);
    return z + h;
  }

  // Returns the gradient w.r.t. z; condition gradients accumulate into the
  // supplied matrices (the projected conditions feed every block).
  Mat<S> backward(Cache& cache, const Mat<S>& gout, Mat<S>& g_csem, Mat<S>& g_cbound) {
    const int d = width;
    Mat<S> g = drop.backward(cache.cd, gout);
    g = lin2.backward(cache.c2, g);
    g = gelu.backward(cache.cg, g);
    g = lin1.backward(cache.c1, g);
    Mat<S> gm = norm.backward(cache.ln, g);

    // attention path
    Mat<S> ga = wo.backward(cache.co, gm);
    Mat<S> gq, gk, gv;
    nn::attention_backward(cache.att, ga, heads, gq, gk, gv);
    Mat<S> gcs = wq.backward(cache.cq, gq);
    gcs += wk.backward_at(cache.cq.x, gk);
    Mat<S> gz = wv.backward(cache.cv, gv);
    gz += gcs.leftCols(d);
    g_csem += gcs.rightCols(d);

    // boundary path
    Mat<S> gu0 = conv.backward(cache.cconv, gm);
    Mat<S> gcb = bproj.backward(cache.cb, gu0);
    gz += gcb.leftCols(d);
    g_cbound += gcb.rightCols(d);

    gz += gout;  // residual
    return gz;
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    bproj.collect(prefix + ".bproj", out);
    conv.collect(prefix + ".conv", out);
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
    norm.collect(prefix + ".norm", out);
    lin1.collect(prefix + ".ffn1", out);
    lin2.collect(prefix + ".ffn2", out);
  }
};

// Conditional decoder: timestep embedding added to the noisy label features,
// a stack of hybrid blocks conditioned on the projected semantic and boundary
// matrices, then a clean-sample head (identity at init) and a classification
// head reading logits off the clean-sample estimate.
template <typename S>
struct Denoiser {
  DenoiserConfig cfg;
  int classes = 0;
  nn::Linear<S> sem_proj, bound_proj;  // cond_width → d
  TimeEmbedding<S> time;
  std::vector<HybridBlock<S>> blocks_;
  nn::Linear<S> y0_head;   // d → d, identity-init
  nn::Linear<S> cls_head;  // d → c

  struct Cache {
    typename nn::Linear<S>::Cache sp, bp;
    typename TimeEmbedding<S>::Cache time;
    std::vector<typename HybridBlock<S>::Cache> blocks;
    typename nn::Linear<S>::Cache y0h, cls;
  };

  struct Output {
    Mat<S> y0;      // T × d
    Mat<S> logits;  // T × c
  };

  struct InputGrads {
    Mat<S> y_t, c_sem, c_bound;
  };

  void init(int c, const DenoiserConfig& config, Rng& rng) {
    if (c < 2) throw ConfigError("denoiser needs at least two classes");
    config.validate();
    cfg = config;
    classes = c;
    const int d = cfg.width;
    sem_proj.init(cfg.cond_width, d, rng, std::sqrt(1.0 / cfg.cond_width));
    bound_proj.init(cfg.cond_width, d, rng, std::sqrt(1.0 / cfg.cond_width));
    time.init(d, rng);
    blocks_.assign(std::size_t(cfg.blocks), HybridBlock<S>{});
    for (auto& b : blocks_) b.init(cfg, rng);
    y0_head.init(d, d, rng, 0.0, /*identity=*/true);
    cls_head.init(d, c, rng, std::sqrt(1.0 / d));
  }

  Output forward(const Mat<S>& y_t, int t, const Mat<S>& c_sem, const Mat<S>& c_bound,
                 Cache* cache, Rng* drop_rng = nullptr) const {
    if (int(y_t.cols()) != cfg.width) throw DataError("noisy feature width mismatch");
    if (c_sem.rows() != y_t.rows() || c_bound.rows() != y_t.rows())
      throw DataError("condition frame count mismatch");
    if (int(c_sem.cols()) != cfg.cond_width || int(c_bound.cols()) != cfg.cond_width)
      throw DataError("condition width mismatch");
    if (t < 0) throw ConfigError("negative diffusion timestep");

    Mat<S> cs = sem_proj.forward(c_sem, cache ? &cache->sp : nullptr);
    Mat<S> cb = bound_proj.forward(c_bound, cache ? &cache->bp : nullptr);
    Mat<S> ct = time.forward(t, cache ? &cache->time : nullptr);
    Mat<S> z = y_t;
    z.rowwise() += ct.row(0);
    if (cache) cache->blocks.assign(blocks_.size(), typename HybridBlock<S>::Cache{});
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      z = blocks_[i].forward(z, cs, cb, cache ? &cache->blocks[i] : nullptr, drop_rng);
    Output out;
    out.y0 = y0_head.forward(z, cache ? &cache->y0h : nullptr);
    out.logits = cls_head.forward(out.y0, cache ? &cache->cls : nullptr);
    return out;
  }

  InputGrads backward(Cache& cache, const Mat<S>& g_y0, const Mat<S>& g_logits) {
    const int T = int(g_y0.rows()), d = cfg.width;
    Mat<S> gy0 = g_y0 + cls_head.backward(cache.cls, g_logits);
    Mat<S> gz = y0_head.backward(cache.y0h, gy0);
    Mat<S> g_cs = Mat<S>::Zero(T, d), g_cb = Mat<S>::Zero(T, d);
    for (std::size_t i = blocks_.size(); i-- > 0;)
      gz = blocks_[i].backward(cache.blocks[i], gz, g_cs, g_cb);
    Mat<S> g_ct(1, d);
    g_ct.row(0) = gz.colwise().sum();
    time.backward(cache.time, g_ct);
    InputGrads gi;
    gi.c_sem = sem_proj.backward(cache.sp, g_cs);
    gi.c_bound = bound_proj.backward(cache.bp, g_cb);
    gi.y_t = std::move(gz);
    return gi;
  }

  void collect(nn::ParamList<S>& out) {
    sem_proj.collect("den.sem_proj", out);
    bound_proj.collect("den.bound_proj", out);
    time.collect("den.time", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect("den.block" + std::to_string(i + 1), out);
    y0_head.collect("den.y0_head", out);
    cls_head.collect("den.cls_head", out);
  }
};

}  // namespace edk
