#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "edk/nn.hpp"

using namespace edk;
using namespace edk::nn;

namespace {

MatD random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  MatD m(r, c);
  rng.fill_normal(m);
  return m * scale;
}

}  // namespace

TEST_CASE("linear forward matches scalar loop") {
  Rng rng(1);
  Linear<double> lin;
  lin.init(4, 3, rng, 0.5);
  MatD x = random_mat(rng, 6, 4);
  MatD y = lin.forward(x, nullptr);
  for (int t = 0; t < 6; ++t)
    for (int o = 0; o < 3; ++o) {
      double expect = lin.b(0, o);
      for (int i = 0; i < 4; ++i) expect += x(t, i) * lin.W(i, o);
      CHECK(y(t, o) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("linear identity and zero init") {
  Rng rng(2);
  Linear<double> id;
  id.init(5, 5, rng, 0.3, /*identity=*/true);
  MatD x = random_mat(rng, 4, 5);
  CHECK(id.forward(x, nullptr) == x);
  Linear<double> zero;
  zero.init(5, 3, rng, 0.0);
  CHECK(zero.forward(x, nullptr).isZero(0.0));
  CHECK_THROWS_AS(id.init(4, 5, rng, 0.1, true), ConfigError);
}

TEST_CASE("conv1d forward matches scalar oracle (zero padding, dilation)") {
  Rng rng(3);
  for (int dil : {1, 2, 4}) {
    Conv1d<double> conv;
    conv.init(3, 2, 3, dil, rng, 0.5);
    const int T = 9;
    MatD x = random_mat(rng, T, 3);
    MatD y = conv.forward(x, nullptr);
    REQUIRE(y.rows() == T);
    REQUIRE(y.cols() == 2);
    for (int t = 0; t < T; ++t)
      for (int o = 0; o < 2; ++o) {
        double expect = conv.b(0, o);
        for (int j = 0; j < 3; ++j) {
          int u = t + (j - 1) * dil;
          if (u < 0 || u >= T) continue;
          for (int ci = 0; ci < 3; ++ci) expect += conv.W(j * 3 + ci, o) * x(u, ci);
        }
        CHECK(y(t, o) == doctest::Approx(expect).epsilon(1e-12));
      }
  }
}

TEST_CASE("conv1d circular padding wraps around") {
  Rng rng(4);
  Conv1d<double> conv;
  conv.init(2, 2, 3, 1, rng, 0.5, Padding::Circular);
  const int T = 5;
  MatD x = random_mat(rng, T, 2);
  MatD y = conv.forward(x, nullptr);
  // circular shift equivariance: shift input by 1, output shifts by 1
  MatD xs(T, 2);
  for (int t = 0; t < T; ++t) xs.row((t + 1) % T) = x.row(t);
  MatD ys = conv.forward(xs, nullptr);
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < 2; ++o)
      CHECK(ys((t + 1) % T, o) == doctest::Approx(y(t, o)).epsilon(1e-12));
}

TEST_CASE("even kernels are rejected") {
  Rng rng(5);
  Conv1d<double> conv;
  CHECK_THROWS_AS(conv.init(2, 2, 4, 1, rng, 0.5), ConfigError);
}

TEST_CASE("activation values") {
  GELU<double> gelu;
  MatD x(1, 3);
  x << -1.0, 0.0, 2.0;
  MatD y = gelu.forward(x, nullptr);
  CHECK(y(0, 1) == 0.0);
  // gelu(2) = 2 * Phi(2)
  CHECK(y(0, 2) == doctest::Approx(2.0 * 0.5 * (1.0 + std::erf(2.0 / std::sqrt(2.0)))).epsilon(1e-12));
  CHECK(y(0, 0) < 0.0);

  ReLU<double> relu;
  MatD r = relu.forward(x, nullptr);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 2) == 2.0);
}

TEST_CASE("layer norm normalizes rows") {
  Rng rng(6);
  LayerNorm<double> ln;
  ln.init(8);
  MatD x = random_mat(rng, 5, 8, 3.0);
  x.array() += 2.0;
  MatD y = ln.forward(x, nullptr);
  for (int t = 0; t < 5; ++t) {
    CHECK(y.row(t).mean() == doctest::Approx(0.0).epsilon(1e-9));
    double var = (y.row(t).array() - y.row(t).mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("dropout eval is identity; train scales survivors") {
  Dropout<double> drop;
  drop.rate = 0.5;
  Rng rng(7);
  MatD x = MatD::Ones(50, 40);
  CHECK(drop.forward(x, nullptr, nullptr) == x);
  typename Dropout<double>::Cache cache;
  MatD y = drop.forward(x, &rng, &cache);
  int zeros = 0;
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j) {
      if (y(i, j) == 0.0)
        ++zeros;
      else
        CHECK(y(i, j) == doctest::Approx(2.0));
    }
  double frac = double(zeros) / double(y.size());
  CHECK(frac > 0.45);
  CHECK(frac < 0.55);
  // backward routes gradients through the same mask
  MatD g = drop.backward(cache, MatD::Ones(50, 40));
  CHECK(g == cache.mask);
}

TEST_CASE("softmax rows sum to one and log_softmax is stable") {
  Rng rng(8);
  MatD x = random_mat(rng, 4, 6, 50.0);  // large magnitudes stress stability
  MatD p = softmax_rows(x);
  MatD lp = log_softmax_rows(x);
  for (int i = 0; i < 4; ++i) {
    CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = 0; j < 6; ++j) {
      CHECK(std::isfinite(lp(i, j)));
      CHECK(std::log(p(i, j) + 1e-300) == doctest::Approx(lp(i, j)).epsilon(1e-6));
    }
  }
}

TEST_CASE("attention with T=1 degenerates to the value row") {
  Rng rng(9);
  MatD Q = random_mat(rng, 1, 8), K = random_mat(rng, 1, 8), V = random_mat(rng, 1, 8);
  for (int heads : {1, 2, 4}) {
    MatD out = attention_forward(Q, K, V, heads, static_cast<AttentionCache<double>*>(nullptr));
    CHECK((out - V).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("multi-head attention matches scalar oracle") {
  Rng rng(10);
  const int T = 5, d = 6, heads = 2, dh = d / heads;
  MatD Q = random_mat(rng, T, d), K = random_mat(rng, T, d), V = random_mat(rng, T, d);
  MatD out = attention_forward(Q, K, V, heads, static_cast<AttentionCache<double>*>(nullptr));
  for (int h = 0; h < heads; ++h)
    for (int t = 0; t < T; ++t) {
      // scalar softmax over scores of frame t within head h
      std::vector<double> score(T);
      double mx = -1e300;
      for (int u = 0; u < T; ++u) {
        double s = 0;
        for (int k = 0; k < dh; ++k) s += Q(t, h * dh + k) * K(u, h * dh + k);
        score[std::size_t(u)] = s / std::sqrt(double(dh));
        mx = std::max(mx, score[std::size_t(u)]);
      }
      double z = 0;
      for (int u = 0; u < T; ++u) z += std::exp(score[std::size_t(u)] - mx);
      for (int k = 0; k < dh; ++k) {
        double expect = 0;
        for (int u = 0; u < T; ++u)
          expect += std::exp(score[std::size_t(u)] - mx) / z * V(u, h * dh + k);
        CHECK(out(t, h * dh + k) == doctest::Approx(expect).epsilon(1e-10));
      }
    }
}

TEST_CASE("windowed attention: window >= T equals full attention") {
  Rng rng(11);
  const int T = 7, d = 8;
  MatD Q = random_mat(rng, T, d), K = random_mat(rng, T, d), V = random_mat(rng, T, d);
  MatD full = attention_forward(Q, K, V, 1, static_cast<AttentionCache<double>*>(nullptr));
  for (int window : {T, T + 1, 100}) {
    MatD w = windowed_attention_forward(Q, K, V, window,
                                        static_cast<WindowedAttentionCache<double>*>(nullptr));
    CHECK((w - full).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("windowed attention is block-local") {
  Rng rng(12);
  const int T = 6, d = 4, window = 3;
  MatD Q = random_mat(rng, T, d), K = random_mat(rng, T, d), V = random_mat(rng, T, d);
  MatD out = windowed_attention_forward(Q, K, V, window,
                                        static_cast<WindowedAttentionCache<double>*>(nullptr));
  // each chunk equals full attention computed on the chunk alone
  for (int start : {0, 3}) {
    MatD sub = attention_forward(Q.middleRows(start, 3).eval(), K.middleRows(start, 3).eval(),
                                 V.middleRows(start, 3).eval(), 1,
                                 static_cast<AttentionCache<double>*>(nullptr));
    CHECK((out.middleRows(start, 3) - sub).cwiseAbs().maxCoeff() < 1e-12);
  }
  // frames in the second chunk do not see the first chunk: perturb frame 0
  MatD V2 = V;
  V2.row(0).array() += 100.0;
  MatD out2 = windowed_attention_forward(Q, K, V2, window,
                                         static_cast<WindowedAttentionCache<double>*>(nullptr));
  CHECK((out2.middleRows(3, 3) - out.middleRows(3, 3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out2.middleRows(0, 3) - out.middleRows(0, 3)).cwiseAbs().maxCoeff() > 1.0);
}

TEST_CASE("gradients of a composite network match finite differences") {
  Rng rng(13);
  Linear<double> l1, l2;
  l1.init(4, 6, rng, 0.6);
  l2.init(6, 3, rng, 0.6);
  ReLU<double> relu;
  GELU<double> gelu;
  LayerNorm<double> ln;
  ln.init(3);
  MatD x = random_mat(rng, 5, 4);
  MatD R = random_mat(rng, 5, 3);  // fixed projection making the loss scalar

  ParamList<double> params;
  l1.collect("l1", params);
  l2.collect("l2", params);
  ln.collect("ln", params);

  auto f = [&]() {
    zero_grads(params);
    typename Linear<double>::Cache c1, c2;
    typename ReLU<double>::Cache cr;
    typename GELU<double>::Cache cg;
    typename LayerNorm<double>::Cache cn;
    MatD h1 = l1.forward(x, &c1);
    MatD h2 = relu.forward(h1, &cr);
    MatD h3 = l2.forward(h2, &c2);
    MatD h4 = gelu.forward(h3, &cg);
    MatD h5 = ln.forward(h4, &cn);
    double loss = (h5.array() * R.array()).sum();
    MatD g = R;
    g = ln.backward(cn, g);
    g = gelu.backward(cg, g);
    g = l2.backward(c2, g);
    g = relu.backward(cr, g);
    l1.backward(c1, g);
    return loss;
  };
  CHECK(max_grad_rel_error(params, f) < 1e-7);
}

TEST_CASE("gradient checker flags a corrupted gradient") {
  Rng rng(14);
  Linear<double> lin;
  lin.init(3, 2, rng, 0.5);
  MatD x = random_mat(rng, 4, 3);
  MatD R = random_mat(rng, 4, 2);
  ParamList<double> params;
  lin.collect("lin", params);
  auto f = [&]() {
    zero_grads(params);
    typename Linear<double>::Cache c;
    MatD y = lin.forward(x, &c);
    lin.backward(c, R);
    lin.gW *= 2.0;  // deliberate corruption
    return (y.array() * R.array()).sum();
  };
  CHECK(max_grad_rel_error(params, f) > 1e-2);
}

TEST_CASE("conv and attention gradients match finite differences") {
  Rng rng(15);
  Conv1d<double> conv;
  conv.init(3, 3, 3, 2, rng, 0.5);
  Linear<double> pq, pk, pv;
  pq.init(3, 4, rng, 0.6);
  pk.init(3, 4, rng, 0.6);
  pv.init(3, 4, rng, 0.6);
  const int T = 6;
  MatD x = random_mat(rng, T, 3);
  MatD R = random_mat(rng, T, 4);

  ParamList<double> params;
  conv.collect("conv", params);
  pq.collect("q", params);
  pk.collect("k", params);
  pv.collect("v", params);

  auto f = [&]() {
    zero_grads(params);
    typename Conv1d<double>::Cache cc;
    typename Linear<double>::Cache cq, ck, cv;
    MatD h = conv.forward(x, &cc);
    MatD Q = pq.forward(h, &cq), K = pk.forward(h, &ck), V = pv.forward(h, &cv);
    AttentionCache<double> ca;
    MatD out = attention_forward(Q, K, V, 2, &ca);
    double loss = (out.array() * R.array()).sum();
    MatD gQ, gK, gV;
    attention_backward(ca, R, 2, gQ, gK, gV);
    MatD gh = pq.backward(cq, gQ) + pk.backward(ck, gK) + pv.backward(cv, gV);
    conv.backward(cc, gh);
    return loss;
  };
  CHECK(max_grad_rel_error(params, f) < 1e-7);
}

TEST_CASE("windowed attention gradients match finite differences") {
  Rng rng(16);
  Linear<double> pq, pk, pv;
  pq.init(3, 4, rng, 0.6);
  pk.init(3, 4, rng, 0.6);
  pv.init(3, 4, rng, 0.6);
  const int T = 7;  // window 3 leaves a ragged final chunk
  MatD x = random_mat(rng, T, 3);
  MatD R = random_mat(rng, T, 4);
  ParamList<double> params;
  pq.collect("q", params);
  pk.collect("k", params);
  pv.collect("v", params);
  auto f = [&]() {
    zero_grads(params);
    typename Linear<double>::Cache cq, ck, cv;
    MatD Q = pq.forward(x, &cq), K = pk.forward(x, &ck), V = pv.forward(x, &cv);
    WindowedAttentionCache<double> ca;
    MatD out = windowed_attention_forward(Q, K, V, 3, &ca);
    double loss = (out.array() * R.array()).sum();
    MatD gQ, gK, gV;
    windowed_attention_backward(ca, R, gQ, gK, gV);
    pq.backward(cq, gQ);
    pk.backward(ck, gK);
    pv.backward(cv, gV);
    return loss;
  };
  CHECK(max_grad_rel_error(params, f) < 1e-7);
}

TEST_CASE("AdamW matches a scalar reference implementation") {
  // reference: the published algorithm with decoupled weight decay, written
  // in plain loops over a flat parameter array
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.05;
  std::vector<double> theta = {0.5, -0.3, 1.2, 0.0};
  std::vector<double> m(4, 0.0), v(4, 0.0);

  Linear<double> lin;
  Rng rng(17);
  lin.init(2, 2, rng, 0.0);
  lin.W << 0.5, -0.3, 1.2, 0.0;
  ParamList<double> params;
  params.push_back({"w", &lin.W, &lin.gW});
  AdamW<double> opt;
  opt.lr = lr;
  opt.weight_decay = wd;

  for (int step = 1; step <= 5; ++step) {
    // synthetic gradient: g = theta + step
    for (int i = 0; i < 4; ++i) {
      double g = theta[std::size_t(i)] + step;
      m[std::size_t(i)] = b1 * m[std::size_t(i)] + (1 - b1) * g;
      v[std::size_t(i)] = b2 * v[std::size_t(i)] + (1 - b2) * g * g;
      double mhat = m[std::size_t(i)] / (1 - std::pow(b1, step));
      double vhat = v[std::size_t(i)] / (1 - std::pow(b2, step));
      theta[std::size_t(i)] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta[std::size_t(i)]);
    }
    lin.gW(0, 0) = lin.W(0, 0) + step;
    lin.gW(0, 1) = lin.W(0, 1) + step;
    lin.gW(1, 0) = lin.W(1, 0) + step;
    lin.gW(1, 1) = lin.W(1, 1) + step;
    opt.step(params);
  }
  CHECK(lin.W(0, 0) == doctest::Approx(theta[0]).epsilon(1e-12));
  CHECK(lin.W(0, 1) == doctest::Approx(theta[1]).epsilon(1e-12));
  CHECK(lin.W(1, 0) == doctest::Approx(theta[2]).epsilon(1e-12));
  CHECK(lin.W(1, 1) == doctest::Approx(theta[3]).epsilon(1e-12));
}

TEST_CASE("AdamW with zero gradients applies pure decay") {
  Linear<double> lin;
  Rng rng(18);
  lin.init(2, 2, rng, 1.0);
  MatD before = lin.W;
  ParamList<double> params;
  params.push_back({"w", &lin.W, &lin.gW});
  AdamW<double> opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.5;
  lin.gW.setZero();
  opt.step(params);
  CHECK((lin.W - before * (1.0 - 0.1 * 0.5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cosine learning-rate schedule endpoints and midpoint") {
  CHECK(cosine_lr(1e-4, 1e-7, 0, 1001) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(cosine_lr(1e-4, 1e-7, 1000, 1001) == doctest::Approx(1e-7).epsilon(1e-9));
  CHECK(cosine_lr(1e-4, 1e-7, 500, 1001) == doctest::Approx((1e-4 + 1e-7) / 2).epsilon(1e-9));
  // monotone non-increasing
  double prev = 1e9;
  for (long s = 0; s < 200; ++s) {
    double lr = cosine_lr(1e-4, 1e-7, s, 200);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("parameter checksums detect changes and are stable") {
  Rng rng(19);
  Linear<float> a;
  a.init(3, 3, rng, 0.5);
  ParamList<float> pa;
  a.collect("a", pa);
  std::uint64_t h1 = param_checksum(pa);
  std::uint64_t h2 = param_checksum(pa);
  CHECK(h1 == h2);
  CHECK(param_count(pa) == 12);  // 9 weights + 3 bias
  a.W(1, 1) += 1.0f;
  CHECK(param_checksum(pa) != h1);
}
