#include "edk/diffusion.hpp"

#include <cmath>

namespace edk {

namespace {

double cosine_f(double t, double S) {
  const double x = ((t / S + 0.008) / 1.008) * (M_PI / 2.0);
  const double c = std::cos(x);
  return c * c;
}

}  // namespace

NoiseSchedule NoiseSchedule::cosine(int S) {
  if (S < 1) throw ConfigError("noise schedule needs at least one step");
  NoiseSchedule sched;
  sched.S = S;
  const double f0 = cosine_f(0.0, double(S));

  // Closed-form ᾱ, then per-step β with the 0.999 clip, then recompute ᾱ as
  // the running product so the clip is reflected in the cumulative values.
  std::vector<double> raw(std::size_t(S) + 1);
  for (int t = 0; t <= S; ++t) raw[std::size_t(t)] = cosine_f(double(t), double(S)) / f0;

  sched.bar_alpha.assign(std::size_t(S) + 1, 1.0);
  double prod = 1.0;
  for (int t = 1; t <= S; ++t) {
    double beta = 1.0 - raw[std::size_t(t)] / raw[std::size_t(t) - 1];
    if (beta > 0.999) beta = 0.999;
    prod *= 1.0 - beta;
    sched.bar_alpha[std::size_t(t)] = prod;
  }
  return sched;
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > S) throw ConfigError("schedule timestep out of range");
  return bar_alpha[std::size_t(t)];
}

SampleResult ddim_sample(const DenoiseFn& model, int T, int d, const NoiseSchedule& sched, int K,
                         Rng& rng, double eta) {
  if (T < 1 || d < 1) throw ConfigError("ddim_sample needs positive sequence length and dim");
  if (K < 1 || K > sched.S) throw ConfigError("ddim step count must be in [1, S]");
  if (eta < 0.0) throw ConfigError("ddim eta must be non-negative");

  MatF y(T, d);
  rng.fill_normal(y);

  SampleResult res;
  for (int i = 0; i < K; ++i) {
    const int t = int(std::lround(double(sched.S) * double(K - i) / double(K)));
    const int t_next = int(std::lround(double(sched.S) * double(K - i - 1) / double(K)));

    auto [y0_hat, logits] = model(y, t);
    if (y0_hat.rows() != T || y0_hat.cols() != d)
      throw DataError("denoiser returned a clean-sample estimate of the wrong shape");
    ++res.model_calls;

    const double ab_t = sched.alpha_bar(t);
    const double ab_n = sched.alpha_bar(t_next);
    MatF eps = (y - float(std::sqrt(ab_t)) * y0_hat) / float(std::sqrt(1.0 - ab_t));

    if (t_next == 0) {
      y = y0_hat;
    } else {
      const double sigma =
          eta * std::sqrt((1.0 - ab_n) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_n);
      double dir2 = 1.0 - ab_n - sigma * sigma;
      if (dir2 < 0.0) dir2 = 0.0;  // guard fp round-off at large eta
      y = float(std::sqrt(ab_n)) * y0_hat + float(std::sqrt(dir2)) * eps;
      if (sigma > 0.0) {
        MatF z(T, d);
        rng.fill_normal(z);
        y += float(sigma) * z;
      }
    }
    res.logits = std::move(logits);
  }
  res.y0 = std::move(y);
  return res;
}

StageSequence decode_logits(const MatF& logits, const StageVocabulary& vocab) {
  const int T = int(logits.rows());
  if (T < 1) throw DataError("cannot decode an empty logit matrix");
  if (int(logits.cols()) != int(vocab.size()))
    throw DataError("logit width does not match vocabulary size");
  std::vector<int> labels(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    int best = 0;
    for (int c = 1; c < int(logits.cols()); ++c)
      if (logits(t, c) > logits(t, best)) best = c;  // strict: ties keep the smaller index
    labels[std::size_t(t)] = best;
  }
  return StageSequence(labels, vocab);
}

}  // namespace edk
