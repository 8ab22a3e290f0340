#pragma once

// The four Stage-2 losses and their weighted objective. Every loss accepts an
// optional per-frame mask (1 = real frame, 0 = padding); masked frames are
// excluded from the mean and receive exactly-zero gradients, so padded batch
// members behave identically to their unpadded selves. Gradient outputs are
// assigned (not accumulated) and are unweighted; callers apply loss weights
// and batch scaling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "edk/common.hpp"
#include "edk/nn.hpp"
#include "edk/stage.hpp"

namespace edk {

// 1 = real frame, 0 = padding; an empty mask means every frame is real.
using FrameMask = std::vector<std::uint8_t>;

struct LossWeights {
  double sem = 0.8;
  double smooth = 0.3;
  double bound = 0.5;
  double diff = 1.0;

  void validate() const {
    if (sem < 0 || smooth < 0 || bound < 0 || diff < 0)
      throw ConfigError("loss weights must be non-negative");
  }
};

struct LossParts {
  double sem = 0.0, smooth = 0.0, bound = 0.0, diff = 0.0;
};

inline double total_loss(const LossParts& p, const LossWeights& w) {
  w.validate();
  return w.sem * p.sem + w.smooth * p.smooth + w.bound * p.bound + w.diff * p.diff;
}

// Adjacent-frame log-probability jumps larger than this are clamped so a
// single hard transition cannot dominate the smoothing term.
inline constexpr double kSmoothTau = 4.0;

namespace detail {

inline void check_mask(const FrameMask& mask, Eigen::Index T) {
  if (!mask.empty() && Eigen::Index(mask.size()) != T)
    throw DataError("frame mask length disagrees with sequence length");
}

inline bool live(const FrameMask& mask, Eigen::Index t) {
  return mask.empty() || mask[std::size_t(t)] != 0;
}

inline Eigen::Index live_count(const FrameMask& mask, Eigen::Index T) {
  if (mask.empty()) return T;
  Eigen::Index n = 0;
  for (Eigen::Index t = 0; t < T; ++t)
    if (mask[std::size_t(t)]) ++n;
  return n;
}

}  // namespace detail

// Mean per-frame cross-entropy over the real frames.
template <typename S>
double sem_loss(const Mat<S>& logits, const std::vector<int>& y, const FrameMask& mask = {},
                Mat<S>* grad = nullptr) {
  const Eigen::Index T = logits.rows(), c = logits.cols();
  if (Eigen::Index(y.size()) != T) throw DataError("label count disagrees with logit rows");
  for (int id : y)
    if (id < 0 || id >= c) throw DataError("label outside logit width");
  detail::check_mask(mask, T);
  const Eigen::Index n = detail::live_count(mask, T);
  if (n == 0) throw DataError("loss over zero unmasked frames");

  Mat<S> logp = nn::log_softmax_rows(logits);
  double loss = 0.0;
  for (Eigen::Index t = 0; t < T; ++t)
    if (detail::live(mask, t)) loss -= double(logp(t, y[std::size_t(t)]));
  loss /= double(n);

  if (grad) {
    grad->setZero(T, c);
    for (Eigen::Index t = 0; t < T; ++t) {
      if (!detail::live(mask, t)) continue;
      grad->row(t) = logp.row(t).array().exp();
      (*grad)(t, y[std::size_t(t)]) -= S(1);
      grad->row(t) /= S(double(n));
    }
  }
  return loss;
}

// Identical contract applied to the denoiser head logits.
template <typename S>
double diff_loss(const Mat<S>& logits, const std::vector<int>& y, const FrameMask& mask = {},
                 Mat<S>* grad = nullptr) {
  return sem_loss(logits, y, mask, grad);
}

// Truncated MSE of adjacent-frame log-probability differences with a
// stop-gradient on the earlier frame: mean over valid frame pairs and classes
// of min(Δ², τ²), Δ = log p(t,k) − log p(t−1,k).
template <typename S>
double smooth_loss(const Mat<S>& logits, const FrameMask& mask = {}, Mat<S>* grad = nullptr) {
  const Eigen::Index T = logits.rows(), c = logits.cols();
  if (T < 2) throw DataError("smooth loss needs at least two frames");
  detail::check_mask(mask, T);

  Mat<S> logp = nn::log_softmax_rows(logits);
  Mat<S> glogp = Mat<S>::Zero(T, c);
  Eigen::Index pairs = 0;
  for (Eigen::Index t = 1; t < T; ++t)
    if (detail::live(mask, t) && detail::live(mask, t - 1)) ++pairs;

  double loss = 0.0;
  if (pairs > 0) {
    const double denom = double(pairs) * double(c);
    for (Eigen::Index t = 1; t < T; ++t) {
      if (!(detail::live(mask, t) && detail::live(mask, t - 1))) continue;
      for (Eigen::Index k = 0; k < c; ++k) {
        const double delta = double(logp(t, k)) - double(logp(t - 1, k));
        const double sq = delta * delta;
        if (sq < kSmoothTau * kSmoothTau) {
          loss += sq;
          glogp(t, k) += S(2.0 * delta / denom);
        } else {
          loss += kSmoothTau * kSmoothTau;
        }
      }
    }
    loss /= denom;
  }

  if (grad) {
    grad->setZero(T, c);
    if (pairs > 0) {
      // push through log-softmax: g_x = g_logp − p · rowsum(g_logp)
      Mat<S> p = logp.array().exp();
      for (Eigen::Index t = 0; t < T; ++t) {
        const S rowsum = glogp.row(t).sum();
        grad->row(t) = glogp.row(t) - p.row(t) * rowsum;
      }
    }
  }
  return loss;
}

// Mean per-frame binary cross-entropy between sigmoid(logits) and the soft
// boundary targets, in the numerically stable logit form.
template <typename S>
double bound_loss(const Mat<S>& logits, const BoundaryTarget& targets, const FrameMask& mask = {},
                  Mat<S>* grad = nullptr) {
  const Eigen::Index T = logits.rows();
  if (logits.cols() != 1) throw DataError("boundary logits must be a single column");
  if (targets.frames() != int(T)) throw DataError("boundary target length disagrees with logits");
  detail::check_mask(mask, T);
  const Eigen::Index n = detail::live_count(mask, T);
  if (n == 0) throw DataError("loss over zero unmasked frames");

  double loss = 0.0;
  if (grad) grad->setZero(T, 1);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!detail::live(mask, t)) continue;
    const double x = double(logits(t, 0));
    const double y = targets.value(int(t));
    loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    if (grad) (*grad)(t, 0) = S((1.0 / (1.0 + std::exp(-x)) - y) / double(n));
  }
  return loss / double(n);
}

}  // namespace edk
