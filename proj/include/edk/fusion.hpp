#pragma once

// Focal fusion: per-frame, per-channel mean over focal planes. Each element
// is accumulated in 64-bit over a canonical (sorted) ordering of the plane
// values, so fusion is exactly invariant to plane permutation, then rounded
// once to storage precision.

#include <vector>

#include "edk/common.hpp"
#include "edk/frame.hpp"

namespace edk {

// Mean over all planes -> T x D fused features.
MatF fuse(const FocalFeatureStack& stack);

// Mean over a chosen subset of plane indices (e.g. {central} or {0, 3, 6}).
MatF fuse(const FocalFeatureStack& stack, const std::vector<int>& plane_subset);

}  // namespace edk
