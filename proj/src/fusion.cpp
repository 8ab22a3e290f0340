#include "edk/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace edk {

MatF fuse(const FocalFeatureStack& stack) {
  std::vector<int> all(std::size_t(stack.plane_count()));
  std::iota(all.begin(), all.end(), 0);
  return fuse(stack, all);
}

MatF fuse(const FocalFeatureStack& stack, const std::vector<int>& plane_subset) {
  if (plane_subset.empty()) throw DataError("cannot fuse zero planes");
  std::vector<int> subset = plane_subset;
  std::sort(subset.begin(), subset.end());
  if (std::adjacent_find(subset.begin(), subset.end()) != subset.end())
    throw DataError("fuse: duplicate plane index in subset");
  if (subset.front() < 0 || subset.back() >= stack.plane_count())
    throw DataError("fuse: plane index outside [0, " + std::to_string(stack.plane_count()) + ")");
  const int T = stack.frames();
  const int D = stack.dim();
  if (T < 1 || D < 1) throw DataError("cannot fuse an empty feature stack");
  for (const MatF& p : stack.planes) {
    if (int(p.rows()) != T || int(p.cols()) != D)
      throw DataError("fuse: inconsistent plane shapes");
    if (!p.allFinite()) throw DataError("fuse: non-finite feature value");
  }

  const std::size_t n = subset.size();
  std::vector<double> vals(n);
  MatF out(T, D);
  for (int t = 0; t < T; ++t)
    for (int d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < n; ++i)
        vals[i] = double(stack.planes[std::size_t(subset[i])](t, d));
      // canonical ascending order makes the double sum independent of the
      // order the planes arrived in, so permutation invariance is exact
      std::sort(vals.begin(), vals.end());
      double acc = 0.0;
      for (double v : vals) acc += v;
      out(t, d) = float(acc / double(n));
    }
  return out;
}

}  // namespace edk
