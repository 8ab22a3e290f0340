#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <utility>
#include <vector>

#include "edk/metrics.hpp"

using namespace edk;

namespace {

// -- independent oracles (deliberately different algorithms) ----------------

double acc_oracle(const StageSequence& p, const StageSequence& g) {
  double hits = 0;
  for (int t = 0; t < g.frames(); ++t) hits += (p.label(t) == g.label(t)) ? 1.0 : 0.0;
  return 100.0 * hits / double(g.frames());
}

// Top-down memoized recursion, as opposed to the iterative two-row DP in the
// implementation.
int lev_rec(const std::vector<int>& a, const std::vector<int>& b, std::size_t i, std::size_t j,
            std::map<std::pair<std::size_t, std::size_t>, int>& memo) {
  if (i == 0) return int(j);
  if (j == 0) return int(i);
  auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  int del = lev_rec(a, b, i - 1, j, memo) + 1;
  int ins = lev_rec(a, b, i, j - 1, memo) + 1;
  int sub = lev_rec(a, b, i - 1, j - 1, memo) + (a[i - 1] == b[j - 1] ? 0 : 1);
  int best = std::min({del, ins, sub});
  memo[key] = best;
  return best;
}

double edit_oracle(const StageSequence& p, const StageSequence& g) {
  std::vector<int> a = segments_of(p).stage_string();
  std::vector<int> b = segments_of(g).stage_string();
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  int d = lev_rec(a, b, a.size(), b.size(), memo);
  return std::max(0.0, 100.0 * (1.0 - double(d) / double(std::max(a.size(), b.size()))));
}

// Frame-set IoU (explicit frame counting, not interval arithmetic), greedy
// claim in temporal order.
double f1_oracle(const StageSequence& p, const StageSequence& g, double k) {
  SegmentList sp = segments_of(p), sg = segments_of(g);
  std::vector<bool> used(std::size_t(sg.count()), false);
  int tp = 0, fp = 0;
  for (int i = 0; i < sp.count(); ++i) {
    const Segment& ps = sp.at(i);
    double best = -1;
    int arg = -1;
    for (int j = 0; j < sg.count(); ++j) {
      const Segment& gs = sg.at(j);
      int inter = 0, uni = 0;
      for (int t = 0; t < g.frames(); ++t) {
        bool in_p = t >= ps.begin && t < ps.end;
        bool in_g = t >= gs.begin && t < gs.end;
        if (in_p && in_g) ++inter;
        if (in_p || in_g) ++uni;
      }
      double iou = (ps.stage == gs.stage) ? double(inter) / double(uni) : 0.0;
      if (iou > best) {
        best = iou;
        arg = j;
      }
    }
    if (best > k / 100.0 && !used[std::size_t(arg)]) {
      used[std::size_t(arg)] = true;
      ++tp;
    } else {
      ++fp;
    }
  }
  int fn = 0;
  for (bool u : used)
    if (!u) ++fn;
  double prec = tp + fp > 0 ? double(tp) / (tp + fp) : 0.0;
  double rec = tp + fn > 0 ? double(tp) / (tp + fn) : 0.0;
  return prec + rec > 0 ? 100.0 * 2 * prec * rec / (prec + rec) : 0.0;
}

StageSequence random_seq(Rng& rng, const StageVocabulary& v, int T, bool runs) {
  std::vector<int> labels;
  labels.reserve(std::size_t(T));
  if (runs) {
    while (int(labels.size()) < T) {
      int stage = int(rng.uniform_int(std::uint64_t(v.size())));
      int len = 1 + int(rng.uniform_int(8));
      for (int i = 0; i < len && int(labels.size()) < T; ++i) labels.push_back(stage);
    }
  } else {
    for (int t = 0; t < T; ++t) labels.push_back(int(rng.uniform_int(std::uint64_t(v.size()))));
  }
  return StageSequence(std::move(labels), v);
}

}  // namespace

TEST_CASE("frame accuracy basics") {
  StageVocabulary v = StageVocabulary::generic(3);
  StageSequence a({0, 1, 2, 2}, v), b({1, 0, 0, 1}, v);
  CHECK(frame_accuracy(a, a) == 100.0);
  CHECK(frame_accuracy(a, b) == 0.0);
  CHECK(frame_accuracy(StageSequence({0, 1}, v), StageSequence({0, 2}, v)) == 50.0);
  CHECK_THROWS_AS(frame_accuracy(a, StageSequence({0}, v)), DataError);
}

TEST_CASE("edit score basics") {
  StageVocabulary v = StageVocabulary::generic(3);
  StageSequence same({0, 0, 1, 2}, v);
  CHECK(edit_score(same, same) == 100.0);

  // one predicted segment vs three distinct ground-truth segments:
  // Levenshtein(["0"], ["0","1","2"]) = 2 insertions -> 100*(1 - 2/3)
  StageSequence pred({0, 0, 0, 0, 0, 0}, v);
  StageSequence gt({0, 0, 1, 1, 2, 2}, v);
  CHECK(edit_score(pred, gt) == doctest::Approx(100.0 * (1.0 - 2.0 / 3.0)).epsilon(1e-12));

  CHECK_THROWS_AS(edit_score(StageSequence({0}, v), StageSequence({0}, StageVocabulary::generic(4))),
                  DataError);
}

TEST_CASE("edit score equals recursive oracle on random pairs") {
  Rng rng(31);
  StageVocabulary v = StageVocabulary::generic(5);
  for (int trial = 0; trial < 1000; ++trial) {
    int T = 1 + int(rng.uniform_int(30));
    StageSequence p = random_seq(rng, v, T, trial % 2 == 0);
    StageSequence g = random_seq(rng, v, T, trial % 3 == 0);
    CHECK(edit_score(p, g) == doctest::Approx(edit_oracle(p, g)).epsilon(1e-12));
  }
}

TEST_CASE("edit score ignores segment durations") {
  Rng rng(37);
  StageVocabulary v = StageVocabulary::generic(4);
  for (int trial = 0; trial < 100; ++trial) {
    StageSequence p = random_seq(rng, v, 12, true);
    StageSequence g = random_seq(rng, v, 12, true);
    double base = edit_score(p, g);
    // triple every frame: same segment strings, same score
    std::vector<int> p3, g3;
    for (int t = 0; t < 12; ++t)
      for (int r = 0; r < 3; ++r) {
        p3.push_back(p.label(t));
        g3.push_back(g.label(t));
      }
    CHECK(edit_score(StageSequence(p3, v), StageSequence(g3, v)) ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("segmental F1 basics and threshold edge") {
  StageVocabulary v = StageVocabulary::generic(3);
  StageSequence same({0, 0, 1, 1, 2}, v);
  CHECK(f1_at(same, same, 10) == 100.0);
  CHECK(f1_at(same, same, 25) == 100.0);
  CHECK(f1_at(same, same, 50) == 100.0);

  // pred's first segment covers half of the single gt segment: IoU = 0.5
  // exactly. Strict comparison: true positive at k=25, not at k=50.
  StageSequence pred({0, 0, 0, 0, 1, 1, 1, 1}, v);
  StageSequence gt({0, 0, 0, 0, 0, 0, 0, 0}, v);
  // k=25: tp=1 (IoU 0.5 > 0.25), fp=1 (the label-1 segment), fn=0
  CHECK(f1_at(pred, gt, 25) == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-12));
  // k=50: 0.5 > 0.5 is false -> tp=0
  CHECK(f1_at(pred, gt, 50) == 0.0);

  CHECK_THROWS_AS(f1_at(same, same, 0), ConfigError);
  CHECK_THROWS_AS(f1_at(same, same, 100), ConfigError);
}

TEST_CASE("segmental F1 equals exhaustive frame-set oracle on random pairs") {
  Rng rng(41);
  StageVocabulary v = StageVocabulary::generic(4);
  for (int trial = 0; trial < 500; ++trial) {
    int T = 2 + int(rng.uniform_int(40));
    StageSequence p = random_seq(rng, v, T, trial % 2 == 0);
    StageSequence g = random_seq(rng, v, T, true);
    for (double k : {10.0, 25.0, 50.0})
      CHECK(f1_at(p, g, k) == doctest::Approx(f1_oracle(p, g, k)).epsilon(1e-12));
  }
}

TEST_CASE("F1 is non-increasing in the overlap threshold") {
  Rng rng(43);
  StageVocabulary v = StageVocabulary::generic(5);
  for (int trial = 0; trial < 300; ++trial) {
    int T = 2 + int(rng.uniform_int(50));
    StageSequence p = random_seq(rng, v, T, true);
    StageSequence g = random_seq(rng, v, T, true);
    double prev = 100.0;
    for (double k : {5.0, 10.0, 25.0, 50.0, 75.0, 90.0}) {
      double f = f1_at(p, g, k);
      CHECK(f <= prev + 1e-12);
      prev = f;
    }
  }
}

TEST_CASE("per-class accuracy") {
  StageVocabulary v = StageVocabulary::generic(4);
  StageSequence gt({0, 0, 1, 1, 1, 3}, v);
  StageSequence pred({0, 1, 1, 1, 0, 3}, v);
  auto m = per_class_accuracy(pred, gt);
  REQUIRE(m.size() == 3);  // class 2 absent from gt -> omitted
  CHECK(m.at(0) == 50.0);
  CHECK(m.at(1) == doctest::Approx(100.0 * 2.0 / 3.0));
  CHECK(m.at(3) == 100.0);
  CHECK(m.find(2) == m.end());

  auto self = per_class_accuracy(gt, gt);
  for (const auto& [stage, acc] : self) CHECK(acc == 100.0);
}

TEST_CASE("accuracy metrics are invariant under consistent relabeling") {
  Rng rng(47);
  StageVocabulary v = StageVocabulary::generic(4);
  // permutation 0->2, 1->3, 2->1, 3->0
  const int perm[4] = {2, 3, 1, 0};
  for (int trial = 0; trial < 100; ++trial) {
    int T = 1 + int(rng.uniform_int(30));
    StageSequence p = random_seq(rng, v, T, true);
    StageSequence g = random_seq(rng, v, T, true);
    std::vector<int> pp, gp;
    for (int t = 0; t < T; ++t) {
      pp.push_back(perm[p.label(t)]);
      gp.push_back(perm[g.label(t)]);
    }
    StageSequence p2(pp, v), g2(gp, v);
    CHECK(frame_accuracy(p, g) == frame_accuracy(p2, g2));
    auto a = per_class_accuracy(p, g), b = per_class_accuracy(p2, g2);
    for (const auto& [stage, acc] : a) CHECK(b.at(perm[stage]) == acc);
  }
}

TEST_CASE("all metrics live in [0, 100] and hit 100 on identical input") {
  Rng rng(53);
  StageVocabulary v = StageVocabulary::generic(5);
  for (int trial = 0; trial < 200; ++trial) {
    int T = 1 + int(rng.uniform_int(40));
    StageSequence p = random_seq(rng, v, T, trial % 2 == 0);
    StageSequence g = random_seq(rng, v, T, true);
    MetricReport r = compute_report(p, g);
    for (double x : {r.acc, r.edit, r.f1_10, r.f1_25, r.f1_50, r.avg}) {
      CHECK(x >= 0.0);
      CHECK(x <= 100.0);
    }
    CHECK(r.avg == doctest::Approx((r.acc + r.edit + r.f1_10 + r.f1_25 + r.f1_50) / 5.0)
                       .epsilon(1e-12));
    MetricReport id = compute_report(g, g);
    CHECK(id.acc == 100.0);
    CHECK(id.edit == 100.0);
    CHECK(id.f1_10 == 100.0);
    CHECK(id.f1_25 == 100.0);
    CHECK(id.f1_50 == 100.0);
    CHECK(id.avg == 100.0);
  }
}

TEST_CASE("aggregation modes") {
  StageVocabulary v = StageVocabulary::generic(3);
  StageSequence g1({0, 0, 1, 1}, v), p1({0, 0, 1, 0}, v);
  StageSequence g2({2, 2}, v), p2({2, 2}, v);
  std::vector<std::pair<StageSequence, StageSequence>> pairs = {{p1, g1}, {p2, g2}};

  // single pair: aggregate == per-sequence report
  MetricReport single = aggregate_reports({{p1, g1}}, Aggregate::PerSeq);
  MetricReport direct = compute_report(p1, g1);
  CHECK(single.acc == direct.acc);
  CHECK(single.edit == direct.edit);
  CHECK(single.f1_50 == direct.f1_50);
  CHECK(single.avg == doctest::Approx(direct.avg));

  MetricReport per = aggregate_reports(pairs, Aggregate::PerSeq);
  CHECK(per.acc == doctest::Approx((75.0 + 100.0) / 2.0));
  CHECK(per.avg == doctest::Approx((per.acc + per.edit + per.f1_10 + per.f1_25 + per.f1_50) / 5.0));

  MetricReport pooled = aggregate_reports(pairs, Aggregate::Pooled);
  CHECK(pooled.acc == doctest::Approx(100.0 * 5.0 / 6.0));  // frame-weighted
  CHECK(pooled.avg ==
        doctest::Approx((pooled.acc + pooled.edit + pooled.f1_10 + pooled.f1_25 + pooled.f1_50) / 5.0));
  // per-class pooling: class 0 has 2 gt frames (both hit), class 1 has 2 gt
  // frames (1 hit, the final frame is predicted 0), class 2 has 2 (both hit)
  CHECK(pooled.per_class_acc.at(0) == 100.0);
  CHECK(pooled.per_class_acc.at(1) == 50.0);
  CHECK(pooled.per_class_acc.at(2) == 100.0);

  CHECK_THROWS_AS(aggregate_reports({}, Aggregate::PerSeq), DataError);
}
