#include "edk/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace edk {

namespace {

void require_equal_frames(const StageSequence& pred, const StageSequence& gt) {
  if (pred.frames() != gt.frames())
    throw DataError("prediction and ground truth differ in length: " +
                    std::to_string(pred.frames()) + " vs " + std::to_string(gt.frames()));
}

int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<int> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = int(j);
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = int(i);
    for (std::size_t j = 1; j <= n; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

// Interval IoU; segments with different labels never match.
double segment_iou(const Segment& p, const Segment& g) {
  if (p.stage != g.stage) return 0.0;
  int inter = std::max(0, std::min(p.end, g.end) - std::max(p.begin, g.begin));
  int uni = std::max(p.end, g.end) - std::min(p.begin, g.begin);
  return double(inter) / double(uni);
}

struct F1Counts {
  int tp = 0, fp = 0, fn = 0;
};

F1Counts f1_counts(const StageSequence& pred, const StageSequence& gt, double k) {
  const double threshold = k / 100.0;
  SegmentList sp = segments_of(pred), sg = segments_of(gt);
  std::vector<bool> claimed(std::size_t(sg.count()), false);
  F1Counts c;
  for (const Segment& p : sp.segments()) {
    double best = -1.0;
    int best_g = -1;
    for (int g = 0; g < sg.count(); ++g) {
      double iou = segment_iou(p, sg.at(g));
      if (iou > best) {
        best = iou;
        best_g = g;
      }
    }
    if (best > threshold && !claimed[std::size_t(best_g)]) {
      claimed[std::size_t(best_g)] = true;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = int(std::count(claimed.begin(), claimed.end(), false));
  return c;
}

double f1_from_counts(const F1Counts& c) {
  double precision = c.tp + c.fp > 0 ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  double recall = c.tp + c.fn > 0 ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double mean_of_five(const MetricReport& r) {
  return (r.acc + r.edit + r.f1_10 + r.f1_25 + r.f1_50) / 5.0;
}

}  // namespace

double frame_accuracy(const StageSequence& pred, const StageSequence& gt) {
  require_equal_frames(pred, gt);
  int hits = 0;
  for (int t = 0; t < gt.frames(); ++t)
    if (pred.label(t) == gt.label(t)) ++hits;
  return 100.0 * double(hits) / double(gt.frames());
}

double edit_score(const StageSequence& pred, const StageSequence& gt) {
  if (!(pred.vocab() == gt.vocab()))
    throw DataError("edit score requires a shared stage vocabulary");
  std::vector<int> a = segments_of(pred).stage_string();
  std::vector<int> b = segments_of(gt).stage_string();
  double dist = levenshtein(a, b);
  double denom = double(std::max(a.size(), b.size()));
  return std::max(0.0, 100.0 * (1.0 - dist / denom));
}

double f1_at(const StageSequence& pred, const StageSequence& gt, double k) {
  require_equal_frames(pred, gt);
  if (k <= 0.0 || k >= 100.0) throw ConfigError("F1 overlap threshold must lie in (0, 100)");
  return f1_from_counts(f1_counts(pred, gt, k));
}

std::map<int, double> per_class_accuracy(const StageSequence& pred, const StageSequence& gt) {
  require_equal_frames(pred, gt);
  std::map<int, int> total, hit;
  for (int t = 0; t < gt.frames(); ++t) {
    ++total[gt.label(t)];
    if (pred.label(t) == gt.label(t)) ++hit[gt.label(t)];
  }
  std::map<int, double> out;
  for (const auto& [stage, n] : total) out[stage] = 100.0 * double(hit[stage]) / double(n);
  return out;
}

MetricReport compute_report(const StageSequence& pred, const StageSequence& gt) {
  MetricReport r;
  r.acc = frame_accuracy(pred, gt);
  r.edit = edit_score(pred, gt);
  r.f1_10 = f1_at(pred, gt, 10);
  r.f1_25 = f1_at(pred, gt, 25);
  r.f1_50 = f1_at(pred, gt, 50);
  r.avg = mean_of_five(r);
  r.per_class_acc = per_class_accuracy(pred, gt);
  return r;
}

MetricReport aggregate_reports(const std::vector<std::pair<StageSequence, StageSequence>>& pairs,
                               Aggregate mode) {
  if (pairs.empty()) throw DataError("cannot aggregate metrics over zero sequences");
  MetricReport out;

  if (mode == Aggregate::PerSeq) {
    std::map<int, double> class_sum;
    std::map<int, int> class_n;
    for (const auto& [pred, gt] : pairs) {
      MetricReport r = compute_report(pred, gt);
      out.acc += r.acc;
      out.edit += r.edit;
      out.f1_10 += r.f1_10;
      out.f1_25 += r.f1_25;
      out.f1_50 += r.f1_50;
      for (const auto& [stage, v] : r.per_class_acc) {
        class_sum[stage] += v;
        ++class_n[stage];
      }
    }
    const double n = double(pairs.size());
    out.acc /= n;
    out.edit /= n;
    out.f1_10 /= n;
    out.f1_25 /= n;
    out.f1_50 /= n;
    for (const auto& [stage, s] : class_sum) out.per_class_acc[stage] = s / double(class_n[stage]);
  } else {
    long hits = 0, frames = 0;
    F1Counts c10, c25, c50;
    std::map<int, long> class_total, class_hit;
    for (const auto& [pred, gt] : pairs) {
      require_equal_frames(pred, gt);
      out.edit += edit_score(pred, gt);
      for (int t = 0; t < gt.frames(); ++t) {
        ++frames;
        ++class_total[gt.label(t)];
        if (pred.label(t) == gt.label(t)) {
          ++hits;
          ++class_hit[gt.label(t)];
        }
      }
      for (double k : {10.0, 25.0, 50.0}) {
        F1Counts c = f1_counts(pred, gt, k);
        F1Counts& acc = k == 10.0 ? c10 : k == 25.0 ? c25 : c50;
        acc.tp += c.tp;
        acc.fp += c.fp;
        acc.fn += c.fn;
      }
    }
    out.acc = 100.0 * double(hits) / double(frames);
    out.edit /= double(pairs.size());
    out.f1_10 = f1_from_counts(c10);
    out.f1_25 = f1_from_counts(c25);
    out.f1_50 = f1_from_counts(c50);
    for (const auto& [stage, n] : class_total)
      out.per_class_acc[stage] = 100.0 * double(class_hit[stage]) / double(n);
  }

  out.avg = mean_of_five(out);
  return out;
}

}  // namespace edk
