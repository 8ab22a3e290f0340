#pragma once

#include <map>
#include <utility>
#include <vector>

#include "edk/stage.hpp"

namespace edk {

// One row of the results table: percentages in [0, 100]; avg is always the
// arithmetic mean of {acc, edit, f1_10, f1_25, f1_50}.
struct MetricReport {
  double acc = 0;
  double edit = 0;
  double f1_10 = 0;
  double f1_25 = 0;
  double f1_50 = 0;
  double avg = 0;
  std::map<int, double> per_class_acc;  // stage id -> %, only stages present in gt
};

// 100 * (#matching frames) / T. Requires equal length.
double frame_accuracy(const StageSequence& pred, const StageSequence& gt);

// 100 * (1 - Levenshtein(segment labels) / max(segment counts)), floored at 0.
// Depends only on the run-length label strings, not on durations.
double edit_score(const StageSequence& pred, const StageSequence& gt);

// Segmental F1 at IoU threshold k/100 (k in percent). Predicted segments are
// visited in temporal order; each matches the same-label ground-truth segment
// of highest IoU and counts as a true positive only when IoU is STRICTLY
// above the threshold and that segment is unclaimed. Unclaimed ground-truth
// segments are false negatives. F1 = 2PR/(P+R), 0 when P+R = 0.
double f1_at(const StageSequence& pred, const StageSequence& gt, double k);

// Per-stage frame accuracy over the stages present in gt; absent stages are
// omitted from the map.
std::map<int, double> per_class_accuracy(const StageSequence& pred, const StageSequence& gt);

MetricReport compute_report(const StageSequence& pred, const StageSequence& gt);

enum class Aggregate { PerSeq, Pooled };

// Dataset-level report over (pred, gt) pairs.
//  - PerSeq: every metric is computed per sequence and averaged uniformly.
//  - Pooled: frame counts (accuracy, per-class) and segment match counts
//    (F1) are pooled across sequences before the ratio; edit score has no
//    pooled counting form and stays a per-sequence average.
MetricReport aggregate_reports(const std::vector<std::pair<StageSequence, StageSequence>>& pairs,
                               Aggregate mode = Aggregate::PerSeq);

}  // namespace edk
