#pragma once

#include <string>
#include <vector>

#include "edk/common.hpp"

namespace edk {

// Ordered stage vocabulary. The position of a name is both its integer id and
// its rank in developmental order.
class StageVocabulary {
 public:
  explicit StageVocabulary(std::vector<std::string> names);

  static StageVocabulary mfhe15();
  static StageVocabulary sfhe12();
  // "s0".."s{c-1}" placeholder names for synthetic experiments.
  static StageVocabulary generic(int c);
  // Resolves "mfhe15"/"sfhe12" or builds a generic vocabulary of size c.
  static StageVocabulary preset(const std::string& name, int c = 0);

  int size() const { return int(names_.size()); }
  const std::string& name(int id) const { return names_.at(std::size_t(id)); }
  const std::vector<std::string>& names() const { return names_; }
  int rank(int id) const { return id; }
  bool operator==(const StageVocabulary& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
};

// Per-frame integer stage labels over a vocabulary.
class StageSequence {
 public:
  StageSequence(std::vector<int> labels, StageVocabulary vocab);

  int frames() const { return int(labels_.size()); }
  int label(int t) const { return labels_[std::size_t(t)]; }
  const std::vector<int>& labels() const { return labels_; }
  const StageVocabulary& vocab() const { return vocab_; }

 private:
  std::vector<int> labels_;
  StageVocabulary vocab_;
};

struct Segment {
  int stage;
  int begin;  // inclusive
  int end;    // exclusive
  bool operator==(const Segment&) const = default;
};

// Run-length view of a StageSequence: segments tile [0, T), adjacent segments
// carry distinct stages.
class SegmentList {
 public:
  explicit SegmentList(std::vector<Segment> segments);

  int count() const { return int(segments_.size()); }
  const Segment& at(int i) const { return segments_[std::size_t(i)]; }
  const std::vector<Segment>& segments() const { return segments_; }
  auto begin() const { return segments_.begin(); }
  auto end() const { return segments_.end(); }
  int frames() const { return segments_.empty() ? 0 : segments_.back().end; }
  std::vector<int> stage_string() const;

 private:
  std::vector<Segment> segments_;
};

// Per-frame boundary supervision values in [0, 1].
class BoundaryTarget {
 public:
  explicit BoundaryTarget(std::vector<double> values);
  int frames() const { return int(values_.size()); }
  double value(int t) const { return values_[std::size_t(t)]; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

MatF one_hot(const StageSequence& seq);
SegmentList segments_of(const StageSequence& seq);
StageSequence expand(const SegmentList& segs, const StageVocabulary& vocab);

// Transition-frame impulses (first frame of every segment except the first),
// optionally smoothed with a normalized Gaussian of half-width ceil(3*sigma),
// clamped to [0, 1].
BoundaryTarget boundary_targets(const StageSequence& seq, double sigma);

bool is_monotone(const StageSequence& seq);

// Label file: UTF-8 JSON {"vocab": [names], "labels": [ids]}.
StageSequence read_label_file(const std::string& path);
void write_label_file(const StageSequence& seq, const std::string& path);

}  // namespace edk
