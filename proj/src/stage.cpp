#include "edk/stage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace edk {

StageVocabulary::StageVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw ConfigError("stage vocabulary needs at least 2 entries");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ConfigError("stage vocabulary entries must be non-empty");
    if (!seen.insert(n).second) throw ConfigError("duplicate stage name: " + n);
  }
}

StageVocabulary StageVocabulary::mfhe15() {
  return StageVocabulary({"tPB2", "tPNa", "tPNf", "t2", "t3", "t4", "t5", "t6", "t7", "t8",
                          "t9+", "tM", "tSB", "tB", "tEB"});
}

StageVocabulary StageVocabulary::sfhe12() {
  return StageVocabulary(
      {"tPNa", "tPNf", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "tSC", "tM", "tSB"});
}

StageVocabulary StageVocabulary::generic(int c) {
  if (c < 2) throw ConfigError("generic vocabulary needs c >= 2");
  std::vector<std::string> names;
  names.reserve(std::size_t(c));
  for (int i = 0; i < c; ++i) names.push_back("s" + std::to_string(i));
  return StageVocabulary(std::move(names));
}

StageVocabulary StageVocabulary::preset(const std::string& name, int c) {
  if (name == "mfhe15") return mfhe15();
  if (name == "sfhe12") return sfhe12();
  if (name == "generic") return generic(c);
  throw ConfigError("unknown vocabulary preset: " + name);
}

StageSequence::StageSequence(std::vector<int> labels, StageVocabulary vocab)
    : labels_(std::move(labels)), vocab_(std::move(vocab)) {
  if (labels_.empty()) throw DataError("stage sequence must have at least one frame");
  for (int id : labels_)
    if (id < 0 || id >= vocab_.size())
      throw DataError("stage id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(vocab_.size()));
}

SegmentList::SegmentList(std::vector<Segment> segments) : segments_(std::move(segments)) {
  int cursor = 0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    if (s.begin != cursor || s.end <= s.begin)
      throw DataError("segments must tile [0, T) without gaps or overlaps");
    if (i > 0 && segments_[i - 1].stage == s.stage)
      throw DataError("adjacent segments must carry distinct stages");
    cursor = s.end;
  }
}

std::vector<int> SegmentList::stage_string() const {
  std::vector<int> out;
  out.reserve(segments_.size());
  for (const Segment& s : segments_) out.push_back(s.stage);
  return out;
}

BoundaryTarget::BoundaryTarget(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_)
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("boundary target values must lie in [0, 1]");
}

MatF one_hot(const StageSequence& seq) {
  MatF m = MatF::Zero(seq.frames(), seq.vocab().size());
  for (int t = 0; t < seq.frames(); ++t) m(t, seq.label(t)) = 1.0f;
  return m;
}

SegmentList segments_of(const StageSequence& seq) {
  std::vector<Segment> segs;
  int begin = 0;
  for (int t = 1; t <= seq.frames(); ++t) {
    if (t == seq.frames() || seq.label(t) != seq.label(begin)) {
      segs.push_back({seq.label(begin), begin, t});
      begin = t;
    }
  }
  return SegmentList(std::move(segs));
}

StageSequence expand(const SegmentList& segs, const StageVocabulary& vocab) {
  std::vector<int> labels;
  labels.reserve(std::size_t(segs.frames()));
  for (const Segment& s : segs.segments())
    for (int t = s.begin; t < s.end; ++t) labels.push_back(s.stage);
  return StageSequence(std::move(labels), vocab);
}

BoundaryTarget boundary_targets(const StageSequence& seq, double sigma) {
  if (sigma < 0) throw ConfigError("boundary sigma must be >= 0");
  const int T = seq.frames();
  std::vector<double> raw(std::size_t(T), 0.0);
  for (int t = 1; t < T; ++t)
    if (seq.label(t) != seq.label(t - 1)) raw[std::size_t(t)] = 1.0;
  if (sigma == 0.0) return BoundaryTarget(std::move(raw));

  // Peak-normalized kernel: each impulse keeps value 1 at its own frame so
  // the smoothed targets stay meaningful for a 0.5 detection threshold;
  // overlapping transitions sum and are clamped below.
  const int half = int(std::ceil(3.0 * sigma));
  std::vector<double> kernel(std::size_t(2 * half + 1));
  for (int j = -half; j <= half; ++j)
    kernel[std::size_t(j + half)] = std::exp(-0.5 * double(j) * double(j) / (sigma * sigma));

  std::vector<double> out(std::size_t(T), 0.0);
  for (int t = 0; t < T; ++t) {
    if (raw[std::size_t(t)] == 0.0) continue;
    for (int j = -half; j <= half; ++j) {
      int u = t + j;
      if (u >= 0 && u < T) out[std::size_t(u)] += kernel[std::size_t(j + half)];
    }
  }
  for (double& v : out) v = std::min(1.0, v);
  return BoundaryTarget(std::move(out));
}

bool is_monotone(const StageSequence& seq) {
  for (int t = 1; t < seq.frames(); ++t)
    if (seq.vocab().rank(seq.label(t)) < seq.vocab().rank(seq.label(t - 1))) return false;
  return true;
}

StageSequence read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed label file " + path + ": " + e.what());
  }
  if (!j.contains("vocab") || !j.contains("labels"))
    throw DataError("label file must contain \"vocab\" and \"labels\": " + path);
  StageVocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
  return StageSequence(j.at("labels").get<std::vector<int>>(), std::move(vocab));
}

void write_label_file(const StageSequence& seq, const std::string& path) {
  nlohmann::json j;
  j["vocab"] = seq.vocab().names();
  j["labels"] = seq.labels();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write label file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace edk
