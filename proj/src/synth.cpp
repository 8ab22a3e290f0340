#include "edk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "edk/binio.hpp"

namespace edk {

namespace {

// Sub-stream indices under the dataset root RNG.
constexpr std::uint64_t kProtoStream = 0;
constexpr std::uint64_t kRecordBase = 1;

// Rescale durations to total exactly `target`, keeping order, proportions,
// and a floor of 1 frame each (largest-remainder rounding).
std::vector<int> rescale_durations(const std::vector<int>& durations, int target) {
  const int k = int(durations.size());
  if (target < k)
    throw DataError("T_range too small: cannot fit " + std::to_string(k) +
                    " visited stages into " + std::to_string(target) + " frames");
  const double total = double(std::accumulate(durations.begin(), durations.end(), 0));
  std::vector<int> out(static_cast<std::size_t>(k));
  std::vector<double> frac(static_cast<std::size_t>(k));
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    double ideal = double(durations[std::size_t(i)]) * double(target) / total;
    int base = std::max(1, int(std::floor(ideal)));
    out[std::size_t(i)] = base;
    frac[std::size_t(i)] = ideal - std::floor(ideal);
    assigned += base;
  }
  // distribute the residue one frame at a time: grow the largest remainders
  // first, shrink the smallest remainders first (never below 1)
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  if (assigned < target) {
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[std::size_t(a)] > frac[std::size_t(b)]; });
    int i = 0;
    while (assigned < target) {
      ++out[std::size_t(order[std::size_t(i % k)])];
      ++assigned;
      ++i;
    }
  } else if (assigned > target) {
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[std::size_t(a)] < frac[std::size_t(b)]; });
    int i = 0;
    while (assigned > target) {
      int& d = out[std::size_t(order[std::size_t(i % k)])];
      if (d > 1) {
        --d;
        --assigned;
      }
      ++i;
    }
  }
  return out;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (c < 2) throw ConfigError("synthetic config: c must be >= 2");
  if (planes < 1) throw ConfigError("synthetic config: planes must be >= 1");
  if (occlusion_rate < 0.0 || occlusion_rate > 1.0)
    throw ConfigError("synthetic config: occlusion_rate must lie in [0, 1]");
  if (d_raw < c) throw ConfigError("synthetic config: d_raw must be >= c");
  if (t_min < 1 || t_max < t_min)
    throw ConfigError("synthetic config: need 1 <= t_min <= t_max");
  if (duration_logstd < 0.0) throw ConfigError("synthetic config: duration_logstd must be >= 0");
  if (noise_sigma < 0.0) throw ConfigError("synthetic config: noise_sigma must be >= 0");
  if (confuse_span < 0) throw ConfigError("synthetic config: confuse_span must be >= 0");
}

StageSequence sample_stage_sequence(const SyntheticConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<int> visited;
  for (int s = 0; s < cfg.c; ++s) {
    bool interior = s != 0 && s != cfg.c - 1;
    if (interior && rng.uniform() < kStageSkipProb) continue;
    visited.push_back(s);
  }
  std::vector<int> durations;
  durations.reserve(visited.size());
  for (std::size_t i = 0; i < visited.size(); ++i) {
    double x = std::exp(cfg.duration_logmean + cfg.duration_logstd * rng.normal());
    durations.push_back(int(std::ceil(x)));
  }
  int total = std::accumulate(durations.begin(), durations.end(), 0);
  int target = std::clamp(total, cfg.t_min, cfg.t_max);
  if (target != total) durations = rescale_durations(durations, target);

  std::vector<int> labels;
  labels.reserve(std::size_t(target));
  for (std::size_t i = 0; i < visited.size(); ++i)
    labels.insert(labels.end(), std::size_t(durations[i]), visited[i]);
  return StageSequence(std::move(labels), StageVocabulary::generic(cfg.c));
}

MatF stage_prototypes(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).derive(kProtoStream);
  MatF protos(cfg.c, cfg.d_raw);
  rng.fill_normal(protos);
  for (int s = 0; s < cfg.c; ++s) protos.row(s).normalize();
  return protos;
}

RawFocalStack render_raw_stack(const StageSequence& seq, const SyntheticConfig& cfg, Rng& rng) {
  cfg.validate();
  if (seq.vocab().size() != cfg.c)
    throw DataError("sequence vocabulary size does not match synthetic config c");
  const MatF protos = stage_prototypes(cfg);
  const int T = seq.frames();

  RawFocalStack stack{{}, seq, {}, cfg.planes / 2};
  stack.planes.reserve(std::size_t(cfg.planes));
  for (int i = 0; i < cfg.planes; ++i) stack.plane_ids.push_back(i);

  for (int i = 0; i < cfg.planes; ++i) {
    MatF plane(T, cfg.d_raw);
    for (int t = 0; t < T; ++t) {
      int s = seq.label(t);
      if (rng.uniform() < cfg.occlusion_rate) {
        int lo = std::max(0, s - cfg.confuse_span);
        int hi = std::min(cfg.c - 1, s + cfg.confuse_span);
        s = lo + int(rng.uniform_int(std::uint64_t(hi - lo + 1)));
      }
      for (int d = 0; d < cfg.d_raw; ++d)
        plane(t, d) = protos(s, d) + float(cfg.noise_sigma * rng.normal());
    }
    stack.planes.push_back(std::move(plane));
  }
  return stack;
}

std::vector<RawFocalStack> generate_dataset(const SyntheticConfig& cfg, int record_count) {
  cfg.validate();
  if (record_count < 1) throw ConfigError("record_count must be >= 1");
  Rng root(cfg.seed);
  std::vector<RawFocalStack> out;
  out.reserve(std::size_t(record_count));
  for (int i = 0; i < record_count; ++i) {
    Rng rec = root.derive(kRecordBase + std::uint64_t(i));
    Rng seq_rng = rec.derive(0);
    Rng render_rng = rec.derive(1);
    StageSequence seq = sample_stage_sequence(cfg, seq_rng);
    out.push_back(render_raw_stack(seq, cfg, render_rng));
  }
  return out;
}

void write_dataset(const std::vector<RawFocalStack>& stacks, const std::string& path) {
  if (stacks.empty()) throw DataError("refusing to write an empty dataset");
  const RawFocalStack& first = stacks.front();
  const int planes = int(first.planes.size());
  const int d_raw = int(first.planes.front().cols());

  nlohmann::json header;
  header["record_count"] = stacks.size();
  header["planes"] = planes;
  header["dim_raw"] = d_raw;
  header["central_plane"] = first.central_plane;
  header["vocab"] = first.labels.vocab().names();
  auto& records = header["records"] = nlohmann::json::array();
  for (std::size_t r = 0; r < stacks.size(); ++r) {
    const RawFocalStack& s = stacks[r];
    if (int(s.planes.size()) != planes || s.central_plane != first.central_plane ||
        !(s.labels.vocab() == first.labels.vocab()))
      throw DataError("record " + std::to_string(r) + " disagrees with record 0 layout");
    for (const MatF& p : s.planes)
      if (p.rows() != s.labels.frames() || int(p.cols()) != d_raw)
        throw DataError("record " + std::to_string(r) + " has inconsistent plane dimensions");
    records.push_back({{"T", s.labels.frames()}, {"labels", s.labels.labels()}});
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path);
  io::write_envelope(out, "EDK1", header);
  for (const RawFocalStack& s : stacks)
    for (const MatF& p : s.planes) io::write_f32_block(out, p);
  if (!out) throw DataError("short write on dataset file: " + path);
}

std::vector<RawFocalStack> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  nlohmann::json header = io::read_envelope(in, "EDK1", "dataset file " + path);
  for (const char* key : {"record_count", "planes", "dim_raw", "central_plane", "vocab", "records"})
    if (!header.contains(key))
      throw DataError("malformed dataset header: missing key " + std::string(key));

  const auto record_count = header.at("record_count").get<std::size_t>();
  const int planes = header.at("planes").get<int>();
  const int d_raw = header.at("dim_raw").get<int>();
  const int central = header.at("central_plane").get<int>();
  StageVocabulary vocab(header.at("vocab").get<std::vector<std::string>>());
  const auto& records = header.at("records");
  if (records.size() != record_count)
    throw DataError("dataset header: record list length disagrees with record_count");
  if (planes < 1 || d_raw < 1 || central < 0 || central >= planes)
    throw DataError("dataset header: invalid plane/dimension fields");

  std::vector<RawFocalStack> out;
  out.reserve(record_count);
  for (std::size_t r = 0; r < record_count; ++r) {
    const auto& rec = records.at(r);
    const int T = rec.at("T").get<int>();
    StageSequence labels(rec.at("labels").get<std::vector<int>>(), vocab);
    if (labels.frames() != T)
      throw DataError("record " + std::to_string(r) + ": label count disagrees with T");
    RawFocalStack stack{{}, std::move(labels), {}, central};
    for (int i = 0; i < planes; ++i) {
      stack.plane_ids.push_back(i);
      MatF p(T, d_raw);
      io::read_f32_block(in, p, "record " + std::to_string(r) + " plane " + std::to_string(i));
      stack.planes.push_back(std::move(p));
    }
    out.push_back(std::move(stack));
  }
  io::expect_eof(in, "dataset");
  return out;
}

}  // namespace edk
