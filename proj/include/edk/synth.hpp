#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edk/stage.hpp"

namespace edk {

// Generator knobs for multi-focal synthetic sequences. Occlusion models a
// focal plane showing the wrong developmental stage: the frame's prototype is
// swapped for a developmentally nearby one, independently per plane.
struct SyntheticConfig {
  int c = 8;                      // stage count
  int t_min = 100, t_max = 300;   // admissible sequence length range
  int planes = 3;                 // focal planes (N)
  int d_raw = 32;                 // raw frame-vector dimension
  double duration_logmean = 3.0;  // per-stage log-normal duration parameters
  double duration_logstd = 0.5;
  double noise_sigma = 0.1;       // per-plane additive Gaussian noise scale
  double occlusion_rate = 0.0;    // P(plane, frame) corrupted
  int confuse_span = 2;           // max stage-rank distance of a substitute
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError on violations
};

// One multi-focal sequence: planes[i] is T×D_raw, all planes share labels.
struct RawFocalStack {
  std::vector<MatF> planes;
  StageSequence labels;
  std::vector<int> plane_ids;
  int central_plane = 0;  // index into planes/plane_ids
};

// Probability that an interior stage (neither first nor last) is skipped.
inline constexpr double kStageSkipProb = 0.05;

// Monotone stage visit with log-normal durations, total length clamped to
// [t_min, t_max] by proportional rescaling (largest-remainder rounding, every
// visited stage keeps >= 1 frame).
StageSequence sample_stage_sequence(const SyntheticConfig& cfg, Rng& rng);

// The per-dataset stage prototype matrix: c×D_raw, rows unit-norm, drawn from
// a Gaussian seeded by cfg.seed alone (independent of the per-record streams).
MatF stage_prototypes(const SyntheticConfig& cfg);

// Frame (i, t) = prototype of labels[t] + noise_sigma·ε, with the prototype
// replaced by a uniformly drawn neighbor within confuse_span ranks when the
// (plane, frame) cell is occluded.
RawFocalStack render_raw_stack(const StageSequence& seq, const SyntheticConfig& cfg, Rng& rng);

// record i is generated from a stream derived from cfg.seed and i only, so
// datasets are reproducible and records independent.
std::vector<RawFocalStack> generate_dataset(const SyntheticConfig& cfg, int record_count);

// Dataset file ("EDK1"): magic, u32 little-endian JSON header length, UTF-8
// JSON header {record_count, planes, dim_raw, central_plane, vocab,
// records: [{T, labels}]}, then float32 little-endian payload in
// record-major, plane-major, frame-major, channel-minor order.
void write_dataset(const std::vector<RawFocalStack>& stacks, const std::string& path);
std::vector<RawFocalStack> read_dataset(const std::string& path);

}  // namespace edk
