#pragma once

// Stage-2 training: builds the condition encoders, label embedding, and
// denoiser, then optimizes the weighted four-part objective with AdamW and
// cosine learning-rate decay. The Stage-1 frame encoder stays frozen
// throughout; its parameters are never touched and its checksum is verified
// across the run.

#include <functional>
#include <string>
#include <vector>

#include "edk/condition.hpp"
#include "edk/denoiser.hpp"
#include "edk/diffusion.hpp"
#include "edk/frame.hpp"
#include "edk/losses.hpp"
#include "edk/stage.hpp"

namespace edk {

struct TrainConfig {
  int epochs = 0;       // > 0 drives the run by passes over the data
  int steps = 2000;     // used when epochs == 0 (desk profile)
  int batch = 8;
  double lr = 1e-4;
  double lr_end = 1e-7;
  double weight_decay = 0.01;
  double boundary_sigma = 1.0;  // soft boundary-target width
  int schedule_steps = 1000;    // diffusion S
  double embed_scale = 0.1;
  int checkpoint_interval = 0;  // > 0: invoke the step hook every k steps
  LossWeights weights;
  TemporalEncoderConfig encoder;
  DenoiserConfig denoiser;  // cond_width is overwritten from the encoder taps

  void validate() const;
};

// Everything needed to run inference: both condition encoders, the label
// embedding, the denoiser, and the noise schedule they were trained under.
struct Stage2Bundle {
  TemporalEncoderConfig enc_cfg;
  DenoiserConfig den_cfg;
  int schedule_steps = 1000;
  double embed_scale = 0.1;
  StageVocabulary vocab;
  ConditionEncoders<float> cond;
  LabelEmbedding<float> embed;
  Denoiser<float> den;
  NoiseSchedule schedule;

  explicit Stage2Bundle(StageVocabulary v) : vocab(std::move(v)) {}

  int classes() const { return vocab.size(); }
  nn::ParamList<float> params();
  std::uint64_t checksum() const;

  // Conditions on the fused features (eval mode, no dropout), then runs DDIM
  // with K model calls; eta > 0 re-injects noise along the trajectory.
  SampleResult sample(const MatF& fused, int ddim_steps, Rng& rng, double eta = 0.0) const;
  StageSequence predict(const MatF& fused, int ddim_steps, Rng& rng, double eta = 0.0) const;
};

struct StepRecord {
  int step = 0;
  LossParts parts;
  double total = 0.0;
  double lr = 0.0;
};

struct Stage2Result {
  Stage2Bundle bundle;
  std::vector<StepRecord> log;
  std::uint64_t frame_checksum = 0;  // set by the raw-dataset overload
};

// Called every cfg.checkpoint_interval optimization steps (1-based step
// number); callers typically save the bundle to disk.
using StepHook = std::function<void(int step, Stage2Bundle& bundle)>;

// Per step: fused features -> both condition encoders -> label embedding ->
// one uniform t in [1, S] per sequence -> q_sample -> denoiser -> weighted
// loss -> AdamW. Each batch member is processed at its true length, which
// realizes the padding-mask contract exactly (padding contributes nothing).
Stage2Result train_stage2(const std::vector<FocalFeatureStack>& features, const TrainConfig& cfg,
                          Rng& rng, const StepHook& hook = {});

// Convenience overload: extracts and fuses features through the frozen
// encoder first. Throws ProtocolError when the encoder is not frozen;
// verifies the encoder checksum is unchanged across the run.
Stage2Result train_stage2(const std::vector<RawFocalStack>& data, const FrameEncoder& enc,
                          const TrainConfig& cfg, Rng& rng, const StepHook& hook = {});

// One JSON object per optimization step:
// {step, L_sem, L_smooth, L_bound, L_diff, total, lr}.
void write_training_log(const std::string& path, const std::vector<StepRecord>& log);

// EDC1 bundle checkpoints.
void save_bundle(const std::string& path, Stage2Bundle& bundle);
Stage2Bundle load_bundle(const std::string& path);

}  // namespace edk
