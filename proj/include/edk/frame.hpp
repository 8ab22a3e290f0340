#pragma once

// Stage-1 frame encoder: a per-frame MLP classifier trained on the central
// focal plane, then frozen and reused as the feature extractor for every
// plane. Also defines the per-sequence feature container and the EDF1 feature
// file format used to import precomputed embeddings.

#include <cstdint>
#include <string>
#include <vector>

#include "edk/common.hpp"
#include "edk/nn.hpp"
#include "edk/stage.hpp"
#include "edk/synth.hpp"

namespace edk {

// Multi-focal per-frame features for one sequence: N matrices of shape T x D
// over a shared vocabulary, with optional per-frame stage labels.
struct FocalFeatureStack {
  std::vector<MatF> planes;
  StageVocabulary vocab;
  std::vector<int> labels;  // empty when unlabeled

  int plane_count() const { return int(planes.size()); }
  int frames() const { return planes.empty() ? 0 : int(planes.front().rows()); }
  int dim() const { return planes.empty() ? 0 : int(planes.front().cols()); }
  bool labeled() const { return !labels.empty(); }
  StageSequence sequence() const { return StageSequence(labels, vocab); }
};

struct FrameEncoderConfig {
  int d_raw = 32;                 // raw per-frame input width
  int d_out = 64;                 // feature width D fed to the fusion stage
  std::vector<int> hidden = {128};
  int classes = 8;
  int epochs = 5;
  int batch = 256;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double val_fraction = 0.1;      // record-level holdout for the reported score

  void validate() const;
};

// MLP trunk (d_raw -> hidden... -> d_out, ReLU between layers, linear output)
// plus a linear classification head (d_out -> classes). The trunk output is
// the per-frame feature vector; the head exists only for Stage-1 training.
class FrameEncoder {
 public:
  struct Cache {
    std::vector<nn::Linear<float>::Cache> lin;
    std::vector<nn::ReLU<float>::Cache> act;
    nn::Linear<float>::Cache head;
  };

  FrameEncoder() = default;
  FrameEncoder(const FrameEncoderConfig& cfg, Rng& rng);

  const FrameEncoderConfig& config() const { return cfg_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // Trunk only: (T x d_raw) -> (T x d_out).
  MatF features(const MatF& x) const;
  // Full classifier logits (T x classes); cache enables backward.
  MatF logits(const MatF& x, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const MatF& g_logits);

  nn::ParamList<float> params();
  // Over trunk+head parameters; the freeze protocol compares this across
  // Stage-2 to prove the extractor never moved.
  std::uint64_t checksum() const;

 private:
  FrameEncoderConfig cfg_;
  std::vector<nn::Linear<float>> trunk_;
  std::vector<nn::ReLU<float>> acts_;
  nn::Linear<float> head_;
  bool frozen_ = false;
};

struct FrameTrainResult {
  FrameEncoder encoder;  // returned frozen
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> epoch_loss;  // mean CE per epoch over training frames
};

// Trains on the central focal plane of each record, treating frames as
// independent samples. Holds out `val_fraction` of records for the reported
// validation accuracy. Throws DataError on input/config dimension mismatch.
FrameTrainResult train_frame_classifier(const std::vector<RawFocalStack>& data,
                                        const FrameEncoderConfig& cfg, Rng& rng);

// Runs every plane through the frozen trunk. Throws ProtocolError when the
// encoder has not been frozen.
FocalFeatureStack extract_features(const FrameEncoder& enc, const RawFocalStack& stack);
std::vector<FocalFeatureStack> extract_features(const FrameEncoder& enc,
                                                const std::vector<RawFocalStack>& data);

// EDF1 feature files; read_feature_file doubles as the import path for
// precomputed external embeddings (any D, e.g. 2048).
void write_feature_file(const std::string& path, const std::vector<FocalFeatureStack>& stacks);
std::vector<FocalFeatureStack> read_feature_file(const std::string& path);

// EDC1 frame-encoder checkpoints (architecture, frozen flag, parameters).
void save_frame_encoder(const std::string& path, FrameEncoder& enc);
FrameEncoder load_frame_encoder(const std::string& path);

}  // namespace edk
