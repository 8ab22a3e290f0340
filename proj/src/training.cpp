#include "edk/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "edk/fusion.hpp"
#include "edk/serialize.hpp"

namespace edk {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
  if (epochs == 0 && steps < 1) throw ConfigError("train config: steps must be >= 1");
  if (batch < 1) throw ConfigError("train config: batch must be >= 1");
  if (lr <= 0.0 || lr_end <= 0.0 || lr_end > lr)
    throw ConfigError("train config: need 0 < lr_end <= lr");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
  if (boundary_sigma <= 0.0) throw ConfigError("train config: boundary_sigma must be > 0");
  if (schedule_steps < 1) throw ConfigError("train config: schedule_steps must be >= 1");
  if (embed_scale <= 0.0) throw ConfigError("train config: embed_scale must be > 0");
  weights.validate();
  encoder.validate();
  denoiser.validate();
}

nn::ParamList<float> Stage2Bundle::params() {
  nn::ParamList<float> out;
  cond.collect(out);
  embed.collect("embed", out);
  den.collect(out);
  return out;
}

std::uint64_t Stage2Bundle::checksum() const {
  auto p = const_cast<Stage2Bundle*>(this)->params();
  return nn::param_checksum(p);
}

SampleResult Stage2Bundle::sample(const MatF& fused, int ddim_steps, Rng& rng,
                                  double eta) const {
  ConditionPair pair = cond.forward(fused, nullptr, nullptr);
  DenoiseFn model = [&](const MatF& y_t, int t) {
    Denoiser<float>::Output out = den.forward(y_t, t, pair.c_sem, pair.c_bound, nullptr, nullptr);
    return std::make_pair(std::move(out.y0), std::move(out.logits));
  };
  return ddim_sample(model, int(fused.rows()), den_cfg.width, schedule, ddim_steps, rng, eta);
}

StageSequence Stage2Bundle::predict(const MatF& fused, int ddim_steps, Rng& rng,
                                    double eta) const {
  return decode_logits(sample(fused, ddim_steps, rng, eta).logits, vocab);
}

namespace {

struct TrainItem {
  MatF fused;
  StageSequence seq;
  BoundaryTarget targets;
};

Stage2Bundle make_bundle(const TrainConfig& cfg, int feature_dim, const StageVocabulary& vocab,
                         Rng& rng) {
  Stage2Bundle bundle(vocab);
  bundle.enc_cfg = cfg.encoder;
  bundle.schedule_steps = cfg.schedule_steps;
  bundle.embed_scale = cfg.embed_scale;
  Rng rc = rng.derive(0), re = rng.derive(1), rd = rng.derive(2);
  bundle.cond.init(feature_dim, vocab.size(), cfg.encoder, rc);
  bundle.den_cfg = cfg.denoiser;
  bundle.den_cfg.cond_width = bundle.cond.semantic.cond_width();
  bundle.embed.init(vocab.size(), bundle.den_cfg.width, re, cfg.embed_scale);
  bundle.den.init(vocab.size(), bundle.den_cfg, rd);
  bundle.schedule = NoiseSchedule::cosine(cfg.schedule_steps);
  return bundle;
}

}  // namespace

Stage2Result train_stage2(const std::vector<FocalFeatureStack>& features, const TrainConfig& cfg,
                          Rng& rng) {
  cfg.validate();
  if (features.empty()) throw DataError("stage-2 training needs at least one sequence");
  for (const FocalFeatureStack& f : features) {
    if (!f.labeled()) throw DataError("stage-2 training needs labeled sequences");
    if (!(f.vocab == features.front().vocab))
      throw DataError("stage-2 training: sequences disagree on the vocabulary");
    if (f.dim() != features.front().dim())
      throw DataError("stage-2 training: sequences disagree on feature width");
  }
  const StageVocabulary vocab = features.front().vocab;
  if (vocab.size() < 2) throw DataError("stage-2 training needs at least two classes");

  std::vector<TrainItem> items;
  items.reserve(features.size());
  for (const FocalFeatureStack& f : features) {
    StageSequence seq = f.sequence();
    BoundaryTarget targets = boundary_targets(seq, cfg.boundary_sigma);
    items.push_back({fuse(f), std::move(seq), std::move(targets)});
  }

  Stage2Result res{make_bundle(cfg, int(items.front().fused.cols()), vocab, rng), {}, 0};
  Stage2Bundle& bundle = res.bundle;
  auto params = bundle.params();

  nn::AdamW<float> opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  const int N = int(items.size());
  const int steps_per_epoch = (N + cfg.batch - 1) / cfg.batch;
  const int total_steps = cfg.epochs > 0 ? cfg.epochs * steps_per_epoch : cfg.steps;
  res.log.reserve(std::size_t(total_steps));

  // deterministic batch order: reshuffle the sequence indices each pass
  std::vector<int> queue;
  std::size_t cursor = 0;
  auto next_index = [&]() {
    if (cursor == queue.size()) {
      if (queue.empty()) {
        queue.resize(std::size_t(N));
        std::iota(queue.begin(), queue.end(), 0);
      }
      for (std::size_t i = queue.size(); i > 1; --i)
        std::swap(queue[i - 1], queue[std::size_t(rng.uniform_int(int(i)))]);
      cursor = 0;
    }
    return queue[cursor++];
  };

  ConditionEncoders<float>::Cache ccache;
  LabelEmbedding<float>::Cache ecache;
  Denoiser<float>::Cache dcache;
  const int S = cfg.schedule_steps;
  const int d = bundle.den_cfg.width;

  for (int step = 0; step < total_steps; ++step) {
    opt.lr = nn::cosine_lr(cfg.lr, cfg.lr_end, step, total_steps);
    nn::zero_grads(params);
    LossParts parts;

    const int B = cfg.batch;
    for (int b = 0; b < B; ++b) {
      const TrainItem& item = items[std::size_t(next_index())];
      const int T = item.seq.frames();
      const std::vector<int>& y = item.seq.labels();

      ConditionPair pair = bundle.cond.forward(item.fused, &ccache, &rng);
      MatF y0 = bundle.embed.forward(item.seq, &ecache);
      const int t = 1 + int(rng.uniform_int(S));
      MatF noise(T, d);
      rng.fill_normal(noise);
      MatF y_t = q_sample(y0, t, bundle.schedule, noise);
      Denoiser<float>::Output out = bundle.den.forward(y_t, t, pair.c_sem, pair.c_bound, &dcache, &rng);

      MatF g_sem, g_smooth, g_bound, g_diff;
      const double l_sem = sem_loss(pair.sem_logits, y, {}, &g_sem);
      const double l_smooth = smooth_loss(pair.sem_logits, {}, &g_smooth);
      const double l_bound = bound_loss(pair.bound_logits, item.targets, {}, &g_bound);
      const double l_diff = diff_loss(out.logits, y, {}, &g_diff);
      parts.sem += l_sem / B;
      parts.smooth += l_smooth / B;
      parts.bound += l_bound / B;
      parts.diff += l_diff / B;

      // weighted, batch-averaged gradients back through every trainable part
      MatF g_diff_scaled = float(cfg.weights.diff / B) * g_diff;
      Denoiser<float>::InputGrads gi =
          bundle.den.backward(dcache, MatF::Zero(T, d), g_diff_scaled);
      bundle.embed.backward(ecache, (float(std::sqrt(bundle.schedule.alpha_bar(t))) * gi.y_t).eval());
      MatF g_sem_logits = float(cfg.weights.sem / B) * g_sem + float(cfg.weights.smooth / B) * g_smooth;
      bundle.cond.semantic.backward(ccache.sem, gi.c_sem, g_sem_logits);
      MatF g_bound_scaled = float(cfg.weights.bound / B) * g_bound;
      bundle.cond.boundary.backward(ccache.bound, gi.c_bound, g_bound_scaled);
    }

    opt.step(params);
    res.log.push_back({step + 1, parts, total_loss(parts, cfg.weights), opt.lr});
  }
  return res;
}

Stage2Result train_stage2(const std::vector<RawFocalStack>& data, const FrameEncoder& enc,
                          const TrainConfig& cfg, Rng& rng) {
  if (!enc.frozen())
    throw ProtocolError("stage-2 training requires a frozen frame encoder");
  const std::uint64_t before = enc.checksum();
  std::vector<FocalFeatureStack> features = extract_features(enc, data);
  Stage2Result res = train_stage2(features, cfg, rng);
  if (enc.checksum() != before)
    throw ProtocolError("frame encoder parameters moved during stage-2 training");
  res.frame_checksum = before;
  return res;
}

void write_training_log(const std::string& path, const std::vector<StepRecord>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path);
  for (const StepRecord& r : log) {
    nlohmann::json line{{"step", r.step},          {"L_sem", r.parts.sem},
                        {"L_smooth", r.parts.smooth}, {"L_bound", r.parts.bound},
                        {"L_diff", r.parts.diff},  {"total", r.total},
                        {"lr", r.lr}};
    out << line.dump() << "\n";
  }
  if (!out) throw DataError("short write on training log: " + path);
}

namespace {

nlohmann::json encoder_cfg_json(const TemporalEncoderConfig& c) {
  return {{"layers", c.layers},           {"hidden", c.hidden},
          {"tap_layers", c.tap_layers},   {"base_window", c.base_window},
          {"dropout", c.dropout}};
}

TemporalEncoderConfig encoder_cfg_from(const nlohmann::json& j) {
  TemporalEncoderConfig c;
  c.layers = j.at("layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.tap_layers = j.at("tap_layers").get<std::vector<int>>();
  c.base_window = j.at("base_window").get<int>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

nlohmann::json denoiser_cfg_json(const DenoiserConfig& c) {
  return {{"blocks", c.blocks},   {"width", c.width},         {"heads", c.heads},
          {"kernel", c.kernel},   {"ffn_mult", c.ffn_mult},   {"dropout", c.dropout},
          {"cond_width", c.cond_width}};
}

DenoiserConfig denoiser_cfg_from(const nlohmann::json& j) {
  DenoiserConfig c;
  c.blocks = j.at("blocks").get<int>();
  c.width = j.at("width").get<int>();
  c.heads = j.at("heads").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.cond_width = j.at("cond_width").get<int>();
  return c;
}

}  // namespace

void save_bundle(const std::string& path, Stage2Bundle& bundle) {
  nlohmann::json meta{{"vocab", bundle.vocab.names()},
                      {"encoder", encoder_cfg_json(bundle.enc_cfg)},
                      {"denoiser", denoiser_cfg_json(bundle.den_cfg)},
                      {"feature_dim", bundle.cond.semantic.in_dim},
                      {"schedule_steps", bundle.schedule_steps},
                      {"embed_scale", bundle.embed_scale}};
  auto params = bundle.params();
  write_checkpoint(path, "stage2_bundle", meta, params);
}

Stage2Bundle load_bundle(const std::string& path) {
  nlohmann::json meta = read_checkpoint_meta(path, "stage2_bundle");
  StageVocabulary vocab(meta.at("vocab").get<std::vector<std::string>>());
  Stage2Bundle bundle(vocab);
  bundle.enc_cfg = encoder_cfg_from(meta.at("encoder"));
  bundle.den_cfg = denoiser_cfg_from(meta.at("denoiser"));
  bundle.schedule_steps = meta.at("schedule_steps").get<int>();
  bundle.embed_scale = meta.at("embed_scale").get<double>();

  // rebuild with placeholder weights, then overwrite from the payload
  Rng rng(0);
  Rng rc = rng.derive(0), re = rng.derive(1), rd = rng.derive(2);
  bundle.cond.init(meta.at("feature_dim").get<int>(), vocab.size(), bundle.enc_cfg, rc);
  bundle.embed.init(vocab.size(), bundle.den_cfg.width, re, bundle.embed_scale);
  bundle.den.init(vocab.size(), bundle.den_cfg, rd);
  bundle.schedule = NoiseSchedule::cosine(bundle.schedule_steps);

  auto params = bundle.params();
  load_checkpoint(path, "stage2_bundle", params);
  return bundle;
}

}  // namespace edk
