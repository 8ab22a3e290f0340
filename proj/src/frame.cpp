#include "edk/frame.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "edk/binio.hpp"
#include "edk/serialize.hpp"

namespace edk {

void FrameEncoderConfig::validate() const {
  if (d_raw < 1) throw ConfigError("frame encoder: d_raw must be >= 1");
  if (classes < 2) throw ConfigError("frame encoder: classes must be >= 2");
  if (d_out < classes) throw ConfigError("frame encoder: d_out must be >= classes");
  if (hidden.empty()) throw ConfigError("frame encoder: need at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("frame encoder: hidden widths must be >= 1");
  if (epochs < 1) throw ConfigError("frame encoder: epochs must be >= 1");
  if (batch < 1) throw ConfigError("frame encoder: batch must be >= 1");
  if (lr <= 0.0) throw ConfigError("frame encoder: lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("frame encoder: weight_decay must be >= 0");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("frame encoder: val_fraction must lie in [0, 1)");
}

FrameEncoder::FrameEncoder(const FrameEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::vector<int> widths;
  widths.push_back(cfg_.d_raw);
  widths.insert(widths.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  widths.push_back(cfg_.d_out);
  trunk_.resize(widths.size() - 1);
  acts_.resize(trunk_.size() - 1);  // linear output layer, ReLU between
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i], out = widths[i + 1];
    // He-style scale for the ReLU-fed layers, plain 1/sqrt(in) for the rest
    const double sd = i + 2 < widths.size() ? std::sqrt(2.0 / in) : std::sqrt(1.0 / in);
    trunk_[i].init(in, out, rng, sd);
  }
  head_.init(cfg_.d_out, cfg_.classes, rng, std::sqrt(1.0 / cfg_.d_out));
}

MatF FrameEncoder::features(const MatF& x) const {
  if (int(x.cols()) != cfg_.d_raw)
    throw DataError("frame encoder expects " + std::to_string(cfg_.d_raw) +
                    " input channels, got " + std::to_string(x.cols()));
  MatF h = x;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = trunk_[i].forward(h, nullptr);
    if (i < acts_.size()) h = acts_[i].forward(h, nullptr);
  }
  return h;
}

MatF FrameEncoder::logits(const MatF& x, Cache* cache) const {
  if (int(x.cols()) != cfg_.d_raw)
    throw DataError("frame encoder expects " + std::to_string(cfg_.d_raw) +
                    " input channels, got " + std::to_string(x.cols()));
  if (cache) {
    cache->lin.resize(trunk_.size());
    cache->act.resize(acts_.size());
  }
  MatF h = x;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = trunk_[i].forward(h, cache ? &cache->lin[i] : nullptr);
    if (i < acts_.size()) h = acts_[i].forward(h, cache ? &cache->act[i] : nullptr);
  }
  return head_.forward(h, cache ? &cache->head : nullptr);
}

void FrameEncoder::backward(const Cache& cache, const MatF& g_logits) {
  MatF g = head_.backward(cache.head, g_logits);
  for (std::size_t i = trunk_.size(); i-- > 0;) {
    if (i < acts_.size()) g = acts_[i].backward(cache.act[i], g);
    g = trunk_[i].backward(cache.lin[i], g);
  }
}

nn::ParamList<float> FrameEncoder::params() {
  nn::ParamList<float> out;
  for (std::size_t i = 0; i < trunk_.size(); ++i)
    trunk_[i].collect("frame.trunk" + std::to_string(i), out);
  head_.collect("frame.head", out);
  return out;
}

std::uint64_t FrameEncoder::checksum() const {
  auto params = const_cast<FrameEncoder*>(this)->params();
  return nn::param_checksum(params);
}

namespace {

// Mean cross-entropy over rows plus the matching logit gradient.
double ce_loss_grad(const MatF& logits, const std::vector<int>& y, MatF* grad) {
  const auto n = logits.rows();
  MatF logp = nn::log_softmax_rows(logits);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss -= double(logp(i, y[std::size_t(i)]));
  loss /= double(n);
  if (grad) {
    *grad = logp.array().exp();
    for (Eigen::Index i = 0; i < n; ++i) (*grad)(i, y[std::size_t(i)]) -= 1.0f;
    *grad /= float(n);
  }
  return loss;
}

double accuracy_of(const FrameEncoder& enc, const MatF& x, const std::vector<int>& y) {
  if (x.rows() == 0) return 0.0;
  MatF logits = enc.logits(x);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (int(arg) == y[std::size_t(i)]) ++hits;
  }
  return double(hits) / double(logits.rows());
}

// Flattens the central plane of each record into one frame-sample matrix.
void flatten_central(const std::vector<RawFocalStack>& data, const std::vector<std::size_t>& recs,
                     int d_raw, MatF* x, std::vector<int>* y) {
  Eigen::Index total = 0;
  for (std::size_t r : recs) total += data[r].labels.frames();
  x->resize(total, d_raw);
  y->clear();
  y->reserve(std::size_t(total));
  Eigen::Index row = 0;
  for (std::size_t r : recs) {
    const RawFocalStack& s = data[r];
    const MatF& plane = s.planes.at(std::size_t(s.central_plane));
    x->middleRows(row, plane.rows()) = plane;
    row += plane.rows();
    const auto& labels = s.labels.labels();
    y->insert(y->end(), labels.begin(), labels.end());
  }
}

}  // namespace

FrameTrainResult train_frame_classifier(const std::vector<RawFocalStack>& data,
                                        const FrameEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  if (data.empty()) throw DataError("frame training needs at least one sequence");
  for (const RawFocalStack& s : data) {
    if (int(s.planes.at(std::size_t(s.central_plane)).cols()) != cfg.d_raw)
      throw DataError("frame training: dataset dim " +
                      std::to_string(s.planes.at(std::size_t(s.central_plane)).cols()) +
                      " disagrees with configured d_raw " + std::to_string(cfg.d_raw));
    if (s.labels.vocab().size() != cfg.classes)
      throw DataError("frame training: vocabulary size " + std::to_string(s.labels.vocab().size()) +
                      " disagrees with configured classes " + std::to_string(cfg.classes));
  }

  // record-level holdout so validation frames never share a sequence with
  // training frames
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[std::size_t(rng.uniform_int(int(i)))]);
  std::size_t n_val = std::size_t(double(data.size()) * cfg.val_fraction);
  if (cfg.val_fraction > 0.0 && n_val == 0 && data.size() > 1) n_val = 1;
  std::vector<std::size_t> val_recs(order.begin(), order.begin() + std::ptrdiff_t(n_val));
  std::vector<std::size_t> train_recs(order.begin() + std::ptrdiff_t(n_val), order.end());

  MatF x_train, x_val;
  std::vector<int> y_train, y_val;
  flatten_central(data, train_recs, cfg.d_raw, &x_train, &y_train);
  flatten_central(data, val_recs, cfg.d_raw, &x_val, &y_val);

  FrameTrainResult res;
  res.encoder = FrameEncoder(cfg, rng);
  auto params = res.encoder.params();
  nn::AdamW<float> opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  const Eigen::Index n = x_train.rows();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index(0));
  FrameEncoder::Cache cache;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[std::size_t(rng.uniform_int(int(i)))]);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch) {
      const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch, n - start);
      MatF xb(bsz, cfg.d_raw);
      std::vector<int> yb(static_cast<std::size_t>(bsz));
      for (Eigen::Index i = 0; i < bsz; ++i) {
        xb.row(i) = x_train.row(perm[std::size_t(start + i)]);
        yb[std::size_t(i)] = y_train[std::size_t(perm[std::size_t(start + i)])];
      }
      nn::zero_grads(params);
      MatF logits = res.encoder.logits(xb, &cache);
      MatF grad;
      epoch_loss += ce_loss_grad(logits, yb, &grad) * double(bsz);
      res.encoder.backward(cache, grad);
      opt.step(params);
    }
    res.epoch_loss.push_back(epoch_loss / double(n));
  }

  res.train_accuracy = accuracy_of(res.encoder, x_train, y_train);
  res.val_accuracy = accuracy_of(res.encoder, x_val, y_val);
  res.encoder.freeze();
  return res;
}

FocalFeatureStack extract_features(const FrameEncoder& enc, const RawFocalStack& stack) {
  if (!enc.frozen())
    throw ProtocolError("frame encoder must be frozen before feature extraction");
  FocalFeatureStack out{{}, stack.labels.vocab(), stack.labels.labels()};
  out.planes.reserve(stack.planes.size());
  for (const MatF& p : stack.planes) out.planes.push_back(enc.features(p));
  return out;
}

std::vector<FocalFeatureStack> extract_features(const FrameEncoder& enc,
                                                const std::vector<RawFocalStack>& data) {
  std::vector<FocalFeatureStack> out;
  out.reserve(data.size());
  for (const RawFocalStack& s : data) out.push_back(extract_features(enc, s));
  return out;
}

void write_feature_file(const std::string& path, const std::vector<FocalFeatureStack>& stacks) {
  if (stacks.empty()) throw DataError("cannot write an empty feature file");
  const FocalFeatureStack& first = stacks.front();
  const int planes = first.plane_count();
  const int dim = first.dim();
  if (planes < 1 || dim < 1) throw DataError("feature stacks must have at least one plane");

  nlohmann::json header;
  header["record_count"] = stacks.size();
  header["planes"] = planes;
  header["dim"] = dim;
  header["vocab"] = first.vocab.names();
  auto& records = header["records"] = nlohmann::json::array();
  for (std::size_t r = 0; r < stacks.size(); ++r) {
    const FocalFeatureStack& s = stacks[r];
    if (s.plane_count() != planes || s.dim() != dim || !(s.vocab == first.vocab))
      throw DataError("feature record " + std::to_string(r) + " disagrees with record 0 layout");
    const int T = s.frames();
    if (T < 1) throw DataError("feature record " + std::to_string(r) + " has no frames");
    for (const MatF& p : s.planes)
      if (int(p.rows()) != T || int(p.cols()) != dim)
        throw DataError("feature record " + std::to_string(r) + " has inconsistent planes");
    if (s.labeled() && int(s.labels.size()) != T)
      throw DataError("feature record " + std::to_string(r) + ": label count disagrees with T");
    nlohmann::json rec{{"T", T}};
    if (s.labeled()) rec["labels"] = s.labels;
    records.push_back(std::move(rec));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file: " + path);
  io::write_envelope(out, "EDF1", header);
  for (const FocalFeatureStack& s : stacks)
    for (const MatF& p : s.planes) io::write_f32_block(out, p);
  if (!out) throw DataError("short write on feature file: " + path);
}

std::vector<FocalFeatureStack> read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path);
  nlohmann::json header = io::read_envelope(in, "EDF1", "feature file " + path);
  for (const char* key : {"record_count", "planes", "dim", "vocab", "records"})
    if (!header.contains(key))
      throw DataError("malformed feature header: missing key " + std::string(key));

  const auto record_count = header.at("record_count").get<std::size_t>();
  const int planes = header.at("planes").get<int>();
  const int dim = header.at("dim").get<int>();
  StageVocabulary vocab(header.at("vocab").get<std::vector<std::string>>());
  const auto& records = header.at("records");
  if (records.size() != record_count)
    throw DataError("feature header: record list length disagrees with record_count");
  if (planes < 1 || dim < 1) throw DataError("feature header: invalid plane/dimension fields");

  std::vector<FocalFeatureStack> out;
  out.reserve(record_count);
  for (std::size_t r = 0; r < record_count; ++r) {
    const auto& rec = records.at(r);
    const int T = rec.at("T").get<int>();
    if (T < 1) throw DataError("feature record " + std::to_string(r) + " has no frames");
    FocalFeatureStack stack{{}, vocab, {}};
    if (rec.contains("labels")) {
      stack.labels = rec.at("labels").get<std::vector<int>>();
      if (int(stack.labels.size()) != T)
        throw DataError("feature record " + std::to_string(r) + ": label count disagrees with T");
      for (int id : stack.labels)
        if (id < 0 || id >= vocab.size())
          throw DataError("feature record " + std::to_string(r) + ": stage id " +
                          std::to_string(id) + " outside vocabulary");
    }
    for (int i = 0; i < planes; ++i) {
      MatF p(T, dim);
      io::read_f32_block(in, p,
                         "feature record " + std::to_string(r) + " plane " + std::to_string(i));
      stack.planes.push_back(std::move(p));
    }
    out.push_back(std::move(stack));
  }
  io::expect_eof(in, "feature file");
  return out;
}

void save_frame_encoder(const std::string& path, FrameEncoder& enc) {
  const FrameEncoderConfig& cfg = enc.config();
  nlohmann::json meta{{"d_raw", cfg.d_raw},     {"d_out", cfg.d_out}, {"hidden", cfg.hidden},
                      {"classes", cfg.classes}, {"frozen", enc.frozen()}};
  auto params = enc.params();
  write_checkpoint(path, "frame_encoder", meta, params);
}

FrameEncoder load_frame_encoder(const std::string& path) {
  nlohmann::json meta = read_checkpoint_meta(path, "frame_encoder");
  FrameEncoderConfig cfg;
  cfg.d_raw = meta.at("d_raw").get<int>();
  cfg.d_out = meta.at("d_out").get<int>();
  cfg.hidden = meta.at("hidden").get<std::vector<int>>();
  cfg.classes = meta.at("classes").get<int>();
  Rng rng(0);  // overwritten immediately by the checkpoint payload
  FrameEncoder enc(cfg, rng);
  auto params = enc.params();
  load_checkpoint(path, "frame_encoder", params);
  if (meta.at("frozen").get<bool>()) enc.freeze();
  return enc;
}

}  // namespace edk
