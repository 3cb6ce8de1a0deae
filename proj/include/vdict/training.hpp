#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "vdict/dataset.hpp"
#include "vdict/neural.hpp"
#include "vdict/resemblant.hpp"

namespace vdict {

enum class OptimizerKind { kSgd, kAdam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw Error(ErrorCode::kInvalidArgument, "unknown optimizer: " + std::string(s));
}

struct StageConfig {
  int epochs = 0;
  double learning_rate = 0.5;
  double lambda_recog = 0.0;
  double lambda_sitm = 0.0;
  std::set<ParamGroup> trainable;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  int warmup_steps = 0;    // linear learning-rate ramp over the first steps
  double clip_norm = 0.0;  // global gradient-norm cap over trainable tensors, 0 = off
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t resemblants = 3;  // M - 1
  double tau = 0.07;
  std::uint64_t seed = 11;
  std::uint64_t init_seed = 5;
  bool stage1_clean_renders = true;  // stage 1 sees noiseless renders of the training labels
  bool match_attention_from_recog = true;  // stage 2 starts the matching attention as a copy of the recognizer's
  StageConfig stage1{10, 0.5, 1.0, 0.0,
                     {ParamGroup::kBackbone, ParamGroup::kRecogAttention, ParamGroup::kRecogHead}};
  StageConfig stage2{20, 0.5, 0.0, 1.0,
                     {ParamGroup::kMatchAttention, ParamGroup::kTextEncoder, ParamGroup::kProjection}};

  void validate() const {
    if (batch_size < 2) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 2");
    if (!(tau > 0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
    for (const StageConfig* s : {&stage1, &stage2}) {
      if (s->epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
      if (!(s->learning_rate > 0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
      if (s->lambda_recog < 0 || s->lambda_sitm < 0)
        throw Error(ErrorCode::kInvalidArgument, "loss weights must be non-negative");
    }
  }
};

/// params -= lr * grads on the trainable groups only.
inline void sgd_step(ModelParams& params, const ModelParams& grads, double lr, const std::set<ParamGroup>& trainable) {
  std::vector<const Matrix*> g;
  grads.for_each([&](const std::string&, ParamGroup, const Matrix& m) { g.push_back(&m); });
  std::size_t i = 0;
  params.for_each([&](const std::string& name, ParamGroup group, Matrix& m) {
    const Matrix& d = *g[i++];
    if (!trainable.contains(group)) return;
    if (!d.allFinite()) throw Error(ErrorCode::kNonFiniteLoss, "non-finite gradient for " + name);
    m -= lr * d;
  });
}

/// Rescales the trainable part of `grads` so its global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
inline double clip_grad_norm(ModelParams& grads, double max_norm, const std::set<ParamGroup>& trainable) {
  double sq = 0.0;
  grads.for_each([&](const std::string&, ParamGroup g, const Matrix& m) {
    if (trainable.contains(g)) sq += m.squaredNorm();
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm)
    grads.for_each([&](const std::string&, ParamGroup g, Matrix& m) {
      if (trainable.contains(g)) m *= max_norm / norm;
    });
  return norm;
}

/// Adam with bias correction, restricted to the trainable groups.
class AdamState {
 public:
  AdamState(const ModelDims& dims, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(ModelParams::zeros(dims)), v_(ModelParams::zeros(dims)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelParams& params, const ModelParams& grads, double lr, const std::set<ParamGroup>& trainable) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    std::vector<const Matrix*> g;
    std::vector<Matrix*> m, v;
    grads.for_each([&](const std::string&, ParamGroup, const Matrix& x) { g.push_back(&x); });
    m_.for_each([&](const std::string&, ParamGroup, Matrix& x) { m.push_back(&x); });
    v_.for_each([&](const std::string&, ParamGroup, Matrix& x) { v.push_back(&x); });
    std::size_t i = 0;
    params.for_each([&](const std::string& name, ParamGroup group, Matrix& w) {
      const std::size_t k = i++;
      if (!trainable.contains(group)) return;
      const Matrix& d = *g[k];
      if (!d.allFinite()) throw Error(ErrorCode::kNonFiniteLoss, "non-finite gradient for " + name);
      *m[k] = beta1_ * *m[k] + (1.0 - beta1_) * d;
      *v[k] = beta2_ * *v[k] + (1.0 - beta2_) * d.cwiseAbs2();
      w.array() -= lr * (m[k]->array() / c1) / ((v[k]->array() / c2).sqrt() + eps_);
    });
  }

 private:
  ModelParams m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

using EpochCallback = std::function<void(int stage, int epoch, double mean_loss)>;

namespace detail {

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

/// Genuine labels first, then each label's resemblants in batch order. The
/// count is capped at the variant space of short labels.
inline std::vector<std::string> batch_texts(const std::vector<const LabeledSample*>& batch, std::size_t resemblants,
                                            std::uint64_t seed) {
  std::vector<std::string> texts;
  for (const auto* s : batch) texts.push_back(s->label);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::string& label = batch[i]->label;
    ResemblantSpec spec;
    spec.count = std::min(resemblants, ConfusionTable::kRowSize * label.size());
    spec.seed = mix_seed(seed, i);
    for (auto& r : generate_resemblants(label, spec)) texts.push_back(std::move(r));
  }
  return texts;
}

/// One stage of mini-batch descent on lambda_recog * L_recog + lambda_sitm * L_itc.
inline std::vector<double> run_stage(ModelParams& params, const TrainConfig& cfg, const StageConfig& stage,
                                     int stage_id, const std::vector<LabeledSample>& train,
                                     const EpochCallback& on_epoch) {
  std::vector<double> losses;
  if (stage.epochs == 0) return losses;
  if (train.empty()) throw Error(ErrorCode::kInvalidArgument, "empty training set");
  ModelParams grads = ModelParams::zeros(params.dims);
  AdamState adam(params.dims);
  int step = 0;
  for (int epoch = 0; epoch < stage.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(stage_id) * 100000 + epoch);
    const auto order = epoch_order(train.size(), epoch_seed);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const LabeledSample*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train[order[k]]);
      grads.set_zero();
      double loss = 0.0;
      if (stage.lambda_recog > 0) {
        const double w = stage.lambda_recog / static_cast<double>(batch.size());
        double recog = 0.0;
        for (const auto* s : batch) recog += recognition_loss_and_grad(params, s->image, s->label, w, grads);
        loss += stage.lambda_recog * recog / static_cast<double>(batch.size());
      }
      if (stage.lambda_sitm > 0 && batch.size() >= 2) {
        ItcBatch ib;
        for (const auto* s : batch) ib.images.push_back(&s->image);
        ib.texts = batch_texts(batch, cfg.resemblants, mix_seed(epoch_seed, start + 1));
        ModelParams itc_grads = ModelParams::zeros(params.dims);
        loss += stage.lambda_sitm * itc_loss(params, ib, cfg.tau, &itc_grads).loss;
        grads.add_scaled(itc_grads, stage.lambda_sitm);
      }
      if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFiniteLoss, "training loss is not finite");
      ++step;
      double lr = stage.learning_rate;
      if (stage.warmup_steps > 0 && step < stage.warmup_steps) lr *= static_cast<double>(step) / stage.warmup_steps;
      if (stage.clip_norm > 0) clip_grad_norm(grads, stage.clip_norm, stage.trainable);
      if (stage.optimizer == OptimizerKind::kAdam)
        adam.step(params, grads, lr, stage.trainable);
      else
        sgd_step(params, grads, lr, stage.trainable);
      total += loss;
      ++batches;
    }
    losses.push_back(total / static_cast<double>(batches));
    if (on_epoch) on_epoch(stage_id, epoch, losses.back());
  }
  return losses;
}

}  // namespace detail

/// Recognition-only stage (lambda = (1, 0)). Returns the mean loss per epoch.
inline std::vector<double> train_stage1(ModelParams& params, const TrainConfig& cfg,
                                        const std::vector<LabeledSample>& train, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (!cfg.stage1_clean_renders) return detail::run_stage(params, cfg, cfg.stage1, 1, train, on_epoch);
  std::vector<LabeledSample> clean;
  clean.reserve(train.size());
  for (const auto& s : train) clean.push_back({render(s.label), s.label});
  return detail::run_stage(params, cfg, cfg.stage1, 1, clean, on_epoch);
}

/// Matching stage (lambda = (0, 1)): each batch holds N images, their N labels
/// and N * (M - 1) resemblants drawn fresh per batch.
inline std::vector<double> train_stage2(ModelParams& params, const TrainConfig& cfg,
                                        const std::vector<LabeledSample>& train, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (cfg.match_attention_from_recog && cfg.stage2.epochs > 0) params.match_attention = params.recog_attention;
  return detail::run_stage(params, cfg, cfg.stage2, 2, train, on_epoch);
}

}  // namespace vdict
