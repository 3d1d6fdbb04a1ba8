#pragma once

// Stage-2 training objectives: hard/soft pseudo-label losses, class-balanced
// re-weighting of the soft loss, uncertainty-weighted feature mixup, and the
// total objective (weighted soft + mixup + video-level).

#include <cstdint>
#include <random>
#include <vector>

#include "uwav/dataset.hpp"
#include "uwav/han.hpp"
#include "uwav/mat.hpp"
#include "uwav/nn.hpp"

namespace uwav {

enum class LabelMode { hard, soft };

struct MixupConfig {
  double alpha = 1.7;          // Beta concentration
  bool per_pair_lambda = false;
  bool ceil_labels = false;    // replace soft targets by their ceiling first
};

// Dataset-level positive/negative loss weights per modality, computed once
// from the frozen binary pseudo-labels before training. The positive weight
// is the negative-cell fraction scaled by the multiplier W and vice versa.
struct ClassBalanceWeights {
  double visual_positive = 1.0, visual_negative = 1.0;
  double audio_positive = 1.0, audio_negative = 1.0;
  double multiplier = 0.5;  // W
  std::size_t videos = 0, segments = 0, classes = 0;
};

inline ClassBalanceWeights class_balance_weights(const PseudoLabelSet& set, double W) {
  if (set.videos.empty())
    throw std::invalid_argument("class_balance_weights: empty pseudo-label set");
  ClassBalanceWeights w;
  w.multiplier = W;
  w.videos = set.videos.size();
  const auto& first = set.videos.begin()->second;
  w.segments = first.binary_visual.rows;
  w.classes = first.binary_visual.cols;
  const double total = double(w.videos) * double(w.segments) * double(w.classes);
  double ones_v = 0, ones_a = 0;
  for (const auto& [id, v] : set.videos) {
    for (auto b : v.binary_visual.v) ones_v += b;
    for (auto b : v.binary_audio.v) ones_a += b;
  }
  w.visual_negative = ones_v / total;
  w.visual_positive = (total - ones_v) / total * W;
  w.audio_negative = ones_a / total;
  w.audio_positive = (total - ones_a) / total * W;
  return w;
}

inline Tensor pseudo_targets(const VideoPseudoLabels& labels, LabelMode mode, bool visual) {
  if (mode == LabelMode::hard)
    return to_tensor(visual ? labels.binary_visual : labels.binary_audio);
  return to_tensor(visual ? labels.soft_visual : labels.soft_audio);
}

// Sum over modalities of the mean BCE against the frozen pseudo-labels.
template <class S>
BasicTensor<S> pseudo_label_loss(const SegmentPredictionsT<S>& preds,
                                 const BasicTensor<S>& visual_targets,
                                 const BasicTensor<S>& audio_targets) {
  return add(bce(preds.visual_probs, visual_targets),
             bce(preds.audio_probs, audio_targets));
}

// Per-cell weights for the re-weighted soft loss: the positive weight on
// classes present in the video-level label, the negative weight elsewhere.
inline MatF balance_weight_matrix(const std::vector<float>& video_labels,
                                  std::size_t segments, double w_pos, double w_neg) {
  MatF w(segments, video_labels.size());
  for (std::size_t t = 0; t < segments; ++t)
    for (std::size_t c = 0; c < video_labels.size(); ++c)
      w.at(t, c) = float(video_labels[c] > 0.5f ? w_pos : w_neg);
  return w;
}

template <class S>
BasicTensor<S> weighted_soft_loss(const SegmentPredictionsT<S>& preds,
                                  const BasicTensor<S>& visual_targets,
                                  const BasicTensor<S>& audio_targets,
                                  const std::vector<float>& video_labels,
                                  const ClassBalanceWeights& w) {
  const std::size_t segments = preds.visual_probs.shape()[0];
  auto wv = to_tensor(
      balance_weight_matrix(video_labels, segments, w.visual_positive, w.visual_negative));
  auto wa = to_tensor(
      balance_weight_matrix(video_labels, segments, w.audio_positive, w.audio_negative));
  auto wv_s = BasicTensor<S>::from_data(wv.shape(), std::vector<S>(wv.data().begin(), wv.data().end()));
  auto wa_s = BasicTensor<S>::from_data(wa.shape(), std::vector<S>(wa.data().begin(), wa.data().end()));
  return add(bce(preds.visual_probs, visual_targets, &wv_s),
             bce(preds.audio_probs, audio_targets, &wa_s));
}

// One mixing plan per optimization step: a Beta(alpha, alpha) coefficient
// (or one per pair) and a uniformly random pairing over the flattened
// batch-by-time segment index space, shared by both modalities.
struct MixupPlan {
  std::vector<double> lambdas;        // size 1, or one per row in per-pair mode
  std::vector<std::size_t> pairing;   // permutation of row indices
};

inline double sample_beta(double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  return x / (x + y);
}

inline MixupPlan plan_mixup(std::size_t rows, const MixupConfig& cfg, Rng& rng) {
  if (cfg.alpha <= 0.0) throw std::invalid_argument("mixup alpha must be positive");
  MixupPlan plan;
  plan.pairing.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) plan.pairing[i] = i;
  std::shuffle(plan.pairing.begin(), plan.pairing.end(), rng);
  const std::size_t n = cfg.per_pair_lambda ? rows : 1;
  plan.lambdas.reserve(n);
  for (std::size_t i = 0; i < n; ++i) plan.lambdas.push_back(sample_beta(cfg.alpha, rng));
  return plan;
}

// Interpolated labels as plain values (targets carry no gradient).
inline MatF mix_labels(const MatF& labels, const MixupPlan& plan, bool ceil_labels) {
  MatF source = labels;
  if (ceil_labels)
    for (auto& v : source.v) v = std::ceil(v);
  MatF mixed(source.rows, source.cols);
  for (std::size_t i = 0; i < source.rows; ++i) {
    const double lam = plan.lambdas[plan.lambdas.size() == 1 ? 0 : i];
    const std::size_t j = plan.pairing[i];
    for (std::size_t c = 0; c < source.cols; ++c)
      mixed.at(i, c) = lam == 1.0
                           ? source.at(i, c)
                           : float(lam * double(source.at(i, c)) +
                                   (1.0 - lam) * double(source.at(j, c)));
  }
  return mixed;
}

// Convex combination of feature rows with their paired rows, in-graph so the
// mixup loss trains the attention stack as well as the classifier.
template <class S>
BasicTensor<S> mix_features(const BasicTensor<S>& features, const MixupPlan& plan) {
  const std::size_t rows = features.shape()[0], cols = features.shape()[1];
  if (plan.pairing.size() != rows)
    throw std::invalid_argument("mixup plan does not match the feature row count");
  if (plan.lambdas.size() == 1 && plan.lambdas[0] == 1.0) return features;
  std::vector<S> lam_v(rows * cols), inv_v(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double lam = plan.lambdas[plan.lambdas.size() == 1 ? 0 : i];
    for (std::size_t c = 0; c < cols; ++c) {
      lam_v[i * cols + c] = S(lam);
      inv_v[i * cols + c] = S(1.0 - lam);
    }
  }
  auto lam_t = BasicTensor<S>::from_data(features.shape(), std::move(lam_v));
  auto inv_t = BasicTensor<S>::from_data(features.shape(), std::move(inv_v));
  return add(mul(features, lam_t), mul(gather_rows(features, plan.pairing), inv_t));
}

// Mixed features pass through the shared classifier and sigmoid only.
template <class S>
BasicTensor<S> mixup_loss(const BasicTensor<S>& mixed_visual,
                          const BasicTensor<S>& mixed_audio,
                          const BasicTensor<S>& visual_targets,
                          const BasicTensor<S>& audio_targets,
                          const LinearT<S>& classifier) {
  return add(bce(sigmoid(classifier(mixed_visual)), visual_targets),
             bce(sigmoid(classifier(mixed_audio)), audio_targets));
}

// Unweighted sum of the three stage-2 components.
template <class S>
BasicTensor<S> total_loss(const BasicTensor<S>& weighted_soft, const BasicTensor<S>& mix,
                          const BasicTensor<S>& video) {
  return add(add(weighted_soft, mix), video);
}

template <class S>
BasicTensor<S> constant_cast(const Tensor& t) {
  if constexpr (std::is_same_v<S, float>)
    return t;
  else {
    std::vector<S> v(t.data().begin(), t.data().end());
    return BasicTensor<S>::from_data(t.shape(), std::move(v));
  }
}

inline ClassBalanceWeights neutral_balance_weights() {
  ClassBalanceWeights w;
  w.visual_positive = w.visual_negative = 1.0;
  w.audio_positive = w.audio_negative = 1.0;
  w.multiplier = 1.0;
  return w;
}

struct Stage2LossOptions {
  LabelMode label_mode = LabelMode::soft;
  bool mixup = true;
  bool ceil_labels = false;
  bool include_hard_loss = false;
};

template <class S>
struct Stage2BatchLoss {
  BasicTensor<S> weighted_soft, mix, video, total;
};

// The full per-batch stage-2 objective, shared between the float training
// loop and the double-precision gradient-check path. Targets and weights are
// constants; gradients flow through the model only. `plan` is required when
// mixup is enabled and must cover batch_size * T rows.
template <class S>
Stage2BatchLoss<S> stage2_batch_loss(const HanModelT<S>& model,
                                     const std::vector<const VideoEntry*>& batch,
                                     const std::vector<const VideoPseudoLabels*>& labels,
                                     const ClassBalanceWeights& weights,
                                     const Stage2LossOptions& opts, const MixupPlan* plan,
                                     const TrainCtx& ctx = {}) {
  if (batch.empty()) throw std::invalid_argument("stage2_batch_loss: empty batch");
  if (batch.size() != labels.size())
    throw std::invalid_argument("stage2_batch_loss: labels do not match the batch");
  const std::size_t classes = model.num_classes();
  BasicTensor<S> wsoft_sum, video_sum;
  std::vector<BasicTensor<S>> visual_feats, audio_feats;
  std::vector<MatF> target_rows_v, target_rows_a;
  BasicTensor<S> hard_sum;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const VideoEntry& video = *batch[n];
    const VideoPseudoLabels& pl = *labels[n];
    auto preds = han_forward(constant_cast<S>(video.features.visual_backbone),
                             constant_cast<S>(video.features.audio_backbone), model, ctx);
    const Tensor tv = pseudo_targets(pl, opts.label_mode, /*visual=*/true);
    const Tensor ta = pseudo_targets(pl, opts.label_mode, /*visual=*/false);
    const auto y = video_label_floats(video, classes);
    auto wsoft = weighted_soft_loss(preds, constant_cast<S>(tv), constant_cast<S>(ta), y,
                                    weights);
    auto vloss = video_loss(preds, constant_cast<S>(Tensor::from_data({classes},
                                                                      std::vector<float>(y))));
    wsoft_sum = n == 0 ? wsoft : add(wsoft_sum, wsoft);
    video_sum = n == 0 ? vloss : add(video_sum, vloss);
    if (opts.include_hard_loss) {
      auto hard = pseudo_label_loss(preds, constant_cast<S>(to_tensor(pl.binary_visual)),
                                    constant_cast<S>(to_tensor(pl.binary_audio)));
      hard_sum = n == 0 ? hard : add(hard_sum, hard);
    }
    if (opts.mixup) {
      visual_feats.push_back(preds.visual_features);
      audio_feats.push_back(preds.audio_features);
      target_rows_v.push_back(opts.label_mode == LabelMode::soft
                                  ? pl.soft_visual
                                  : to_matf(pl.binary_visual));
      target_rows_a.push_back(opts.label_mode == LabelMode::soft
                                  ? pl.soft_audio
                                  : to_matf(pl.binary_audio));
    }
  }
  const double inv_batch = 1.0 / double(batch.size());
  Stage2BatchLoss<S> out;
  out.weighted_soft = scale(wsoft_sum, inv_batch);
  out.video = scale(video_sum, inv_batch);
  if (opts.mixup) {
    if (!plan) throw std::invalid_argument("stage2_batch_loss: mixup enabled without a plan");
    auto flat_v = concat_rows(visual_feats);
    auto flat_a = concat_rows(audio_feats);
    MatF labels_v(flat_v.shape()[0], classes), labels_a(flat_a.shape()[0], classes);
    std::size_t row = 0;
    for (std::size_t n = 0; n < target_rows_v.size(); ++n) {
      std::copy(target_rows_v[n].v.begin(), target_rows_v[n].v.end(),
                labels_v.v.begin() + row * classes);
      std::copy(target_rows_a[n].v.begin(), target_rows_a[n].v.end(),
                labels_a.v.begin() + row * classes);
      row += target_rows_v[n].rows;
    }
    auto mixed_v = mix_features(flat_v, *plan);
    auto mixed_a = mix_features(flat_a, *plan);
    auto targets_v = constant_cast<S>(to_tensor(mix_labels(labels_v, *plan, opts.ceil_labels)));
    auto targets_a = constant_cast<S>(to_tensor(mix_labels(labels_a, *plan, opts.ceil_labels)));
    out.mix = mixup_loss(mixed_v, mixed_a, targets_v, targets_a, model.classifier);
  } else {
    out.mix = BasicTensor<S>::scalar(S(0));
  }
  out.total = total_loss(out.weighted_soft, out.mix, out.video);
  if (opts.include_hard_loss) out.total = add(out.total, scale(hard_sum, inv_batch));
  return out;
}

}  // namespace uwav
