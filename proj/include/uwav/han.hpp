#pragma once

// Stage-2 inference model: per-modality input projections, one hybrid
// attention layer, a classifier whose single parameter set serves both
// modalities, and attentive pooling over modality and time that turns
// segment probabilities into video-level probabilities.

#include <string>
#include <vector>

#include "uwav/dataset.hpp"
#include "uwav/mat.hpp"
#include "uwav/nn.hpp"

namespace uwav {

// Pooled probabilities are clamped here before any loss: the attention
// weights normalize over different axes, so the weighted sum can leave [0,1].
inline constexpr double kPooledProbEps = 1e-7;

template <class S>
struct HanModelT {
  LinearT<S> project_visual;  // d_v -> d
  LinearT<S> project_audio;   // d_a -> d
  HanLayerParamsT<S> attention;
  LinearT<S> classifier;  // d -> C, shared by both modality paths
  LinearT<S> modal_head;  // d -> C
  LinearT<S> time_head;   // d -> C

  std::size_t model_dim() const { return project_visual.out_dim(); }
  std::size_t num_classes() const { return classifier.out_dim(); }

  NamedParams<S> named_parameters() const {
    NamedParams<S> out;
    project_visual.collect("project_visual", out);
    project_audio.collect("project_audio", out);
    attention.collect("attention", out);
    classifier.collect("classifier", out);
    modal_head.collect("modal_head", out);
    time_head.collect("time_head", out);
    return out;
  }
};
using HanModel = HanModelT<float>;

struct HanConfig {
  std::size_t visual_dim = 32;  // backbone widths
  std::size_t audio_dim = 32;
  std::size_t model_dim = 64;
  std::size_t num_classes = 8;
  std::size_t attention_heads = 4;
};

inline HanModel make_han_model(const HanConfig& cfg, Rng& rng) {
  HanModel m;
  m.project_visual = make_linear(cfg.visual_dim, cfg.model_dim, rng);
  m.project_audio = make_linear(cfg.audio_dim, cfg.model_dim, rng);
  m.attention = make_han_layer(cfg.model_dim, cfg.attention_heads, rng);
  m.classifier = make_linear(cfg.model_dim, cfg.num_classes, rng);
  m.modal_head = make_linear(cfg.model_dim, cfg.num_classes, rng);
  m.time_head = make_linear(cfg.model_dim, cfg.num_classes, rng);
  return m;
}

inline HanModelT<double> widen(const HanModel& m) {
  return HanModelT<double>{widen(m.project_visual), widen(m.project_audio),
                           widen(m.attention),      widen(m.classifier),
                           widen(m.modal_head),     widen(m.time_head)};
}

template <class S>
struct SegmentPredictionsT {
  BasicTensor<S> visual_features, audio_features;  // attended features, T x d
  BasicTensor<S> visual_logits, audio_logits;      // T x C
  BasicTensor<S> visual_probs, audio_probs;        // T x C, sigmoid of logits
  BasicTensor<S> video_probs;                      // C, clamped pooled probabilities
  BasicTensor<S> modal_weight_visual, modal_weight_audio;  // T x C, sum to 1 across modality
  BasicTensor<S> time_weight_visual, time_weight_audio;    // T x C, sum to 1 across time
};
using SegmentPredictions = SegmentPredictionsT<float>;

// Attentive pooling: modality weights come from a two-way softmax of the
// modal head scores, temporal weights from a softmax over segments, and the
// video probability is the doubly weighted sum of segment probabilities.
template <class S>
void mmil_pool(SegmentPredictionsT<S>& preds, const HanModelT<S>& model) {
  auto score_v = model.modal_head(preds.visual_features);
  auto score_a = model.modal_head(preds.audio_features);
  preds.modal_weight_visual = sigmoid(sub(score_v, score_a));
  preds.modal_weight_audio = sigmoid(sub(score_a, score_v));
  preds.time_weight_visual = softmax(model.time_head(preds.visual_features), 0);
  preds.time_weight_audio = softmax(model.time_head(preds.audio_features), 0);
  auto pooled = add(
      sum_axis(mul(mul(preds.modal_weight_visual, preds.time_weight_visual),
                   preds.visual_probs),
               0),
      sum_axis(mul(mul(preds.modal_weight_audio, preds.time_weight_audio),
                   preds.audio_probs),
               0));
  preds.video_probs = clamp_t(pooled, kPooledProbEps, 1.0 - kPooledProbEps);
}

template <class S>
SegmentPredictionsT<S> han_forward(const BasicTensor<S>& visual_backbone,
                                   const BasicTensor<S>& audio_backbone,
                                   const HanModelT<S>& model, const TrainCtx& ctx = {}) {
  SegmentPredictionsT<S> preds;
  auto fv = model.project_visual(visual_backbone);
  auto fa = model.project_audio(audio_backbone);
  auto [av, aa] = han_layer(fv, fa, model.attention, ctx);
  preds.visual_features = av;
  preds.audio_features = aa;
  preds.visual_logits = model.classifier(preds.visual_features);
  preds.audio_logits = model.classifier(preds.audio_features);
  preds.visual_probs = sigmoid(preds.visual_logits);
  preds.audio_probs = sigmoid(preds.audio_logits);
  mmil_pool(preds, model);
  return preds;
}

inline SegmentPredictions han_forward(const FeatureBundle& bundle, const HanModel& model,
                                      const TrainCtx& ctx = {}) {
  return han_forward(bundle.visual_backbone, bundle.audio_backbone, model, ctx);
}

// Video-level weak loss: mean binary cross-entropy between the pooled
// probabilities and the video-level labels.
template <class S>
BasicTensor<S> video_loss(const SegmentPredictionsT<S>& preds,
                          const BasicTensor<S>& video_labels) {
  return bce(preds.video_probs, video_labels);
}

struct BinarySegmentPredictions {
  MatB visual, audio, av;  // av is the per-cell conjunction
};

// Inference-time binarization at strict threshold tau; an audio-visual
// positive requires both modalities.
inline BinarySegmentPredictions predict_segments(const SegmentPredictions& preds,
                                                 double tau = 0.5) {
  const std::size_t rows = preds.visual_probs.shape()[0];
  const std::size_t cols = preds.visual_probs.shape()[1];
  BinarySegmentPredictions out;
  out.visual = MatB(rows, cols);
  out.audio = MatB(rows, cols);
  out.av = MatB(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    out.visual.v[i] = double(preds.visual_probs.data()[i]) > tau;
    out.audio.v[i] = double(preds.audio_probs.data()[i]) > tau;
    out.av.v[i] = out.visual.v[i] && out.audio.v[i];
  }
  return out;
}

}  // namespace uwav
