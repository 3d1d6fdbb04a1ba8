#pragma once

// Stage-1 pseudo-label generation: per-modality transformer encoder stacks
// over frozen embedding-space features, logits against per-class text
// embeddings, multimodal pre-training loss, class-wise threshold calibration
// and emission of binary plus confidence-valued soft pseudo-labels.

#include <limits>
#include <string>
#include <vector>

#include "uwav/dataset.hpp"
#include "uwav/mat.hpp"
#include "uwav/nn.hpp"

namespace uwav {

template <class S>
struct EncoderStackT {
  std::vector<EncoderBlockParamsT<S>> blocks;
  bool use_positional = true;

  std::size_t width() const { return blocks.at(0).ln1_gain.numel(); }
  void collect(const std::string& prefix, NamedParams<S>& out) const {
    for (std::size_t l = 0; l < blocks.size(); ++l)
      blocks[l].collect(prefix + ".block" + std::to_string(l), out);
  }
};
using EncoderStack = EncoderStackT<float>;

// The model has no classifier head; logits come from inner products with
// text embeddings, which is what lets the target vocabulary be swapped after
// pre-training without touching any learned weight.
template <class S>
struct PseudoLabelerT {
  EncoderStackT<S> visual, audio;

  NamedParams<S> named_parameters() const {
    NamedParams<S> out;
    visual.collect("visual", out);
    audio.collect("audio", out);
    return out;
  }
};
using PseudoLabeler = PseudoLabelerT<float>;

struct PseudoLabelerConfig {
  std::size_t visual_width = 32;   // d1
  std::size_t audio_width = 32;    // d2
  std::size_t encoder_blocks = 5;  // L
  std::size_t attention_heads = 4;
  std::size_t ffn_multiplier = 4;
  bool positional_encoding = true;
};

inline PseudoLabeler make_pseudo_labeler(const PseudoLabelerConfig& cfg, Rng& rng) {
  PseudoLabeler model;
  model.visual.use_positional = cfg.positional_encoding;
  model.audio.use_positional = cfg.positional_encoding;
  for (std::size_t l = 0; l < cfg.encoder_blocks; ++l)
    model.visual.blocks.push_back(make_encoder_block(
        cfg.visual_width, cfg.attention_heads, cfg.ffn_multiplier * cfg.visual_width, rng));
  for (std::size_t l = 0; l < cfg.encoder_blocks; ++l)
    model.audio.blocks.push_back(make_encoder_block(
        cfg.audio_width, cfg.attention_heads, cfg.ffn_multiplier * cfg.audio_width, rng));
  return model;
}

inline PseudoLabelerT<double> widen(const PseudoLabeler& m) {
  PseudoLabelerT<double> d;
  d.visual.use_positional = m.visual.use_positional;
  d.audio.use_positional = m.audio.use_positional;
  for (const auto& b : m.visual.blocks) d.visual.blocks.push_back(widen(b));
  for (const auto& b : m.audio.blocks) d.audio.blocks.push_back(widen(b));
  return d;
}

template <class S>
BasicTensor<S> encode_stack(const EncoderStackT<S>& stack, const BasicTensor<S>& features,
                            const TrainCtx& ctx = {}) {
  BasicTensor<S> x = features;
  if (stack.use_positional) {
    const std::size_t dim = features.shape()[1];
    // Scaled so the positional rows sit at the magnitude of a unit feature
    // row instead of drowning it (a raw sinusoidal row has norm sqrt(d/2)).
    auto table = scale(positional_encoding<S>(features.shape()[0], dim),
                       1.0 / std::sqrt(double(dim)));
    x = add(x, table);
  }
  for (const auto& block : stack.blocks) x = encoder_block(x, block, ctx);
  return x;
}

// Segment logits: inner products of encoded segment rows against the
// per-class text embedding rows.
template <class S>
BasicTensor<S> segment_logits(const BasicTensor<S>& encoded, const BasicTensor<S>& text) {
  if (encoded.rank() != 2 || text.rank() != 2 || encoded.shape()[1] != text.shape()[1])
    throw std::invalid_argument("segment_logits: feature and text embedding widths differ");
  return matmul(encoded, transpose(text));
}

// Multimodal pre-training loss: per-cell product of the two modality
// probabilities against the supervised audio-visual labels.
template <class S>
BasicTensor<S> pretrain_loss(const BasicTensor<S>& visual_logits,
                             const BasicTensor<S>& audio_logits,
                             const BasicTensor<S>& av_targets) {
  return bce(mul(sigmoid(visual_logits), sigmoid(audio_logits)), av_targets);
}

enum class CalibrationMethod { quantile, otsu };

std::string to_string(CalibrationMethod method);
CalibrationMethod calibration_method_from(const std::string& name);

struct ThresholdVector {
  std::vector<float> visual, audio;  // length C
  CalibrationMethod method = CalibrationMethod::quantile;
  double quantile = 0.5;
  std::string source_split;
};

// Classes that appear in no positive video get this sentinel, which makes
// them unreachable by any finite logit while keeping the vector finite.
inline constexpr float kNeverPositiveThreshold = std::numeric_limits<float>::max();

// Linear-interpolation quantile of the pooled values (index q*(n-1)).
float linear_quantile(std::vector<float> values, double q);

// Two-cluster split minimizing within-cluster variance; the threshold sits
// at the midpoint of the boundary pair.
float otsu_threshold(std::vector<float> values);

// Per-class thresholds over segment logits pooled from the videos whose
// video-level label contains the class: either the q-quantile of the pool or
// its two-cluster variance split.
std::vector<float> calibrate_class_thresholds(
    const std::vector<MatF>& logits_per_video,
    const std::vector<std::vector<std::uint8_t>>& video_labels, double q,
    CalibrationMethod method = CalibrationMethod::quantile);

// Soft labels: sigmoid(logit - threshold) masked by the video-level label.
MatF soft_pseudo_labels(const MatF& logits, const std::vector<float>& thresholds,
                        const std::vector<std::uint8_t>& video_labels);

// Binary labels: positive where the logit strictly exceeds the class
// threshold on a video-level-positive class. Derived from the rounded soft
// value so the stored binary/soft pair always satisfies
// binary == (soft > 0.5).
MatB binary_pseudo_labels(const MatF& logits, const std::vector<float>& thresholds,
                          const std::vector<std::uint8_t>& video_labels);

// Both modality logits for one video (no gradient tracking).
struct PseudoLabelerLogits {
  MatF visual, audio;  // T x C
};
PseudoLabelerLogits pseudo_labeler_logits(const PseudoLabeler& model,
                                          const FeatureBundle& features,
                                          const TextEmbeddings& text);

// Runs the model over the whole dataset, calibrates thresholds on the pooled
// logits and emits the frozen pseudo-label set, ordered by video id.
PseudoLabelSet emit_pseudo_labels(const PseudoLabeler& model, const Dataset& dataset,
                                  double quantile,
                                  CalibrationMethod method = CalibrationMethod::quantile);

// Fraction of (segment, class) cells where thresholding the product of the
// two modality probabilities at `tau` reproduces the supervised AV label.
double segment_av_accuracy(const PseudoLabeler& model, const Dataset& supervised,
                           double tau = 0.5);

}  // namespace uwav
