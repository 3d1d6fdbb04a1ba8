#include "uwav/pseudolabeler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uwav {

std::string to_string(CalibrationMethod method) {
  return method == CalibrationMethod::otsu ? "otsu" : "quantile";
}

CalibrationMethod calibration_method_from(const std::string& name) {
  if (name == "otsu") return CalibrationMethod::otsu;
  if (name == "quantile") return CalibrationMethod::quantile;
  throw std::invalid_argument("unknown calibration method '" + name + "'");
}

float linear_quantile(std::vector<float> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty pool");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const std::size_t lo = std::size_t(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return float((1.0 - frac) * values[lo] + frac * values[hi]);
}

float otsu_threshold(std::vector<float> values) {
  if (values.empty()) throw std::invalid_argument("otsu threshold of empty pool");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (values.front() == values.back()) return values.front();
  std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + values[i];
    prefix_sq[i + 1] = prefix_sq[i] + double(values[i]) * double(values[i]);
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_split = 1;
  for (std::size_t k = 1; k < n; ++k) {
    const double nl = double(k), nr = double(n - k);
    const double var_l = prefix_sq[k] - prefix[k] * prefix[k] / nl;
    const double var_r =
        (prefix_sq[n] - prefix_sq[k]) - (prefix[n] - prefix[k]) * (prefix[n] - prefix[k]) / nr;
    const double within = var_l + var_r;
    if (within < best) {
      best = within;
      best_split = k;
    }
  }
  return float(0.5 * (double(values[best_split - 1]) + double(values[best_split])));
}

std::vector<float> calibrate_class_thresholds(
    const std::vector<MatF>& logits_per_video,
    const std::vector<std::vector<std::uint8_t>>& video_labels, double q,
    CalibrationMethod method) {
  if (logits_per_video.empty())
    throw std::invalid_argument("threshold calibration requires a non-empty train split");
  if (logits_per_video.size() != video_labels.size())
    throw std::invalid_argument("calibration: logits and labels disagree on video count");
  const std::size_t classes = logits_per_video.front().cols;
  std::vector<float> thresholds(classes, kNeverPositiveThreshold);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<float> pool;
    for (std::size_t n = 0; n < logits_per_video.size(); ++n) {
      if (!video_labels[n][c]) continue;
      const MatF& m = logits_per_video[n];
      for (std::size_t t = 0; t < m.rows; ++t) pool.push_back(m.at(t, c));
    }
    if (pool.empty()) continue;
    thresholds[c] = method == CalibrationMethod::otsu ? otsu_threshold(std::move(pool))
                                                      : linear_quantile(std::move(pool), q);
  }
  return thresholds;
}

MatF soft_pseudo_labels(const MatF& logits, const std::vector<float>& thresholds,
                        const std::vector<std::uint8_t>& video_labels) {
  if (thresholds.size() != logits.cols || video_labels.size() != logits.cols)
    throw std::invalid_argument("soft_pseudo_labels: class count mismatch");
  MatF soft(logits.rows, logits.cols);
  for (std::size_t t = 0; t < logits.rows; ++t)
    for (std::size_t c = 0; c < logits.cols; ++c) {
      if (!video_labels[c]) continue;  // masked classes stay exactly 0
      const double margin = double(logits.at(t, c)) - double(thresholds[c]);
      soft.at(t, c) = float(detail::stable_sigmoid(margin));
    }
  return soft;
}

MatB binary_pseudo_labels(const MatF& logits, const std::vector<float>& thresholds,
                          const std::vector<std::uint8_t>& video_labels) {
  const MatF soft = soft_pseudo_labels(logits, thresholds, video_labels);
  MatB binary(soft.rows, soft.cols);
  for (std::size_t i = 0; i < soft.v.size(); ++i) binary.v[i] = soft.v[i] > 0.5f;
  return binary;
}

PseudoLabelerLogits pseudo_labeler_logits(const PseudoLabeler& model,
                                          const FeatureBundle& features,
                                          const TextEmbeddings& text) {
  PseudoLabelerLogits out;
  out.visual =
      to_mat(segment_logits(encode_stack(model.visual, features.visual_embed), text.visual));
  out.audio =
      to_mat(segment_logits(encode_stack(model.audio, features.audio_embed), text.audio));
  return out;
}

PseudoLabelSet emit_pseudo_labels(const PseudoLabeler& model, const Dataset& dataset,
                                  double quantile, CalibrationMethod method) {
  std::vector<MatF> visual_logits, audio_logits;
  std::vector<std::vector<std::uint8_t>> labels;
  visual_logits.reserve(dataset.num_videos());
  audio_logits.reserve(dataset.num_videos());
  for (const auto& video : dataset.videos) {
    auto logits = pseudo_labeler_logits(model, video.features, dataset.text);
    visual_logits.push_back(std::move(logits.visual));
    audio_logits.push_back(std::move(logits.audio));
    labels.push_back(video.labels.video_labels);
  }
  PseudoLabelSet set;
  set.quantile = quantile;
  set.method = to_string(method);
  set.thresholds_visual = calibrate_class_thresholds(visual_logits, labels, quantile, method);
  set.thresholds_audio = calibrate_class_thresholds(audio_logits, labels, quantile, method);
  for (std::size_t n = 0; n < dataset.num_videos(); ++n) {
    VideoPseudoLabels v;
    v.soft_visual = soft_pseudo_labels(visual_logits[n], set.thresholds_visual, labels[n]);
    v.soft_audio = soft_pseudo_labels(audio_logits[n], set.thresholds_audio, labels[n]);
    v.binary_visual = MatB(v.soft_visual.rows, v.soft_visual.cols);
    v.binary_audio = MatB(v.soft_audio.rows, v.soft_audio.cols);
    for (std::size_t i = 0; i < v.soft_visual.v.size(); ++i) {
      v.binary_visual.v[i] = v.soft_visual.v[i] > 0.5f;
      v.binary_audio.v[i] = v.soft_audio.v[i] > 0.5f;
    }
    set.videos[dataset.videos[n].features.video_id] = std::move(v);
  }
  return set;
}

double segment_av_accuracy(const PseudoLabeler& model, const Dataset& supervised,
                           double tau) {
  if (supervised.mode != DatasetMode::supervised)
    throw std::logic_error("segment_av_accuracy expects a supervised dataset");
  std::size_t correct = 0, total = 0;
  for (const auto& video : supervised.videos) {
    const auto logits = pseudo_labeler_logits(model, video.features, supervised.text);
    const MatB& gt = *video.labels.segment_av;
    for (std::size_t t = 0; t < logits.visual.rows; ++t)
      for (std::size_t c = 0; c < logits.visual.cols; ++c) {
        const double p = detail::stable_sigmoid(double(logits.visual.at(t, c))) *
                         detail::stable_sigmoid(double(logits.audio.at(t, c)));
        correct += std::size_t((p > tau) == bool(gt.at(t, c)));
        ++total;
      }
  }
  return total ? double(correct) / double(total) : 0.0;
}

}  // namespace uwav
