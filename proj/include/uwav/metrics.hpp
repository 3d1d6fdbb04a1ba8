#pragma once

// Evaluation protocol: segment-level and event-level macro F-scores for the
// audio, visual and audio-visual event types, the Type@AV and Event@AV
// aggregates, and per-segment accuracy for single-event datasets.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uwav/dataset.hpp"
#include "uwav/mat.hpp"

namespace uwav {

enum class Modality { audio, visual };

struct EventInterval {
  std::size_t class_index = 0;
  std::size_t begin = 0;  // inclusive segment index
  std::size_t end = 0;    // exclusive segment index
  Modality modality = Modality::visual;
};

// Maximal runs of consecutive positive segments, ordered by start.
std::vector<EventInterval> extract_events(const std::vector<std::uint8_t>& timeline,
                                          std::size_t class_index,
                                          Modality modality = Modality::visual);

// Inverse of extract_events over one class/modality timeline.
std::vector<std::uint8_t> rasterize_events(const std::vector<EventInterval>& events,
                                           std::size_t length);

double interval_iou(const EventInterval& a, const EventInterval& b);

struct MatchCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

// F = 2TP / (2TP + FP + FN); an empty prediction against empty ground truth
// counts as a correct "nothing happened" and scores 1. This convention is
// isolated here so it can be flipped for parity experiments.
double f1_from_counts(const MatchCounts& c);

// Cell-wise counts over a T x C binary matrix pair.
MatchCounts segment_counts(const MatB& pred, const MatB& gt);

// Greedy one-to-one matching in descending IoU order; only pairs at or above
// the threshold are candidates; ties break on earlier ground-truth start,
// then earlier prediction start.
MatchCounts match_events(const std::vector<EventInterval>& gt,
                         const std::vector<EventInterval>& pred, double iou_threshold);

// Event counts for one video and one modality matrix pair, pooled over
// classes.
MatchCounts event_counts(const MatB& pred, const MatB& gt, double iou_threshold);

struct TypeScores {
  double audio = 0, visual = 0, audio_visual = 0;
  double type_at_av = 0;   // mean of the three
  double event_at_av = 0;  // modality-pooled
};

struct VideoScores {
  std::string video_id;
  TypeScores segment, event;
};

struct MetricReport {
  TypeScores segment, event;
  std::optional<double> ave_accuracy;
  std::vector<VideoScores> per_video;
};

struct VideoBinary {
  MatB visual, audio;  // T x C
};

// Dataset-level report: per-video scores averaged over videos (macro), the
// AV type scored on the per-cell conjunction of the two modalities, and
// Event@AV pooling counts across modalities.
MetricReport evaluate_predictions(const std::vector<std::string>& video_ids,
                                  const std::vector<VideoBinary>& predictions,
                                  const std::vector<VideoBinary>& ground_truth,
                                  double iou_threshold = 0.5);

// Per-segment single-event labels: class index, or -1 for background.
using AveLabels = std::vector<int>;

// Derives single-label-per-segment ground truth from the AND of the two
// modality matrices; more than one joint class on a segment is a mode error.
AveLabels ave_labels_from(const SegmentGroundTruth& gt);

// Joint score per cell is the product of the modality probabilities; the
// prediction is the argmax class when its score reaches tau^2, else
// background. Returns the fraction of segments whose prediction matches.
double ave_accuracy(const std::vector<MatF>& visual_probs,
                    const std::vector<MatF>& audio_probs,
                    const std::vector<AveLabels>& labels, double tau = 0.5);

// Scores scaled by 100 with one decimal, segment and event rows by the five
// type columns.
std::string metric_table(const MetricReport& report);

void write_metric_report(const std::filesystem::path& path, const MetricReport& report);

}  // namespace uwav
