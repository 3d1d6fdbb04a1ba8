#include "uwav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace uwav {

std::vector<EventInterval> extract_events(const std::vector<std::uint8_t>& timeline,
                                          std::size_t class_index, Modality modality) {
  for (auto v : timeline)
    if (v != 0 && v != 1) throw std::domain_error("extract_events: timeline must be binary");
  std::vector<EventInterval> events;
  std::size_t t = 0;
  while (t < timeline.size()) {
    if (!timeline[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < timeline.size() && timeline[end]) ++end;
    events.push_back(EventInterval{class_index, t, end, modality});
    t = end;
  }
  return events;
}

std::vector<std::uint8_t> rasterize_events(const std::vector<EventInterval>& events,
                                           std::size_t length) {
  std::vector<std::uint8_t> timeline(length, 0);
  for (const auto& e : events) {
    if (e.begin >= e.end || e.end > length)
      throw std::invalid_argument("rasterize_events: interval out of range");
    for (std::size_t t = e.begin; t < e.end; ++t) timeline[t] = 1;
  }
  return timeline;
}

double interval_iou(const EventInterval& a, const EventInterval& b) {
  const std::size_t inter_begin = std::max(a.begin, b.begin);
  const std::size_t inter_end = std::min(a.end, b.end);
  const double inter = inter_end > inter_begin ? double(inter_end - inter_begin) : 0.0;
  const double uni = double(a.end - a.begin) + double(b.end - b.begin) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double f1_from_counts(const MatchCounts& c) {
  if (c.tp == 0 && c.fp == 0 && c.fn == 0) return 1.0;
  return 2.0 * double(c.tp) / double(2 * c.tp + c.fp + c.fn);
}

MatchCounts segment_counts(const MatB& pred, const MatB& gt) {
  if (pred.rows != gt.rows || pred.cols != gt.cols)
    throw std::invalid_argument("segment_counts: shape mismatch");
  MatchCounts c;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    if (pred.v[i] && gt.v[i]) ++c.tp;
    else if (pred.v[i]) ++c.fp;
    else if (gt.v[i]) ++c.fn;
  }
  return c;
}

MatchCounts match_events(const std::vector<EventInterval>& gt,
                         const std::vector<EventInterval>& pred, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw std::invalid_argument("event matching threshold must lie in (0,1]");
  struct Candidate {
    double iou;
    std::size_t gi, pi;
  };
  std::vector<Candidate> candidates;
  for (std::size_t gi = 0; gi < gt.size(); ++gi)
    for (std::size_t pi = 0; pi < pred.size(); ++pi) {
      const double iou = interval_iou(gt[gi], pred[pi]);
      if (iou >= iou_threshold) candidates.push_back({iou, gi, pi});
    }
  std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (gt[a.gi].begin != gt[b.gi].begin) return gt[a.gi].begin < gt[b.gi].begin;
    return pred[a.pi].begin < pred[b.pi].begin;
  });
  std::vector<bool> gt_used(gt.size(), false), pred_used(pred.size(), false);
  MatchCounts c;
  for (const auto& cand : candidates) {
    if (gt_used[cand.gi] || pred_used[cand.pi]) continue;
    gt_used[cand.gi] = true;
    pred_used[cand.pi] = true;
    ++c.tp;
  }
  c.fn = std::count(gt_used.begin(), gt_used.end(), false);
  c.fp = std::count(pred_used.begin(), pred_used.end(), false);
  return c;
}

MatchCounts event_counts(const MatB& pred, const MatB& gt, double iou_threshold) {
  if (pred.rows != gt.rows || pred.cols != gt.cols)
    throw std::invalid_argument("event_counts: shape mismatch");
  MatchCounts total;
  for (std::size_t c = 0; c < pred.cols; ++c) {
    std::vector<std::uint8_t> pred_line(pred.rows), gt_line(gt.rows);
    for (std::size_t t = 0; t < pred.rows; ++t) {
      pred_line[t] = pred.at(t, c);
      gt_line[t] = gt.at(t, c);
    }
    total += match_events(extract_events(gt_line, c), extract_events(pred_line, c),
                          iou_threshold);
  }
  return total;
}

namespace {

MatB conjunction(const MatB& a, const MatB& b) {
  MatB out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] && b.v[i];
  return out;
}

}  // namespace

MetricReport evaluate_predictions(const std::vector<std::string>& video_ids,
                                  const std::vector<VideoBinary>& predictions,
                                  const std::vector<VideoBinary>& ground_truth,
                                  double iou_threshold) {
  if (video_ids.size() != predictions.size() || predictions.size() != ground_truth.size())
    throw std::invalid_argument("evaluate_predictions: input lists differ in length");
  if (video_ids.empty()) throw std::invalid_argument("evaluate_predictions: no videos");

  MetricReport report;
  double seg_a = 0, seg_v = 0, seg_av = 0, seg_event_av = 0;
  double ev_a = 0, ev_v = 0, ev_av = 0, ev_event_av = 0;
  for (std::size_t n = 0; n < video_ids.size(); ++n) {
    const auto& pred = predictions[n];
    const auto& gt = ground_truth[n];
    const MatB pred_av = conjunction(pred.visual, pred.audio);
    const MatB gt_av = conjunction(gt.visual, gt.audio);

    VideoScores vs;
    vs.video_id = video_ids[n];

    const auto s_audio = segment_counts(pred.audio, gt.audio);
    const auto s_visual = segment_counts(pred.visual, gt.visual);
    const auto s_av = segment_counts(pred_av, gt_av);
    MatchCounts s_pooled = s_audio;
    s_pooled += s_visual;
    vs.segment.audio = f1_from_counts(s_audio);
    vs.segment.visual = f1_from_counts(s_visual);
    vs.segment.audio_visual = f1_from_counts(s_av);
    vs.segment.event_at_av = f1_from_counts(s_pooled);
    vs.segment.type_at_av =
        (vs.segment.audio + vs.segment.visual + vs.segment.audio_visual) / 3.0;

    const auto e_audio = event_counts(pred.audio, gt.audio, iou_threshold);
    const auto e_visual = event_counts(pred.visual, gt.visual, iou_threshold);
    const auto e_av = event_counts(pred_av, gt_av, iou_threshold);
    MatchCounts e_pooled = e_audio;
    e_pooled += e_visual;
    vs.event.audio = f1_from_counts(e_audio);
    vs.event.visual = f1_from_counts(e_visual);
    vs.event.audio_visual = f1_from_counts(e_av);
    vs.event.event_at_av = f1_from_counts(e_pooled);
    vs.event.type_at_av = (vs.event.audio + vs.event.visual + vs.event.audio_visual) / 3.0;

    seg_a += vs.segment.audio;
    seg_v += vs.segment.visual;
    seg_av += vs.segment.audio_visual;
    seg_event_av += vs.segment.event_at_av;
    ev_a += vs.event.audio;
    ev_v += vs.event.visual;
    ev_av += vs.event.audio_visual;
    ev_event_av += vs.event.event_at_av;
    report.per_video.push_back(std::move(vs));
  }
  const double n = double(video_ids.size());
  report.segment.audio = seg_a / n;
  report.segment.visual = seg_v / n;
  report.segment.audio_visual = seg_av / n;
  report.segment.event_at_av = seg_event_av / n;
  report.segment.type_at_av =
      (report.segment.audio + report.segment.visual + report.segment.audio_visual) / 3.0;
  report.event.audio = ev_a / n;
  report.event.visual = ev_v / n;
  report.event.audio_visual = ev_av / n;
  report.event.event_at_av = ev_event_av / n;
  report.event.type_at_av =
      (report.event.audio + report.event.visual + report.event.audio_visual) / 3.0;
  return report;
}

AveLabels ave_labels_from(const SegmentGroundTruth& gt) {
  AveLabels labels(gt.visual.rows, -1);
  for (std::size_t t = 0; t < gt.visual.rows; ++t)
    for (std::size_t c = 0; c < gt.visual.cols; ++c)
      if (gt.visual.at(t, c) && gt.audio.at(t, c)) {
        if (labels[t] != -1)
          throw std::logic_error("segment " + std::to_string(t) +
                                 " carries more than one joint event");
        labels[t] = int(c);
      }
  return labels;
}

double ave_accuracy(const std::vector<MatF>& visual_probs,
                    const std::vector<MatF>& audio_probs,
                    const std::vector<AveLabels>& labels, double tau) {
  if (visual_probs.size() != audio_probs.size() || visual_probs.size() != labels.size())
    throw std::invalid_argument("ave_accuracy: input lists differ in length");
  std::size_t correct = 0, total = 0;
  const double floor = tau * tau;
  for (std::size_t n = 0; n < visual_probs.size(); ++n) {
    const MatF& pv = visual_probs[n];
    const MatF& pa = audio_probs[n];
    if (labels[n].size() != pv.rows)
      throw std::invalid_argument("ave_accuracy: label length mismatch");
    for (std::size_t t = 0; t < pv.rows; ++t) {
      int best = -1;
      double best_score = 0.0;
      for (std::size_t c = 0; c < pv.cols; ++c) {
        const double score = double(pv.at(t, c)) * double(pa.at(t, c));
        if (score > best_score) {
          best_score = score;
          best = int(c);
        }
      }
      const int predicted = best_score >= floor ? best : -1;
      correct += std::size_t(predicted == labels[n][t]);
      ++total;
    }
  }
  return total ? double(correct) / double(total) : 0.0;
}

std::string metric_table(const MetricReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  auto row = [&](const char* name, const TypeScores& s) {
    os << std::left << std::setw(14) << name << std::right;
    os << std::setw(7) << s.audio * 100.0 << std::setw(7) << s.visual * 100.0
       << std::setw(7) << s.audio_visual * 100.0 << std::setw(9) << s.type_at_av * 100.0
       << std::setw(10) << s.event_at_av * 100.0 << "\n";
  };
  os << std::left << std::setw(14) << "" << std::right << std::setw(7) << "A"
     << std::setw(7) << "V" << std::setw(7) << "AV" << std::setw(9) << "Type@AV"
     << std::setw(10) << "Event@AV" << "\n";
  row("Segment-level", report.segment);
  row("Event-level", report.event);
  if (report.ave_accuracy)
    os << "Accuracy: " << std::setprecision(1) << *report.ave_accuracy * 100.0 << "%\n";
  return os.str();
}

void write_metric_report(const std::filesystem::path& path, const MetricReport& report) {
  nlohmann::json doc;
  auto scores = [](const TypeScores& s) {
    return nlohmann::json{{"audio", s.audio},
                          {"visual", s.visual},
                          {"audio_visual", s.audio_visual},
                          {"type_at_av", s.type_at_av},
                          {"event_at_av", s.event_at_av}};
  };
  doc["format"] = "uwav-metric-report";
  doc["version"] = 1;
  doc["segment"] = scores(report.segment);
  doc["event"] = scores(report.event);
  if (report.ave_accuracy) doc["ave_accuracy"] = *report.ave_accuracy;
  nlohmann::json per_video;
  for (const auto& vs : report.per_video)
    per_video[vs.video_id] = {{"segment", scores(vs.segment)}, {"event", scores(vs.event)}};
  doc["per_video"] = std::move(per_video);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metric report to " + path.string());
  out << doc.dump(1) << "\n";
}

}  // namespace uwav
