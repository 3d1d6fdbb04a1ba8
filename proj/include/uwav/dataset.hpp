#pragma once

// Dataset schema, manifest loading/validation, the deterministic synthetic
// generator, segment ground-truth sidecars, and pseudo-label file IO.
//
// Manifest layout (JSON, paths relative to the manifest's directory):
// {
//   "format": "uwav-manifest", "version": 1,
//   "mode": "weak" | "supervised",
//   "segments_per_video": 10,
//   "vocabulary": ["event_00", ...],
//   "caption_templates": {"visual": "...", "audio": "..."},
//   "text_embeddings": {"visual": "text_visual.tens", "audio": "text_audio.tens"},
//   "videos": [
//     {"video_id": "...",
//      "features": {"visual_backbone": "...", "audio_backbone": "...",
//                   "visual_embed": "...", "audio_embed": "..."},
//      "video_labels": [class indices],
//      "segment_av_labels":     [[...]] (supervised mode),
//      "segment_visual_labels": [[...]] (optional, evaluation),
//      "segment_audio_labels":  [[...]] (optional, evaluation)}]
// }
//
// In weak mode the per-segment ground truth of synthetic data lives in a
// sidecar file next to the manifest (eval_gt.json), never in the manifest,
// so the training path cannot read it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uwav/mat.hpp"
#include "uwav/tensor.hpp"

namespace uwav {

class dataset_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EventVocabulary {
  std::vector<std::string> class_names;
  std::string visual_caption_template = "A photo of <EVENT NAME>";
  std::string audio_caption_template = "This is the sound of <EVENT NAME>";

  std::size_t size() const { return class_names.size(); }
  void validate() const;
};

struct FeatureBundle {
  std::string video_id;
  std::size_t segments = 0;  // T
  Tensor visual_backbone;    // T x d_v
  Tensor audio_backbone;     // T x d_a
  Tensor visual_embed;       // T x d1
  Tensor audio_embed;        // T x d2
};

struct TextEmbeddings {
  Tensor visual;  // C x d1
  Tensor audio;   // C x d2
};

struct LabelSet {
  std::vector<std::uint8_t> video_labels;  // C, 0/1
  std::optional<MatB> segment_visual;      // T x C, evaluation only
  std::optional<MatB> segment_audio;       // T x C, evaluation only
  std::optional<MatB> segment_av;          // T x C, supervised pre-training
};

struct VideoEntry {
  FeatureBundle features;
  LabelSet labels;
};

enum class DatasetMode { supervised, weak };

std::string to_string(DatasetMode mode);

struct Dataset {
  DatasetMode mode = DatasetMode::weak;
  std::filesystem::path root;
  EventVocabulary vocabulary;
  TextEmbeddings text;
  std::vector<VideoEntry> videos;
  std::size_t segments = 0;  // T, shared by all videos

  std::size_t num_classes() const { return vocabulary.size(); }
  std::size_t num_videos() const { return videos.size(); }
};

// Loads and fully validates a dataset; errors name the offending video.
Dataset load_manifest(const std::filesystem::path& manifest_path);

// Synthetic stand-in generator. Classes get fixed orthonormal prototype
// directions per feature space, derived from embed_seed only, so datasets
// generated with the same embed_seed and dims live in the same embedding
// space (the role the frozen pretrained encoders play for real data).
struct SynthConfig {
  DatasetMode mode = DatasetMode::weak;
  std::size_t num_videos = 200;
  std::size_t num_classes = 8;
  std::size_t segments = 10;
  std::size_t visual_backbone_dim = 32;
  std::size_t audio_backbone_dim = 32;
  std::size_t visual_embed_dim = 32;
  std::size_t audio_embed_dim = 32;
  float noise_sigma = 0.3f;
  std::size_t events_min = 1;
  std::size_t events_max = 3;
  bool allow_misalignment = true;
  bool av_events_only = false;  // force both modalities per event (implied in supervised mode)
  std::uint64_t embed_seed = 1234;
};

// Writes manifest + feature files + (weak mode) the eval sidecar under
// out_dir. Deterministic: identical cfg and seed give byte-identical files.
void synth_dataset(const SynthConfig& cfg, std::uint64_t seed,
                   const std::filesystem::path& out_dir);

inline constexpr const char* kEvalSidecarName = "eval_gt.json";

struct SegmentGroundTruth {
  MatB visual;  // T x C
  MatB audio;   // T x C
};
using GroundTruthMap = std::map<std::string, SegmentGroundTruth>;

void write_eval_gt(const std::filesystem::path& path, const GroundTruthMap& gt,
                   std::size_t num_classes);
GroundTruthMap load_eval_gt(const std::filesystem::path& path);

// Ground truth for evaluation: per-video segment labels from the manifest
// when present on every video, otherwise from the sidecar file.
GroundTruthMap ground_truth_for(const Dataset& dataset,
                                const std::filesystem::path& sidecar_path);

struct VideoPseudoLabels {
  MatB binary_visual, binary_audio;  // T x C
  MatF soft_visual, soft_audio;      // T x C
};

struct PseudoLabelSet {
  std::vector<float> thresholds_visual, thresholds_audio;  // C
  double quantile = 0.5;
  std::string method = "quantile";  // calibration provenance
  std::map<std::string, VideoPseudoLabels> videos;
};

void write_pseudo_labels(const std::filesystem::path& path, const PseudoLabelSet& set);
// Validates shapes and the masking/consistency invariants against the dataset.
PseudoLabelSet read_pseudo_labels(const std::filesystem::path& path, const Dataset& dataset);

// Convenience: the C-length 0/1 video label vector as floats.
std::vector<float> video_label_floats(const VideoEntry& video, std::size_t num_classes);

}  // namespace uwav
