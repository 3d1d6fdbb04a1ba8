#pragma once

// Orchestration: stage-1 pre-training, pseudo-label emission, stage-2
// training of the inference model, evaluation, run logs and checkpoints.
// Everything is deterministic given (seed, config, dataset bytes).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwav/checkpoint.hpp"
#include "uwav/dataset.hpp"
#include "uwav/han.hpp"
#include "uwav/metrics.hpp"
#include "uwav/objectives.hpp"
#include "uwav/optim.hpp"
#include "uwav/pseudolabeler.hpp"

namespace uwav {

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t batch_size = 64;
  std::size_t epochs = 80;
  std::size_t warmup_epochs = 10;
  double peak_lr = 1e-4;
  // Stage default when unset: 1e-5 for pre-training, 5e-6 for the inference
  // model.
  std::optional<double> min_lr;
  double clip_norm = 1.0;
  AdamWConfig adamw;

  std::size_t model_dim = 64;  // inference-model width d
  std::size_t encoder_blocks = 5;
  std::size_t attention_heads = 4;
  std::size_t ffn_multiplier = 4;
  bool positional_encoding = true;
  double dropout = 0.0;
  // Pre-training only: stddev of fresh Gaussian noise added to the input
  // features each step. Stands in for the feature diversity of a large
  // pre-training corpus; 0 disables.
  double augment_noise = 0.0;
  std::string calibration_method = "quantile";

  LabelMode label_mode = LabelMode::soft;
  bool mixup = true;
  double mixup_alpha = 1.7;
  bool per_pair_lambda = false;
  bool ceil_labels = false;
  bool reweight = true;
  double class_weight_w = 0.5;
  bool include_hard_loss = false;
  double quantile = 0.5;
  double threshold = 0.5;      // binarization tau
  double iou_threshold = 0.5;  // event matching

  std::size_t checkpoint_every = 1;  // in epochs; 0 keeps only the final one
  std::optional<std::filesystem::path> resume_from;
  bool select_best_epoch = false;
};

nlohmann::json effective_config_json(const RunConfig& cfg, const std::string& stage);

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0;
  double loss_weighted_soft = 0, loss_mix = 0, loss_video = 0, loss_total = 0;
  double wall_ms = 0;
};

// Append-only JSON-lines run log; the first record echoes the effective
// config.
class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const std::filesystem::path& path, const nlohmann::json& effective_config);
  void record(const nlohmann::json& line);

 private:
  std::filesystem::path path_;
};

struct PretrainResult {
  PseudoLabeler model;
  PseudoLabelerConfig model_config;
  std::vector<EpochStats> epochs;
  double av_accuracy = 0.0;
  std::filesystem::path final_checkpoint;
};

// Supervised stage-1 training of the pseudo-label generator; errors on a
// weak-mode dataset.
PretrainResult run_pretraining(const RunConfig& cfg, const Dataset& supervised,
                               const std::filesystem::path& out_dir);

struct Stage2Result {
  HanModel model;
  HanConfig model_config;
  std::vector<EpochStats> epochs;
  std::filesystem::path final_checkpoint;
  std::size_t selected_epoch = 0;
};

// Stage-2 training with the frozen pseudo-labels; optional validation split
// for best-epoch selection (last epoch is kept by default).
Stage2Result run_stage2_training(const RunConfig& cfg, const Dataset& dataset,
                                 const PseudoLabelSet& pseudo_labels,
                                 const std::filesystem::path& out_dir,
                                 const Dataset* validation = nullptr,
                                 const GroundTruthMap* validation_gt = nullptr);

// Forward + binarize + score every video against the ground truth.
MetricReport evaluate_model(const HanModel& model, const Dataset& dataset,
                            const GroundTruthMap& gt, double tau = 0.5,
                            double iou_threshold = 0.5);

// Per-segment probabilities for single-event accuracy scoring.
double evaluate_ave_accuracy(const HanModel& model, const Dataset& dataset,
                             const GroundTruthMap& gt, double tau = 0.5);

}  // namespace uwav
