// Command-line front end: synthetic data generation, stage-1 pre-training,
// pseudo-label emission, stage-2 training, evaluation and the gradient-check
// suite. Values from --config (JSON) are applied first; explicit flags win.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "uwav/gradcheck.hpp"
#include "uwav/pipeline.hpp"

using namespace uwav;
using nlohmann::json;

namespace {

struct CliOptions {
  RunConfig run;
  std::string config_path;
  std::string out_dir = "out";
  std::string manifest;
  std::string checkpoint;
  std::string pseudo_labels;
  std::string gt_path;
  std::string val_manifest, val_gt;
  std::string resume;
  std::string label_mode = "soft";
  bool no_mixup = false, no_reweight = false;
  bool ave = false;
  // synth
  SynthConfig synth;
  std::string synth_mode = "weak";
  bool no_misalign = false;
};

void apply_config_json(RunConfig& cfg, SynthConfig& synth, std::string& label_mode,
                       const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config file not found: " + path);
  json doc;
  in >> doc;
  for (const auto& [key, value] : doc.items()) {
    if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
    else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
    else if (key == "warmup_epochs") cfg.warmup_epochs = value.get<std::size_t>();
    else if (key == "peak_lr") cfg.peak_lr = value.get<double>();
    else if (key == "min_lr") cfg.min_lr = value.get<double>();
    else if (key == "clip_norm") cfg.clip_norm = value.get<double>();
    else if (key == "weight_decay") cfg.adamw.weight_decay = value.get<double>();
    else if (key == "beta1") cfg.adamw.beta1 = value.get<double>();
    else if (key == "beta2") cfg.adamw.beta2 = value.get<double>();
    else if (key == "adam_eps") cfg.adamw.eps = value.get<double>();
    else if (key == "model_dim") cfg.model_dim = value.get<std::size_t>();
    else if (key == "encoder_blocks") cfg.encoder_blocks = value.get<std::size_t>();
    else if (key == "attention_heads") cfg.attention_heads = value.get<std::size_t>();
    else if (key == "ffn_multiplier") cfg.ffn_multiplier = value.get<std::size_t>();
    else if (key == "positional_encoding") cfg.positional_encoding = value.get<bool>();
    else if (key == "dropout") cfg.dropout = value.get<double>();
    else if (key == "label_mode") label_mode = value.get<std::string>();
    else if (key == "mixup") cfg.mixup = value.get<bool>();
    else if (key == "alpha") cfg.mixup_alpha = value.get<double>();
    else if (key == "per_pair_lambda") cfg.per_pair_lambda = value.get<bool>();
    else if (key == "ceil_labels") cfg.ceil_labels = value.get<bool>();
    else if (key == "reweight") cfg.reweight = value.get<bool>();
    else if (key == "class_weight_w") cfg.class_weight_w = value.get<double>();
    else if (key == "include_hard_loss") cfg.include_hard_loss = value.get<bool>();
    else if (key == "quantile") cfg.quantile = value.get<double>();
    else if (key == "calibration_method") cfg.calibration_method = value.get<std::string>();
    else if (key == "augment_noise") cfg.augment_noise = value.get<double>();
    else if (key == "threshold") cfg.threshold = value.get<double>();
    else if (key == "iou_threshold") cfg.iou_threshold = value.get<double>();
    else if (key == "checkpoint_every") cfg.checkpoint_every = value.get<std::size_t>();
    else if (key == "synth_noise") synth.noise_sigma = value.get<float>();
    else if (key == "synth_classes") synth.num_classes = value.get<std::size_t>();
    else throw std::runtime_error("unknown config key '" + key + "' in " + path);
  }
}

void add_training_flags(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--seed", opt.run.seed, "Random seed")->capture_default_str();
  cmd->add_option("--batch-size", opt.run.batch_size, "Videos per optimization step")
      ->capture_default_str();
  cmd->add_option("--epochs", opt.run.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--warmup-epochs", opt.run.warmup_epochs, "Linear warmup epochs")
      ->capture_default_str();
  cmd->add_option("--peak-lr", opt.run.peak_lr, "Peak learning rate")->capture_default_str();
  cmd->add_option("--min-lr", [&opt](const std::vector<std::string>& vals) {
        opt.run.min_lr = std::stod(vals.at(0));
        return true;
      }, "Cosine floor (default 1e-5 pretrain, 5e-6 train)");
  cmd->add_option("--clip-norm", opt.run.clip_norm, "Gradient norm ceiling")
      ->capture_default_str();
  cmd->add_option("--weight-decay", opt.run.adamw.weight_decay, "AdamW weight decay")
      ->capture_default_str();
  cmd->add_option("--encoder-blocks", opt.run.encoder_blocks,
                  "Encoder blocks per pseudo-label stack")
      ->capture_default_str();
  cmd->add_option("--attention-heads", opt.run.attention_heads, "Attention heads")
      ->capture_default_str();
  cmd->add_option("--dropout", opt.run.dropout, "Dropout probability (0 disables)")
      ->capture_default_str();
  cmd->add_option("--checkpoint-every", opt.run.checkpoint_every,
                  "Checkpoint cadence in epochs (0 keeps only the final one)")
      ->capture_default_str();
  cmd->add_option("--resume", opt.resume, "Checkpoint to resume from");
}

GroundTruthMap gt_for(const Dataset& ds, const std::string& manifest,
                      const std::string& explicit_gt) {
  std::filesystem::path sidecar = explicit_gt.empty()
                                      ? std::filesystem::path(manifest).parent_path() /
                                            kEvalSidecarName
                                      : std::filesystem::path(explicit_gt);
  return ground_truth_for(ds, sidecar);
}

int dispatch(const CLI::App& app, CliOptions& opt) {
  if (!opt.resume.empty()) opt.run.resume_from = opt.resume;
  opt.run.label_mode = opt.label_mode == "hard" ? LabelMode::hard : LabelMode::soft;
  if (opt.label_mode != "hard" && opt.label_mode != "soft")
    throw std::runtime_error("label mode must be 'soft' or 'hard', got '" + opt.label_mode +
                             "'");
  if (opt.no_mixup) opt.run.mixup = false;
  if (opt.no_reweight) opt.run.reweight = false;

  const auto out_dir = std::filesystem::path(opt.out_dir);

  if (app.got_subcommand("synth")) {
    opt.synth.mode =
        opt.synth_mode == "supervised" ? DatasetMode::supervised : DatasetMode::weak;
    if (opt.synth_mode != "supervised" && opt.synth_mode != "weak")
      throw std::runtime_error("synth mode must be 'weak' or 'supervised'");
    if (opt.no_misalign) opt.synth.allow_misalignment = false;
    synth_dataset(opt.synth, opt.run.seed, out_dir);
    std::cout << "wrote " << opt.synth.num_videos << " " << opt.synth_mode
              << "-mode videos under " << out_dir.string() << "\n";
    return 0;
  }
  if (app.got_subcommand("pretrain")) {
    Dataset ds = load_manifest(opt.manifest);
    std::cout << effective_config_json(opt.run, "pretrain").dump(1) << "\n";
    auto result = run_pretraining(opt.run, ds, out_dir);
    std::printf("final pretrain loss %.6f over %zu epochs\n",
                result.epochs.empty() ? 0.0 : result.epochs.back().loss_total,
                result.epochs.size());
    std::printf("segment AV-label accuracy on the training split: %.4f\n",
                result.av_accuracy);
    std::cout << "checkpoint: " << result.final_checkpoint.string() << "\n";
    return 0;
  }
  if (app.got_subcommand("pseudo-label")) {
    Dataset ds = load_manifest(opt.manifest);
    Checkpoint ckpt = load_checkpoint(opt.checkpoint);
    PseudoLabelerConfig model_cfg;
    PseudoLabeler model = load_pseudo_labeler_model(ckpt, &model_cfg);
    if (model_cfg.visual_width != ds.videos.front().features.visual_embed.shape()[1] ||
        model_cfg.audio_width != ds.videos.front().features.audio_embed.shape()[1])
      throw std::runtime_error("embedding widths of checkpoint and dataset differ");
    auto set = emit_pseudo_labels(model, ds, opt.run.quantile,
                                  calibration_method_from(opt.run.calibration_method));
    std::filesystem::create_directories(out_dir);
    const auto path = out_dir / "pseudo_labels.json";
    write_pseudo_labels(path, set);
    std::cout << "wrote pseudo-labels for " << set.videos.size() << " videos to "
              << path.string() << "\n";
    return 0;
  }
  if (app.got_subcommand("train")) {
    Dataset ds = load_manifest(opt.manifest);
    if (!std::filesystem::exists(opt.pseudo_labels))
      throw std::runtime_error("pseudo-label file not found: " + opt.pseudo_labels +
                               " (run the pseudo-label stage first)");
    auto pseudo = read_pseudo_labels(opt.pseudo_labels, ds);
    std::cout << effective_config_json(opt.run, "train").dump(1) << "\n";
    std::optional<Dataset> val;
    GroundTruthMap val_gt;
    if (!opt.val_manifest.empty()) {
      opt.run.select_best_epoch = true;
      val = load_manifest(opt.val_manifest);
      val_gt = gt_for(*val, opt.val_manifest, opt.val_gt);
    }
    auto result = run_stage2_training(opt.run, ds, pseudo, out_dir,
                                      val ? &*val : nullptr, val ? &val_gt : nullptr);
    const auto& last = result.epochs.back();
    std::printf(
        "epoch %zu losses: weighted-soft %.6f mix %.6f video %.6f total %.6f\n",
        last.epoch, last.loss_weighted_soft, last.loss_mix, last.loss_video,
        last.loss_total);
    std::cout << "checkpoint: " << result.final_checkpoint.string() << "\n";
    return 0;
  }
  if (app.got_subcommand("eval")) {
    Dataset ds = load_manifest(opt.manifest);
    Checkpoint ckpt = load_checkpoint(opt.checkpoint);
    HanConfig cfg;
    HanModel model = load_han_model(ckpt, &cfg);
    const auto stored_vocab =
        ckpt.meta.at("vocabulary").get<std::vector<std::string>>();
    if (stored_vocab != ds.vocabulary.class_names)
      throw std::runtime_error("vocabulary mismatch between checkpoint and dataset");
    auto gt = gt_for(ds, opt.manifest, opt.gt_path);
    auto report = evaluate_model(model, ds, gt, opt.run.threshold, opt.run.iou_threshold);
    if (opt.ave)
      report.ave_accuracy = evaluate_ave_accuracy(model, ds, gt, opt.run.threshold);
    std::filesystem::create_directories(out_dir);
    write_metric_report(out_dir / "metric_report.json", report);
    std::cout << metric_table(report);
    std::cout << "report: " << (out_dir / "metric_report.json").string() << "\n";
    return 0;
  }
  if (app.got_subcommand("gradcheck")) {
    auto results = run_gradcheck_suite(opt.run.seed);
    bool all = true;
    for (const auto& r : results) {
      std::printf("%-26s %s  max_rel_err=%.3e (tol %.0e, %zu checked, %zu kink-skipped)\n",
                  r.name.c_str(), r.pass ? "PASS" : "FAIL", r.max_rel_err, r.tolerance,
                  r.checked, r.skipped);
      all = all && r.pass;
    }
    std::printf("%zu checks, %s\n", results.size(), all ? "all passed" : "FAILURES present");
    return all ? 0 : 1;
  }
  throw std::runtime_error("no subcommand given");
}

}  // namespace

int main(int argc, char** argv) {
  CliOptions opt;
  CLI::App app{"Weakly-supervised audio-visual video parsing pipeline"};
  app.require_subcommand(1);

  // --config applies before flag parsing so explicit flags win.
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") opt.config_path = argv[i + 1];
  if (!opt.config_path.empty()) {
    try {
      apply_config_json(opt.run, opt.synth, opt.label_mode, opt.config_path);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", opt.config_path, "JSON config file");
  synth->add_option("--mode", opt.synth_mode, "weak | supervised")->capture_default_str();
  synth->add_option("--n", opt.synth.num_videos, "Number of videos")->capture_default_str();
  synth->add_option("--classes", opt.synth.num_classes, "Event classes")
      ->capture_default_str();
  synth->add_option("--segments", opt.synth.segments, "Segments per video")
      ->capture_default_str();
  synth->add_option("--noise", opt.synth.noise_sigma, "Feature noise sigma")
      ->capture_default_str();
  synth->add_option("--events-min", opt.synth.events_min, "Minimum events per video")
      ->capture_default_str();
  synth->add_option("--events-max", opt.synth.events_max, "Maximum events per video")
      ->capture_default_str();
  synth->add_flag("--no-misalign", opt.no_misalign,
                  "Force aligned audio/visual intervals");
  synth->add_flag("--av-only", opt.synth.av_events_only,
                  "Every event active in both modalities");
  synth->add_option("--embed-seed", opt.synth.embed_seed,
                    "Seed of the shared class-embedding space")
      ->capture_default_str();
  synth->add_option("--seed", opt.run.seed, "Sampling seed")->capture_default_str();
  synth->add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
  synth->add_option("--visual-dim", opt.synth.visual_backbone_dim, "Visual backbone width")
      ->capture_default_str();
  synth->add_option("--audio-dim", opt.synth.audio_backbone_dim, "Audio backbone width")
      ->capture_default_str();

  auto* pretrain = app.add_subcommand("pretrain", "Stage-1 pseudo-labeler pre-training");
  pretrain->add_option("--config", opt.config_path, "JSON config file");
  pretrain->add_option("--manifest", opt.manifest, "Supervised dataset manifest")
      ->required();
  pretrain->add_option("--out", opt.out_dir, "Run directory")->capture_default_str();
  add_training_flags(pretrain, opt);
  pretrain->add_option("--threshold", opt.run.threshold,
                       "Probability threshold for the AV accuracy report")
      ->capture_default_str();
  pretrain->add_option("--augment-noise", opt.run.augment_noise,
                       "Fresh input-noise stddev per step (0 disables)")
      ->capture_default_str();

  auto* pseudo = app.add_subcommand("pseudo-label",
                                    "Emit frozen pseudo-labels on a weak dataset");
  pseudo->add_option("--config", opt.config_path, "JSON config file");
  pseudo->add_option("--checkpoint", opt.checkpoint, "Stage-1 checkpoint")->required();
  pseudo->add_option("--manifest", opt.manifest, "Target dataset manifest")->required();
  pseudo->add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
  pseudo->add_option("--quantile", opt.run.quantile,
                     "Per-class threshold quantile over positive-video logits")
      ->capture_default_str();
  pseudo->add_option("--method", opt.run.calibration_method,
                     "Threshold calibration: quantile | otsu")
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "Stage-2 inference-model training");
  train->add_option("--config", opt.config_path, "JSON config file");
  train->add_option("--manifest", opt.manifest, "Weak dataset manifest")->required();
  train->add_option("--pseudo-labels", opt.pseudo_labels, "Frozen pseudo-label file")
      ->required();
  train->add_option("--out", opt.out_dir, "Run directory")->capture_default_str();
  add_training_flags(train, opt);
  train->add_option("--model-dim", opt.run.model_dim, "Inference model width")
      ->capture_default_str();
  train->add_option("--alpha", opt.run.mixup_alpha, "Mixup Beta concentration")
      ->capture_default_str();
  train->add_option("--class-weight-w", opt.run.class_weight_w,
                    "Positive-weight multiplier W")
      ->capture_default_str();
  train->add_option("--label-mode", opt.label_mode, "soft | hard")->capture_default_str();
  train->add_flag("--no-mixup", opt.no_mixup, "Disable the mixup loss");
  train->add_flag("--no-reweight", opt.no_reweight, "Disable class-balanced re-weighting");
  train->add_flag("--ceil-labels", opt.run.ceil_labels,
                  "Ceil soft targets before mixup interpolation");
  train->add_flag("--per-pair-lambda", opt.run.per_pair_lambda,
                  "Draw one mixup coefficient per pair instead of per step");
  train->add_flag("--include-hard-loss", opt.run.include_hard_loss,
                  "Add the binary pseudo-label loss to the objective");
  train->add_option("--val-manifest", opt.val_manifest,
                    "Validation manifest (enables best-epoch selection)");
  train->add_option("--val-gt", opt.val_gt, "Validation ground-truth sidecar");

  auto* eval = app.add_subcommand("eval", "Evaluate a trained inference model");
  eval->add_option("--config", opt.config_path, "JSON config file");
  eval->add_option("--checkpoint", opt.checkpoint, "Stage-2 checkpoint")->required();
  eval->add_option("--manifest", opt.manifest, "Dataset manifest")->required();
  eval->add_option("--gt", opt.gt_path,
                   "Ground-truth sidecar (default: eval_gt.json next to the manifest)");
  eval->add_option("--out", opt.out_dir, "Report directory")->capture_default_str();
  eval->add_option("--tau", opt.run.threshold, "Binarization threshold")
      ->capture_default_str();
  eval->add_option("--iou", opt.run.iou_threshold, "Event-level IoU threshold")
      ->capture_default_str();
  eval->add_flag("--ave", opt.ave, "Also report single-event accuracy");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--seed", opt.run.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    return dispatch(app, opt);
  } catch (const numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
