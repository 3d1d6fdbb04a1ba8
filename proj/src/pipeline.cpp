#include "uwav/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace uwav {

using nlohmann::json;

namespace {

std::string rng_state_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("malformed rng state in checkpoint");
}

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, std::size_t epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".json";
  return dir / os.str();
}

std::vector<std::size_t> shuffled_indices(std::size_t count, Rng& rng) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double ms_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

nlohmann::json effective_config_json(const RunConfig& cfg, const std::string& stage) {
  json j;
  j["stage"] = stage;
  j["seed"] = cfg.seed;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["warmup_epochs"] = cfg.warmup_epochs;
  j["peak_lr"] = cfg.peak_lr;
  j["min_lr"] = cfg.min_lr ? json(*cfg.min_lr) : json();
  j["clip_norm"] = cfg.clip_norm;
  j["adamw"] = {{"beta1", cfg.adamw.beta1},
                {"beta2", cfg.adamw.beta2},
                {"eps", cfg.adamw.eps},
                {"weight_decay", cfg.adamw.weight_decay}};
  j["model_dim"] = cfg.model_dim;
  j["encoder_blocks"] = cfg.encoder_blocks;
  j["attention_heads"] = cfg.attention_heads;
  j["ffn_multiplier"] = cfg.ffn_multiplier;
  j["positional_encoding"] = cfg.positional_encoding;
  j["dropout"] = cfg.dropout;
  j["augment_noise"] = cfg.augment_noise;
  j["calibration_method"] = cfg.calibration_method;
  j["label_mode"] = cfg.label_mode == LabelMode::soft ? "soft" : "hard";
  j["mixup"] = cfg.mixup;
  j["alpha"] = cfg.mixup_alpha;
  j["per_pair_lambda"] = cfg.per_pair_lambda;
  j["ceil_labels"] = cfg.ceil_labels;
  j["reweight"] = cfg.reweight;
  j["class_weight_w"] = cfg.class_weight_w;
  j["include_hard_loss"] = cfg.include_hard_loss;
  j["quantile"] = cfg.quantile;
  j["threshold"] = cfg.threshold;
  j["iou_threshold"] = cfg.iou_threshold;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["select_best_epoch"] = cfg.select_best_epoch;
  return j;
}

RunLog::RunLog(const std::filesystem::path& path, const json& effective_config)
    : path_(path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open run log " + path_.string());
  json first = {{"type", "config"}, {"config", effective_config}};
  out << first.dump() << "\n";
}

void RunLog::record(const json& line) {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << line.dump() << "\n";
}

PretrainResult run_pretraining(const RunConfig& cfg, const Dataset& supervised,
                               const std::filesystem::path& out_dir) {
  if (supervised.mode != DatasetMode::supervised)
    throw std::logic_error("pre-training requires a supervised dataset, got mode '" +
                           to_string(supervised.mode) + "'");
  if (supervised.videos.empty()) throw dataset_error("pre-training dataset is empty");
  std::filesystem::create_directories(out_dir / "checkpoints");
  RunLog log(out_dir / "run_log.jsonl", effective_config_json(cfg, "pretrain"));

  PseudoLabelerConfig model_cfg;
  model_cfg.visual_width = supervised.videos.front().features.visual_embed.shape()[1];
  model_cfg.audio_width = supervised.videos.front().features.audio_embed.shape()[1];
  model_cfg.encoder_blocks = cfg.encoder_blocks;
  model_cfg.attention_heads = cfg.attention_heads;
  model_cfg.ffn_multiplier = cfg.ffn_multiplier;
  model_cfg.positional_encoding = cfg.positional_encoding;

  Rng init_rng(cfg.seed);
  PseudoLabeler model = make_pseudo_labeler(model_cfg, init_rng);
  auto named = model.named_parameters();
  auto params = tensors_of(named);
  for (auto& p : params) p.set_requires_grad(true);

  AdamWConfig adamw_cfg = cfg.adamw;
  AdamW optimizer(params, adamw_cfg);
  ScheduleConfig schedule{cfg.warmup_epochs, cfg.peak_lr, cfg.min_lr.value_or(1e-5),
                          cfg.epochs};

  Rng shuffle_rng(cfg.seed ^ 0x5c5c5c5c5c5c5c5cULL);
  Rng dropout_rng(cfg.seed ^ 0x3737373737373737ULL);
  Rng augment_rng(cfg.seed ^ 0x9191919191919191ULL);
  std::size_t start_epoch = 0;
  if (cfg.resume_from) {
    Checkpoint ckpt = load_checkpoint(*cfg.resume_from);
    restore_parameters(ckpt, named);
    restore_optimizer(ckpt, named, optimizer);
    start_epoch = ckpt.meta.at("epoch").get<std::size_t>() + 1;
    restore_rng(shuffle_rng, ckpt.meta.at("rng_shuffle").get<std::string>());
    restore_rng(dropout_rng, ckpt.meta.at("rng_dropout").get<std::string>());
    restore_rng(augment_rng, ckpt.meta.at("rng_augment").get<std::string>());
  }

  auto jitter = [&](const Tensor& features) {
    if (cfg.augment_noise <= 0) return features;
    std::normal_distribution<double> gauss(0.0, cfg.augment_noise);
    std::vector<float> v = features.data();
    for (auto& x : v) x = float(double(x) + gauss(augment_rng));
    return Tensor::from_data(features.shape(), std::move(v));
  };

  PretrainResult result;
  result.model_config = model_cfg;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(schedule, epoch);
    optimizer.set_lr(lr);
    auto order = shuffled_indices(supervised.num_videos(), shuffle_rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      TrainCtx ctx;
      if (cfg.dropout > 0) {
        ctx.dropout = cfg.dropout;
        ctx.dropout_rng = &dropout_rng;
      }
      Tensor loss_acc;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& video = supervised.videos[order[k]];
        auto zv = segment_logits(
            encode_stack(model.visual, jitter(video.features.visual_embed), ctx),
            supervised.text.visual);
        auto za = segment_logits(
            encode_stack(model.audio, jitter(video.features.audio_embed), ctx),
            supervised.text.audio);
        auto loss = pretrain_loss(zv, za, to_tensor(*video.labels.segment_av));
        loss_acc = k == begin ? loss : add(loss_acc, loss);
      }
      auto batch_loss = scale(loss_acc, 1.0 / double(end - begin));
      optimizer.zero_grad();
      backward(batch_loss);
      clip_grad_norm(params, cfg.clip_norm);
      optimizer.step();
      loss_sum += double(batch_loss.value());
      ++batches;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.loss_total = loss_sum / double(batches);
    stats.wall_ms = ms_since(t0);
    result.epochs.push_back(stats);
    log.record({{"type", "epoch"},
                {"epoch", epoch},
                {"lr", lr},
                {"loss_total", stats.loss_total},
                {"wall_ms", stats.wall_ms}});

    const bool last = epoch + 1 == cfg.epochs;
    if (last || (cfg.checkpoint_every && (epoch + 1) % cfg.checkpoint_every == 0)) {
      Checkpoint ckpt = pseudo_labeler_checkpoint(model, model_cfg, epoch, &optimizer);
      ckpt.meta["rng_shuffle"] = rng_state_string(shuffle_rng);
      ckpt.meta["rng_dropout"] = rng_state_string(dropout_rng);
      ckpt.meta["rng_augment"] = rng_state_string(augment_rng);
      save_checkpoint(checkpoint_name(out_dir / "checkpoints", epoch), ckpt);
      if (last) {
        result.final_checkpoint = out_dir / "checkpoints" / "last.json";
        save_checkpoint(result.final_checkpoint, ckpt);
      }
    }
  }
  result.av_accuracy = segment_av_accuracy(model, supervised, cfg.threshold);
  log.record({{"type", "final"},
              {"av_accuracy", result.av_accuracy},
              {"checkpoint", result.final_checkpoint.string()}});
  result.model = std::move(model);
  return result;
}

Stage2Result run_stage2_training(const RunConfig& cfg, const Dataset& dataset,
                                 const PseudoLabelSet& pseudo_labels,
                                 const std::filesystem::path& out_dir,
                                 const Dataset* validation,
                                 const GroundTruthMap* validation_gt) {
  if (dataset.videos.empty()) throw dataset_error("training dataset is empty");
  for (const auto& video : dataset.videos)
    if (!pseudo_labels.videos.count(video.features.video_id))
      throw dataset_error("pseudo-label set misses training video " +
                          video.features.video_id);
  std::filesystem::create_directories(out_dir / "checkpoints");
  RunLog log(out_dir / "run_log.jsonl", effective_config_json(cfg, "train"));

  HanConfig model_cfg;
  model_cfg.visual_dim = dataset.videos.front().features.visual_backbone.shape()[1];
  model_cfg.audio_dim = dataset.videos.front().features.audio_backbone.shape()[1];
  model_cfg.model_dim = cfg.model_dim;
  model_cfg.num_classes = dataset.num_classes();
  model_cfg.attention_heads = cfg.attention_heads;

  Rng init_rng(cfg.seed);
  HanModel model = make_han_model(model_cfg, init_rng);
  auto named = model.named_parameters();
  auto params = tensors_of(named);
  for (auto& p : params) p.set_requires_grad(true);

  AdamW optimizer(params, cfg.adamw);
  ScheduleConfig schedule{cfg.warmup_epochs, cfg.peak_lr, cfg.min_lr.value_or(5e-6),
                          cfg.epochs};

  const ClassBalanceWeights weights =
      cfg.reweight ? class_balance_weights(pseudo_labels, cfg.class_weight_w)
                   : neutral_balance_weights();
  Stage2LossOptions opts;
  opts.label_mode = cfg.label_mode;
  opts.mixup = cfg.mixup;
  opts.ceil_labels = cfg.ceil_labels;
  opts.include_hard_loss = cfg.include_hard_loss;
  MixupConfig mixup_cfg;
  mixup_cfg.alpha = cfg.mixup_alpha;
  mixup_cfg.per_pair_lambda = cfg.per_pair_lambda;
  mixup_cfg.ceil_labels = cfg.ceil_labels;

  Rng shuffle_rng(cfg.seed ^ 0x5c5c5c5c5c5c5c5cULL);
  Rng mixup_rng(cfg.seed ^ 0x1b1b1b1b1b1b1b1bULL);
  Rng dropout_rng(cfg.seed ^ 0x3737373737373737ULL);
  std::size_t start_epoch = 0;
  if (cfg.resume_from) {
    Checkpoint ckpt = load_checkpoint(*cfg.resume_from);
    restore_parameters(ckpt, named);
    restore_optimizer(ckpt, named, optimizer);
    start_epoch = ckpt.meta.at("epoch").get<std::size_t>() + 1;
    restore_rng(shuffle_rng, ckpt.meta.at("rng_shuffle").get<std::string>());
    restore_rng(mixup_rng, ckpt.meta.at("rng_mixup").get<std::string>());
    restore_rng(dropout_rng, ckpt.meta.at("rng_dropout").get<std::string>());
  }

  Stage2Result result;
  result.model_config = model_cfg;
  double best_score = -1.0;
  Checkpoint best_ckpt;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(schedule, epoch);
    optimizer.set_lr(lr);
    auto order = shuffled_indices(dataset.num_videos(), shuffle_rng);
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      std::vector<const VideoEntry*> videos;
      std::vector<const VideoPseudoLabels*> labels;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& video = dataset.videos[order[k]];
        videos.push_back(&video);
        labels.push_back(&pseudo_labels.videos.at(video.features.video_id));
      }
      TrainCtx ctx;
      if (cfg.dropout > 0) {
        ctx.dropout = cfg.dropout;
        ctx.dropout_rng = &dropout_rng;
      }
      MixupPlan plan;
      if (cfg.mixup)
        plan = plan_mixup(videos.size() * dataset.segments, mixup_cfg, mixup_rng);
      auto loss = stage2_batch_loss(model, videos, labels, weights, opts,
                                    cfg.mixup ? &plan : nullptr, ctx);
      optimizer.zero_grad();
      backward(loss.total);
      clip_grad_norm(params, cfg.clip_norm);
      optimizer.step();
      stats.loss_weighted_soft += double(loss.weighted_soft.value());
      stats.loss_mix += double(loss.mix.value());
      stats.loss_video += double(loss.video.value());
      stats.loss_total += double(loss.total.value());
      ++batches;
    }
    stats.loss_weighted_soft /= double(batches);
    stats.loss_mix /= double(batches);
    stats.loss_video /= double(batches);
    stats.loss_total /= double(batches);
    stats.wall_ms = ms_since(t0);
    result.epochs.push_back(stats);
    log.record({{"type", "epoch"},
                {"epoch", epoch},
                {"lr", lr},
                {"loss_weighted_soft", stats.loss_weighted_soft},
                {"loss_mix", stats.loss_mix},
                {"loss_video", stats.loss_video},
                {"loss_total", stats.loss_total},
                {"wall_ms", stats.wall_ms}});

    auto snapshot = [&](std::size_t at_epoch) {
      Checkpoint ckpt =
          han_checkpoint(model, model_cfg, dataset.vocabulary.class_names, at_epoch,
                         &optimizer);
      ckpt.meta["rng_shuffle"] = rng_state_string(shuffle_rng);
      ckpt.meta["rng_mixup"] = rng_state_string(mixup_rng);
      ckpt.meta["rng_dropout"] = rng_state_string(dropout_rng);
      ckpt.meta["tau"] = cfg.threshold;
      return ckpt;
    };
    if (cfg.select_best_epoch && validation && validation_gt) {
      const auto report = evaluate_model(model, *validation, *validation_gt, cfg.threshold,
                                         cfg.iou_threshold);
      log.record({{"type", "validation"},
                  {"epoch", epoch},
                  {"segment_type_at_av", report.segment.type_at_av}});
      if (report.segment.type_at_av > best_score) {
        best_score = report.segment.type_at_av;
        best_ckpt = snapshot(epoch);
        result.selected_epoch = epoch;
      }
    }
    const bool last = epoch + 1 == cfg.epochs;
    if (last || (cfg.checkpoint_every && (epoch + 1) % cfg.checkpoint_every == 0))
      save_checkpoint(checkpoint_name(out_dir / "checkpoints", epoch), snapshot(epoch));
  }

  result.final_checkpoint = out_dir / "checkpoints" / "last.json";
  if (cfg.select_best_epoch && best_score >= 0.0) {
    restore_parameters(best_ckpt, named);
    save_checkpoint(result.final_checkpoint, best_ckpt);
  } else {
    result.selected_epoch = cfg.epochs - 1;
    save_checkpoint(result.final_checkpoint,
                    han_checkpoint(model, model_cfg, dataset.vocabulary.class_names,
                                   cfg.epochs - 1, &optimizer));
  }
  log.record({{"type", "final"},
              {"selected_epoch", result.selected_epoch},
              {"checkpoint", result.final_checkpoint.string()}});
  result.model = std::move(model);
  return result;
}

MetricReport evaluate_model(const HanModel& model, const Dataset& dataset,
                            const GroundTruthMap& gt, double tau, double iou_threshold) {
  if (dataset.num_classes() != model.num_classes())
    throw std::logic_error("vocabulary mismatch: model has " +
                           std::to_string(model.num_classes()) + " classes, dataset has " +
                           std::to_string(dataset.num_classes()));
  std::vector<std::string> ids;
  std::vector<VideoBinary> preds, truth;
  for (const auto& video : dataset.videos) {
    const auto it = gt.find(video.features.video_id);
    if (it == gt.end())
      throw dataset_error("ground truth misses video " + video.features.video_id);
    auto out = predict_segments(han_forward(video.features, model), tau);
    ids.push_back(video.features.video_id);
    preds.push_back(VideoBinary{out.visual, out.audio});
    truth.push_back(VideoBinary{it->second.visual, it->second.audio});
  }
  return evaluate_predictions(ids, preds, truth, iou_threshold);
}

double evaluate_ave_accuracy(const HanModel& model, const Dataset& dataset,
                             const GroundTruthMap& gt, double tau) {
  std::vector<MatF> visual, audio;
  std::vector<AveLabels> labels;
  for (const auto& video : dataset.videos) {
    const auto it = gt.find(video.features.video_id);
    if (it == gt.end())
      throw dataset_error("ground truth misses video " + video.features.video_id);
    auto preds = han_forward(video.features, model);
    visual.push_back(to_mat(preds.visual_probs));
    audio.push_back(to_mat(preds.audio_probs));
    labels.push_back(ave_labels_from(it->second));
  }
  return ave_accuracy(visual, audio, labels, tau);
}

}  // namespace uwav
