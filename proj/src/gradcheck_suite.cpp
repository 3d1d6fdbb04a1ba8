#include "uwav/gradcheck.hpp"

#include "uwav/objectives.hpp"
#include "uwav/pipeline.hpp"
#include "uwav/pseudolabeler.hpp"

namespace uwav {

namespace {

// Shared fixture for the composite stage-2 checks: a two-video batch with
// features, video labels and pseudo-labels, on desk shapes.
struct Stage2Fixture {
  std::vector<VideoEntry> videos;
  std::vector<VideoPseudoLabels> labels;
  ClassBalanceWeights weights;
  MixupPlan plan;
  std::vector<const VideoEntry*> video_ptrs;
  std::vector<const VideoPseudoLabels*> label_ptrs;
};

Stage2Fixture make_stage2_fixture(Rng& rng, std::size_t videos, std::size_t segments,
                                  std::size_t classes, std::size_t visual_dim,
                                  std::size_t audio_dim) {
  Stage2Fixture fx;
  std::uniform_real_distribution<float> uni(0.05f, 0.95f);
  for (std::size_t n = 0; n < videos; ++n) {
    VideoEntry video;
    video.features.video_id = "fixture_" + std::to_string(n);
    video.features.segments = segments;
    video.features.visual_backbone = randn({segments, visual_dim}, rng);
    video.features.audio_backbone = randn({segments, audio_dim}, rng);
    video.labels.video_labels.assign(classes, 0);
    for (std::size_t c = 0; c < classes; ++c) video.labels.video_labels[c] = rng() % 2;
    video.labels.video_labels[rng() % classes] = 1;  // at least one positive

    VideoPseudoLabels pl;
    pl.soft_visual = MatF(segments, classes);
    pl.soft_audio = MatF(segments, classes);
    pl.binary_visual = MatB(segments, classes);
    pl.binary_audio = MatB(segments, classes);
    for (std::size_t t = 0; t < segments; ++t)
      for (std::size_t c = 0; c < classes; ++c) {
        if (video.labels.video_labels[c]) {
          pl.soft_visual.at(t, c) = uni(rng);
          pl.soft_audio.at(t, c) = uni(rng);
        }
        pl.binary_visual.at(t, c) = pl.soft_visual.at(t, c) > 0.5f;
        pl.binary_audio.at(t, c) = pl.soft_audio.at(t, c) > 0.5f;
      }
    fx.videos.push_back(std::move(video));
    fx.labels.push_back(std::move(pl));
  }
  for (std::size_t n = 0; n < videos; ++n) {
    fx.video_ptrs.push_back(&fx.videos[n]);
    fx.label_ptrs.push_back(&fx.labels[n]);
  }
  fx.weights.visual_positive = 0.42;
  fx.weights.visual_negative = 0.58;
  fx.weights.audio_positive = 0.37;
  fx.weights.audio_negative = 0.63;
  fx.weights.multiplier = 0.5;
  MixupConfig mixup_cfg;
  Rng mix_rng(77);
  fx.plan = plan_mixup(videos * segments, mixup_cfg, mix_rng);
  return fx;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckResult> results;
  Rng rng(seed);

  auto single = [&](const std::string& name, Tensor x, auto&& fn) {
    TensorD xd = widen(x);
    results.push_back(check_gradients(
        name, {x}, {xd}, [&, fn] { return fn(x); }, [&, fn] { return fn(xd).value(); }));
  };

  // --- elementwise and structural ops ---
  {
    Tensor a = randn({4, 6}, rng), b = randn({6}, rng);
    TensorD ad = widen(a), bd = widen(b);
    Tensor probe = randn({4, 6}, rng);
    TensorD probe_d = widen(probe);
    auto build = [&](const auto& x, const auto& y, const auto& pr) {
      auto s = add(x, y);
      auto d = sub(x, y);
      auto m = mul(x, y);
      return mean_all(mul(add(add(s, d), m), pr));
    };
    results.push_back(check_gradients(
        "elementwise-add-sub-mul", {a, b}, {ad, bd},
        [&] { return build(a, b, probe); }, [&] { return build(ad, bd, probe_d).value(); }));
  }
  single("elementwise-affine", randn({3, 5}, rng),
         [](const auto& x) { return mean_all(affine(x, -2.5, 0.75)); });
  single("elementwise-sigmoid", randn({4, 4}, rng),
         [](const auto& x) { return mean_all(mul(sigmoid(x), sigmoid(x))); });
  single("elementwise-exp", randn({3, 4}, rng),
         [](const auto& x) { return mean_all(exp_t(x)); });
  single("elementwise-log", randn({3, 4}, rng), [](const auto& x) {
    return mean_all(log_t(affine(mul(x, x), 1.0, 1.0)));
  });
  single("elementwise-clamp", randn({4, 4}, rng),
         [](const auto& x) { return mean_all(mul(clamp_t(x, -0.4, 0.4), x)); });
  single("elementwise-relu", randn({4, 4}, rng),
         [](const auto& x) { return mean_all(mul(relu(x), x)); });
  {
    Tensor a = randn({3, 4}, rng), b = randn({4, 2}, rng);
    TensorD ad = widen(a), bd = widen(b);
    results.push_back(check_gradients(
        "matmul", {a, b}, {ad, bd},
        [&] { return mean_all(mul(matmul(a, b), matmul(a, b))); },
        [&] { return mean_all(mul(matmul(ad, bd), matmul(ad, bd))).value(); }));
  }
  single("transpose", randn({3, 5}, rng), [](const auto& x) {
    return mean_all(mul(transpose(x), transpose(x)));
  });
  {
    Tensor x = randn({5, 4}, rng);
    Tensor probe = randn({5, 4}, rng);
    TensorD xd = widen(x), probe_d = widen(probe);
    auto build = [&](const auto& v, const auto& pr) {
      return mean_all(mul(add(softmax(v, 0), softmax(v, 1)), pr));
    };
    results.push_back(check_gradients(
        "softmax-both-axes", {x}, {xd}, [&] { return build(x, probe); },
        [&] { return build(xd, probe_d).value(); }));
  }
  {
    Tensor x = randn({4, 8}, rng), g = randn({8}, rng), b = randn({8}, rng);
    Tensor probe = randn({4, 8}, rng);
    TensorD xd = widen(x), gd = widen(g), bd = widen(b), probe_d = widen(probe);
    results.push_back(check_gradients(
        "layer_norm", {x, g, b}, {xd, gd, bd},
        [&] { return mean_all(mul(layer_norm(x, g, b), probe)); },
        [&] { return mean_all(mul(layer_norm(xd, gd, bd), probe_d)).value(); }));
  }
  {
    Tensor z = randn({6, 4}, rng);
    Tensor y = Tensor::zeros({6, 4});
    Tensor w = Tensor::zeros({6, 4});
    for (auto& v : y.data()) v = rng() % 2 ? 1.0f : 0.0f;
    for (auto& v : w.data()) v = 0.25f + float(rng() % 4) * 0.5f;
    TensorD zd = widen(z), yd = widen(y), wd = widen(w);
    results.push_back(check_gradients(
        "bce-weighted", {z}, {zd},
        [&] { return bce(sigmoid(z), y, &w); },
        [&] { return bce(sigmoid(zd), yd, &wd).value(); }));
  }
  {
    Tensor x = randn({4, 3}, rng);
    Tensor probe_r = randn({3}, rng), probe_c = randn({4}, rng);
    TensorD xd = widen(x), prd = widen(probe_r), pcd = widen(probe_c);
    auto build = [&](const auto& v, const auto& pr, const auto& pc) {
      return add(mean_all(mul(sum_axis(v, 0), pr)), mean_all(mul(sum_axis(v, 1), pc)));
    };
    results.push_back(check_gradients(
        "reductions", {x}, {xd}, [&] { return build(x, probe_r, probe_c); },
        [&] { return build(xd, prd, pcd).value(); }));
  }
  {
    Tensor a = randn({3, 4}, rng), b = randn({2, 4}, rng);
    TensorD ad = widen(a), bd = widen(b);
    std::vector<std::size_t> picks{4, 0, 2, 2, 1};
    auto build = [&]<class S>(const BasicTensor<S>& x, const BasicTensor<S>& y) {
      auto s = concat_rows<S>({x, y});
      auto g = gather_rows(s, picks);
      return mean_all(mul(g, g));
    };
    results.push_back(check_gradients(
        "concat-gather", {a, b}, {ad, bd}, [&] { return build(a, b); },
        [&] { return build(ad, bd).value(); }));
  }
  {
    Tensor x = randn({5, 6}, rng);
    TensorD xd = widen(x);
    auto build = [&]<class S>(const BasicTensor<S>& v) {
      Rng mask_rng(12345);  // fixed mask keeps every evaluation differentiable
      return mean_all(mul(dropout(v, 0.3, mask_rng), v));
    };
    results.push_back(check_gradients(
        "dropout-fixed-mask", {x}, {xd}, [&] { return build(x); },
        [&] { return build(xd).value(); }));
  }

  // --- attention blocks ---
  {
    auto params = make_attention(16, 4, rng);
    auto params_d = widen(params);
    Tensor q = randn({10, 16}, rng), kv = randn({10, 16}, rng);
    Tensor probe = randn({10, 16}, rng);
    TensorD qd = widen(q), kvd = widen(kv), probe_d = widen(probe);
    NamedParams<float> nf;
    params.collect("attn", nf);
    nf.emplace_back("q", q);
    nf.emplace_back("kv", kv);
    NamedParams<double> nd;
    params_d.collect("attn", nd);
    nd.emplace_back("q", qd);
    nd.emplace_back("kv", kvd);
    results.push_back(check_gradients(
        "multi-head-attention", tensors_of(nf), tensors_of(nd),
        [&] { return mean_all(mul(multi_head_attention(q, kv, kv, params), probe)); },
        [&] {
          return mean_all(mul(multi_head_attention(qd, kvd, kvd, params_d), probe_d)).value();
        }));
  }
  {
    auto params = make_han_layer(16, 4, rng);
    auto params_d = widen(params);
    Tensor fv = randn({10, 16}, rng), fa = randn({10, 16}, rng);
    Tensor probe = randn({10, 16}, rng);
    TensorD fvd = widen(fv), fad = widen(fa), probe_d = widen(probe);
    NamedParams<float> nf;
    params.collect("han", nf);
    NamedParams<double> nd;
    params_d.collect("han", nd);
    auto build = [&]<class S>(const HanLayerParamsT<S>& p, const BasicTensor<S>& v,
                              const BasicTensor<S>& a, const BasicTensor<S>& pr) {
      auto [ov, oa] = han_layer(v, a, p);
      return mean_all(mul(add(ov, oa), pr));
    };
    results.push_back(check_gradients(
        "han-layer", tensors_of(nf), tensors_of(nd),
        [&] { return build(params, fv, fa, probe); },
        [&] { return build(params_d, fvd, fad, probe_d).value(); }));
  }
  {
    auto block = make_encoder_block(16, 4, 32, rng);
    auto block_d = widen(block);
    Tensor x = randn({10, 16}, rng);
    Tensor probe = randn({10, 16}, rng);
    TensorD xd = widen(x), probe_d = widen(probe);
    NamedParams<float> nf;
    block.collect("enc", nf);
    NamedParams<double> nd;
    block_d.collect("enc", nd);
    results.push_back(check_gradients(
        "encoder-block", tensors_of(nf), tensors_of(nd),
        [&] { return mean_all(mul(encoder_block(x, block), probe)); },
        [&] { return mean_all(mul(encoder_block(xd, block_d), probe_d)).value(); }));
  }

  // --- composite losses on desk shapes ---
  {
    PseudoLabelerConfig cfg;
    cfg.visual_width = 16;
    cfg.audio_width = 16;
    cfg.encoder_blocks = 2;
    cfg.ffn_multiplier = 2;
    auto model = make_pseudo_labeler(cfg, rng);
    auto model_d = widen(model);
    Tensor fv = randn({10, 16}, rng), fa = randn({10, 16}, rng);
    Tensor tv = randn({5, 16}, rng, 0.5f), ta = randn({5, 16}, rng, 0.5f);
    Tensor y = Tensor::zeros({10, 5});
    for (auto& v : y.data()) v = rng() % 3 == 0 ? 1.0f : 0.0f;
    TensorD fvd = widen(fv), fad = widen(fa), tvd = widen(tv), tad = widen(ta), yd = widen(y);
    auto nf = model.named_parameters();
    auto nd = model_d.named_parameters();
    results.push_back(check_gradients(
        "loss-temporal-pretrain", tensors_of(nf), tensors_of(nd),
        [&] {
          return pretrain_loss(segment_logits(encode_stack(model.visual, fv), tv),
                               segment_logits(encode_stack(model.audio, fa), ta), y);
        },
        [&] {
          return pretrain_loss(segment_logits(encode_stack(model_d.visual, fvd), tvd),
                               segment_logits(encode_stack(model_d.audio, fad), tad), yd)
              .value();
        }));
  }
  {
    auto fx = make_stage2_fixture(rng, 2, 10, 5, 12, 10);
    HanConfig cfg;
    cfg.visual_dim = 12;
    cfg.audio_dim = 10;
    cfg.model_dim = 16;
    cfg.num_classes = 5;
    auto model = make_han_model(cfg, rng);
    auto model_d = widen(model);
    auto nf = model.named_parameters();
    auto nd = model_d.named_parameters();

    auto run_variant = [&](const std::string& name, Stage2LossOptions opts,
                           const ClassBalanceWeights& weights, auto pick) {
      results.push_back(check_gradients(
          name, tensors_of(nf), tensors_of(nd),
          [&, opts, weights] {
            auto loss = stage2_batch_loss(model, fx.video_ptrs, fx.label_ptrs, weights, opts,
                                          opts.mixup ? &fx.plan : nullptr);
            return pick(loss);
          },
          [&, opts, weights] {
            auto loss = stage2_batch_loss(model_d, fx.video_ptrs, fx.label_ptrs, weights,
                                          opts, opts.mixup ? &fx.plan : nullptr);
            return pick(loss).value();
          }));
    };
    Stage2LossOptions base;
    base.mixup = false;
    run_variant("loss-video", base, neutral_balance_weights(),
                [](const auto& l) { return l.video; });

    Stage2LossOptions hard = base;
    hard.label_mode = LabelMode::hard;
    run_variant("loss-hard", hard, neutral_balance_weights(),
                [](const auto& l) { return l.weighted_soft; });

    run_variant("loss-soft", base, neutral_balance_weights(),
                [](const auto& l) { return l.weighted_soft; });
    run_variant("loss-weighted-soft", base, fx.weights,
                [](const auto& l) { return l.weighted_soft; });

    Stage2LossOptions with_mix = base;
    with_mix.mixup = true;
    run_variant("loss-mixup", with_mix, neutral_balance_weights(),
                [](const auto& l) { return l.mix; });
    run_variant("loss-total", with_mix, fx.weights,
                [](const auto& l) { return l.total; });
  }
  return results;
}

}  // namespace uwav
