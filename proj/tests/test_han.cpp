#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "uwav/gradcheck.hpp"
#include "uwav/han.hpp"

using namespace uwav;

namespace {

HanModel small_model(Rng& rng) {
  HanConfig cfg;
  cfg.visual_dim = 12;
  cfg.audio_dim = 10;
  cfg.model_dim = 16;
  cfg.num_classes = 5;
  return make_han_model(cfg, rng);
}

void zero_linear(Linear& l) {
  std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0f);
  std::fill(l.bias.data().begin(), l.bias.data().end(), 0.0f);
}

}  // namespace

TEST_CASE("han_forward shapes and ranges") {
  Rng rng(1);
  auto model = small_model(rng);
  Tensor vb = randn({10, 12}, rng), ab = randn({10, 10}, rng);
  auto preds = han_forward(vb, ab, model);
  CHECK(preds.visual_probs.shape() == Shape{10, 5});
  CHECK(preds.audio_probs.shape() == Shape{10, 5});
  CHECK(preds.video_probs.shape() == Shape{5});
  for (float p : preds.visual_probs.data()) {
    CHECK(p > 0.0f);
    CHECK(p < 1.0f);
  }
  SUBCASE("deterministic") {
    auto again = han_forward(vb, ab, model);
    CHECK(again.video_probs.data() == preds.video_probs.data());
    CHECK(again.visual_logits.data() == preds.visual_logits.data());
  }
  SUBCASE("probs are the sigmoid of the logits") {
    for (std::size_t i = 0; i < preds.visual_logits.numel(); ++i)
      CHECK(preds.visual_probs.data()[i] ==
            doctest::Approx(1.0 / (1.0 + std::exp(-double(preds.visual_logits.data()[i]))))
                .epsilon(1e-6));
  }
}

TEST_CASE("tied modality parameters swap outputs when streams swap") {
  Rng rng(2);
  HanConfig cfg;
  cfg.visual_dim = 12;
  cfg.audio_dim = 12;
  cfg.model_dim = 16;
  cfg.num_classes = 4;
  auto model = make_han_model(cfg, rng);
  model.project_audio = model.project_visual;
  model.attention.audio_self = model.attention.visual_self;
  model.attention.audio_cross = model.attention.visual_cross;
  Tensor a = randn({10, 12}, rng), b = randn({10, 12}, rng);
  auto fwd = han_forward(a, b, model);
  auto swapped = han_forward(b, a, model);
  CHECK(fwd.visual_logits.data() == swapped.audio_logits.data());
  CHECK(fwd.audio_logits.data() == swapped.visual_logits.data());
}

TEST_CASE("mmil pooling") {
  Rng rng(3);
  auto model = small_model(rng);
  Tensor vb = randn({10, 12}, rng), ab = randn({10, 10}, rng);

  SUBCASE("attention weights normalize across their axes") {
    auto preds = han_forward(vb, ab, model);
    for (std::size_t t = 0; t < 10; ++t)
      for (std::size_t c = 0; c < 5; ++c)
        CHECK(std::abs(preds.modal_weight_visual.at(t, c) +
                       preds.modal_weight_audio.at(t, c) - 1.0) < 1e-6);
    for (std::size_t c = 0; c < 5; ++c) {
      double sv = 0, sa = 0;
      for (std::size_t t = 0; t < 10; ++t) {
        sv += preds.time_weight_visual.at(t, c);
        sa += preds.time_weight_audio.at(t, c);
      }
      CHECK(std::abs(sv - 1.0) < 1e-6);
      CHECK(std::abs(sa - 1.0) < 1e-6);
    }
  }

  SUBCASE("zeroed heads pool to the arithmetic mean of all segment probs") {
    zero_linear(model.modal_head);
    zero_linear(model.time_head);
    auto preds = han_forward(vb, ab, model);
    for (std::size_t c = 0; c < 5; ++c) {
      double mean = 0;
      for (std::size_t t = 0; t < 10; ++t)
        mean += preds.visual_probs.at(t, c) + preds.audio_probs.at(t, c);
      mean /= 20.0;
      CHECK(std::abs(double(preds.video_probs.data()[c]) - mean) < 1e-6);
    }
  }

  SUBCASE("single segment specializes to the modality average") {
    zero_linear(model.modal_head);
    zero_linear(model.time_head);
    Tensor vb1 = randn({1, 12}, rng), ab1 = randn({1, 10}, rng);
    auto preds = han_forward(vb1, ab1, model);
    for (std::size_t c = 0; c < 5; ++c)
      CHECK(preds.video_probs.data()[c] ==
            doctest::Approx(0.5 * (preds.visual_probs.at(0, c) + preds.audio_probs.at(0, c)))
                .epsilon(1e-6));
  }

  SUBCASE("concentrated weights can push the raw pool above one") {
    // Hand-built pooling inputs: modality weights concentrate on different
    // modalities at different segments while the temporal weights put their
    // mass exactly there.
    HanConfig tiny;
    tiny.visual_dim = 2;
    tiny.audio_dim = 2;
    tiny.model_dim = 2;
    tiny.num_classes = 1;
    tiny.attention_heads = 1;
    Rng r2(4);
    auto m = make_han_model(tiny, r2);
    m.modal_head.weight = Tensor::from_data({2, 1}, {10.0f, -10.0f});
    m.modal_head.bias = Tensor::zeros({1});
    m.time_head.weight = Tensor::from_data({2, 1}, {20.0f, 0.0f});
    m.time_head.bias = Tensor::zeros({1});

    SegmentPredictionsT<float> preds;
    preds.visual_features = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    preds.audio_features = Tensor::from_data({2, 2}, {0, 1, 1, 0});
    preds.visual_probs = Tensor::from_data({2, 1}, {0.99f, 0.99f});
    preds.audio_probs = Tensor::from_data({2, 1}, {0.99f, 0.99f});
    mmil_pool(preds, m);

    double raw = 0;
    for (std::size_t t = 0; t < 2; ++t) {
      raw += preds.modal_weight_visual.at(t, 0) * preds.time_weight_visual.at(t, 0) *
             preds.visual_probs.at(t, 0);
      raw += preds.modal_weight_audio.at(t, 0) * preds.time_weight_audio.at(t, 0) *
             preds.audio_probs.at(t, 0);
    }
    CHECK(raw > 1.0);
    CHECK(preds.video_probs.data()[0] == doctest::Approx(1.0 - kPooledProbEps));
    auto y = Tensor::from_data({1}, {1.0f});
    CHECK(std::isfinite(video_loss(preds, y).value()));
  }
}

TEST_CASE("video loss") {
  Rng rng(5);
  auto model = small_model(rng);
  Tensor vb = randn({10, 12}, rng), ab = randn({10, 10}, rng);

  SUBCASE("half probabilities give log 2") {
    SegmentPredictionsT<float> preds;
    preds.video_probs = Tensor::full({5}, 0.5f);
    CHECK(video_loss(preds, Tensor::from_data({5}, {1, 0, 1, 0, 1})).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }
  SUBCASE("matching clamped prediction is near zero") {
    SegmentPredictionsT<float> preds;
    preds.video_probs = Tensor::from_data({2}, {1.0f - float(kPooledProbEps), float(kPooledProbEps)});
    CHECK(video_loss(preds, Tensor::from_data({2}, {1.0f, 0.0f})).value() < 1e-5);
  }
  SUBCASE("gradient reaches every parameter") {
    auto model_d = widen(model);
    TensorD vbd = widen(vb), abd = widen(ab);
    Tensor y = Tensor::from_data({5}, {1, 0, 0, 1, 0});
    TensorD yd = widen(y);
    auto nf = model.named_parameters();
    auto nd = model_d.named_parameters();
    auto res = check_gradients(
        "video-loss", tensors_of(nf), tensors_of(nd),
        [&] { return video_loss(han_forward(vb, ab, model), y); },
        [&] { return video_loss(han_forward(vbd, abd, model_d), yd).value(); });
    CHECK(res.pass);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("predict_segments") {
  SegmentPredictionsT<float> preds;
  preds.visual_probs = Tensor::from_data({2, 2}, {0.5f, 0.9f, 0.2f, 0.7f});
  preds.audio_probs = Tensor::from_data({2, 2}, {0.6f, 0.1f, 0.2f, 0.8f});
  auto out = predict_segments(preds, 0.5);
  CHECK(out.visual.at(0, 0) == 0);  // exactly at the threshold stays negative
  CHECK(out.visual.at(0, 1) == 1);
  CHECK(out.audio.at(0, 0) == 1);
  CHECK(out.av.at(0, 0) == 0);  // visual negative blocks the conjunction
  CHECK(out.av.at(0, 1) == 0);  // audio negative blocks the conjunction
  CHECK(out.av.at(1, 1) == 1);
  auto all = predict_segments(preds, 0.0);
  for (auto b : all.visual.v) CHECK(b == 1);
  for (auto b : all.av.v) CHECK(b == 1);
}
