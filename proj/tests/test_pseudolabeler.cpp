#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "uwav/gradcheck.hpp"
#include "uwav/pseudolabeler.hpp"

using namespace uwav;

namespace {

MatF mat_of(std::size_t rows, std::size_t cols, std::vector<float> v) {
  MatF m(rows, cols);
  m.v = std::move(v);
  return m;
}

}  // namespace

TEST_CASE("segment logits") {
  Rng rng(1);
  Tensor text = randn({4, 8}, rng);
  CHECK(segment_logits(Tensor::zeros({10, 8}), text).data() ==
        std::vector<float>(40, 0.0f));

  SUBCASE("orthonormal embedding rows pick out their class") {
    // identity-like text embeddings over the first 4 axes
    std::vector<float> e(4 * 8, 0.0f);
    for (std::size_t c = 0; c < 4; ++c) e[c * 8 + c] = 1.0f;
    Tensor ortho = Tensor::from_data({4, 8}, e);
    std::vector<float> g(8, 0.0f);
    g[2] = 1.0f;  // equals text row 2
    auto z = segment_logits(Tensor::from_data({1, 8}, g), ortho);
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(z.at(0, c) == doctest::Approx(c == 2 ? 1.0 : 0.0));
  }
  SUBCASE("scaling the text embeddings scales the logits") {
    Tensor features = randn({5, 8}, rng);
    auto base = segment_logits(features, text);
    auto scaled = segment_logits(features, scale(text, 3.0));
    for (std::size_t i = 0; i < base.numel(); ++i)
      CHECK(scaled.data()[i] == doctest::Approx(3.0 * base.data()[i]).epsilon(1e-6));
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(segment_logits(Tensor::zeros({10, 6}), text), std::invalid_argument);
  }
}

TEST_CASE("pretrain loss") {
  Rng rng(2);
  SUBCASE("joint probability never exceeds either modality") {
    Tensor zv = randn({10, 4}, rng, 2.0f), za = randn({10, 4}, rng, 2.0f);
    auto pv = sigmoid(zv), pa = sigmoid(za), pav = mul(sigmoid(zv), sigmoid(za));
    for (std::size_t i = 0; i < pav.numel(); ++i) {
      CHECK(pav.data()[i] <= pv.data()[i]);
      CHECK(pav.data()[i] <= pa.data()[i]);
    }
  }
  SUBCASE("saturated positives drive the loss to zero") {
    Tensor z = Tensor::full({10, 4}, 20.0f);
    Tensor y = Tensor::full({10, 4}, 1.0f);
    CHECK(pretrain_loss(z, z, y).value() < 1e-6);
  }
  SUBCASE("gradient through both encoder stacks on a 10x16 toy") {
    PseudoLabelerConfig cfg;
    cfg.visual_width = 16;
    cfg.audio_width = 16;
    cfg.encoder_blocks = 2;
    cfg.ffn_multiplier = 2;
    auto model = make_pseudo_labeler(cfg, rng);
    auto model_d = widen(model);
    Tensor fv = randn({10, 16}, rng), fa = randn({10, 16}, rng);
    Tensor text_v = randn({5, 16}, rng, 0.5f), text_a = randn({5, 16}, rng, 0.5f);
    std::vector<float> yv(50);
    for (auto& x : yv) x = rng() % 3 == 0 ? 1.0f : 0.0f;
    Tensor y = Tensor::from_data({10, 5}, yv);
    TensorD fv_d = widen(fv), fa_d = widen(fa), tv_d = widen(text_v), ta_d = widen(text_a),
            y_d = widen(y);
    auto nf = model.named_parameters();
    auto nd = model_d.named_parameters();
    auto res = check_gradients(
        "pretrain-loss", tensors_of(nf), tensors_of(nd),
        [&] {
          return pretrain_loss(
              segment_logits(encode_stack(model.visual, fv), text_v),
              segment_logits(encode_stack(model.audio, fa), text_a), y);
        },
        [&] {
          return pretrain_loss(
                     segment_logits(encode_stack(model_d.visual, fv_d), tv_d),
                     segment_logits(encode_stack(model_d.audio, fa_d), ta_d), y_d)
              .value();
        });
    CHECK(res.pass);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("threshold calibration") {
  SUBCASE("interpolated median of the pooled logits") {
    std::vector<MatF> logits{mat_of(4, 1, {-1.0f, 0.0f, 2.0f, 4.0f})};
    std::vector<std::vector<std::uint8_t>> labels{{1}};
    auto th = calibrate_class_thresholds(logits, labels, 0.5);
    CHECK(th[0] == doctest::Approx(1.0));
  }
  SUBCASE("q=0 gives the pool minimum, labeling everything above it") {
    std::vector<MatF> logits{mat_of(3, 1, {0.5f, 2.0f, 1.0f}),
                             mat_of(3, 1, {3.0f, 0.7f, 0.9f})};
    std::vector<std::vector<std::uint8_t>> labels{{1}, {1}};
    auto th = calibrate_class_thresholds(logits, labels, 0.0);
    CHECK(th[0] == doctest::Approx(0.5));
    // every pooled logit strictly above the minimum becomes a positive label
    auto b0 = binary_pseudo_labels(logits[0], th, {1});
    auto b1 = binary_pseudo_labels(logits[1], th, {1});
    CHECK(b0.v == std::vector<std::uint8_t>{0, 1, 1});  // the minimum itself stays 0
    CHECK(b1.v == std::vector<std::uint8_t>{1, 1, 1});
  }
  SUBCASE("deterministic") {
    std::vector<MatF> logits{mat_of(2, 2, {0.1f, -0.4f, 1.2f, 0.8f})};
    std::vector<std::vector<std::uint8_t>> labels{{1, 1}};
    CHECK(calibrate_class_thresholds(logits, labels, 0.3) ==
          calibrate_class_thresholds(logits, labels, 0.3));
  }
  SUBCASE("class with no positive videos gets the sentinel") {
    std::vector<MatF> logits{mat_of(2, 2, {5.0f, 5.0f, 5.0f, 5.0f})};
    std::vector<std::vector<std::uint8_t>> labels{{1, 0}};
    auto th = calibrate_class_thresholds(logits, labels, 0.5);
    CHECK(th[1] == kNeverPositiveThreshold);
    auto soft = soft_pseudo_labels(logits[0], th, {1, 0});
    CHECK(soft.at(0, 1) == 0.0f);
  }
  SUBCASE("empty split is an error") {
    CHECK_THROWS_AS(calibrate_class_thresholds({}, {}, 0.5), std::invalid_argument);
  }
}

TEST_CASE("binary and soft pseudo-labels") {
  std::vector<float> th{1.0f, 2.0f};
  MatF logits = mat_of(2, 2, {1.0f, 3.0f, 2.5f, 2.0f});

  SUBCASE("masked classes are zero regardless of logits") {
    auto soft = soft_pseudo_labels(logits, th, {0, 1});
    auto binary = binary_pseudo_labels(logits, th, {0, 1});
    CHECK(soft.at(0, 0) == 0.0f);
    CHECK(soft.at(1, 0) == 0.0f);
    CHECK(binary.at(1, 0) == 0);
    CHECK(binary.at(0, 1) == 1);  // logit 3 > threshold 2
  }
  SUBCASE("boundary logit maps to soft 0.5 and binary 0") {
    auto soft = soft_pseudo_labels(logits, th, {1, 1});
    auto binary = binary_pseudo_labels(logits, th, {1, 1});
    CHECK(soft.at(0, 0) == 0.5f);    // logit == threshold
    CHECK(binary.at(0, 0) == 0);     // strict inequality
    CHECK(soft.at(1, 1) == 0.5f);
    CHECK(binary.at(1, 1) == 0);
    CHECK(binary.at(1, 0) == 1);     // threshold + 1.5
  }
  SUBCASE("confidence grows with the distance from the threshold") {
    // sweep margins in [-5, 5]; |p - 0.5| must be non-decreasing in |margin|
    double last_pos = -1, last_neg = -1;
    for (double m = 0.0; m <= 5.0; m += 0.25) {
      auto up = soft_pseudo_labels(mat_of(1, 1, {float(m)}), {0.0f}, {1});
      auto down = soft_pseudo_labels(mat_of(1, 1, {float(-m)}), {0.0f}, {1});
      const double conf_up = std::abs(double(up.at(0, 0)) - 0.5);
      const double conf_down = std::abs(double(down.at(0, 0)) - 0.5);
      CHECK(conf_up >= last_pos);
      CHECK(conf_down >= last_neg);
      last_pos = conf_up;
      last_neg = conf_down;
    }
  }
  SUBCASE("binary equals soft thresholded at one half on random inputs") {
    Rng rng(9);
    std::normal_distribution<float> gauss(0.0f, 2.0f);
    MatF z(6, 4);
    for (auto& v : z.v) v = gauss(rng);
    std::vector<float> thr{0.3f, -0.2f, 0.0f, 1.0f};
    std::vector<std::uint8_t> y{1, 0, 1, 1};
    auto soft = soft_pseudo_labels(z, thr, y);
    auto binary = binary_pseudo_labels(z, thr, y);
    for (std::size_t i = 0; i < soft.v.size(); ++i)
      CHECK(bool(binary.v[i]) == (soft.v[i] > 0.5f));
  }
}

TEST_CASE("temporal coherence contract") {
  Rng rng(11);
  PseudoLabelerConfig cfg;
  cfg.visual_width = 16;
  cfg.audio_width = 16;
  cfg.encoder_blocks = 2;
  cfg.ffn_multiplier = 2;

  Tensor features = randn({10, 16}, rng);
  std::vector<std::size_t> perm{7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
  auto permuted = [&](const Tensor& x) {
    std::vector<float> v(x.numel());
    for (std::size_t i = 0; i < perm.size(); ++i)
      std::copy_n(x.data().begin() + perm[i] * 16, 16, v.begin() + i * 16);
    return Tensor::from_data(x.shape(), std::move(v));
  };

  SUBCASE("without positional encoding outputs permute with the input") {
    cfg.positional_encoding = false;
    Rng init(3);
    auto model = make_pseudo_labeler(cfg, init);
    auto direct = permuted(encode_stack(model.visual, features));
    auto shuffled = encode_stack(model.visual, permuted(features));
    for (std::size_t i = 0; i < direct.numel(); ++i)
      CHECK(direct.data()[i] == doctest::Approx(shuffled.data()[i]).epsilon(1e-5));
  }
  SUBCASE("with positional encoding the order matters") {
    cfg.positional_encoding = true;
    Rng init(3);
    auto model = make_pseudo_labeler(cfg, init);
    auto direct = permuted(encode_stack(model.visual, features));
    auto shuffled = encode_stack(model.visual, permuted(features));
    double max_diff = 0;
    for (std::size_t i = 0; i < direct.numel(); ++i)
      max_diff = std::max(max_diff,
                          std::abs(double(direct.data()[i]) - double(shuffled.data()[i])));
    CHECK(max_diff > 1e-3);
  }
}
