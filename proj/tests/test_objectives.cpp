#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "uwav/gradcheck.hpp"
#include "uwav/objectives.hpp"

using namespace uwav;

namespace {

PseudoLabelSet uniform_set(std::size_t videos, std::size_t T, std::size_t C,
                           std::uint8_t visual_fill, std::uint8_t audio_fill) {
  PseudoLabelSet set;
  set.thresholds_visual.assign(C, 0.0f);
  set.thresholds_audio.assign(C, 0.0f);
  for (std::size_t n = 0; n < videos; ++n) {
    VideoPseudoLabels v;
    v.binary_visual = MatB(T, C, visual_fill);
    v.binary_audio = MatB(T, C, audio_fill);
    v.soft_visual = MatF(T, C, visual_fill ? 0.9f : 0.1f);
    v.soft_audio = MatF(T, C, audio_fill ? 0.9f : 0.1f);
    set.videos["v" + std::to_string(n)] = std::move(v);
  }
  return set;
}

SegmentPredictionsT<float> preds_from(const MatF& visual, const MatF& audio) {
  SegmentPredictionsT<float> p;
  p.visual_probs = to_tensor(visual);
  p.audio_probs = to_tensor(audio);
  return p;
}

}  // namespace

TEST_CASE("class balance weights") {
  SUBCASE("all positive labels zero out the positive weight") {
    auto w = class_balance_weights(uniform_set(3, 4, 2, 1, 1), 0.5);
    CHECK(w.visual_positive == doctest::Approx(0.0));
    CHECK(w.visual_negative == doctest::Approx(1.0));
    CHECK(w.audio_positive == doctest::Approx(0.0));
  }
  SUBCASE("all negative labels give w_pos = W and w_neg = 0") {
    auto w = class_balance_weights(uniform_set(3, 4, 2, 0, 0), 0.5);
    CHECK(w.visual_positive == doctest::Approx(0.5));
    CHECK(w.visual_negative == doctest::Approx(0.0));
  }
  SUBCASE("quarter-positive hand case") {
    PseudoLabelSet set;
    set.thresholds_visual.assign(2, 0.0f);
    set.thresholds_audio.assign(2, 0.0f);
    VideoPseudoLabels v;
    v.binary_visual = MatB(2, 2);
    v.binary_visual.at(0, 0) = 1;  // one of four cells positive
    v.binary_audio = v.binary_visual;
    v.soft_visual = MatF(2, 2, 0.1f);
    v.soft_visual.at(0, 0) = 0.9f;
    v.soft_audio = v.soft_visual;
    set.videos["v0"] = v;
    auto w = class_balance_weights(set, 0.5);
    CHECK(w.visual_positive == doctest::Approx(0.375));
    CHECK(w.visual_negative == doctest::Approx(0.25));
  }
  SUBCASE("identity w_pos / W + w_neg == 1") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      PseudoLabelSet set;
      set.thresholds_visual.assign(3, 0.0f);
      set.thresholds_audio.assign(3, 0.0f);
      for (int n = 0; n < 4; ++n) {
        VideoPseudoLabels v;
        v.binary_visual = MatB(5, 3);
        v.binary_audio = MatB(5, 3);
        for (auto& b : v.binary_visual.v) b = rng() % 2;
        for (auto& b : v.binary_audio.v) b = rng() % 2;
        v.soft_visual = MatF(5, 3, 0.5f);
        v.soft_audio = MatF(5, 3, 0.5f);
        set.videos["v" + std::to_string(n)] = std::move(v);
      }
      const double W = 0.1 + 0.2 * double(trial % 5);
      auto w = class_balance_weights(set, W);
      CHECK(std::abs(w.visual_positive / W + w.visual_negative - 1.0) < 1e-12);
      CHECK(std::abs(w.audio_positive / W + w.audio_negative - 1.0) < 1e-12);
    }
  }
  SUBCASE("empty set is an error") {
    CHECK_THROWS_AS(class_balance_weights(PseudoLabelSet{}, 0.5), std::invalid_argument);
  }
}

TEST_CASE("pseudo-label losses") {
  const std::size_t T = 4, C = 3;
  MatF soft_v(T, C, 0.5f), soft_a(T, C, 0.5f);

  SUBCASE("uniform half targets floor at log 2") {
    auto preds = preds_from(MatF(T, C, 0.5f), MatF(T, C, 0.5f));
    auto loss = pseudo_label_loss(preds, to_tensor(soft_v), to_tensor(soft_a));
    CHECK(loss.value() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
    auto worse = preds_from(MatF(T, C, 0.7f), MatF(T, C, 0.5f));
    CHECK(pseudo_label_loss(worse, to_tensor(soft_v), to_tensor(soft_a)).value() >
          loss.value());
  }
  SUBCASE("predictions equal to soft targets minimize the soft loss") {
    MatF target(T, C);
    Rng rng(3);
    std::uniform_real_distribution<float> uni(0.1f, 0.9f);
    for (auto& v : target.v) v = uni(rng);
    auto at_target = pseudo_label_loss(preds_from(target, target), to_tensor(target),
                                       to_tensor(target)).value();
    for (float delta : {-0.05f, 0.07f}) {
      MatF perturbed = target;
      perturbed.at(1, 1) += delta;
      CHECK(pseudo_label_loss(preds_from(perturbed, target), to_tensor(target),
                              to_tensor(target)).value() > at_target);
    }
  }
  SUBCASE("soft loss approaches hard loss as the margin grows") {
    // soft target sigma(k) -> 1 as k -> inf; the losses must converge
    MatB binary(T, C, 1);
    MatF probs(T, C, 0.8f);
    auto preds = preds_from(probs, probs);
    auto hard = pseudo_label_loss(preds, to_tensor(binary), to_tensor(binary)).value();
    double prev_gap = 1e9;
    for (double k : {1.0, 3.0, 6.0, 12.0}) {
      MatF soft(T, C, float(1.0 / (1.0 + std::exp(-k))));
      auto soft_loss = pseudo_label_loss(preds, to_tensor(soft), to_tensor(soft)).value();
      const double gap = std::abs(soft_loss - hard);
      CHECK(gap <= prev_gap + 1e-9);
      prev_gap = gap;
    }
    CHECK(prev_gap < 1e-4);
  }
}

TEST_CASE("weighted soft loss") {
  const std::size_t T = 3, C = 4;
  Rng rng(5);
  std::uniform_real_distribution<float> uni(0.1f, 0.9f);
  MatF probs_v(T, C), probs_a(T, C), soft_v(T, C), soft_a(T, C);
  for (auto* m : {&probs_v, &probs_a, &soft_v, &soft_a})
    for (auto& x : m->v) x = uni(rng);
  auto preds = preds_from(probs_v, probs_a);
  auto tv = to_tensor(soft_v), ta = to_tensor(soft_a);
  const double unweighted = pseudo_label_loss(preds, tv, ta).value();

  ClassBalanceWeights w;
  w.multiplier = 0.5;

  SUBCASE("all-ones video label collapses to the positive weight") {
    w.visual_positive = w.audio_positive = 0.3;
    w.visual_negative = w.audio_negative = 0.9;
    std::vector<float> y(C, 1.0f);
    CHECK(weighted_soft_loss(preds, tv, ta, y, w).value() ==
          doctest::Approx(0.3 * unweighted).epsilon(1e-5));
  }
  SUBCASE("all-zeros video label collapses to the negative weight") {
    w.visual_positive = w.audio_positive = 0.3;
    w.visual_negative = w.audio_negative = 0.9;
    std::vector<float> y(C, 0.0f);
    CHECK(weighted_soft_loss(preds, tv, ta, y, w).value() ==
          doctest::Approx(0.9 * unweighted).epsilon(1e-5));
  }
  SUBCASE("unit weights recover the unweighted loss") {
    w.visual_positive = w.visual_negative = 1.0;
    w.audio_positive = w.audio_negative = 1.0;
    std::vector<float> y{1, 0, 1, 0};
    CHECK(weighted_soft_loss(preds, tv, ta, y, w).value() ==
          doctest::Approx(unweighted).epsilon(1e-6));
  }
}

TEST_CASE("mixup") {
  Rng rng(7);
  MixupConfig cfg;

  SUBCASE("lambda one leaves features and labels untouched") {
    Tensor features = randn({8, 4}, rng);
    MatF labels(8, 3);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (auto& v : labels.v) v = uni(rng);
    MixupPlan plan;
    plan.lambdas = {1.0};
    plan.pairing = {3, 1, 4, 0, 7, 6, 5, 2};
    auto mixed = mix_features(features, plan);
    CHECK(mixed.data() == features.data());
    auto mixed_labels = mix_labels(labels, plan, false);
    CHECK(mixed_labels.v == labels.v);
  }
  SUBCASE("mixed labels stay inside the pairwise interval") {
    MatF labels(6, 2);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (auto& v : labels.v) v = uni(rng);
    for (int trial = 0; trial < 10; ++trial) {
      auto plan = plan_mixup(6, cfg, rng);
      auto mixed = mix_labels(labels, plan, false);
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
          const float lo = std::min(labels.at(i, c), labels.at(plan.pairing[i], c));
          const float hi = std::max(labels.at(i, c), labels.at(plan.pairing[i], c));
          CHECK(mixed.at(i, c) >= lo - 1e-7f);
          CHECK(mixed.at(i, c) <= hi + 1e-7f);
        }
    }
  }
  SUBCASE("label interpolation is linear in lambda") {
    MatF labels(2, 1);
    labels.at(0, 0) = 0.2f;
    labels.at(1, 0) = 0.8f;
    MixupPlan plan;
    plan.pairing = {1, 0};
    for (double lam : {0.0, 0.5, 1.0}) {
      plan.lambdas = {lam};
      auto mixed = mix_labels(labels, plan, false);
      CHECK(std::abs(mixed.at(0, 0) - (lam * 0.2 + (1 - lam) * 0.8)) < 1e-7);
    }
  }
  SUBCASE("ceil mode binarizes unmasked values and keeps masked zeros") {
    MatF labels(1, 3);
    labels.at(0, 0) = 0.3f;
    labels.at(0, 1) = 0.0f;
    labels.at(0, 2) = 0.9f;
    MixupPlan plan;
    plan.lambdas = {0.6};
    plan.pairing = {0};
    auto mixed = mix_labels(labels, plan, true);
    CHECK(mixed.at(0, 0) == 1.0f);
    CHECK(mixed.at(0, 1) == 0.0f);
    CHECK(mixed.at(0, 2) == 1.0f);
  }
  SUBCASE("self-pairing reproduces the original for any lambda") {
    Tensor features = randn({5, 3}, rng);
    MixupPlan plan;
    plan.lambdas = {0.37};
    plan.pairing = {0, 1, 2, 3, 4};
    auto mixed = mix_features(features, plan);
    for (std::size_t i = 0; i < mixed.numel(); ++i)
      CHECK(mixed.data()[i] == doctest::Approx(features.data()[i]).epsilon(1e-6));
  }
  SUBCASE("alpha must be positive") {
    MixupConfig bad;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(plan_mixup(4, bad, rng), std::invalid_argument);
  }
  SUBCASE("per-pair lambdas are supported") {
    MixupConfig pp;
    pp.per_pair_lambda = true;
    auto plan = plan_mixup(6, pp, rng);
    CHECK(plan.lambdas.size() == 6);
  }
}

TEST_CASE("mixup loss") {
  Rng rng(9);
  auto classifier = make_linear(6, 3, rng);
  auto upstream = make_linear(4, 6, rng);
  Tensor inputs = randn({10, 4}, rng);
  MatF labels(10, 3);
  std::uniform_real_distribution<float> uni(0.05f, 0.95f);
  for (auto& v : labels.v) v = uni(rng);

  SUBCASE("lambda one equals the unmixed classifier loss bit-exactly") {
    MixupPlan plan;
    plan.lambdas = {1.0};
    plan.pairing.resize(10);
    for (std::size_t i = 0; i < 10; ++i) plan.pairing[i] = 9 - i;
    auto features = upstream(inputs);
    auto mixed = mix_features(features, plan);
    auto targets = to_tensor(mix_labels(labels, plan, false));
    auto via_mixup = mixup_loss(mixed, mixed, targets, targets, classifier);
    auto direct = add(bce(sigmoid(classifier(features)), targets),
                      bce(sigmoid(classifier(features)), targets));
    CHECK(via_mixup.value() == direct.value());
  }
  SUBCASE("gradient through mix, classifier and bce") {
    MixupConfig cfg;
    auto plan = plan_mixup(10, cfg, rng);
    auto targets = to_tensor(mix_labels(labels, plan, false));
    TensorD targets_d = widen(targets);
    auto upstream_d = widen(upstream);
    auto classifier_d = widen(classifier);
    TensorD inputs_d = widen(inputs);
    NamedParams<float> nf;
    upstream.collect("up", nf);
    classifier.collect("cls", nf);
    NamedParams<double> nd;
    upstream_d.collect("up", nd);
    classifier_d.collect("cls", nd);
    auto res = check_gradients(
        "mixup-loss", tensors_of(nf), tensors_of(nd),
        [&] {
          auto mixed = mix_features(upstream(inputs), plan);
          return mixup_loss(mixed, mixed, targets, targets, classifier);
        },
        [&] {
          auto mixed = mix_features(upstream_d(inputs_d), plan);
          return mixup_loss(mixed, mixed, targets_d, targets_d, classifier_d).value();
        });
    CHECK(res.pass);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("total loss") {
  auto a = Tensor::scalar(0.2f), b = Tensor::scalar(0.3f), c = Tensor::scalar(0.1f);
  auto total = total_loss(a, b, c);
  CHECK(total.value() == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(total.value() >= a.value());
  CHECK(total.value() >= b.value());
  CHECK(total.value() >= c.value());
}
