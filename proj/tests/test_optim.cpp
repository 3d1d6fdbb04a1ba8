#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "uwav/optim.hpp"
#include "uwav/rng.hpp"

using namespace uwav;

TEST_CASE("adamw zero gradient") {
  auto p = Tensor::from_data({2}, {1.0f, -2.0f});
  p.set_requires_grad(true);
  p.zero_grad();

  SUBCASE("no weight decay leaves parameters unchanged") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({p}, cfg);
    opt.step();
    CHECK(p.data() == std::vector<float>{1.0f, -2.0f});
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("decoupled decay shrinks parameters multiplicatively") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    AdamW opt({p}, cfg);
    opt.step();
    CHECK(p.data()[0] == doctest::Approx(1.0f * (1.0 - 0.1 * 0.5)));
    CHECK(p.data()[1] == doctest::Approx(-2.0f * (1.0 - 0.1 * 0.5)));
  }
}

TEST_CASE("adamw first step matches the scalar closed form") {
  const double lr = 0.01, eps = 1e-8, g = 0.37;
  auto p = Tensor::from_data({1}, {2.0f});
  p.set_requires_grad(true);
  p.zero_grad();
  p.grad()[0] = float(g);
  AdamWConfig cfg;
  cfg.lr = lr;
  cfg.eps = eps;
  cfg.weight_decay = 0.0;
  AdamW opt({p}, cfg);
  opt.step();
  // bias-corrected first step: m_hat = g, v_hat = g^2
  const double expected = 2.0 - lr * g / (std::sqrt(g * g) + eps);
  CHECK(p.data()[0] == doctest::Approx(expected).epsilon(1e-7));
}

TEST_CASE("adamw is deterministic") {
  auto run = [] {
    Rng rng(5);
    Tensor p = randn({8}, rng);
    p.set_requires_grad(true);
    p.zero_grad();
    for (std::size_t i = 0; i < 8; ++i) p.grad()[i] = float(i) * 0.1f - 0.3f;
    AdamW opt({p}, {});
    opt.step();
    opt.step();
    return p.data();
  };
  CHECK(run() == run());
}

TEST_CASE("adamw missing gradient is a usage error") {
  auto p = Tensor::from_data({1}, {1.0f});
  AdamW opt({p}, {});
  CHECK_THROWS_AS(opt.step(), std::logic_error);
}

TEST_CASE("learning rate schedule") {
  ScheduleConfig cfg;  // warmup 10, peak 1e-4, min 1e-5, total 80
  CHECK(lr_at_epoch(cfg, 9) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at_epoch(cfg, 0) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(std::abs(lr_at_epoch(cfg, 79) - cfg.min_lr) < 1e-9);
  for (std::size_t e = 10; e < 79; ++e) CHECK(lr_at_epoch(cfg, e) > lr_at_epoch(cfg, e + 1));
  CHECK_THROWS_AS(lr_at_epoch(cfg, 80), std::logic_error);

  SUBCASE("cosine midpoint halves the range") {
    ScheduleConfig mid;
    mid.warmup_epochs = 10;
    mid.total_epochs = 21;  // decay epochs 10..20, midpoint at 15
    mid.peak_lr = 1e-4;
    mid.min_lr = 1e-5;
    CHECK(lr_at_epoch(mid, 15) ==
          doctest::Approx((mid.peak_lr + mid.min_lr) / 2).epsilon(1e-9));
  }
  SUBCASE("invalid configs") {
    ScheduleConfig bad;
    bad.warmup_epochs = 100;
    CHECK_THROWS_AS(lr_at_epoch(bad, 0), std::invalid_argument);
    ScheduleConfig inverted;
    inverted.min_lr = 1.0;
    CHECK_THROWS_AS(lr_at_epoch(inverted, 0), std::invalid_argument);
  }
}

TEST_CASE("gradient clipping") {
  auto make = [](std::vector<float> g) {
    const std::size_t n = g.size();
    auto p = Tensor::zeros({n});
    p.set_requires_grad(true);
    p.zero_grad();
    p.grad() = std::move(g);
    return p;
  };

  SUBCASE("norm below threshold is untouched") {
    std::vector<Tensor> params{make({0.3f, 0.4f})};  // norm 0.5
    CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(1.0));
    CHECK(params[0].grad() == std::vector<float>{0.3f, 0.4f});
  }
  SUBCASE("norm above threshold is scaled") {
    std::vector<Tensor> params{make({1.2f, 1.6f})};  // norm 2.0
    CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(0.5));
    CHECK(params[0].grad()[0] == doctest::Approx(0.6f));
  }
  SUBCASE("recomputed norm equals min(original, max_norm)") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Tensor> params;
      double sq = 0;
      for (int k = 0; k < 3; ++k) {
        Tensor t = randn({5}, rng, 2.0f);
        Tensor p = Tensor::zeros({5});
        p.set_requires_grad(true);
        p.zero_grad();
        p.grad() = t.data();
        for (float v : t.data()) sq += double(v) * double(v);
        params.push_back(p);
      }
      const double orig = std::sqrt(sq);
      clip_grad_norm(params, 1.0);
      double after_sq = 0;
      for (auto& p : params)
        for (float v : p.grad()) after_sq += double(v) * double(v);
      CHECK(std::abs(std::sqrt(after_sq) - std::min(orig, 1.0)) < 1e-6);
    }
  }
}
