#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uwav/gradcheck.hpp"
#include "uwav/nn.hpp"

using namespace uwav;

namespace {

void zero_out_projections(AttentionParams& p) {
  for (auto& t : p.out_proj) std::fill(t.data().begin(), t.data().end(), 0.0f);
}

// Direct path for uniform attention weights: every output row equals
// sum_h out_proj_h(value_proj_h(mean row of V)).
std::vector<float> uniform_attention_row(const Tensor& values, const AttentionParams& p) {
  const std::size_t rows = values.shape()[0], d = values.shape()[1];
  std::vector<float> mean_row(d, 0.0f);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) mean_row[j] += values.at(i, j) / float(rows);
  Tensor m = Tensor::from_data({1, d}, mean_row);
  std::vector<float> out(d, 0.0f);
  for (std::size_t h = 0; h < p.heads(); ++h) {
    auto head = matmul(matmul(m, p.value_proj[h]), p.out_proj[h]);
    for (std::size_t j = 0; j < d; ++j) out[j] += head.data()[j];
  }
  return out;
}

Tensor permute_rows_copy(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t cols = x.shape()[1];
  std::vector<float> v(x.numel());
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(x.data().begin() + perm[i] * cols, cols, v.begin() + i * cols);
  return Tensor::from_data(x.shape(), std::move(v));
}

}  // namespace

TEST_CASE("multi_head_attention single key") {
  Rng rng(1);
  auto params = make_attention(8, 2, rng);
  Tensor q = randn({3, 8}, rng);
  Tensor kv = randn({1, 8}, rng);
  auto out = multi_head_attention(q, kv, kv, params);
  auto expected = uniform_attention_row(kv, params);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(out.at(t, j) == doctest::Approx(expected[j]).epsilon(1e-5));
}

TEST_CASE("multi_head_attention joint K/V permutation invariance") {
  Rng rng(2);
  auto params = make_attention(8, 4, rng);
  Tensor q = randn({4, 8}, rng);
  Tensor k = randn({6, 8}, rng);
  Tensor v = randn({6, 8}, rng);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  auto base = multi_head_attention(q, k, v, params);
  auto shuffled =
      multi_head_attention(q, permute_rows_copy(k, perm), permute_rows_copy(v, perm), params);
  for (std::size_t i = 0; i < base.numel(); ++i)
    CHECK(base.data()[i] == doctest::Approx(shuffled.data()[i]).epsilon(1e-5));
}

TEST_CASE("multi_head_attention identical keys fall back to mean value") {
  Rng rng(3);
  auto params = make_attention(8, 2, rng);
  Tensor q = randn({5, 8}, rng);
  Tensor row = randn({1, 8}, rng);
  std::vector<float> krep;
  for (int i = 0; i < 6; ++i)
    krep.insert(krep.end(), row.data().begin(), row.data().end());
  Tensor k = Tensor::from_data({6, 8}, krep);
  Tensor v = randn({6, 8}, rng);
  auto out = multi_head_attention(q, k, v, params);
  auto expected = uniform_attention_row(v, params);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(out.at(t, j) == doctest::Approx(expected[j]).epsilon(2e-5));
}

TEST_CASE("multi_head_attention width mismatch") {
  Rng rng(4);
  auto params = make_attention(8, 2, rng);
  CHECK_THROWS_AS(
      multi_head_attention(randn({3, 6}, rng), randn({3, 8}, rng), randn({3, 8}, rng), params),
      std::invalid_argument);
  CHECK_THROWS_AS(make_attention(10, 3, rng), std::invalid_argument);
}

TEST_CASE("han_layer") {
  Rng rng(5);
  auto params = make_han_layer(8, 4, rng);
  Tensor fv = randn({10, 8}, rng);
  Tensor fa = randn({10, 8}, rng);

  SUBCASE("zeroed output projections give the identity") {
    auto zeroed = params;
    zero_out_projections(zeroed.visual_self);
    zero_out_projections(zeroed.visual_cross);
    zero_out_projections(zeroed.audio_self);
    zero_out_projections(zeroed.audio_cross);
    auto [v, a] = han_layer(fv, fa, zeroed);
    CHECK(v.data() == fv.data());
    CHECK(a.data() == fa.data());
  }
  SUBCASE("shape preservation") {
    auto [v, a] = han_layer(fv, fa, params);
    CHECK(v.shape() == fv.shape());
    CHECK(a.shape() == fa.shape());
  }
  SUBCASE("tied parameters with equal streams give equal outputs") {
    HanLayerParams tied{params.visual_self, params.visual_cross, params.visual_self,
                        params.visual_cross};
    auto [v, a] = han_layer(fv, fv, tied);
    for (std::size_t i = 0; i < v.numel(); ++i)
      CHECK(v.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-6));
  }
  SUBCASE("segment count mismatch is an error") {
    CHECK_THROWS_AS(han_layer(fv, randn({7, 8}, rng), params), std::invalid_argument);
  }
}

TEST_CASE("encoder_block") {
  Rng rng(6);
  auto block = make_encoder_block(16, 4, 64, rng);
  Tensor x = randn({10, 16}, rng);

  SUBCASE("final layer norm statistics") {
    auto y = encoder_block(x, block);
    for (std::size_t r = 0; r < 10; ++r) {
      double mean = 0, var = 0;
      for (std::size_t c = 0; c < 16; ++c) mean += y.at(r, c);
      mean /= 16;
      for (std::size_t c = 0; c < 16; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
      var /= 16;
      CHECK(std::abs(mean) < 1e-4);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
  SUBCASE("stacking five blocks preserves shape") {
    auto y = x;
    std::vector<EncoderBlockParams> blocks;
    for (int l = 0; l < 5; ++l) blocks.push_back(make_encoder_block(16, 4, 64, rng));
    for (const auto& b : blocks) y = encoder_block(y, b);
    CHECK(y.shape() == x.shape());
  }
  SUBCASE("deterministic") {
    CHECK(encoder_block(x, block).data() == encoder_block(x, block).data());
  }
  SUBCASE("permutation equivariance without positional encoding") {
    std::vector<std::size_t> perm{9, 3, 1, 7, 0, 5, 2, 8, 6, 4};
    auto direct = permute_rows_copy(encoder_block(x, block), perm);
    auto permuted = encoder_block(permute_rows_copy(x, perm), block);
    for (std::size_t i = 0; i < direct.numel(); ++i)
      CHECK(direct.data()[i] == doctest::Approx(permuted.data()[i]).epsilon(1e-6));

    // adding the positional table breaks the equivariance
    auto pe = positional_encoding(10, 16);
    auto with_pe = [&](const Tensor& in) { return encoder_block(add(in, pe), block); };
    auto direct_pe = permute_rows_copy(with_pe(x), perm);
    auto permuted_pe = with_pe(permute_rows_copy(x, perm));
    double max_diff = 0;
    for (std::size_t i = 0; i < direct_pe.numel(); ++i)
      max_diff = std::max(max_diff,
                          std::abs(double(direct_pe.data()[i]) - double(permuted_pe.data()[i])));
    CHECK(max_diff > 1e-3);
  }
  SUBCASE("gradient through a two-block stack on 10x16 input") {
    auto b2 = make_encoder_block(16, 4, 32, rng);
    auto block_d = widen(block);
    auto b2_d = widen(b2);
    TensorD xd = widen(x);
    // Project against a fixed random direction; a pure norm of the final
    // LayerNorm output would be almost constant and carry no gradient.
    Tensor probe = randn({10, 16}, rng);
    TensorD probe_d = widen(probe);
    NamedParams<float> nf;
    block.collect("b1", nf);
    b2.collect("b2", nf);
    NamedParams<double> nd;
    block_d.collect("b1", nd);
    b2_d.collect("b2", nd);
    auto res = check_gradients(
        "encoder-stack", tensors_of(nf), tensors_of(nd),
        [&] {
          auto y = encoder_block(encoder_block(x, block), b2);
          return mean_all(mul(y, probe));
        },
        [&] {
          auto y = encoder_block(encoder_block(xd, block_d), b2_d);
          return mean_all(mul(y, probe_d)).value();
        });
    CHECK(res.pass);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("positional encoding") {
  auto pe = positional_encoding(10, 32);
  for (std::size_t j = 0; j < 32; ++j)
    CHECK(pe.at(0, j) == doctest::Approx(j % 2 == 0 ? 0.0 : 1.0));
  for (float v : pe.data()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  // distinct rows
  for (std::size_t a = 0; a < 10; ++a)
    for (std::size_t b = a + 1; b < 10; ++b) {
      double diff = 0;
      for (std::size_t j = 0; j < 32; ++j) diff = std::max(diff, std::abs(double(pe.at(a, j)) - double(pe.at(b, j))));
      CHECK(diff > 1e-3);
    }
}

TEST_CASE("dropout flag") {
  Rng rng(7);
  auto block = make_encoder_block(8, 2, 16, rng);
  Tensor x = randn({6, 8}, rng);
  Rng drop_rng(99);
  TrainCtx ctx{&drop_rng, 0.5};
  auto a = encoder_block(x, block, ctx);
  auto b = encoder_block(x, block, ctx);
  CHECK(a.data() != b.data());
  // default context is the deterministic evaluation path
  CHECK(encoder_block(x, block).data() == encoder_block(x, block).data());
}
