#pragma once

// Attention building blocks: affine layers, multi-head attention, the
// hybrid attention layer that exchanges information within and across the
// two modality streams, and transformer encoder blocks with sinusoidal
// positional encodings.

#include <cmath>
#include <string>
#include <vector>

#include "uwav/rng.hpp"
#include "uwav/tensor.hpp"

namespace uwav {

template <class S>
using NamedParams = std::vector<std::pair<std::string, BasicTensor<S>>>;

// Optional per-forward training context; dropout is disabled by default and
// never used at evaluation time.
struct TrainCtx {
  Rng* dropout_rng = nullptr;
  double dropout = 0.0;
  bool active() const { return dropout > 0.0 && dropout_rng != nullptr; }
};

template <class S>
struct LinearT {
  BasicTensor<S> weight;  // {in, out}
  BasicTensor<S> bias;    // {out}

  BasicTensor<S> operator()(const BasicTensor<S>& x) const {
    return add(matmul(x, weight), bias);
  }
  std::size_t in_dim() const { return weight.shape()[0]; }
  std::size_t out_dim() const { return weight.shape()[1]; }

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};
using Linear = LinearT<float>;

inline Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{xavier_uniform(in, out, rng), Tensor::zeros({out})};
}

template <class S>
struct AttentionParamsT {
  // Per-head projections; the output projection is kept as per-head row
  // blocks so no concat is needed: out = sum_h head_h * out_proj[h].
  std::vector<BasicTensor<S>> query_proj;  // H x {d, d/H}
  std::vector<BasicTensor<S>> key_proj;    // H x {d, d/H}
  std::vector<BasicTensor<S>> value_proj;  // H x {d, d/H}
  std::vector<BasicTensor<S>> out_proj;    // H x {d/H, d}

  std::size_t heads() const { return query_proj.size(); }
  std::size_t model_dim() const { return query_proj[0].shape()[0]; }
  std::size_t head_dim() const { return query_proj[0].shape()[1]; }

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    for (std::size_t h = 0; h < heads(); ++h) {
      const std::string head = prefix + ".head" + std::to_string(h);
      out.emplace_back(head + ".query", query_proj[h]);
      out.emplace_back(head + ".key", key_proj[h]);
      out.emplace_back(head + ".value", value_proj[h]);
      out.emplace_back(head + ".out", out_proj[h]);
    }
  }
};
using AttentionParams = AttentionParamsT<float>;

// Output projections start small so residual blocks begin near the identity.
inline AttentionParams make_attention(std::size_t d_model, std::size_t heads, Rng& rng) {
  if (heads == 0 || d_model % heads != 0)
    throw std::invalid_argument("attention: d_model must be divisible by head count");
  const std::size_t dh = d_model / heads;
  AttentionParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.query_proj.push_back(xavier_uniform(d_model, dh, rng));
    p.key_proj.push_back(xavier_uniform(d_model, dh, rng));
    p.value_proj.push_back(xavier_uniform(d_model, dh, rng));
    p.out_proj.push_back(xavier_uniform(dh, d_model, rng, 0.1));
  }
  return p;
}

// Scaled dot-product attention over full sequences, H heads, no masking.
template <class S>
BasicTensor<S> multi_head_attention(const BasicTensor<S>& queries,
                                    const BasicTensor<S>& keys,
                                    const BasicTensor<S>& values,
                                    const AttentionParamsT<S>& params,
                                    const TrainCtx& ctx = {}) {
  const std::size_t d = params.model_dim();
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2 ||
      queries.shape()[1] != d || keys.shape()[1] != d || values.shape()[1] != d)
    throw std::invalid_argument("multi_head_attention: inputs must be rank-2 with width " +
                                std::to_string(d));
  if (keys.shape()[0] != values.shape()[0])
    throw std::invalid_argument("multi_head_attention: key/value row counts differ");
  const double scale_factor = 1.0 / std::sqrt(double(params.head_dim()));
  BasicTensor<S> out;
  for (std::size_t h = 0; h < params.heads(); ++h) {
    auto q = matmul(queries, params.query_proj[h]);
    auto k = matmul(keys, params.key_proj[h]);
    auto v = matmul(values, params.value_proj[h]);
    auto weights = softmax(scale(matmul(q, transpose(k)), scale_factor), 1);
    if (ctx.active()) weights = dropout(weights, ctx.dropout, *ctx.dropout_rng);
    auto head = matmul(matmul(weights, v), params.out_proj[h]);
    out = h == 0 ? head : add(out, head);
  }
  return out;
}

// Hybrid attention over the two modality streams: each stream adds its
// self-attention and its cross-attention against the other stream to the
// residual input, with no normalization.
template <class S>
struct HanLayerParamsT {
  AttentionParamsT<S> visual_self, visual_cross, audio_self, audio_cross;

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    visual_self.collect(prefix + ".visual_self", out);
    visual_cross.collect(prefix + ".visual_cross", out);
    audio_self.collect(prefix + ".audio_self", out);
    audio_cross.collect(prefix + ".audio_cross", out);
  }
};
using HanLayerParams = HanLayerParamsT<float>;

inline HanLayerParams make_han_layer(std::size_t d_model, std::size_t heads, Rng& rng) {
  return HanLayerParams{make_attention(d_model, heads, rng),
                        make_attention(d_model, heads, rng),
                        make_attention(d_model, heads, rng),
                        make_attention(d_model, heads, rng)};
}

template <class S>
std::pair<BasicTensor<S>, BasicTensor<S>> han_layer(const BasicTensor<S>& visual,
                                                    const BasicTensor<S>& audio,
                                                    const HanLayerParamsT<S>& params,
                                                    const TrainCtx& ctx = {}) {
  if (visual.shape()[0] != audio.shape()[0])
    throw std::invalid_argument("han_layer: modality streams disagree on segment count");
  auto v = add(add(visual, multi_head_attention(visual, visual, visual,
                                                params.visual_self, ctx)),
               multi_head_attention(visual, audio, audio, params.visual_cross, ctx));
  auto a = add(add(audio, multi_head_attention(audio, audio, audio,
                                               params.audio_self, ctx)),
               multi_head_attention(audio, visual, visual, params.audio_cross, ctx));
  return {v, a};
}

template <class S>
struct EncoderBlockParamsT {
  AttentionParamsT<S> attention;
  BasicTensor<S> ln1_gain, ln1_bias;
  BasicTensor<S> ln2_gain, ln2_bias;
  LinearT<S> ffn_hidden;  // d -> hidden
  LinearT<S> ffn_out;     // hidden -> d

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    attention.collect(prefix + ".attn", out);
    out.emplace_back(prefix + ".ln1.gain", ln1_gain);
    out.emplace_back(prefix + ".ln1.bias", ln1_bias);
    out.emplace_back(prefix + ".ln2.gain", ln2_gain);
    out.emplace_back(prefix + ".ln2.bias", ln2_bias);
    ffn_hidden.collect(prefix + ".ffn_hidden", out);
    ffn_out.collect(prefix + ".ffn_out", out);
  }
};
using EncoderBlockParams = EncoderBlockParamsT<float>;

inline EncoderBlockParams make_encoder_block(std::size_t d_model, std::size_t heads,
                                             std::size_t ffn_hidden, Rng& rng) {
  EncoderBlockParams b;
  b.attention = make_attention(d_model, heads, rng);
  b.ln1_gain = Tensor::full({d_model}, 1.0f);
  b.ln1_bias = Tensor::zeros({d_model});
  b.ln2_gain = Tensor::full({d_model}, 1.0f);
  b.ln2_bias = Tensor::zeros({d_model});
  b.ffn_hidden = make_linear(d_model, ffn_hidden, rng);
  b.ffn_out = Linear{xavier_uniform(ffn_hidden, d_model, rng, 0.1), Tensor::zeros({d_model})};
  return b;
}

// Pre-residual, post-norm encoder block:
//   g~ = LN(g + Attn(g,g,g));  g' = LN(g~ + FFN(g~))
template <class S>
BasicTensor<S> encoder_block(const BasicTensor<S>& x, const EncoderBlockParamsT<S>& p,
                             const TrainCtx& ctx = {}) {
  auto attended = layer_norm(
      add(x, multi_head_attention(x, x, x, p.attention, ctx)), p.ln1_gain, p.ln1_bias);
  auto hidden = relu(p.ffn_hidden(attended));
  if (ctx.active()) hidden = dropout(hidden, ctx.dropout, *ctx.dropout_rng);
  return layer_norm(add(attended, p.ffn_out(hidden)), p.ln2_gain, p.ln2_bias);
}

// Sinusoidal positional table: even columns sin, odd columns cos, geometric
// wavelengths with base 10000.
template <class S = float>
BasicTensor<S> positional_encoding(std::size_t length, std::size_t dim) {
  std::vector<S> v(length * dim);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t j = 0; j < dim; ++j) {
      const double omega = std::pow(10000.0, -double(2 * (j / 2)) / double(dim));
      const double angle = double(t) * omega;
      v[t * dim + j] = S(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return BasicTensor<S>::from_data({length, dim}, std::move(v));
}

// Widening helpers for the finite-difference reference mode.
inline LinearT<double> widen(const Linear& l) {
  return LinearT<double>{widen(l.weight), widen(l.bias)};
}
inline AttentionParamsT<double> widen(const AttentionParams& p) {
  AttentionParamsT<double> d;
  for (std::size_t h = 0; h < p.heads(); ++h) {
    d.query_proj.push_back(widen(p.query_proj[h]));
    d.key_proj.push_back(widen(p.key_proj[h]));
    d.value_proj.push_back(widen(p.value_proj[h]));
    d.out_proj.push_back(widen(p.out_proj[h]));
  }
  return d;
}
inline HanLayerParamsT<double> widen(const HanLayerParams& p) {
  return {widen(p.visual_self), widen(p.visual_cross), widen(p.audio_self),
          widen(p.audio_cross)};
}
inline EncoderBlockParamsT<double> widen(const EncoderBlockParams& b) {
  return {widen(b.attention), widen(b.ln1_gain), widen(b.ln1_bias),
          widen(b.ln2_gain),  widen(b.ln2_bias), widen(b.ffn_hidden),
          widen(b.ffn_out)};
}

// Flattens a named-parameter list to the plain tensor list used by the
// optimizer and gradcheck harness.
template <class S>
std::vector<BasicTensor<S>> tensors_of(const NamedParams<S>& named) {
  std::vector<BasicTensor<S>> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

}  // namespace uwav
