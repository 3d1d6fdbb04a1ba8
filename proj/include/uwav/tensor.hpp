#pragma once

// Dense tensor engine with reverse-mode automatic differentiation.
//
// Tensors are shared handles onto nodes that carry float storage, an
// optional gradient buffer, and the taped edges of the computation graph.
// Kernels do their arithmetic in double and store results in the tensor's
// scalar type. The engine is templated on the scalar so tests can evaluate
// the same computations at double precision as a finite-difference
// reference; production code uses the float instantiation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace uwav {

using Shape = std::vector<std::size_t>;

// Thrown when an operation produces a NaN or infinity.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <class S>
struct TensorNode {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until first touched
  bool requires_grad = false;
  bool tracked = false;
  std::vector<std::shared_ptr<TensorNode<S>>> parents;
  std::function<void(TensorNode<S>&)> backprop;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), S(0));
  }
};

template <class S>
class BasicTensor {
 public:
  using Node = TensorNode<S>;

  BasicTensor() : node_(std::make_shared<Node>()) {}
  explicit BasicTensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static BasicTensor zeros(Shape shape) { return full(std::move(shape), S(0)); }

  static BasicTensor full(Shape shape, S value) {
    check_shape(shape);
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data.assign(shape_numel(n->shape), value);
    return BasicTensor(std::move(n));
  }

  static BasicTensor from_data(Shape shape, std::vector<S> values) {
    check_shape(shape);
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_to_string(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    return BasicTensor(std::move(n));
  }

  static BasicTensor scalar(S value) { return from_data({1}, {value}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t rank() const { return node_->shape.size(); }

  std::vector<S>& data() { return node_->data; }
  const std::vector<S>& data() const { return node_->data; }

  S value() const {
    if (numel() != 1)
      throw std::logic_error("value() requires a scalar tensor, got shape " +
                             shape_to_string(shape()));
    return node_->data[0];
  }

  S at(std::size_t r, std::size_t c) const {
    if (rank() != 2) throw std::logic_error("at(r,c) requires a rank-2 tensor");
    return node_->data[r * node_->shape[1] + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    node_->tracked = v || !node_->parents.empty();
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<S>& grad() {
    if (node_->grad.empty())
      throw std::logic_error("gradient not populated; run backward() first");
    return node_->grad;
  }
  const std::vector<S>& grad() const {
    return const_cast<BasicTensor*>(this)->grad();
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), S(0)); }

  // Deep copy of the values only; the copy is a fresh constant leaf.
  BasicTensor detached_copy() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->data = node_->data;
    return BasicTensor(std::move(n));
  }

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have rank >= 1");
    for (std::size_t d : shape)
      if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
  }

  std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

namespace detail {

template <class S>
void check_finite(const std::vector<S>& values, const char* op) {
  for (S v : values)
    if (!std::isfinite(double(v)))
      throw numeric_error(std::string("non-finite value produced by ") + op);
}

template <class S>
bool tracked(const BasicTensor<S>& t) {
  return t.node()->tracked;
}

// b must match a trailing suffix of a's shape (covers equal shapes and
// row-broadcast bias adds). Index map: b index = a index mod numel(b).
template <class S>
void check_trailing_broadcast(const BasicTensor<S>& a, const BasicTensor<S>& b,
                              const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size())
    throw std::invalid_argument(std::string(op) + ": shape " + shape_to_string(sb) +
                                " not broadcastable to " + shape_to_string(sa));
  for (std::size_t i = 0; i < sb.size(); ++i)
    if (sb[sb.size() - 1 - i] != sa[sa.size() - 1 - i])
      throw std::invalid_argument(std::string(op) + ": shape " + shape_to_string(sb) +
                                  " not broadcastable to " + shape_to_string(sa));
}

template <class S>
BasicTensor<S> make_result(Shape shape, std::vector<S> data) {
  return BasicTensor<S>::from_data(std::move(shape), std::move(data));
}

template <class S>
void attach(BasicTensor<S>& out, std::vector<std::shared_ptr<TensorNode<S>>> parents,
            std::function<void(TensorNode<S>&)> backprop) {
  bool any = false;
  for (auto& p : parents) any = any || p->tracked;
  if (!any) return;
  out.node()->tracked = true;
  out.node()->parents = std::move(parents);
  out.node()->backprop = std::move(backprop);
}

template <class S>
void accumulate(TensorNode<S>& node, std::size_t idx, double v) {
  node.grad[idx] = S(double(node.grad[idx]) + v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary operations (b broadcastable by the trailing-dim rule)
// ---------------------------------------------------------------------------

template <class S>
BasicTensor<S> add(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  detail::check_trailing_broadcast(a, b, "add");
  const std::size_t n = a.numel(), nb = b.numel();
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = S(double(a.data()[i]) + double(b.data()[i % nb]));
  detail::check_finite(out, "add");
  auto r = detail::make_result(a.shape(), std::move(out));
  auto pa = a.node(), pb = b.node();
  detail::attach<S>(r, {pa, pb}, [pa, pb, n, nb](TensorNode<S>& o) {
    if (pa->tracked) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        detail::accumulate(*pa, i, double(o.grad[i]));
    }
    if (pb->tracked) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        detail::accumulate(*pb, i % nb, double(o.grad[i]));
    }
  });
  return r;
}

template <class S>
BasicTensor<S> sub(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  detail::check_trailing_broadcast(a, b, "sub");
  const std::size_t n = a.numel(), nb = b.numel();
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = S(double(a.data()[i]) - double(b.data()[i % nb]));
  detail::check_finite(out, "sub");
  auto r = detail::make_result(a.shape(), std::move(out));
  auto pa = a.node(), pb = b.node();
  detail::attach<S>(r, {pa, pb}, [pa, pb, n, nb](TensorNode<S>& o) {
    if (pa->tracked) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        detail::accumulate(*pa, i, double(o.grad[i]));
    }
    if (pb->tracked) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        detail::accumulate(*pb, i % nb, -double(o.grad[i]));
    }
  });
  return r;
}

template <class S>
BasicTensor<S> mul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  detail::check_trailing_broadcast(a, b, "mul");
  const std::size_t n = a.numel(), nb = b.numel();
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = S(double(a.data()[i]) * double(b.data()[i % nb]));
  detail::check_finite(out, "mul");
  auto r = detail::make_result(a.shape(), std::move(out));
  auto pa = a.node(), pb = b.node();
  detail::attach<S>(r, {pa, pb}, [pa, pb, n, nb](TensorNode<S>& o) {
    if (pa->tracked) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        detail::accumulate(*pa, i, double(o.grad[i]) * double(pb->data[i % nb]));
    }
    if (pb->tracked) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        detail::accumulate(*pb, i % nb, double(o.grad[i]) * double(pa->data[i]));
    }
  });
  return r;
}

// k*x + c, elementwise. Covers scaling, negation and constant shifts.
template <class S>
BasicTensor<S> affine(const BasicTensor<S>& x, double k, double c) {
  const std::size_t n = x.numel();
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = S(k * double(x.data()[i]) + c);
  detail::check_finite(out, "affine");
  auto r = detail::make_result(x.shape(), std::move(out));
  auto px = x.node();
  detail::attach<S>(r, {px}, [px, k, n](TensorNode<S>& o) {
    px->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      detail::accumulate(*px, i, k * double(o.grad[i]));
  });
  return r;
}

template <class S>
BasicTensor<S> scale(const BasicTensor<S>& x, double k) {
  return affine(x, k, 0.0);
}

// ---------------------------------------------------------------------------
// Elementwise unary operations
// ---------------------------------------------------------------------------

namespace detail {

template <class S, class Fwd, class Back>
BasicTensor<S> unary_ew(const BasicTensor<S>& x, const char* name, Fwd fwd, Back back) {
  const std::size_t n = x.numel();
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = S(fwd(double(x.data()[i])));
  check_finite(out, name);
  auto r = make_result(x.shape(), std::move(out));
  auto px = x.node();
  attach<S>(r, {px}, [px, back, n](TensorNode<S>& o) {
    px->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      accumulate(*px, i, double(o.grad[i]) * back(double(px->data[i]), double(o.data[i])));
  });
  return r;
}

inline double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// When set, relu and clamp record which side of their breakpoints each
// element fell on. The finite-difference harness compares these signatures
// across its +h/-h evaluations and skips components whose step crosses a
// breakpoint, where a central difference does not estimate the derivative.
inline thread_local std::vector<std::uint8_t>* kink_trace = nullptr;

template <class S>
BasicTensor<S> sigmoid(const BasicTensor<S>& x) {
  return detail::unary_ew(
      x, "sigmoid", [](double v) { return detail::stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

template <class S>
BasicTensor<S> exp_t(const BasicTensor<S>& x) {
  return detail::unary_ew(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

template <class S>
BasicTensor<S> log_t(const BasicTensor<S>& x) {
  for (S v : x.data())
    if (!(double(v) > 0.0))
      throw std::domain_error("log of non-positive value " + std::to_string(double(v)));
  return detail::unary_ew(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

template <class S>
BasicTensor<S> relu(const BasicTensor<S>& x) {
  return detail::unary_ew(
      x, "relu",
      [](double v) {
        if (kink_trace) kink_trace->push_back(v > 0.0);
        return v > 0.0 ? v : 0.0;
      },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

// Ceiling; gradient is zero almost everywhere and defined as zero here.
template <class S>
BasicTensor<S> ceil_t(const BasicTensor<S>& x) {
  return detail::unary_ew(
      x, "ceil", [](double v) { return std::ceil(v); },
      [](double, double) { return 0.0; });
}

// Clamp with pass-through gradient on [lo, hi] and zero outside.
template <class S>
BasicTensor<S> clamp_t(const BasicTensor<S>& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return detail::unary_ew(
      x, "clamp",
      [lo, hi](double v) {
        if (kink_trace) kink_trace->push_back(v < lo ? 0 : (v > hi ? 2 : 1));
        return std::min(std::max(v, lo), hi);
      },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// Inverted dropout: keeps each element with probability 1-p and rescales by
// 1/(1-p). The mask is drawn once at forward time and reused in backward.
template <class S, class Rng>
BasicTensor<S> dropout(const BasicTensor<S>& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout probability must be in [0,1)");
  if (p == 0.0) return x;
  const std::size_t n = x.numel();
  auto mask = std::make_shared<std::vector<double>>(n);
  const double keep = 1.0 - p;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) (*mask)[i] = uni(rng) < keep ? 1.0 / keep : 0.0;
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = S(double(x.data()[i]) * (*mask)[i]);
  detail::check_finite(out, "dropout");
  auto r = detail::make_result(x.shape(), std::move(out));
  auto px = x.node();
  detail::attach<S>(r, {px}, [px, mask, n](TensorNode<S>& o) {
    px->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      detail::accumulate(*px, i, double(o.grad[i]) * (*mask)[i]);
  });
  return r;
}

// ---------------------------------------------------------------------------
// Matrix operations
// ---------------------------------------------------------------------------

template <class S>
BasicTensor<S> matmul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul requires rank-2 tensors");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw std::invalid_argument("matmul inner dimensions disagree: " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  std::vector<S> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t)
        acc += double(a.data()[i * k + t]) * double(b.data()[t * n + j]);
      out[i * n + j] = S(acc);
    }
  detail::check_finite(out, "matmul");
  auto r = detail::make_result({m, n}, std::move(out));
  auto pa = a.node(), pb = b.node();
  detail::attach<S>(r, {pa, pb}, [pa, pb, m, k, n](TensorNode<S>& o) {
    if (pa->tracked) {
      pa->ensure_grad();
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            acc += double(o.grad[i * n + j]) * double(pb->data[t * n + j]);
          detail::accumulate(*pa, i * k + t, acc);
        }
    }
    if (pb->tracked) {
      pb->ensure_grad();
      // dB = A^T * dC
      for (std::size_t t = 0; t < k; ++t)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i)
            acc += double(pa->data[i * k + t]) * double(o.grad[i * n + j]);
          detail::accumulate(*pb, t * n + j, acc);
        }
    }
  });
  return r;
}

template <class S>
BasicTensor<S> transpose(const BasicTensor<S>& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose requires a rank-2 tensor");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<S> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.data()[i * n + j];
  auto r = detail::make_result({n, m}, std::move(out));
  auto px = x.node();
  detail::attach<S>(r, {px}, [px, m, n](TensorNode<S>& o) {
    px->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        detail::accumulate(*px, i * n + j, double(o.grad[j * m + i]));
  });
  return r;
}

// ---------------------------------------------------------------------------
// Normalizations
// ---------------------------------------------------------------------------

// Softmax along `axis` of a rank-1 or rank-2 tensor, stabilized by
// max-subtraction.
template <class S>
BasicTensor<S> softmax(const BasicTensor<S>& x, std::size_t axis) {
  if (x.rank() > 2) throw std::invalid_argument("softmax supports rank <= 2");
  if (axis >= x.rank()) throw std::invalid_argument("softmax axis out of range");
  // Lines run along `axis`: `lines` of them, each `len` long with `stride`.
  std::size_t len, lines, stride, line_step;
  if (x.rank() == 1) {
    len = x.shape()[0]; lines = 1; stride = 1; line_step = 0;
  } else if (axis == 1) {
    len = x.shape()[1]; lines = x.shape()[0]; stride = 1; line_step = x.shape()[1];
  } else {
    len = x.shape()[0]; lines = x.shape()[1]; stride = x.shape()[1]; line_step = 1;
  }
  std::vector<S> out(x.numel());
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i)
      mx = std::max(mx, double(x.data()[base + i * stride]));
    double denom = 0.0;
    for (std::size_t i = 0; i < len; ++i)
      denom += std::exp(double(x.data()[base + i * stride]) - mx);
    for (std::size_t i = 0; i < len; ++i)
      out[base + i * stride] =
          S(std::exp(double(x.data()[base + i * stride]) - mx) / denom);
  }
  detail::check_finite(out, "softmax");
  auto r = detail::make_result(x.shape(), std::move(out));
  auto px = x.node();
  detail::attach<S>(r, {px}, [px, len, lines, stride, line_step](TensorNode<S>& o) {
    px->ensure_grad();
    for (std::size_t l = 0; l < lines; ++l) {
      const std::size_t base = l * line_step;
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i)
        dot += double(o.grad[base + i * stride]) * double(o.data[base + i * stride]);
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t idx = base + i * stride;
        detail::accumulate(*px, idx,
                           double(o.data[idx]) * (double(o.grad[idx]) - dot));
      }
    }
  });
  return r;
}

// Layer normalization along the last axis with learnable gain and bias.
// Variance is the biased estimate; epsilon sits inside the square root.
template <class S>
BasicTensor<S> layer_norm(const BasicTensor<S>& x, const BasicTensor<S>& gain,
                          const BasicTensor<S>& bias, double eps = 1e-5) {
  if (x.rank() > 2) throw std::invalid_argument("layer_norm supports rank <= 2");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  if (gain.numel() != n || bias.numel() != n)
    throw std::invalid_argument("layer_norm gain/bias must match the normalized axis");
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<S> out(x.numel());
  for (std::size_t r0 = 0; r0 < rows; ++r0) {
    const std::size_t base = r0 * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += double(x.data()[base + i]);
    mean /= double(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = double(x.data()[base + i]) - mean;
      var += d * d;
    }
    var /= double(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r0] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (double(x.data()[base + i]) - mean) * inv;
      (*xhat)[base + i] = h;
      out[base + i] = S(h * double(gain.data()[i]) + double(bias.data()[i]));
    }
  }
  detail::check_finite(out, "layer_norm");
  auto r = detail::make_result(x.shape(), std::move(out));
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  detail::attach<S>(r, {px, pg, pb}, [px, pg, pb, xhat, inv_std, rows, n](TensorNode<S>& o) {
    for (std::size_t r0 = 0; r0 < rows; ++r0) {
      const std::size_t base = r0 * n;
      if (px->tracked) {
        px->ensure_grad();
        double sum1 = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dh = double(o.grad[base + i]) * double(pg->data[i]);
          sum1 += dh;
          sum2 += dh * (*xhat)[base + i];
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double dh = double(o.grad[base + i]) * double(pg->data[i]);
          const double dx = (*inv_std)[r0] *
                            (dh - sum1 / double(n) - (*xhat)[base + i] * sum2 / double(n));
          detail::accumulate(*px, base + i, dx);
        }
      }
      if (pg->tracked) {
        pg->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          detail::accumulate(*pg, i, double(o.grad[base + i]) * (*xhat)[base + i]);
      }
      if (pb->tracked) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          detail::accumulate(*pb, i, double(o.grad[base + i]));
      }
    }
  });
  return r;
}

// ---------------------------------------------------------------------------
// Reductions and reshuffles
// ---------------------------------------------------------------------------

template <class S>
BasicTensor<S> sum_all(const BasicTensor<S>& x) {
  double acc = 0.0;
  for (S v : x.data()) acc += double(v);
  auto r = BasicTensor<S>::from_data({1}, {S(acc)});
  detail::check_finite(r.data(), "sum");
  auto px = x.node();
  const std::size_t n = x.numel();
  detail::attach<S>(r, {px}, [px, n](TensorNode<S>& o) {
    px->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) detail::accumulate(*px, i, double(o.grad[0]));
  });
  return r;
}

template <class S>
BasicTensor<S> mean_all(const BasicTensor<S>& x) {
  return scale(sum_all(x), 1.0 / double(x.numel()));
}

// Sum of a rank-2 tensor along `axis`, producing a rank-1 tensor.
template <class S>
BasicTensor<S> sum_axis(const BasicTensor<S>& x, std::size_t axis) {
  if (x.rank() != 2) throw std::invalid_argument("sum_axis requires a rank-2 tensor");
  if (axis > 1) throw std::invalid_argument("sum_axis axis out of range");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  const std::size_t out_len = axis == 0 ? cols : rows;
  std::vector<S> out(out_len);
  if (axis == 0) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += double(x.data()[i * cols + j]);
      out[j] = S(acc);
    }
  } else {
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += double(x.data()[i * cols + j]);
      out[i] = S(acc);
    }
  }
  detail::check_finite(out, "sum_axis");
  auto r = detail::make_result({out_len}, std::move(out));
  auto px = x.node();
  detail::attach<S>(r, {px}, [px, rows, cols, axis](TensorNode<S>& o) {
    px->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        detail::accumulate(*px, i * cols + j, double(o.grad[axis == 0 ? j : i]));
  });
  return r;
}

// Stack rank-2 tensors with equal column counts into one tall matrix.
template <class S>
BasicTensor<S> concat_rows(const std::vector<BasicTensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows needs at least one input");
  for (const auto& p : parts)
    if (p.rank() != 2)
      throw std::invalid_argument("concat_rows inputs must be rank-2");
  const std::size_t cols = parts[0].shape()[1];
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.shape()[1] != cols)
      throw std::invalid_argument("concat_rows inputs must have equal column counts");
    rows += p.shape()[0];
  }
  std::vector<S> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  auto r = detail::make_result({rows, cols}, std::move(out));
  std::vector<std::shared_ptr<TensorNode<S>>> parents;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    parents.push_back(p.node());
    offsets.push_back(off);
    off += p.numel();
  }
  auto parents_copy = parents;
  detail::attach<S>(r, std::move(parents),
                    [parts_nodes = std::move(parents_copy), offsets](TensorNode<S>& o) {
                      for (std::size_t k = 0; k < parts_nodes.size(); ++k) {
                        auto& p = parts_nodes[k];
                        if (!p->tracked) continue;
                        p->ensure_grad();
                        for (std::size_t i = 0; i < p->data.size(); ++i)
                          detail::accumulate(*p, i, double(o.grad[offsets[k] + i]));
                      }
                    });
  return r;
}

// Row gather; backward scatter-adds into the source rows.
template <class S>
BasicTensor<S> gather_rows(const BasicTensor<S>& x, std::vector<std::size_t> indices) {
  if (x.rank() != 2) throw std::invalid_argument("gather_rows requires a rank-2 tensor");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  for (std::size_t idx : indices)
    if (idx >= rows) throw std::out_of_range("gather_rows index out of range");
  std::vector<S> out(indices.size() * cols);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(x.data().begin() + indices[i] * cols, cols, out.begin() + i * cols);
  auto r = detail::make_result({indices.size(), cols}, std::move(out));
  auto px = x.node();
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  detail::attach<S>(r, {px}, [px, idx, cols](TensorNode<S>& o) {
    px->ensure_grad();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t j = 0; j < cols; ++j)
        detail::accumulate(*px, (*idx)[i] * cols + j, double(o.grad[i * cols + j]));
  });
  return r;
}

// ---------------------------------------------------------------------------
// Binary cross-entropy
// ---------------------------------------------------------------------------

inline constexpr double kBceEps = 1e-7;

// Mean over all elements of -[y log p + (1-y) log(1-p)], with p clamped to
// [eps, 1-eps] first. Optional per-element weights multiply each term.
template <class S>
BasicTensor<S> bce(const BasicTensor<S>& p, const BasicTensor<S>& target,
                   const BasicTensor<S>* weights = nullptr) {
  if (p.shape() != target.shape())
    throw std::invalid_argument("bce: probability and target shapes differ");
  for (S v : target.data())
    if (double(v) < 0.0 || double(v) > 1.0)
      throw std::domain_error("bce target outside [0,1]");
  if (weights && weights->shape() != p.shape())
    throw std::invalid_argument("bce: weight shape differs from probabilities");
  auto pc = clamp_t(p, kBceEps, 1.0 - kBceEps);
  auto term = add(mul(target, log_t(pc)), mul(affine(target, -1.0, 1.0),
                                              log_t(affine(pc, -1.0, 1.0))));
  if (weights) term = mul(term, *weights);
  return scale(mean_all(term), -1.0);
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// reachable tensor with requires_grad set; intermediate gradients are reset
// per call. Unless retain_graph is set, the tape is freed afterwards.
template <class S>
void backward(const BasicTensor<S>& loss, bool retain_graph = false) {
  if (loss.numel() != 1)
    throw std::logic_error("backward() requires a scalar loss, got shape " +
                           shape_to_string(loss.shape()));
  using NodeT = TensorNode<S>;
  std::vector<std::shared_ptr<NodeT>> topo;
  // Iterative post-order DFS: inputs precede the nodes computed from them.
  std::unordered_set<NodeT*> expanded;
  std::vector<std::pair<std::shared_ptr<NodeT>, bool>> stack;
  if (loss.node()->tracked) stack.emplace_back(loss.node(), false);
  while (!stack.empty()) {
    auto [node, emit] = stack.back();
    stack.pop_back();
    if (emit) {
      topo.push_back(std::move(node));
      continue;
    }
    if (!expanded.insert(node.get()).second) continue;
    stack.emplace_back(node, true);
    for (auto& parent : node->parents)
      if (parent->tracked && !expanded.count(parent.get()))
        stack.emplace_back(parent, false);
  }
  // Fresh intermediate gradients; leaf gradients accumulate across calls.
  for (auto& n : topo)
    if (!n->requires_grad) n->grad.assign(n->data.size(), S(0));
  loss.node()->ensure_grad();
  if (loss.node()->requires_grad)
    loss.node()->grad[0] = S(double(loss.node()->grad[0]) + 1.0);
  else
    loss.node()->grad[0] = S(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
  for (auto& n : topo) {
    if (n->requires_grad) detail::check_finite(n->grad, "backward");
    if (!retain_graph) {
      n->parents.clear();
      n->backprop = nullptr;
      n->tracked = n->requires_grad;
      if (!n->requires_grad) n->grad.clear();
    }
  }
}

// Operator sugar for same-scalar tensors.
template <class S>
BasicTensor<S> operator+(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return add(a, b);
}
template <class S>
BasicTensor<S> operator-(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return sub(a, b);
}
template <class S>
BasicTensor<S> operator*(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  return mul(a, b);
}

// Float -> double copy used by the finite-difference reference mode.
inline TensorD widen(const Tensor& t) {
  std::vector<double> d(t.data().begin(), t.data().end());
  return TensorD::from_data(t.shape(), std::move(d));
}

}  // namespace uwav
