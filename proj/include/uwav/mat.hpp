#pragma once

// Plain row-major matrix types used where no gradient tracking is needed
// (labels, metrics, pseudo-label emission).

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "uwav/tensor.hpp"

namespace uwav {

struct MatF {
  std::size_t rows = 0, cols = 0;
  std::vector<float> v;

  MatF() = default;
  MatF(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), v(r * c, fill) {}
  float& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  bool empty() const { return v.empty(); }
};

struct MatB {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> v;

  MatB() = default;
  MatB(std::size_t r, std::size_t c, std::uint8_t fill = 0) : rows(r), cols(c), v(r * c, fill) {}
  std::uint8_t& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  bool empty() const { return v.empty(); }
};

inline Tensor to_tensor(const MatF& m) {
  return Tensor::from_data({m.rows, m.cols}, m.v);
}

inline Tensor to_tensor(const MatB& m) {
  std::vector<float> v(m.v.begin(), m.v.end());
  return Tensor::from_data({m.rows, m.cols}, std::move(v));
}

inline MatF to_mat(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("to_mat requires a rank-2 tensor");
  MatF m(t.shape()[0], t.shape()[1]);
  m.v = t.data();
  return m;
}

inline MatF to_matf(const MatB& b) {
  MatF m(b.rows, b.cols);
  for (std::size_t i = 0; i < b.v.size(); ++i) m.v[i] = float(b.v[i]);
  return m;
}

}  // namespace uwav
