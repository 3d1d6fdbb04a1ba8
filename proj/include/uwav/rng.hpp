#pragma once

#include <cmath>
#include <random>

#include "uwav/tensor.hpp"

namespace uwav {

using Rng = std::mt19937_64;

inline Tensor randn(Shape shape, Rng& rng, float stddev = 1.0f) {
  std::normal_distribution<double> dist(0.0, double(stddev));
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = float(dist(rng));
  return Tensor::from_data(std::move(shape), std::move(v));
}

// Uniform Glorot initialization for a weight stored as {fan_in, fan_out}.
inline Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng,
                             double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> v(fan_in * fan_out);
  for (auto& x : v) x = float(dist(rng));
  return Tensor::from_data({fan_in, fan_out}, std::move(v));
}

}  // namespace uwav
