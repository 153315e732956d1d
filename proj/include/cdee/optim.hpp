#pragma once

#include <cstdint>

#include "cdee/tensor.hpp"

namespace cdee {

struct AdamConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter Adam moments. `t` counts completed steps.
template <typename T>
struct AdamState {
  BasicTensor<T> m;
  BasicTensor<T> v;
  std::uint64_t t = 0;
  AdamConfig config;

  AdamState() = default;
  explicit AdamState(const Shape& shape, AdamConfig cfg = {})
      : m(shape), v(shape), config(cfg) {}
};

// m <- b1 m + (1-b1) g
// v <- b2 v + (1-b2) g^2
// theta <- theta - alpha * m_hat / (sqrt(v_hat) + eps)
// with m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t).
template <typename T>
void adam_step(BasicTensor<T>& param, const BasicTensor<T>& grad,
               AdamState<T>& state);

}  // namespace cdee
