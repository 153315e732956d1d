#include "cdee/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cdee {

template <typename T>
void adam_step(BasicTensor<T>& param, const BasicTensor<T>& grad,
               AdamState<T>& state) {
  if (param.shape() != grad.shape() || param.shape() != state.m.shape() ||
      param.shape() != state.v.shape()) {
    throw std::invalid_argument(
        "adam_step: shape mismatch between param " +
        shape_string(param.shape()) + ", grad " + shape_string(grad.shape()) +
        " and moments " + shape_string(state.m.shape()));
  }
  const AdamConfig& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);

  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
    state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
    const double m_hat = static_cast<double>(state.m[i]) / correct1;
    const double v_hat = static_cast<double>(state.v[i]) / correct2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) -
                              c.alpha * m_hat / (std::sqrt(v_hat) + c.epsilon));
  }
}

template void adam_step(BasicTensor<float>&, const BasicTensor<float>&,
                        AdamState<float>&);
template void adam_step(BasicTensor<double>&, const BasicTensor<double>&,
                        AdamState<double>&);

}  // namespace cdee
