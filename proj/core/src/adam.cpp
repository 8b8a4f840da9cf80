#include "mtdeblur/adam.hpp"

#include <cmath>

namespace mtdeblur {

template <typename T>
AdamState<T> make_adam_state(const std::vector<NamedTensor<T>>& params, AdamHyperParams hyper) {
  AdamState<T> state;
  state.hyper = hyper;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.value.shape());
    state.second_moment.emplace_back(p.value.shape());
  }
  return state;
}

template <typename T>
void adam_step(std::vector<NamedTensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape() ||
        state.first_moment[i].shape() != params[i].value.shape()) {
      throw DimensionError("adam_step: shape mismatch for parameter '" + params[i].name + "'");
    }
    if (!grads[i].all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + params[i].name + "'");
    }
  }

  state.step += 1;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(h.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(h.beta2, t));
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value.data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T m_hat = m[j] / bc1;
      const T v_hat = v[j] / bc2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template AdamState<float> make_adam_state(const std::vector<NamedTensor<float>>&, AdamHyperParams);
template AdamState<double> make_adam_state(const std::vector<NamedTensor<double>>&, AdamHyperParams);
template void adam_step(std::vector<NamedTensor<float>>&, const std::vector<Tensor<float>>&,
                        AdamState<float>&);
template void adam_step(std::vector<NamedTensor<double>>&, const std::vector<Tensor<double>>&,
                        AdamState<double>&);

}  // namespace mtdeblur
