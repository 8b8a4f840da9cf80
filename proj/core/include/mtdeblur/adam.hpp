#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtdeblur/tensor.hpp"

namespace mtdeblur {

struct AdamHyperParams {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamHyperParams&, const AdamHyperParams&) = default;
};

/// A parameter tensor together with the name used in errors and checkpoints.
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// First/second moment accumulators, one pair per parameter, in parameter order.
template <typename T>
struct AdamState {
  AdamHyperParams hyper;
  std::int64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<NamedTensor<T>>& params, AdamHyperParams hyper);

/// One bias-corrected Adam update of every parameter in place. `grads` is
/// parallel to `params`. Throws NumericError naming the parameter when a
/// gradient is not finite; nothing is modified in that case.
template <typename T>
void adam_step(std::vector<NamedTensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state);

}  // namespace mtdeblur
