#pragma once

#include "mtdeblur/tensor.hpp"

namespace mtdeblur {

/// Output extent of a convolution along one spatial axis.
constexpr std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}

/// Output extent of a transposed convolution along one spatial axis.
constexpr std::int64_t transposed_conv_out_extent(std::int64_t in, std::int64_t k, int stride,
                                                  int padding) {
  return (in - 1) * stride - 2 * padding + k;
}

// Forward kernels. All tensors are NCHW. `bias` may be empty (no bias) or
// hold one value per output channel. Convolution is cross-correlation.

/// weight: out_ch x in_ch x k x k.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

/// weight: in_ch x out_ch x k x k. Adjoint of conv2d with the same weight.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                            const Tensor<T>& bias, int stride, int padding);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Channel concatenation; `a` occupies the leading channels.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Sum |pred - target| / (C*H*W), averaged over the batch.
template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

// Backward kernels used by the autograd record. Each accumulates into the
// gradient buffers it is given (which must already be shaped).

template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                     int stride, int padding, Tensor<T>* grad_input, Tensor<T>* grad_weight,
                     Tensor<T>* grad_bias);

template <typename T>
void transposed_conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                                const Tensor<T>& grad_out, int stride, int padding,
                                Tensor<T>* grad_input, Tensor<T>* grad_weight,
                                Tensor<T>* grad_bias);

}  // namespace mtdeblur
