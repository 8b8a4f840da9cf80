#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtdeblur/adam.hpp"
#include "mtdeblur/autograd.hpp"
#include "mtdeblur/tensor.hpp"

namespace mtdeblur {

/// Architecture of the multi-temporal recurrent encoder-decoder.
///
/// Stage widths are base, 2*base and 4*base, where base is
/// round(base_channels * width_multiplier).
struct ModelConfig {
  int base_channels = 16;
  int resblocks_per_stage = 3;
  int kernel_size = 3;
  int in_channels = 3;
  double width_multiplier = 1.0;

  int width() const;
  /// Throws ConfigError when the configuration is unusable.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Every learnable tensor of the network, in a fixed order.
template <typename T>
struct ModelParams {
  ModelConfig config;
  std::vector<NamedTensor<T>> tensors;

  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  std::size_t index_of(const std::string& name) const;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out{config, {}};
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.value.template cast<U>()});
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Decoder feature maps carried from one iteration to the next.
/// f1: N x base x H x W; f2: N x 2*base x H/2 x W/2.
template <typename T>
struct RecurrentState {
  Tensor<T> f1;
  Tensor<T> f2;
  friend bool operator==(const RecurrentState&, const RecurrentState&) = default;
};

/// Name, shape and role of one parameter tensor; the layout is a pure
/// function of the configuration.
struct ParamSpec {
  std::string name;
  Shape shape;
  std::int64_t fan_in;
};

std::vector<ParamSpec> param_layout(const ModelConfig& config);

/// Fan-in scaled uniform initialization, output convolution set to zero so
/// the untrained model is the identity on its blurred input.
template <typename T>
ModelParams<T> init_model(const ModelConfig& config, std::uint64_t seed);

/// All-zero state for an N x C x H x W image. H and W must be divisible by 4.
template <typename T>
RecurrentState<T> init_recurrent_state(const ModelConfig& config, const Shape& image_shape);

template <typename T>
std::int64_t param_count(const ModelParams<T>& params);
/// Closed-form count from the configuration alone.
std::int64_t param_count(const ModelConfig& config);

/// Handles to the parameter leaves of one forward graph, parallel to
/// ModelParams::tensors.
struct ParamVars {
  std::vector<Var> vars;
};

template <typename T>
ParamVars bind_params(Graph<T>& graph, const ModelParams<T>& params);

struct ForwardVars {
  Var output;
  Var f1;
  Var f2;
};

/// Records one iteration on `graph`: previous estimate and the blurred
/// input are concatenated, recurrent maps join the top and middle feature
/// extraction layers, and the decoded residual is added to `blurred`.
template <typename T>
ForwardVars forward_graph(Graph<T>& graph, const ModelConfig& config, const ParamVars& params,
                          Var blurred, Var previous, Var f1, Var f2);

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  RecurrentState<T> state;
};

/// Graph-free convenience wrapper around forward_graph. Inputs must have H
/// and W divisible by 4; see pad_reflect_to_multiple for other sizes.
template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const Tensor<T>& blurred,
                         const Tensor<T>& previous, const RecurrentState<T>& state);

}  // namespace mtdeblur
