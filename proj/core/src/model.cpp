#include "mtdeblur/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "mtdeblur/ops.hpp"

namespace mtdeblur {
namespace {

constexpr int kUpKernel = 4;

void add_conv(std::vector<ParamSpec>& out, const std::string& name, std::int64_t out_ch,
              std::int64_t in_ch, std::int64_t k) {
  out.push_back({name + ".weight", Shape{out_ch, in_ch, k, k}, in_ch * k * k});
  out.push_back({name + ".bias", Shape{out_ch}, in_ch * k * k});
}

// Transposed convolution weights are in_ch x out_ch x k x k.
void add_up(std::vector<ParamSpec>& out, const std::string& name, std::int64_t in_ch,
            std::int64_t out_ch, std::int64_t k) {
  out.push_back({name + ".weight", Shape{in_ch, out_ch, k, k}, out_ch * k * k});
  out.push_back({name + ".bias", Shape{out_ch}, out_ch * k * k});
}

void add_resblocks(std::vector<ParamSpec>& out, const std::string& stage, const ModelConfig& c,
                   std::int64_t ch) {
  for (int i = 0; i < c.resblocks_per_stage; ++i) {
    const std::string prefix = stage + ".res" + std::to_string(i);
    add_conv(out, prefix + ".conv1", ch, ch, c.kernel_size);
    add_conv(out, prefix + ".conv2", ch, ch, c.kernel_size);
  }
}

template <typename T>
class Builder {
 public:
  Builder(Graph<T>& g, const ModelConfig& c, const ParamVars& vars,
          const std::vector<ParamSpec>& layout)
      : g_(g), c_(c) {
    for (std::size_t i = 0; i < layout.size(); ++i) by_name_[layout[i].name] = vars.vars.at(i);
  }

  Var conv(Var x, const std::string& name, int stride, int padding) {
    return g_.conv2d(x, param(name + ".weight"), param(name + ".bias"), stride, padding);
  }
  Var up(Var x, const std::string& name) {
    return g_.transposed_conv2d(x, param(name + ".weight"), param(name + ".bias"), 2, 1);
  }
  Var same(Var x, const std::string& name) { return conv(x, name, 1, c_.kernel_size / 2); }

  Var resblocks(Var x, const std::string& stage) {
    for (int i = 0; i < c_.resblocks_per_stage; ++i) {
      const std::string prefix = stage + ".res" + std::to_string(i);
      Var h = g_.relu(same(x, prefix + ".conv1"));
      x = g_.add(x, same(h, prefix + ".conv2"));
    }
    return x;
  }

 private:
  Var param(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("model has no parameter named '" + name + "'");
    return it->second;
  }

  Graph<T>& g_;
  const ModelConfig& c_;
  std::map<std::string, Var> by_name_;
};

}  // namespace

int ModelConfig::width() const {
  return static_cast<int>(std::lround(base_channels * width_multiplier));
}

void ModelConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (!(width_multiplier > 0.0)) throw ConfigError("width_multiplier must be positive");
  if (width() < 1) throw ConfigError("width_multiplier leaves no channels");
  if (resblocks_per_stage < 0) throw ConfigError("resblocks_per_stage must be non-negative");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (in_channels < 1) throw ConfigError("in_channels must be positive");
}

std::vector<ParamSpec> param_layout(const ModelConfig& config) {
  config.validate();
  const std::int64_t b = config.width();
  const std::int64_t k = config.kernel_size;
  const std::int64_t img = config.in_channels;
  std::vector<ParamSpec> out;
  add_conv(out, "enc1.extract", b, b + 2 * img, k);
  add_resblocks(out, "enc1", config, b);
  add_conv(out, "enc2.down", 2 * b, b, k);
  add_conv(out, "enc2.extract", 2 * b, 4 * b, k);
  add_resblocks(out, "enc2", config, 2 * b);
  add_conv(out, "enc3.down", 4 * b, 2 * b, k);
  add_resblocks(out, "enc3", config, 4 * b);
  add_resblocks(out, "dec3", config, 4 * b);
  add_up(out, "dec3.up", 4 * b, 2 * b, kUpKernel);
  add_conv(out, "dec2.merge", 2 * b, 4 * b, 1);
  add_resblocks(out, "dec2", config, 2 * b);
  add_up(out, "dec2.up", 2 * b, b, kUpKernel);
  add_conv(out, "dec1.merge", b, 2 * b, 1);
  add_resblocks(out, "dec1", config, b);
  add_conv(out, "dec1.out", img, b, k);
  return out;
}

std::int64_t param_count(const ModelConfig& config) {
  std::int64_t n = 0;
  for (const auto& s : param_layout(config)) n += s.shape.numel();
  return n;
}

template <typename T>
std::int64_t param_count(const ModelParams<T>& params) {
  std::int64_t n = 0;
  for (const auto& t : params.tensors) n += t.value.numel();
  return n;
}

template <typename T>
std::size_t ModelParams<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return i;
  }
  throw ConfigError("model has no parameter named '" + name + "'");
}

template <typename T>
const Tensor<T>& ModelParams<T>::get(const std::string& name) const {
  return tensors[index_of(name)].value;
}

template <typename T>
Tensor<T>& ModelParams<T>::get(const std::string& name) {
  return tensors[index_of(name)].value;
}

template <typename T>
ModelParams<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<T> params{config, {}};
  std::mt19937_64 rng(seed);
  for (const auto& spec : param_layout(config)) {
    Tensor<T> t(spec.shape);
    if (spec.name.rfind("dec1.out.", 0) != 0) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    }
    params.tensors.push_back({spec.name, std::move(t)});
  }
  return params;
}

template <typename T>
RecurrentState<T> init_recurrent_state(const ModelConfig& config, const Shape& image_shape) {
  if (image_shape.rank() != 4) throw DimensionError("image shape must be NCHW, got " + image_shape.str());
  const auto h = image_shape.h();
  const auto w = image_shape.w();
  if (h < 4 || w < 4 || h % 4 != 0 || w % 4 != 0) {
    throw DimensionError("recurrent state needs H and W divisible by 4, got " + image_shape.str());
  }
  const std::int64_t b = config.width();
  return {Tensor<T>(Shape{image_shape.n(), b, h, w}),
          Tensor<T>(Shape{image_shape.n(), 2 * b, h / 2, w / 2})};
}

template <typename T>
ParamVars bind_params(Graph<T>& graph, const ModelParams<T>& params) {
  ParamVars vars;
  vars.vars.reserve(params.tensors.size());
  for (const auto& t : params.tensors) vars.vars.push_back(graph.leaf(t.value));
  return vars;
}

template <typename T>
ForwardVars forward_graph(Graph<T>& graph, const ModelConfig& config, const ParamVars& params,
                          Var blurred, Var previous, Var f1, Var f2) {
  const auto layout = param_layout(config);
  if (layout.size() != params.vars.size()) {
    throw ConfigError("parameter set does not match the model configuration");
  }
  const auto& s = graph.value(blurred).shape();
  if (graph.value(previous).shape() != s) {
    throw DimensionError("previous estimate " + graph.value(previous).shape().str() +
                         " does not match blurred input " + s.str());
  }
  if (s.rank() != 4 || s.c() != config.in_channels) {
    throw DimensionError("blurred input must be N x " + std::to_string(config.in_channels) +
                         " x H x W, got " + s.str());
  }
  const auto expected = init_recurrent_state<T>(config, s);
  if (graph.value(f1).shape() != expected.f1.shape() ||
      graph.value(f2).shape() != expected.f2.shape()) {
    throw DimensionError("recurrent state " + graph.value(f1).shape().str() + "/" +
                         graph.value(f2).shape().str() + " does not match image " + s.str());
  }

  Builder<T> nn(graph, config, params, layout);
  const int pad = config.kernel_size / 2;

  Var stacked = graph.concat_channels(previous, blurred);
  Var e1 = graph.relu(nn.same(graph.concat_channels(f1, stacked), "enc1.extract"));
  e1 = nn.resblocks(e1, "enc1");

  Var e2 = graph.relu(nn.conv(e1, "enc2.down", 2, pad));
  e2 = graph.relu(nn.same(graph.concat_channels(f2, e2), "enc2.extract"));
  e2 = nn.resblocks(e2, "enc2");

  Var e3 = graph.relu(nn.conv(e2, "enc3.down", 2, pad));
  e3 = nn.resblocks(e3, "enc3");

  Var d3 = nn.resblocks(e3, "dec3");
  Var u2 = graph.relu(nn.up(d3, "dec3.up"));
  Var d2 = nn.conv(graph.concat_channels(u2, e2), "dec2.merge", 1, 0);
  d2 = nn.resblocks(d2, "dec2");

  Var u1 = graph.relu(nn.up(d2, "dec2.up"));
  Var d1 = nn.conv(graph.concat_channels(u1, e1), "dec1.merge", 1, 0);
  d1 = nn.resblocks(d1, "dec1");

  Var residual = nn.same(d1, "dec1.out");
  return {graph.add(blurred, residual), d1, d2};
}

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const Tensor<T>& blurred,
                         const Tensor<T>& previous, const RecurrentState<T>& state) {
  Graph<T> graph;
  ParamVars vars = bind_params(graph, params);
  Var b = graph.constant(blurred);
  Var p = graph.constant(previous);
  Var f1 = graph.constant(state.f1);
  Var f2 = graph.constant(state.f2);
  ForwardVars out = forward_graph(graph, params.config, vars, b, p, f1, f2);
  return {graph.value(out.output), {graph.value(out.f1), graph.value(out.f2)}};
}

#define MTDEBLUR_INSTANTIATE(T)                                                                \
  template struct ModelParams<T>;                                                              \
  template ModelParams<T> init_model(const ModelConfig&, std::uint64_t);                       \
  template RecurrentState<T> init_recurrent_state(const ModelConfig&, const Shape&);           \
  template std::int64_t param_count(const ModelParams<T>&);                                    \
  template ParamVars bind_params(Graph<T>&, const ModelParams<T>&);                            \
  template ForwardVars forward_graph(Graph<T>&, const ModelConfig&, const ParamVars&, Var, Var, \
                                     Var, Var);                                                \
  template ForwardResult<T> forward(const ModelParams<T>&, const Tensor<T>&, const Tensor<T>&, \
                                    const RecurrentState<T>&);

MTDEBLUR_INSTANTIATE(float)
MTDEBLUR_INSTANTIATE(double)

#undef MTDEBLUR_INSTANTIATE

}  // namespace mtdeblur
