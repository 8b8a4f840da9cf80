#include "mtdeblur/autograd.hpp"

#include <cmath>

#include "mtdeblur/ops.hpp"

namespace mtdeblur {

template <typename T>
const Tensor<T>& Gradients<T>::operator[](Var leaf) const {
  auto it = by_leaf_.find(leaf.id);
  if (it == by_leaf_.end()) throw ArgumentError("no gradient recorded for node " + std::to_string(leaf.id));
  return it->second;
}

template <typename T>
Tensor<T> Gradients<T>::take(Var leaf) {
  auto it = by_leaf_.find(leaf.id);
  if (it == by_leaf_.end()) throw ArgumentError("no gradient recorded for node " + std::to_string(leaf.id));
  return std::move(it->second);
}

template <typename T>
Var Graph<T>::push(Node node) {
  for (auto id : node.inputs) node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::leaf(Tensor<T> value) {
  value.require_finite("leaf tensor");
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  value.require_finite("constant tensor");
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Tensor<T> Graph<T>::evaluate(const Node& node, const std::vector<const Tensor<T>*>& in) const {
  switch (node.kind) {
    case OpKind::kConv2d:
      return mtdeblur::conv2d(*in[0], *in[1], *in[2], node.stride, node.padding);
    case OpKind::kTransposedConv2d:
      return mtdeblur::transposed_conv2d(*in[0], *in[1], *in[2], node.stride, node.padding);
    case OpKind::kRelu:
      return mtdeblur::relu(*in[0]);
    case OpKind::kAdd:
      return mtdeblur::add(*in[0], *in[1]);
    case OpKind::kConcatChannels:
      return mtdeblur::concat_channels(*in[0], *in[1]);
    case OpKind::kL1Loss: {
      T loss = mtdeblur::l1_loss(*in[0], *in[1]);
      if (!std::isfinite(loss)) throw NumericError("l1_loss is not finite");
      return Tensor<T>(Shape{1}, loss);
    }
    case OpKind::kCustom:
      return node.custom_forward(in);
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return node.value;
  }
  throw UnsupportedOpError("unknown primitive");
}

#define MTDEBLUR_RECORD(KIND, INPUTS, STRIDE, PAD)                     \
  Node n;                                                               \
  n.kind = KIND;                                                        \
  n.inputs = INPUTS;                                                    \
  n.stride = STRIDE;                                                    \
  n.padding = PAD;                                                      \
  std::vector<const Tensor<T>*> in;                                     \
  for (auto id : n.inputs) in.push_back(&nodes_.at(id).value);          \
  n.value = evaluate(n, in);                                            \
  return push(std::move(n));

template <typename T>
Var Graph<T>::conv2d(Var input, Var weight, Var bias, int stride, int padding) {
  MTDEBLUR_RECORD(OpKind::kConv2d, (std::vector<std::size_t>{input.id, weight.id, bias.id}), stride,
                  padding)
}

template <typename T>
Var Graph<T>::transposed_conv2d(Var input, Var weight, Var bias, int stride, int padding) {
  MTDEBLUR_RECORD(OpKind::kTransposedConv2d,
                  (std::vector<std::size_t>{input.id, weight.id, bias.id}), stride, padding)
}

template <typename T>
Var Graph<T>::relu(Var input) {
  MTDEBLUR_RECORD(OpKind::kRelu, (std::vector<std::size_t>{input.id}), 1, 0)
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  MTDEBLUR_RECORD(OpKind::kAdd, (std::vector<std::size_t>{a.id, b.id}), 1, 0)
}

template <typename T>
Var Graph<T>::concat_channels(Var a, Var b) {
  MTDEBLUR_RECORD(OpKind::kConcatChannels, (std::vector<std::size_t>{a.id, b.id}), 1, 0)
}

template <typename T>
Var Graph<T>::l1_loss(Var pred, Var target) {
  MTDEBLUR_RECORD(OpKind::kL1Loss, (std::vector<std::size_t>{pred.id, target.id}), 1, 0)
}

#undef MTDEBLUR_RECORD

template <typename T>
Var Graph<T>::custom(const std::string& op, std::vector<Var> inputs, ForwardRule forward) {
  Node n;
  n.kind = OpKind::kCustom;
  n.custom_op = op;
  n.custom_forward = std::move(forward);
  std::vector<const Tensor<T>*> in;
  for (auto v : inputs) {
    n.inputs.push_back(v.id);
    in.push_back(&nodes_.at(v.id).value);
  }
  n.value = n.custom_forward(in);
  return push(std::move(n));
}

template <typename T>
void Graph<T>::register_gradient(const std::string& op, GradientRule rule) {
  custom_rules_[op] = std::move(rule);
}

template <typename T>
std::vector<Tensor<T>> Graph<T>::replay() const {
  std::vector<Tensor<T>> values;
  values.reserve(nodes_.size());
  for (const auto& node : nodes_) {
    std::vector<const Tensor<T>*> in;
    for (auto id : node.inputs) in.push_back(&values[id]);
    values.push_back(evaluate(node, in));
  }
  return values;
}

template <typename T>
void Graph<T>::apply_rule(const Node& node, const Tensor<T>& g,
                          const std::vector<Tensor<T>*>& gi) const {
  auto in = [&](std::size_t i) -> const Tensor<T>& { return nodes_[node.inputs[i]].value; };
  switch (node.kind) {
    case OpKind::kConv2d:
      conv2d_backward(in(0), in(1), g, node.stride, node.padding, gi[0], gi[1], gi[2]);
      return;
    case OpKind::kTransposedConv2d:
      transposed_conv2d_backward(in(0), in(1), g, node.stride, node.padding, gi[0], gi[1], gi[2]);
      return;
    case OpKind::kRelu: {
      if (gi[0] == nullptr) return;
      auto x = in(0).data();
      auto gs = g.data();
      auto dst = gi[0]->data();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > T(0)) dst[i] += gs[i];
      }
      return;
    }
    case OpKind::kAdd:
      for (int k = 0; k < 2; ++k) {
        if (gi[k] == nullptr) continue;
        auto gs = g.data();
        auto dst = gi[k]->data();
        for (std::size_t i = 0; i < gs.size(); ++i) dst[i] += gs[i];
      }
      return;
    case OpKind::kConcatChannels: {
      const auto& as = in(0).shape();
      const auto& bs = in(1).shape();
      const std::int64_t hw = as.h() * as.w();
      const T* src = g.data().data();
      for (std::int64_t n = 0; n < as.n(); ++n) {
        for (int k = 0; k < 2; ++k) {
          const std::int64_t block = (k == 0 ? as.c() : bs.c()) * hw;
          if (gi[k] != nullptr) {
            T* dst = gi[k]->data().data() + n * block;
            for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
          }
          src += block;
        }
      }
      return;
    }
    case OpKind::kL1Loss: {
      const auto& p = in(0);
      const auto& t = in(1);
      const std::int64_t n = p.shape().n();
      const T scale = g[0] / static_cast<T>(p.numel());  // 1/(C*H*W) per sample, 1/N over batch
      auto ps = p.data();
      auto ts = t.data();
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const T d = ps[i] - ts[i];
        const T s = d > T(0) ? scale : (d < T(0) ? -scale : T(0));
        if (gi[0] != nullptr) (*gi[0])[static_cast<std::int64_t>(i)] += s;
        if (gi[1] != nullptr) (*gi[1])[static_cast<std::int64_t>(i)] -= s;
      }
      (void)n;
      return;
    }
    case OpKind::kCustom: {
      auto it = custom_rules_.find(node.custom_op);
      if (it == custom_rules_.end()) {
        throw UnsupportedOpError("no gradient rule registered for primitive '" + node.custom_op + "'");
      }
      std::vector<const Tensor<T>*> inputs;
      for (auto id : node.inputs) inputs.push_back(&nodes_[id].value);
      it->second(inputs, node.value, g, gi);
      return;
    }
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return;
  }
  throw UnsupportedOpError("unknown primitive in backward");
}

template <typename T>
Gradients<T> Graph<T>::backward(Var root, T seed) const {
  const Node& r = nodes_.at(root.id);
  if (r.value.numel() != 1) {
    throw DimensionError("backward requires a scalar root, got " + r.value.shape().str());
  }
  std::vector<Tensor<T>> grads(nodes_.size());
  grads[root.id] = Tensor<T>(r.value.shape(), seed);
  for (std::size_t idx = root.id + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    if (!node.requires_grad || grads[idx].empty() || node.kind == OpKind::kLeaf ||
        node.kind == OpKind::kConstant) {
      continue;
    }
    std::vector<Tensor<T>*> gi;
    for (auto id : node.inputs) {
      if (!nodes_[id].requires_grad) {
        gi.push_back(nullptr);
        continue;
      }
      if (grads[id].empty() && nodes_[id].value.numel() > 0) {
        grads[id] = Tensor<T>(nodes_[id].value.shape());
      }
      gi.push_back(&grads[id]);
    }
    apply_rule(node, grads[idx], gi);
    if (idx != root.id) grads[idx] = Tensor<T>();  // intermediate no longer needed
  }
  Gradients<T> out;
  for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
    if (nodes_[idx].kind != OpKind::kLeaf) continue;
    out.by_leaf_[idx] = grads[idx].empty() ? Tensor<T>(nodes_[idx].value.shape()) : std::move(grads[idx]);
  }
  return out;
}

template class Graph<float>;
template class Graph<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace mtdeblur
