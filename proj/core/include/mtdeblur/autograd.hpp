#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mtdeblur/tensor.hpp"

namespace mtdeblur {

/// Handle to a value recorded in a Graph.
struct Var {
  std::size_t id = 0;
  friend bool operator==(Var, Var) = default;
};

enum class OpKind {
  kLeaf,
  kConstant,
  kConv2d,
  kTransposedConv2d,
  kRelu,
  kAdd,
  kConcatChannels,
  kL1Loss,
  kCustom,
};

template <typename T>
class Graph;

/// Gradients for every leaf of a Graph, produced by Graph::backward.
template <typename T>
class Gradients {
 public:
  /// Gradient of the root with respect to `leaf`; zeros when it does not
  /// influence the root.
  const Tensor<T>& operator[](Var leaf) const;
  Tensor<T> take(Var leaf);

 private:
  friend class Graph<T>;
  std::map<std::size_t, Tensor<T>> by_leaf_;
};

/// Reverse-mode computation record. Every primitive executed through a
/// Graph is appended in order together with its output, so the record can
/// be replayed or differentiated.
///
/// Values are immutable once recorded. A Graph is not thread-safe, but
/// independent graphs can be evaluated concurrently.
template <typename T>
class Graph {
 public:
  /// Gradient rule for a custom primitive: given the node inputs, its
  /// output and the incoming gradient, accumulate into `grad_inputs`
  /// (entries for inputs that do not require gradients are null).
  using GradientRule = std::function<void(const std::vector<const Tensor<T>*>& inputs,
                                          const Tensor<T>& output, const Tensor<T>& grad_output,
                                          const std::vector<Tensor<T>*>& grad_inputs)>;
  using ForwardRule = std::function<Tensor<T>(const std::vector<const Tensor<T>*>& inputs)>;

  Var leaf(Tensor<T> value);
  Var constant(Tensor<T> value);

  Var conv2d(Var input, Var weight, Var bias, int stride, int padding);
  Var transposed_conv2d(Var input, Var weight, Var bias, int stride, int padding);
  Var relu(Var input);
  Var add(Var a, Var b);
  Var concat_channels(Var a, Var b);
  Var l1_loss(Var pred, Var target);

  /// Records an opaque primitive named `op`. Its gradient rule is looked up
  /// at backward time; see register_gradient.
  Var custom(const std::string& op, std::vector<Var> inputs, ForwardRule forward);
  void register_gradient(const std::string& op, GradientRule rule);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  std::size_t size() const { return nodes_.size(); }

  /// Re-executes every recorded primitive from the leaves and constants
  /// and returns the node values in record order.
  std::vector<Tensor<T>> replay() const;

  /// Reverse-mode gradients of the scalar `root` scaled by `seed`.
  Gradients<T> backward(Var root, T seed = T(1)) const;

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<std::size_t> inputs;
    int stride = 1;
    int padding = 0;
    std::string custom_op;
    ForwardRule custom_forward;
    Tensor<T> value;
    bool requires_grad = false;
  };

  Var push(Node node);
  Tensor<T> evaluate(const Node& node, const std::vector<const Tensor<T>*>& inputs) const;
  void apply_rule(const Node& node, const Tensor<T>& grad_out,
                  const std::vector<Tensor<T>*>& grad_inputs) const;

  std::vector<Node> nodes_;
  std::map<std::string, GradientRule> custom_rules_;
};

extern template class Graph<float>;
extern template class Graph<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace mtdeblur
