#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cmpnet/tensor.hpp"

namespace cmpnet {

/// Trainable tensor with its accumulated gradient. `dims` is the logical
/// shape used for persistence (e.g. {Cout} for a bias stored as [Cout,1,1,1]).
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> dims;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
};

enum class OpKind : std::uint8_t {
  kConstant,
  kParameter,
  kConv2d,
  kMaxPool2,
  kUpsample2,
  kConcat,
  kRelu,
  kTanh,
  kMse,
};

/// Reverse-mode tape for the handful of operators the U-Net needs.
///
/// Nodes are appended in evaluation order and only ever reference earlier
/// nodes, so the graph is acyclic and reverse creation order is a valid
/// reverse topological order. One tape belongs to one thread.
///
/// backward() recomputes node gradients from scratch on each call and adds
/// the leaf gradients into Parameter::grad, so parameter gradients
/// accumulate across calls until zeroed.
template <typename T>
class Tape {
 public:
  Var constant(Tensor<T> value);
  /// Constant that refers to an external tensor; it must outlive the tape.
  Var constant_ref(const Tensor<T>& value);
  /// Differentiable leaf bound to `param`; it must outlive the tape.
  Var parameter(Parameter<T>& param);

  /// Same-padded cross-correlation, weight [Cout,Cin,kh,kw] with odd kh, kw,
  /// bias holding Cout values.
  Var conv2d(Var input, Var weight, Var bias);
  /// 2x2 max pooling, stride 2. Ties resolve to the first element in
  /// row-major window order.
  Var maxpool2(Var input);
  /// Nearest-neighbour 2x upsampling.
  Var upsample2(Var input);
  Var concat_channels(Var a, Var b);
  Var relu(Var input);
  Var tanh(Var input);
  /// Mean of squared differences over all elements; a 1-element tensor.
  Var mse_loss(Var pred, Var target);

  void backward(Var loss);

  const Tensor<T>& value(Var v) const;
  /// Gradient of the last backward() root with respect to `v`.
  const Tensor<T>& grad(Var v) const;
  OpKind kind(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::array<std::size_t, 3> inputs{Var::kInvalid, Var::kInvalid, Var::kInvalid};
    Tensor<T> value;
    Tensor<T> grad;
    const Tensor<T>* external = nullptr;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    std::vector<std::uint32_t> argmax;  // maxpool2 routing, offset within the plane
  };

  const Node& node(Var v) const;
  const Tensor<T>& value_of(std::size_t id) const;
  Var push(Node node);

  void backward_conv2d(Node& node);
  void backward_maxpool2(Node& node);
  void backward_upsample2(Node& node);
  void backward_concat(Node& node);
  void backward_relu(Node& node);
  void backward_tanh(Node& node);
  void backward_mse(Node& node);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace cmpnet
