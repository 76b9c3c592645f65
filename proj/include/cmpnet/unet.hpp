#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cmpnet/autodiff.hpp"
#include "cmpnet/tensor.hpp"

namespace cmpnet {

struct UNetConfig {
  std::uint32_t depth = 3;          // pooling levels
  std::uint32_t base_channels = 16;  // channels at the first level
  std::uint32_t kernel = 3;          // spatial kernel size, odd
  std::uint32_t frame_size = 128;    // training frame height == width

  /// Throws ValidationError on an invalid combination.
  void validate() const;
  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

/// One convolution of the network, in forward order.
struct ConvSpec {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
};

/// Convolution list implied by a config:
///   enc<l>.conv1/conv2         for l = 0..depth-1, base*2^l channels
///   bottleneck.conv1/conv2     base*2^depth channels
///   dec<l>.up, dec<l>.conv1/2  for l = depth-1..0
///   head                       1x1 to a single channel
std::vector<ConvSpec> conv_layers(const UNetConfig& config);

/// Name and logical dims of every parameter: "<layer>.weight" as
/// {Cout, Cin, k, k} followed by "<layer>.bias" as {Cout}.
struct ParamSpec {
  std::string name;
  std::vector<std::size_t> dims;
};
std::vector<ParamSpec> parameter_specs(const UNetConfig& config);
std::size_t parameter_count(const UNetConfig& config);

/// U-Net with channel-concatenated skips, same padding, ReLU hidden
/// activations and a tanh head. Maps [N,1,S,S] to [N,1,S,S] for any S
/// divisible by 2^depth.
template <typename T>
class UNet {
 public:
  /// All parameters zero.
  explicit UNet(const UNetConfig& config);

  /// Weights uniform in [-b, b], b = sqrt(6/fan_in); biases zero.
  static UNet init(const UNetConfig& config, std::uint64_t seed);

  const UNetConfig& config() const { return config_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>& parameter(const std::string& name);

  /// Records the forward pass on `tape` with parameters as differentiable
  /// leaves. The model must outlive the tape.
  Var forward(Tape<T>& tape, Var input);

  /// Forward pass without gradients.
  Tensor<T> predict(const Tensor<T>& input) const;

  void zero_grad();

  template <typename U>
  UNet<U> cast() const {
    UNet<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i].value = params_[i].value.template cast<U>();
    }
    return out;
  }

 private:
  template <typename Bind>
  Var forward_impl(Tape<T>& tape, Var input, Bind&& bind) const;
  void check_input(const Shape4& shape) const;

  UNetConfig config_;
  std::vector<Parameter<T>> params_;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace cmpnet
