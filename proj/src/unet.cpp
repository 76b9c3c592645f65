#include "cmpnet/unet.hpp"

#include <cmath>
#include <stdexcept>

#include "cmpnet/error.hpp"
#include "cmpnet/random.hpp"

namespace cmpnet {

void UNetConfig::validate() const {
  if (depth < 1 || depth > 16) throw ValidationError("depth must be in 1..16");
  if (base_channels < 1) throw ValidationError("base channels must be at least 1");
  if (kernel < 1 || kernel % 2 == 0) throw ValidationError("kernel size must be odd");
  if (frame_size == 0 || frame_size % (1u << depth) != 0) {
    throw ValidationError("frame size " + std::to_string(frame_size) +
                          " is not divisible by 2^depth = " + std::to_string(1u << depth));
  }
}

std::vector<ConvSpec> conv_layers(const UNetConfig& config) {
  config.validate();
  const std::size_t k = config.kernel;
  const std::size_t base = config.base_channels;
  std::vector<ConvSpec> layers;
  std::size_t in = 1;
  for (std::uint32_t l = 0; l < config.depth; ++l) {
    const std::size_t ch = base << l;
    const std::string p = "enc" + std::to_string(l);
    layers.push_back({p + ".conv1", in, ch, k});
    layers.push_back({p + ".conv2", ch, ch, k});
    in = ch;
  }
  const std::size_t bottom = base << config.depth;
  layers.push_back({"bottleneck.conv1", in, bottom, k});
  layers.push_back({"bottleneck.conv2", bottom, bottom, k});
  in = bottom;
  for (std::uint32_t l = config.depth; l-- > 0;) {
    const std::size_t ch = base << l;
    const std::string p = "dec" + std::to_string(l);
    layers.push_back({p + ".up", in, ch, k});
    layers.push_back({p + ".conv1", 2 * ch, ch, k});
    layers.push_back({p + ".conv2", ch, ch, k});
    in = ch;
  }
  layers.push_back({"head", in, 1, 1});
  return layers;
}

std::vector<ParamSpec> parameter_specs(const UNetConfig& config) {
  std::vector<ParamSpec> specs;
  for (const ConvSpec& c : conv_layers(config)) {
    specs.push_back({c.name + ".weight", {c.out_channels, c.in_channels, c.kernel, c.kernel}});
    specs.push_back({c.name + ".bias", {c.out_channels}});
  }
  return specs;
}

std::size_t parameter_count(const UNetConfig& config) {
  std::size_t total = 0;
  for (const ParamSpec& s : parameter_specs(config)) {
    std::size_t n = 1;
    for (std::size_t d : s.dims) n *= d;
    total += n;
  }
  return total;
}

template <typename T>
UNet<T>::UNet(const UNetConfig& config) : config_(config) {
  for (ParamSpec& s : parameter_specs(config_)) {
    Shape4 shape = s.dims.size() == 4 ? Shape4{s.dims[0], s.dims[1], s.dims[2], s.dims[3]}
                                      : Shape4{s.dims[0], 1, 1, 1};
    Parameter<T> p{std::move(s.name), std::move(s.dims), Tensor<T>(shape), Tensor<T>(shape)};
    params_.push_back(std::move(p));
  }
}

template <typename T>
UNet<T> UNet<T>::init(const UNetConfig& config, std::uint64_t seed) {
  UNet net(config);
  Rng rng(seed);
  for (Parameter<T>& p : net.params_) {
    if (p.dims.size() != 4) continue;  // biases stay zero
    const double fan_in = static_cast<double>(p.dims[1] * p.dims[2] * p.dims[3]);
    const double bound = std::sqrt(6.0 / fan_in);
    for (T& v : p.value.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return net;
}

template <typename T>
Parameter<T>& UNet<T>::parameter(const std::string& name) {
  for (Parameter<T>& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
void UNet<T>::check_input(const Shape4& shape) const {
  const std::size_t div = std::size_t{1} << config_.depth;
  if (shape.c != 1) throw ValidationError("U-Net input must have a single channel");
  if (shape.h == 0 || shape.w == 0 || shape.h % div != 0 || shape.w % div != 0) {
    throw ValidationError("input size " + std::to_string(shape.h) + "x" +
                          std::to_string(shape.w) + " is not divisible by 2^depth = " +
                          std::to_string(div));
  }
}

template <typename T>
template <typename Bind>
Var UNet<T>::forward_impl(Tape<T>& tape, Var input, Bind&& bind) const {
  check_input(tape.value(input).shape());
  std::size_t next = 0;
  auto conv = [&](Var x) {
    const Var w = bind(next);
    const Var b = bind(next + 1);
    next += 2;
    return tape.conv2d(x, w, b);
  };

  std::vector<Var> skips;
  Var x = input;
  for (std::uint32_t l = 0; l < config_.depth; ++l) {
    x = tape.relu(conv(x));
    x = tape.relu(conv(x));
    skips.push_back(x);
    x = tape.maxpool2(x);
  }
  x = tape.relu(conv(x));
  x = tape.relu(conv(x));
  for (std::uint32_t l = config_.depth; l-- > 0;) {
    x = conv(tape.upsample2(x));
    x = tape.concat_channels(x, skips[l]);
    x = tape.relu(conv(x));
    x = tape.relu(conv(x));
  }
  return tape.tanh(conv(x));
}

template <typename T>
Var UNet<T>::forward(Tape<T>& tape, Var input) {
  return forward_impl(tape, input, [&](std::size_t i) { return tape.parameter(params_[i]); });
}

template <typename T>
Tensor<T> UNet<T>::predict(const Tensor<T>& input) const {
  Tape<T> tape;
  const Var in = tape.constant_ref(input);
  const Var out =
      forward_impl(tape, in, [&](std::size_t i) { return tape.constant_ref(params_[i].value); });
  return tape.value(out);
}

template <typename T>
void UNet<T>::zero_grad() {
  for (Parameter<T>& p : params_) p.zero_grad();
}

template class UNet<float>;
template class UNet<double>;

}  // namespace cmpnet
