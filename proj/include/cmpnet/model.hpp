#pragma once

#include <cstdint>
#include <optional>

#include "cmpnet/optimizer.hpp"
#include "cmpnet/preprocess.hpp"
#include "cmpnet/unet.hpp"

namespace cmpnet {

/// Everything a checkpoint carries: architecture, weights, the target
/// normalization needed to report nanometers, and optional optimizer state.
struct ModelState {
  UNet<float> net{UNetConfig{}};
  NormStats norm;
  std::optional<AdamState> adam;
  std::uint32_t epoch = 0;

  const UNetConfig& config() const { return net.config(); }
};

}  // namespace cmpnet
