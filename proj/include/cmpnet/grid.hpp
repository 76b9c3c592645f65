#pragma once

#include <cstddef>
#include <vector>

namespace cmpnet {

/// Dense row-major 2-D scalar field. Row 0 is minimum y, column 0 minimum x.
/// Holds either a binary layout raster (0/1) or a height map in nanometers.
struct Grid2D {
  std::size_t height = 0;
  std::size_t width = 0;
  double pitch_nm = 1.0;
  std::vector<float> values;

  Grid2D() = default;
  Grid2D(std::size_t h, std::size_t w, double pitch, float fill = 0.0f)
      : height(h), width(w), pitch_nm(pitch), values(h * w, fill) {}

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }

  float& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * width + c]; }

  bool is_binary() const {
    for (float v : values)
      if (v != 0.0f && v != 1.0f) return false;
    return true;
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

}  // namespace cmpnet
