#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmpnet/grid.hpp"
#include "cmpnet/layout.hpp"

namespace cmpnet {

/// Synthetic post-polish topography:
///   height = -max_erosion * blur_sigma(raster) - dishing * raster + noise
/// where blur_sigma is the smoothed local copper density and noise is
/// uniform in [-noise_amp, +noise_amp].
struct OracleConfig {
  double planarization_sigma = 8.0;  // pixels
  double max_erosion_nm = 40.0;
  double dishing_amp_nm = 3.0;
  double noise_amp_nm = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Separable Gaussian blur, radius ceil(3*sigma), weights renormalized to
/// sum to one, clamp-to-edge borders. Double-precision core.
std::vector<double> gaussian_blur(std::span<const double> values, std::size_t height,
                                  std::size_t width, double sigma);
Grid2D gaussian_blur(const Grid2D& grid, double sigma);

/// Heights in nm for a binary raster, double precision.
std::vector<double> generate_heights(const Grid2D& raster, const OracleConfig& cfg);
/// generate_heights() stored as a grid with the raster's pitch.
Grid2D generate(const Grid2D& raster, const OracleConfig& cfg);

/// "key value" lines echoing the config, for the oracle.txt sidecar.
std::string describe(const OracleConfig& cfg);

/// Seeded test-chip style layout: the die is cut into square blocks, each
/// filled with one pattern (empty, solid, horizontal or vertical line
/// arrays, dummy squares, scattered rectangles).
RectLayout random_layout(std::int64_t die_width, std::int64_t die_height, std::uint64_t seed,
                         std::int64_t block_nm = 32);

}  // namespace cmpnet
