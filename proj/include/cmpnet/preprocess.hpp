#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmpnet/grid.hpp"

namespace cmpnet {

/// Box smoothing window; both extents odd and positive.
struct SmoothingConfig {
  std::size_t m = 5;  // rows
  std::size_t n = 5;  // columns
};

/// Mean over the m x n window centred on each pixel, clamp-to-edge borders.
Grid2D smooth(const Grid2D& grid, const SmoothingConfig& cfg);

/// Min-max statistics of the training targets, in nanometers.
struct NormStats {
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Min and max over every pixel of the given grids.
NormStats fit_norm(std::span<const Grid2D> grids);

/// 2*(v - min)/(max - min) - 1, or 0 when max == min. Not clipped.
double normalize(double v, const NormStats& stats);
/// Inverse of normalize when max > min; maps everything to min otherwise.
double denormalize(double v, const NormStats& stats);
Grid2D normalize(const Grid2D& grid, const NormStats& stats);
Grid2D denormalize(const Grid2D& grid, const NormStats& stats);

inline constexpr int kDihedralCount = 8;

/// Element of the symmetry group of the square:
/// 0 identity, 1/2/3 counter-clockwise rotation by 90/180/270,
/// 4 horizontal flip (mirror columns), 5 vertical flip (mirror rows),
/// 6 horizontal flip after 90 rotation, 7 vertical flip after 90 rotation.
Grid2D apply_dihedral(const Grid2D& frame, int transform_id);
/// The element that undoes `transform_id`.
int dihedral_inverse(int transform_id);
/// Applies the same element to an input/target pair.
std::pair<Grid2D, Grid2D> augment(const Grid2D& input, const Grid2D& target, int transform_id);

/// Aligned input/target subframe cut from a full die.
struct FramePair {
  Grid2D input;
  Grid2D target;
  std::size_t origin_row = 0;
  std::size_t origin_col = 0;
};

/// Number of frames tile() yields for a h x w grid.
std::size_t tile_count(std::size_t h, std::size_t w, std::size_t frame, std::size_t stride);

/// Frames at origins (i*stride, j*stride) that fit fully, row-major order.
std::vector<FramePair> tile(const Grid2D& input, const Grid2D& target, std::size_t frame_size,
                            std::size_t stride);

enum class Split : std::uint8_t { kTrain, kTest };

/// Labels `count` base frames: round(count*test_fraction) of them test,
/// picked by a seeded Fisher-Yates shuffle over mt19937_64.
std::vector<Split> split(std::size_t count, double test_fraction, std::uint64_t seed);

struct Sample {
  Grid2D input;   // binary
  Grid2D target;  // normalized heights
  std::size_t base_index = 0;
  std::size_t origin_row = 0;
  std::size_t origin_col = 0;
  int augmentation = 0;
  Split split = Split::kTrain;
};

struct DataSetConfig {
  std::size_t frame_size = 128;
  std::size_t stride = 128;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  SmoothingConfig smoothing;
};

struct DataSet {
  DataSetConfig config;
  NormStats norm;
  std::size_t base_count = 0;
  std::vector<Split> base_split;
  std::vector<Sample> samples;  // base-major, 8 augmentations per base frame

  std::vector<std::size_t> indices(Split which) const;
};

/// Smooth the target, tile, split base frames, fit normalization on the
/// training base frames, normalize, and expand every base frame by the 8
/// dihedral transforms.
DataSet build_dataset(const Grid2D& raster, const Grid2D& height_nm, const DataSetConfig& cfg);

/// Directory holding manifest.txt plus sample_<index>_<aug>_{in,out}.cmpg.
void write_dataset(const DataSet& data, const std::filesystem::path& dir);
DataSet read_dataset(const std::filesystem::path& dir);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace cmpnet
