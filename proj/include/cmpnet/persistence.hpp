#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "cmpnet/grid.hpp"
#include "cmpnet/model.hpp"

namespace cmpnet {

// CMPG grid file, little-endian:
//   "CMPG" | u32 version=1 | u32 height | u32 width | f64 pitch_nm |
//   u8 dtype (0 f32, 1 u8) | row-major payload
//
// CMPW checkpoint file, little-endian:
//   "CMPW" | u32 version=1 |
//   u32 depth | u32 base_channels | u32 kernel | u32 frame_size |
//   f64 norm_min | f64 norm_max | u32 epoch | u32 parameter_count |
//   per parameter: u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 data |
//   u8 has_adam [| u64 step | per parameter: f32 m | f32 v]

enum class GridDtype : std::uint8_t { kF32 = 0, kU8 = 1 };

inline constexpr std::uint32_t kGridVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_grid(const Grid2D& grid, std::ostream& out, GridDtype dtype = GridDtype::kF32);
void write_grid(const Grid2D& grid, const std::filesystem::path& path,
                GridDtype dtype = GridDtype::kF32);
Grid2D read_grid(std::istream& in);
Grid2D read_grid(const std::filesystem::path& path);

void save_checkpoint(const ModelState& state, std::ostream& out);
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(std::istream& in);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace cmpnet
