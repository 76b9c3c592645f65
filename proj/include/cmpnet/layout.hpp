#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cmpnet/grid.hpp"

namespace cmpnet {

/// Axis-aligned copper rectangle in integer nanometers, half-open.
struct Rect {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x1 = 0;
  std::int64_t y1 = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Vector die design: copper rectangles in an oxide matrix.
struct RectLayout {
  std::int64_t die_width = 0;
  std::int64_t die_height = 0;
  std::vector<Rect> rects;

  friend bool operator==(const RectLayout&, const RectLayout&) = default;
};

/// Default ceiling on rasterized pixel count (h*w).
inline constexpr std::size_t kDefaultPixelBudget = std::size_t{1} << 28;

/// Parses CMPRECT text:
///
///     CMPRECT 1
///     DIE <width_nm> <height_nm>
///     <x0> <y0> <x1> <y1>
///     ...
///
/// Blank lines and lines starting with '#' are skipped. Errors carry the
/// 1-based line number.
RectLayout parse_layout(std::string_view text);

/// Reads and parses a CMPRECT file; error messages are prefixed with the path.
RectLayout read_layout(const std::string& path);

/// Serializes to CMPRECT text; parse_layout(format_layout(l)) == l.
std::string format_layout(const RectLayout& layout);

/// Checks die extent and per-rectangle bounds. Throws FormatError.
void validate_layout(const RectLayout& layout);

/// Nearest-neighbour rasterization: pixel (r, c) is 1 iff its centre
/// ((c+0.5)*pitch, (r+0.5)*pitch) lies in some rectangle with half-open
/// containment. The grid is ceil(die/pitch) on each axis; pixel centres
/// beyond the die are oxide.
Grid2D rasterize(const RectLayout& layout, double pitch_nm,
                 std::size_t pixel_budget = kDefaultPixelBudget);

}  // namespace cmpnet
