#include "cmpnet/layout.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cmpnet/error.hpp"

namespace cmpnet {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::int64_t parse_int(std::string_view token, std::size_t line_no) {
  std::int64_t value = 0;
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("non-integer coordinate '" + std::string(token) +
                      "' at line " + std::to_string(line_no));
  }
  return value;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool is_skippable(std::string_view line) {
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    return ch == '#';
  }
  return true;
}

}  // namespace

RectLayout parse_layout(std::string_view text) {
  RectLayout layout;
  std::size_t line_no = 0;
  int header_lines = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = strip_cr(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;

    if (header_lines == 0) {
      auto tokens = split_ws(line);
      if (tokens.size() != 2 || tokens[0] != "CMPRECT" || tokens[1] != "1") {
        throw FormatError("malformed header at line " + std::to_string(line_no) +
                          ": expected 'CMPRECT 1'");
      }
      ++header_lines;
      continue;
    }
    if (header_lines == 1) {
      auto tokens = split_ws(line);
      if (tokens.size() != 3 || tokens[0] != "DIE") {
        throw FormatError("malformed header at line " + std::to_string(line_no) +
                          ": expected 'DIE <width_nm> <height_nm>'");
      }
      layout.die_width = parse_int(tokens[1], line_no);
      layout.die_height = parse_int(tokens[2], line_no);
      if (layout.die_width <= 0 || layout.die_height <= 0) {
        throw FormatError("malformed header at line " + std::to_string(line_no) +
                          ": die extent must be positive");
      }
      ++header_lines;
      continue;
    }
    if (is_skippable(line)) continue;

    auto tokens = split_ws(line);
    if (tokens.size() != 4) {
      throw FormatError("expected 4 coordinates at line " + std::to_string(line_no));
    }
    Rect r{parse_int(tokens[0], line_no), parse_int(tokens[1], line_no),
           parse_int(tokens[2], line_no), parse_int(tokens[3], line_no)};
    if (r.x0 >= r.x1 || r.y0 >= r.y1) {
      throw FormatError("degenerate rectangle at line " + std::to_string(line_no));
    }
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > layout.die_width || r.y1 > layout.die_height) {
      throw FormatError("rectangle outside die extent at line " + std::to_string(line_no));
    }
    layout.rects.push_back(r);
  }
  if (header_lines < 2) {
    throw FormatError("malformed header at line " + std::to_string(line_no) +
                      ": file ends before DIE line");
  }
  return layout;
}

RectLayout read_layout(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open layout file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_layout(buffer.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string format_layout(const RectLayout& layout) {
  std::ostringstream out;
  out << "CMPRECT 1\n";
  out << "DIE " << layout.die_width << ' ' << layout.die_height << '\n';
  for (const Rect& r : layout.rects) {
    out << r.x0 << ' ' << r.y0 << ' ' << r.x1 << ' ' << r.y1 << '\n';
  }
  return out.str();
}

void validate_layout(const RectLayout& layout) {
  if (layout.die_width <= 0 || layout.die_height <= 0) {
    throw FormatError("die extent must be positive");
  }
  for (std::size_t i = 0; i < layout.rects.size(); ++i) {
    const Rect& r = layout.rects[i];
    if (r.x0 >= r.x1 || r.y0 >= r.y1) {
      throw FormatError("degenerate rectangle #" + std::to_string(i));
    }
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > layout.die_width || r.y1 > layout.die_height) {
      throw FormatError("rectangle #" + std::to_string(i) + " outside die extent");
    }
  }
}

Grid2D rasterize(const RectLayout& layout, double pitch_nm, std::size_t pixel_budget) {
  if (!(pitch_nm > 0.0) || !std::isfinite(pitch_nm)) {
    throw ValidationError("pitch must be a positive number of nanometers");
  }
  validate_layout(layout);
  const double hd = std::ceil(static_cast<double>(layout.die_height) / pitch_nm);
  const double wd = std::ceil(static_cast<double>(layout.die_width) / pitch_nm);
  if (hd * wd > static_cast<double>(pixel_budget)) {
    throw ValidationError("raster of " + std::to_string(static_cast<long long>(hd)) + "x" +
                          std::to_string(static_cast<long long>(wd)) +
                          " pixels exceeds the pixel budget of " +
                          std::to_string(pixel_budget));
  }
  const auto h = static_cast<std::size_t>(hd);
  const auto w = static_cast<std::size_t>(wd);
  Grid2D grid(h, w, pitch_nm, 0.0f);

  // First pixel index whose centre is >= coordinate v: (i + 0.5) * pitch >= v.
  auto first_at_or_after = [pitch_nm](std::int64_t v, std::size_t n) {
    const double idx = std::ceil(static_cast<double>(v) / pitch_nm - 0.5);
    if (idx <= 0.0) return std::size_t{0};
    return std::min(n, static_cast<std::size_t>(idx));
  };

  for (const Rect& r : layout.rects) {
    const std::size_t c0 = first_at_or_after(r.x0, w);
    const std::size_t c1 = first_at_or_after(r.x1, w);
    const std::size_t r0 = first_at_or_after(r.y0, h);
    const std::size_t r1 = first_at_or_after(r.y1, h);
    for (std::size_t row = r0; row < r1; ++row) {
      std::fill(grid.values.begin() + row * w + c0, grid.values.begin() + row * w + c1, 1.0f);
    }
  }
  return grid;
}

}  // namespace cmpnet
