#include "cmpnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cmpnet/error.hpp"
#include "cmpnet/preprocess.hpp"
#include "cmpnet/random.hpp"

namespace cmpnet {

void OracleConfig::validate() const {
  if (!(planarization_sigma > 0.0) || !std::isfinite(planarization_sigma)) {
    throw ValidationError("planarization sigma must be positive");
  }
  if (!(max_erosion_nm > 0.0)) throw ValidationError("max erosion must be positive");
  if (!(dishing_amp_nm >= 0.0)) throw ValidationError("dishing amplitude must be non-negative");
  if (!(noise_amp_nm >= 0.0)) throw ValidationError("noise amplitude must be non-negative");
}

std::vector<double> gaussian_blur(std::span<const double> values, std::size_t height,
                                  std::size_t width, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("blur sigma must be positive");
  if (values.size() != height * width) throw ValidationError("blur input size mismatch");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double wgt = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
    kernel[k + radius] = wgt;
    total += wgt;
  }
  for (double& wgt : kernel) wgt /= total;

  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  std::vector<double> tmp(values.size());
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        s += kernel[k + radius] * values[r * w + std::clamp<std::ptrdiff_t>(c + k, 0, w - 1)];
      }
      tmp[r * w + c] = s;
    }
  }
  std::vector<double> out(values.size());
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        s += kernel[k + radius] * tmp[std::clamp<std::ptrdiff_t>(r + k, 0, h - 1) * w + c];
      }
      out[r * w + c] = s;
    }
  }
  return out;
}

Grid2D gaussian_blur(const Grid2D& grid, double sigma) {
  std::vector<double> in(grid.values.begin(), grid.values.end());
  std::vector<double> blurred = gaussian_blur(in, grid.height, grid.width, sigma);
  Grid2D out(grid.height, grid.width, grid.pitch_nm);
  std::transform(blurred.begin(), blurred.end(), out.values.begin(),
                 [](double v) { return static_cast<float>(v); });
  return out;
}

std::vector<double> generate_heights(const Grid2D& raster, const OracleConfig& cfg) {
  cfg.validate();
  if (!raster.is_binary()) throw FormatError("oracle input raster is not binary");
  std::vector<double> in(raster.values.begin(), raster.values.end());
  std::vector<double> density = gaussian_blur(in, raster.height, raster.width,
                                              cfg.planarization_sigma);
  Rng rng(cfg.seed);
  std::vector<double> height(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    double v = -cfg.max_erosion_nm * density[i] - cfg.dishing_amp_nm * in[i];
    if (cfg.noise_amp_nm > 0.0) v += rng.uniform(-cfg.noise_amp_nm, cfg.noise_amp_nm);
    height[i] = v;
  }
  return height;
}

Grid2D generate(const Grid2D& raster, const OracleConfig& cfg) {
  std::vector<double> heights = generate_heights(raster, cfg);
  Grid2D out(raster.height, raster.width, raster.pitch_nm);
  std::transform(heights.begin(), heights.end(), out.values.begin(),
                 [](double v) { return static_cast<float>(v); });
  return out;
}

std::string describe(const OracleConfig& cfg) {
  std::ostringstream out;
  out << "model density_erosion\n";
  out << "planarization_sigma " << format_double(cfg.planarization_sigma) << '\n';
  out << "max_erosion_nm " << format_double(cfg.max_erosion_nm) << '\n';
  out << "dishing_amp_nm " << format_double(cfg.dishing_amp_nm) << '\n';
  out << "noise_amp_nm " << format_double(cfg.noise_amp_nm) << '\n';
  out << "seed " << cfg.seed << '\n';
  return out.str();
}

RectLayout random_layout(std::int64_t die_width, std::int64_t die_height, std::uint64_t seed,
                         std::int64_t block_nm) {
  if (die_width <= 0 || die_height <= 0) throw ValidationError("die extent must be positive");
  if (block_nm < 4) throw ValidationError("block size must be at least 4 nm");
  RectLayout layout{die_width, die_height, {}};
  Rng rng(seed);
  auto pick = [&rng](std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  };

  for (std::int64_t by = 0; by < die_height; by += block_nm) {
    for (std::int64_t bx = 0; bx < die_width; bx += block_nm) {
      const std::int64_t x_end = std::min(bx + block_nm, die_width);
      const std::int64_t y_end = std::min(by + block_nm, die_height);
      const std::int64_t bw = x_end - bx, bh = y_end - by;
      const int pattern = static_cast<int>(rng.below(6));
      switch (pattern) {
        case 0:  // oxide only
          break;
        case 1: {  // solid pad with a margin
          const std::int64_t m = std::min<std::int64_t>(pick(0, 3), std::min(bw, bh) / 4);
          layout.rects.push_back({bx + m, by + m, x_end - m, y_end - m});
          break;
        }
        case 2:
        case 3: {  // line/space arrays
          const std::int64_t line = pick(1, 4);
          const std::int64_t space = pick(1, 6);
          const bool horizontal = pattern == 2;
          const std::int64_t extent = horizontal ? bh : bw;
          for (std::int64_t o = 0; o + line <= extent; o += line + space) {
            if (horizontal) {
              layout.rects.push_back({bx, by + o, x_end, by + o + line});
            } else {
              layout.rects.push_back({bx + o, by, bx + o + line, y_end});
            }
          }
          break;
        }
        case 4: {  // dummy fill squares
          const std::int64_t size = pick(2, 5);
          const std::int64_t step = size + pick(1, 5);
          for (std::int64_t y = by; y + size <= y_end; y += step)
            for (std::int64_t x = bx; x + size <= x_end; x += step)
              layout.rects.push_back({x, y, x + size, y + size});
          break;
        }
        default: {  // scattered rectangles, may overlap
          const std::int64_t count = pick(2, 8);
          for (std::int64_t k = 0; k < count; ++k) {
            const std::int64_t w = pick(1, std::max<std::int64_t>(1, bw / 2));
            const std::int64_t h = pick(1, std::max<std::int64_t>(1, bh / 2));
            const std::int64_t x = bx + pick(0, bw - w);
            const std::int64_t y = by + pick(0, bh - h);
            layout.rects.push_back({x, y, x + w, y + h});
          }
          break;
        }
      }
    }
  }
  return layout;
}

}  // namespace cmpnet
