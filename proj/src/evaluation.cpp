#include "cmpnet/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cmpnet/error.hpp"
#include "cmpnet/preprocess.hpp"

namespace cmpnet {
namespace {

void check_pairs(std::span<const Grid2D> pred, std::span<const Grid2D> truth) {
  if (pred.empty()) throw ValidationError("metrics need at least one sample");
  if (pred.size() != truth.size()) throw FormatError("prediction and truth counts differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].height != truth[i].height || pred[i].width != truth[i].width) {
      throw FormatError("prediction and truth differ in size for sample " + std::to_string(i));
    }
    if (pred[i].empty()) throw FormatError("empty sample " + std::to_string(i));
  }
}

// Sum of |d| and d^2 over one sample, divided by the pixel count.
std::pair<double, double> sample_means(const Grid2D& pred, const Grid2D& truth) {
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(truth.values[i]) - static_cast<double>(pred.values[i]);
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  const auto n = static_cast<double>(pred.size());
  return {abs_sum / n, sq_sum / n};
}

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

}  // namespace

double l1(std::span<const Grid2D> pred, std::span<const Grid2D> truth) {
  return compute_metrics(pred, truth).l1_nm;
}

double rmse(std::span<const Grid2D> pred, std::span<const Grid2D> truth) {
  return compute_metrics(pred, truth).rmse_nm;
}

Metrics compute_metrics(std::span<const Grid2D> pred, std::span<const Grid2D> truth) {
  check_pairs(pred, truth);
  Metrics m;
  m.sample_count = pred.size();
  double l1_total = 0.0, mse_total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto [mae, mse] = sample_means(pred[i], truth[i]);
    l1_total += mae;
    mse_total += mse;
    m.per_sample.push_back({i, mae, std::sqrt(mse)});
  }
  const auto n = static_cast<double>(pred.size());
  m.l1_nm = l1_total / n;
  m.rmse_nm = std::sqrt(mse_total / n);
  return m;
}

std::string metrics_csv(const Metrics& m) {
  std::ostringstream out;
  out << "sample,l1_nm,rmse_nm\n";
  for (const SampleMetrics& s : m.per_sample) {
    out << s.sample << ',' << fmt(s.l1_nm, 9) << ',' << fmt(s.rmse_nm, 9) << '\n';
  }
  return out.str();
}

std::string summary_line(const Metrics& m) {
  return "L1=" + fmt(m.l1_nm, 6) + "nm RMSE=" + fmt(m.rmse_nm, 6) +
         "nm n=" + std::to_string(m.sample_count) + " t_inf=" + fmt(m.seconds_per_sample, 6) +
         "s";
}

std::vector<ProfilePoint> cross_section(const Grid2D& grid, std::size_t row) {
  if (row >= grid.height) {
    throw ValidationError("row " + std::to_string(row) + " outside grid of height " +
                          std::to_string(grid.height));
  }
  std::vector<ProfilePoint> points(grid.width);
  for (std::size_t c = 0; c < grid.width; ++c) {
    points[c] = {(static_cast<double>(c) + 0.5) * grid.pitch_nm, grid.at(row, c)};
  }
  return points;
}

std::string cross_section_csv(const Grid2D& grid, std::size_t row, const Grid2D* second) {
  const auto first = cross_section(grid, row);
  std::vector<ProfilePoint> other;
  if (second != nullptr) {
    if (second->height != grid.height || second->width != grid.width) {
      throw FormatError("cross-section grids differ in size");
    }
    other = cross_section(*second, row);
  }
  std::ostringstream out;
  out << (second ? "x_nm,height_nm,height2_nm\n" : "x_nm,height_nm\n");
  for (std::size_t i = 0; i < first.size(); ++i) {
    out << fmt(first[i].x_nm, 9) << ',' << fmt(first[i].height_nm, 9);
    if (second) out << ',' << fmt(other[i].height_nm, 9);
    out << '\n';
  }
  return out.str();
}

std::vector<std::vector<double>> parse_csv_numbers(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("bad CSV number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - m);
}

namespace {

std::size_t round_up(std::size_t v, std::size_t multiple) {
  return (v + multiple - 1) / multiple * multiple;
}

}  // namespace

Prediction timed_predict(const ModelState& state, const Grid2D& raster,
                         const PredictOptions& options) {
  if (raster.empty()) throw ValidationError("cannot predict an empty grid");
  if (!raster.is_binary()) throw FormatError("prediction input is not a binary raster");
  Prediction result;
  if (options.expected_pitch_nm && *options.expected_pitch_nm != raster.pitch_nm) {
    result.warnings.push_back("raster pitch " + format_double(raster.pitch_nm) +
                              " nm differs from the training pitch " +
                              format_double(*options.expected_pitch_nm) + " nm");
  }
  const auto start = std::chrono::steady_clock::now();

  const UNetConfig& cfg = state.config();
  const std::size_t unit =
      options.full_frame ? (std::size_t{1} << cfg.depth) : static_cast<std::size_t>(cfg.frame_size);
  const std::size_t ph = round_up(raster.height, unit);
  const std::size_t pw = round_up(raster.width, unit);
  const std::size_t tile_h = options.full_frame ? ph : unit;
  const std::size_t tile_w = options.full_frame ? pw : unit;
  const std::size_t tiles_y = ph / tile_h, tiles_x = pw / tile_w;
  const std::size_t tile_count = tiles_y * tiles_x;
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

  Grid2D out(raster.height, raster.width, raster.pitch_nm);
  for (std::size_t first = 0; first < tile_count; first += batch) {
    const std::size_t n = std::min(batch, tile_count - first);
    Tensor<float> x(Shape4{n, 1, tile_h, tile_w});
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t r0 = ((first + k) / tiles_x) * tile_h;
      const std::size_t c0 = ((first + k) % tiles_x) * tile_w;
      for (std::size_t r = 0; r < tile_h; ++r) {
        const std::size_t sr = reflect_index(static_cast<std::ptrdiff_t>(r0 + r), raster.height);
        for (std::size_t c = 0; c < tile_w; ++c) {
          const std::size_t sc = reflect_index(static_cast<std::ptrdiff_t>(c0 + c), raster.width);
          x.at(k, 0, r, c) = raster.at(sr, sc);
        }
      }
    }
    const Tensor<float> y = state.net.predict(x);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t r0 = ((first + k) / tiles_x) * tile_h;
      const std::size_t c0 = ((first + k) % tiles_x) * tile_w;
      for (std::size_t r = 0; r < tile_h && r0 + r < raster.height; ++r) {
        for (std::size_t c = 0; c < tile_w && c0 + c < raster.width; ++c) {
          out.at(r0 + r, c0 + c) = static_cast<float>(denormalize(y.at(k, 0, r, c), state.norm));
        }
      }
    }
  }
  result.heights_nm = std::move(out);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  result.seconds = std::max(elapsed.count(), 1e-9);
  return result;
}

}  // namespace cmpnet
