#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmpnet/grid.hpp"
#include "cmpnet/model.hpp"

namespace cmpnet {

struct SampleMetrics {
  std::size_t sample = 0;
  double l1_nm = 0.0;
  double rmse_nm = 0.0;
};

struct Metrics {
  double l1_nm = 0.0;
  double rmse_nm = 0.0;
  std::size_t sample_count = 0;
  std::vector<SampleMetrics> per_sample;
  double seconds_per_sample = 0.0;
};

/// Mean over samples of sum|y - f(x)| / (h*w).
double l1(std::span<const Grid2D> pred, std::span<const Grid2D> truth);
/// sqrt of the mean over samples of sum (y - f(x))^2 / (h*w).
double rmse(std::span<const Grid2D> pred, std::span<const Grid2D> truth);
/// Both aggregates plus the per-sample breakdown.
Metrics compute_metrics(std::span<const Grid2D> pred, std::span<const Grid2D> truth);

/// "sample,l1_nm,rmse_nm" rows.
std::string metrics_csv(const Metrics& m);
/// "L1=<v>nm RMSE=<v>nm n=<count> t_inf=<v>s"
std::string summary_line(const Metrics& m);

struct ProfilePoint {
  double x_nm = 0.0;
  double height_nm = 0.0;
};

/// One point per column of `row`, at x = (col + 0.5) * pitch.
std::vector<ProfilePoint> cross_section(const Grid2D& grid, std::size_t row);

/// "x_nm,height_nm" or, with a second grid, "x_nm,height_nm,height2_nm";
/// 9 significant digits.
std::string cross_section_csv(const Grid2D& grid, std::size_t row,
                              const Grid2D* second = nullptr);
/// Parses cross_section_csv output into rows of numbers.
std::vector<std::vector<double>> parse_csv_numbers(const std::string& text);

struct PredictOptions {
  /// Stitch non-overlapping frames of the checkpoint's frame size; otherwise
  /// run the whole (padded) grid through the network at once.
  bool full_frame = false;
  std::size_t batch_size = 8;
  /// Pitch the model was trained at; a mismatch yields a warning.
  std::optional<double> expected_pitch_nm;
};

struct Prediction {
  Grid2D heights_nm;
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

/// Predicts post-polish heights for a binary raster of any size. The grid is
/// reflect-padded up to the working size and the result cropped back.
Prediction timed_predict(const ModelState& state, const Grid2D& raster,
                         const PredictOptions& options = {});

/// Index into [0, n) by mirror reflection without repeating the edge pixel.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

}  // namespace cmpnet
