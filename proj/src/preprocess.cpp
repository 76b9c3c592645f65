#include "cmpnet/preprocess.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "cmpnet/error.hpp"
#include "cmpnet/persistence.hpp"
#include "cmpnet/random.hpp"

namespace cmpnet {

Grid2D smooth(const Grid2D& grid, const SmoothingConfig& cfg) {
  if (grid.empty()) throw ValidationError("cannot smooth an empty grid");
  if (cfg.m == 0 || cfg.n == 0 || cfg.m % 2 == 0 || cfg.n % 2 == 0) {
    throw ValidationError("smoothing window must be odd and positive, got " +
                          std::to_string(cfg.m) + "x" + std::to_string(cfg.n));
  }
  if (cfg.m > grid.height || cfg.n > grid.width) {
    throw ValidationError("smoothing window larger than the grid");
  }
  const auto h = static_cast<std::ptrdiff_t>(grid.height);
  const auto w = static_cast<std::ptrdiff_t>(grid.width);
  const auto rm = static_cast<std::ptrdiff_t>(cfg.m / 2);
  const auto rn = static_cast<std::ptrdiff_t>(cfg.n / 2);

  // Separable box sums: rows first, then columns, both clamp-to-edge.
  std::vector<double> rows(grid.size());
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    const float* src = grid.values.data() + r * w;
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t d = -rn; d <= rn; ++d) s += src[std::clamp<std::ptrdiff_t>(c + d, 0, w - 1)];
      rows[r * w + c] = s;
    }
  }
  Grid2D out(grid.height, grid.width, grid.pitch_nm);
  const double inv = 1.0 / static_cast<double>(cfg.m * cfg.n);
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t d = -rm; d <= rm; ++d) s += rows[std::clamp<std::ptrdiff_t>(r + d, 0, h - 1) * w + c];
      out.values[r * w + c] = static_cast<float>(s * inv);
    }
  }
  return out;
}

NormStats fit_norm(std::span<const Grid2D> grids) {
  NormStats stats{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  std::size_t pixels = 0;
  for (const Grid2D& g : grids) {
    for (float v : g.values) {
      stats.min = std::min(stats.min, static_cast<double>(v));
      stats.max = std::max(stats.max, static_cast<double>(v));
    }
    pixels += g.values.size();
  }
  if (pixels == 0) throw ValidationError("cannot fit normalization on zero pixels");
  return stats;
}

namespace {
void check_stats(const NormStats& s) {
  if (!(s.max >= s.min) || !std::isfinite(s.min) || !std::isfinite(s.max)) {
    throw ValidationError("invalid normalization statistics");
  }
}
}  // namespace

double normalize(double v, const NormStats& stats) {
  check_stats(stats);
  if (stats.max == stats.min) return 0.0;
  return 2.0 * (v - stats.min) / (stats.max - stats.min) - 1.0;
}

double denormalize(double v, const NormStats& stats) {
  check_stats(stats);
  return stats.min + (v + 1.0) * 0.5 * (stats.max - stats.min);
}

Grid2D normalize(const Grid2D& grid, const NormStats& stats) {
  Grid2D out = grid;
  for (float& v : out.values) v = static_cast<float>(normalize(v, stats));
  return out;
}

Grid2D denormalize(const Grid2D& grid, const NormStats& stats) {
  Grid2D out = grid;
  for (float& v : out.values) v = static_cast<float>(denormalize(v, stats));
  return out;
}

Grid2D apply_dihedral(const Grid2D& frame, int transform_id) {
  if (transform_id < 0 || transform_id >= kDihedralCount) {
    throw ValidationError("transform id must be in 0..7, got " + std::to_string(transform_id));
  }
  if (frame.height != frame.width) throw ValidationError("dihedral transforms need a square frame");
  const std::size_t n = frame.height;
  const std::size_t last = n == 0 ? 0 : n - 1;
  Grid2D out(n, n, frame.pitch_nm);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t sr = r, sc = c;
      switch (transform_id) {
        case 0: break;
        case 1: sr = c; sc = last - r; break;
        case 2: sr = last - r; sc = last - c; break;
        case 3: sr = last - c; sc = r; break;
        case 4: sc = last - c; break;
        case 5: sr = last - r; break;
        case 6: sr = last - c; sc = last - r; break;
        case 7: sr = c; sc = r; break;
      }
      out.at(r, c) = frame.at(sr, sc);
    }
  }
  return out;
}

int dihedral_inverse(int transform_id) {
  if (transform_id < 0 || transform_id >= kDihedralCount) {
    throw ValidationError("transform id must be in 0..7, got " + std::to_string(transform_id));
  }
  if (transform_id == 1) return 3;
  if (transform_id == 3) return 1;
  return transform_id;
}

std::pair<Grid2D, Grid2D> augment(const Grid2D& input, const Grid2D& target, int transform_id) {
  return {apply_dihedral(input, transform_id), apply_dihedral(target, transform_id)};
}

std::size_t tile_count(std::size_t h, std::size_t w, std::size_t frame, std::size_t stride) {
  if (frame == 0 || stride == 0 || frame > h || frame > w) return 0;
  return ((h - frame) / stride + 1) * ((w - frame) / stride + 1);
}

std::vector<FramePair> tile(const Grid2D& input, const Grid2D& target, std::size_t frame_size,
                            std::size_t stride) {
  if (input.height != target.height || input.width != target.width) {
    throw FormatError("input and target grids differ in size");
  }
  if (stride == 0) throw ValidationError("stride must be at least 1");
  if (frame_size == 0 || frame_size > input.height || frame_size > input.width) {
    throw ValidationError("frame size " + std::to_string(frame_size) + " does not fit a " +
                          std::to_string(input.height) + "x" + std::to_string(input.width) +
                          " grid");
  }
  std::vector<FramePair> frames;
  frames.reserve(tile_count(input.height, input.width, frame_size, stride));
  for (std::size_t r0 = 0; r0 + frame_size <= input.height; r0 += stride) {
    for (std::size_t c0 = 0; c0 + frame_size <= input.width; c0 += stride) {
      FramePair fp{Grid2D(frame_size, frame_size, input.pitch_nm),
                   Grid2D(frame_size, frame_size, target.pitch_nm), r0, c0};
      for (std::size_t r = 0; r < frame_size; ++r) {
        std::copy_n(input.values.begin() + (r0 + r) * input.width + c0, frame_size,
                    fp.input.values.begin() + r * frame_size);
        std::copy_n(target.values.begin() + (r0 + r) * target.width + c0, frame_size,
                    fp.target.values.begin() + r * frame_size);
      }
      frames.push_back(std::move(fp));
    }
  }
  return frames;
}

std::vector<Split> split(std::size_t count, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test fraction must lie strictly between 0 and 1");
  }
  if (count < 2) throw ValidationError("need at least 2 base frames to split");
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(count) * test_fraction));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<Split> labels(count, Split::kTrain);
  for (std::size_t i = 0; i < n_test; ++i) labels[order[i]] = Split::kTest;
  return labels;
}

std::vector<std::size_t> DataSet::indices(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == which) out.push_back(i);
  return out;
}

DataSet build_dataset(const Grid2D& raster, const Grid2D& height_nm, const DataSetConfig& cfg) {
  if (!raster.is_binary()) throw FormatError("layout raster is not binary");
  const Grid2D smoothed = smooth(height_nm, cfg.smoothing);
  std::vector<FramePair> frames = tile(raster, smoothed, cfg.frame_size, cfg.stride);

  DataSet data;
  data.config = cfg;
  data.base_count = frames.size();
  data.base_split = split(frames.size(), cfg.test_fraction, cfg.seed);

  std::vector<Grid2D> train_targets;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (data.base_split[i] == Split::kTrain) train_targets.push_back(frames[i].target);
  data.norm = fit_norm(train_targets);

  data.samples.reserve(frames.size() * kDihedralCount);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Grid2D target = normalize(frames[i].target, data.norm);
    for (int aug = 0; aug < kDihedralCount; ++aug) {
      auto [in, out] = augment(frames[i].input, target, aug);
      data.samples.push_back(Sample{std::move(in), std::move(out), i, frames[i].origin_row,
                                    frames[i].origin_col, aug, data.base_split[i]});
    }
  }
  return data;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

std::string sample_stem(std::size_t index, int aug) {
  return "sample_" + std::to_string(index) + "_" + std::to_string(aug);
}

template <typename U>
U parse_number(const std::string& text, const std::string& key) {
  U value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("manifest: bad value '" + text + "' for " + key);
  }
  return value;
}

}  // namespace

void write_dataset(const DataSet& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::size_t n_test = 0;
  for (Split s : data.base_split) n_test += s == Split::kTest;

  std::ostringstream m;
  m << "CMPDATASET 1\n";
  m << "frame_size " << data.config.frame_size << '\n';
  m << "stride " << data.config.stride << '\n';
  m << "seed " << data.config.seed << '\n';
  m << "rng mt19937_64+fisher-yates\n";
  m << "test_fraction " << format_double(data.config.test_fraction) << '\n';
  m << "smooth_m " << data.config.smoothing.m << '\n';
  m << "smooth_n " << data.config.smoothing.n << '\n';
  m << "norm_min " << format_double(data.norm.min) << '\n';
  m << "norm_max " << format_double(data.norm.max) << '\n';
  m << "base_count " << data.base_count << '\n';
  m << "train_base " << data.base_count - n_test << '\n';
  m << "test_base " << n_test << '\n';
  m << "sample_count " << data.samples.size() << '\n';
  for (std::size_t i = 0; i < data.base_count; ++i) {
    // Origins come from any augmentation of the base frame.
    const Sample& s = data.samples.at(i * kDihedralCount);
    m << "base " << i << ' ' << s.origin_row << ' ' << s.origin_col << ' '
      << (data.base_split[i] == Split::kTest ? "test" : "train") << '\n';
  }
  for (const Sample& s : data.samples) {
    const std::string stem = sample_stem(s.base_index, s.augmentation);
    write_grid(s.input, dir / (stem + "_in.cmpg"), GridDtype::kU8);
    write_grid(s.target, dir / (stem + "_out.cmpg"), GridDtype::kF32);
  }
  write_file_atomic(dir / "manifest.txt", m.str());
}

DataSet read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw FormatError((dir / "manifest.txt").string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != "CMPDATASET 1") {
    throw FormatError("manifest: missing 'CMPDATASET 1' header");
  }
  std::map<std::string, std::string> kv;
  struct Base {
    std::size_t row, col;
    Split split;
  };
  std::vector<Base> bases;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "base") {
      std::size_t idx, row, col;
      std::string label;
      if (!(ls >> idx >> row >> col >> label) || idx != bases.size() ||
          (label != "train" && label != "test")) {
        throw FormatError("manifest: malformed base line '" + line + "'");
      }
      bases.push_back({row, col, label == "test" ? Split::kTest : Split::kTrain});
    } else {
      std::string value;
      ls >> value;
      kv[key] = value;
    }
  }
  auto get = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("manifest: missing key " + key);
    return it->second;
  };

  DataSet data;
  data.config.frame_size = parse_number<std::size_t>(get("frame_size"), "frame_size");
  data.config.stride = parse_number<std::size_t>(get("stride"), "stride");
  data.config.seed = parse_number<std::uint64_t>(get("seed"), "seed");
  data.config.test_fraction = parse_number<double>(get("test_fraction"), "test_fraction");
  data.config.smoothing.m = parse_number<std::size_t>(get("smooth_m"), "smooth_m");
  data.config.smoothing.n = parse_number<std::size_t>(get("smooth_n"), "smooth_n");
  data.norm.min = parse_number<double>(get("norm_min"), "norm_min");
  data.norm.max = parse_number<double>(get("norm_max"), "norm_max");
  data.base_count = parse_number<std::size_t>(get("base_count"), "base_count");
  if (bases.size() != data.base_count) throw FormatError("manifest: base line count mismatch");
  for (const Base& b : bases) data.base_split.push_back(b.split);

  for (std::size_t i = 0; i < bases.size(); ++i) {
    for (int aug = 0; aug < kDihedralCount; ++aug) {
      const std::string stem = sample_stem(i, aug);
      Sample s;
      s.input = read_grid(dir / (stem + "_in.cmpg"));
      s.target = read_grid(dir / (stem + "_out.cmpg"));
      if (s.input.height != data.config.frame_size || s.input.width != data.config.frame_size ||
          s.target.height != data.config.frame_size || s.target.width != data.config.frame_size) {
        throw FormatError(stem + ": frame size does not match manifest");
      }
      s.base_index = i;
      s.origin_row = bases[i].row;
      s.origin_col = bases[i].col;
      s.augmentation = aug;
      s.split = bases[i].split;
      data.samples.push_back(std::move(s));
    }
  }
  if (data.samples.size() != parse_number<std::size_t>(get("sample_count"), "sample_count")) {
    throw FormatError("manifest: sample count mismatch");
  }
  return data;
}

}  // namespace cmpnet
