#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "cmpnet/error.hpp"
#include "cmpnet/preprocess.hpp"
#include "cmpnet/random.hpp"

using namespace cmpnet;
namespace fs = std::filesystem;

namespace {

Grid2D make_grid(std::size_t h, std::size_t w, std::vector<float> v) {
  Grid2D g(h, w, 1.0);
  g.values = std::move(v);
  return g;
}

Grid2D random_grid(Rng& rng, std::size_t h, std::size_t w, double lo = -10, double hi = 10) {
  Grid2D g(h, w, 1.0);
  for (float& v : g.values) v = static_cast<float>(rng.uniform(lo, hi));
  return g;
}

// Direct neighbourhood sum with clamped coordinates.
Grid2D smooth_reference(const Grid2D& g, std::size_t m, std::size_t n) {
  Grid2D out(g.height, g.width, g.pitch_nm);
  const auto hm = static_cast<long>(m / 2), hn = static_cast<long>(n / 2);
  const auto H = static_cast<long>(g.height), W = static_cast<long>(g.width);
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      double sum = 0;
      for (long dr = -hm; dr <= hm; ++dr)
        for (long dc = -hn; dc <= hn; ++dc)
          sum += g.at(std::clamp(r + dr, 0L, H - 1), std::clamp(c + dc, 0L, W - 1));
      out.at(r, c) = static_cast<float>(sum / static_cast<double>(m * n));
    }
  }
  return out;
}

// Element id as explicit source coordinates for output pixel (r, c).
Grid2D dihedral_reference(const Grid2D& g, int id) {
  const std::size_t n = g.height;
  Grid2D out(n, n, g.pitch_nm);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t rr = n - 1 - r, cc = n - 1 - c;
      float v = 0;
      switch (id) {
        case 0: v = g.at(r, c); break;
        case 1: v = g.at(c, rr); break;
        case 2: v = g.at(rr, cc); break;
        case 3: v = g.at(cc, r); break;
        case 4: v = g.at(r, cc); break;
        case 5: v = g.at(rr, c); break;
        case 6: v = g.at(cc, rr); break;
        case 7: v = g.at(c, r); break;
      }
      out.at(r, c) = v;
    }
  }
  return out;
}

Grid2D random_raster(Rng& rng, std::size_t h, std::size_t w) {
  Grid2D g(h, w, 1.0);
  for (float& v : g.values) v = static_cast<float>(rng.below(2));
  return g;
}

}  // namespace

TEST_CASE("smooth examples") {
  Grid2D c(6, 7, 1.0, 2.5f);
  CHECK(smooth(c, {3, 5}) == c);

  Grid2D spike = make_grid(3, 3, {0, 0, 0, 0, 9, 0, 0, 0, 0});
  CHECK(smooth(spike, {3, 3}).at(1, 1) == doctest::Approx(1.0));

  Rng rng(1);
  const Grid2D g = random_grid(rng, 5, 8);
  CHECK(smooth(g, {1, 1}) == g);
}

TEST_CASE("smooth errors") {
  Grid2D g(4, 6, 1.0);
  CHECK_THROWS_AS(smooth(g, {2, 3}), ValidationError);
  CHECK_THROWS_AS(smooth(g, {3, 4}), ValidationError);
  CHECK_THROWS_AS(smooth(g, {0, 3}), ValidationError);
  CHECK_THROWS_AS(smooth(g, {5, 3}), ValidationError);
  CHECK_THROWS_AS(smooth(g, {3, 7}), ValidationError);
  CHECK_THROWS_AS(smooth(Grid2D{}, {1, 1}), ValidationError);
}

TEST_CASE("smooth matches the clamped neighbourhood mean") {
  Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t h = 1 + rng.below(12), w = 1 + rng.below(12);
    const std::size_t m = 1 + 2 * rng.below((h + 1) / 2), n = 1 + 2 * rng.below((w + 1) / 2);
    const Grid2D g = random_grid(rng, h, w);
    const Grid2D got = smooth(g, {m, n});
    const Grid2D want = smooth_reference(g, m, n);
    REQUIRE(got.height == h);
    REQUIRE(got.width == w);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.values[i] == doctest::Approx(want.values[i]).epsilon(1e-5));
  }
}

TEST_CASE("smooth stays within the input range and keeps interior means") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Grid2D g = random_grid(rng, 10 + rng.below(10), 10 + rng.below(10));
    const Grid2D s = smooth(g, {5, 3});
    const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
    for (float v : s.values) {
      CHECK(v >= *lo - 1e-5f);
      CHECK(v <= *hi + 1e-5f);
    }
  }
  // A bump surrounded by a constant margin wider than the window keeps its mass.
  Grid2D g(20, 20, 1.0, 1.0f);
  for (std::size_t r = 8; r < 12; ++r)
    for (std::size_t c = 7; c < 13; ++c) g.at(r, c) = static_cast<float>(r * c % 7);
  const Grid2D s = smooth(g, {5, 5});
  double a = 0, b = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    a += g.values[i];
    b += s.values[i];
  }
  CHECK(b == doctest::Approx(a).epsilon(1e-6));
}

TEST_CASE("fit_norm examples and errors") {
  CHECK(fit_norm(std::vector{make_grid(1, 3, {2, 4, 6})}) == NormStats{2, 6});
  CHECK(fit_norm(std::vector{make_grid(1, 1, {5})}) == NormStats{5, 5});
  CHECK(fit_norm(std::vector{make_grid(1, 2, {0, 1}), make_grid(1, 2, {-3, 2})}) == NormStats{-3, 2});
  CHECK_THROWS_AS(fit_norm(std::vector<Grid2D>{}), ValidationError);
  CHECK_THROWS_AS(fit_norm(std::vector<Grid2D>{Grid2D{}}), ValidationError);
}

TEST_CASE("normalize examples") {
  const NormStats s{2, 6};
  CHECK(normalize(2.0, s) == -1.0);
  CHECK(normalize(6.0, s) == 1.0);
  CHECK(normalize(4.0, s) == 0.0);
  CHECK(normalize(8.0, s) == 2.0);  // outside the fitted range stays unclipped
  CHECK(normalize(123.0, NormStats{3, 3}) == 0.0);
  CHECK_THROWS_AS(normalize(0.0, NormStats{1, 0}), ValidationError);
}

TEST_CASE("normalize and denormalize are inverse") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double lo = rng.uniform(-1e3, 1e3);
    const NormStats s{lo, lo + rng.uniform(1e-3, 1e3)};
    const double v = rng.uniform(-2e3, 2e3);
    const double back = denormalize(normalize(v, s), s);
    CHECK(std::abs(back - v) <= 1e-12 * std::max({std::abs(v), std::abs(s.min), std::abs(s.max)}));
  }
  const Grid2D g = random_grid(rng, 4, 4);
  const NormStats s = fit_norm(std::vector{g});
  const Grid2D n = normalize(g, s);
  for (float v : n.values) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  const Grid2D back = denormalize(n, s);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(back.values[i] == doctest::Approx(g.values[i]).epsilon(1e-5));
}

TEST_CASE("dihedral examples") {
  const Grid2D g = make_grid(2, 2, {1, 2, 3, 4});
  CHECK(apply_dihedral(g, 0) == g);
  CHECK(apply_dihedral(g, 4) == make_grid(2, 2, {2, 1, 4, 3}));
  CHECK(apply_dihedral(g, 5) == make_grid(2, 2, {3, 4, 1, 2}));
  CHECK(apply_dihedral(g, 1) == make_grid(2, 2, {2, 4, 1, 3}));
  CHECK(apply_dihedral(apply_dihedral(g, 1), 1) == apply_dihedral(g, 2));
  CHECK_THROWS_AS(apply_dihedral(g, 8), ValidationError);
  CHECK_THROWS_AS(apply_dihedral(g, -1), ValidationError);
  CHECK_THROWS_AS(apply_dihedral(Grid2D(2, 3, 1.0), 1), ValidationError);
  CHECK_THROWS_AS(dihedral_inverse(8), ValidationError);
}

TEST_CASE("dihedral transforms match coordinate maps and form a group") {
  Rng rng(5);
  for (std::size_t n : {1, 2, 3, 5, 8}) {
    const Grid2D g = random_grid(rng, n, n);
    for (int id = 0; id < kDihedralCount; ++id) {
      const Grid2D t = apply_dihedral(g, id);
      CHECK(t == dihedral_reference(g, id));
      CHECK(apply_dihedral(t, dihedral_inverse(id)) == g);
      std::vector<float> a = g.values, b = t.values;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
  // Closure: any composition is again one of the eight.
  const Grid2D g = random_grid(rng, 6, 6);
  std::vector<Grid2D> images;
  for (int id = 0; id < kDihedralCount; ++id) images.push_back(apply_dihedral(g, id));
  for (int a = 0; a < kDihedralCount; ++a) {
    for (int b = 0; b < kDihedralCount; ++b) {
      const Grid2D ab = apply_dihedral(images[a], b);
      CHECK(std::count(images.begin(), images.end(), ab) == 1);
    }
  }
  // Pairwise distinct on a generic frame.
  for (int a = 0; a < kDihedralCount; ++a)
    for (int b = a + 1; b < kDihedralCount; ++b) CHECK_FALSE(images[a] == images[b]);
}

TEST_CASE("augment applies one element to both frames") {
  Rng rng(6);
  const Grid2D in = random_raster(rng, 7, 7);
  const Grid2D out = random_grid(rng, 7, 7);
  for (int id = 0; id < kDihedralCount; ++id) {
    const auto [a, b] = augment(in, out, id);
    CHECK(a == apply_dihedral(in, id));
    CHECK(b == apply_dihedral(out, id));
  }
}

TEST_CASE("tile examples and errors") {
  Grid2D a(128, 128, 1.0), b(128, 128, 1.0);
  CHECK(tile(a, b, 64, 64).size() == 4);
  CHECK(tile(a, b, 128, 7).size() == 1);
  CHECK(tile(a, b, 128, 1).size() == 1);
  CHECK_THROWS_AS(tile(a, Grid2D(128, 127, 1.0), 64, 64), FormatError);
  CHECK_THROWS_AS(tile(a, b, 129, 64), ValidationError);
  CHECK_THROWS_AS(tile(a, b, 64, 0), ValidationError);
}

TEST_CASE("tile count follows the closed form and frames are aligned cuts") {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t h = 1 + rng.below(40), w = 1 + rng.below(40);
    const std::size_t f = 1 + rng.below(std::min(h, w));
    const std::size_t s = 1 + rng.below(20);
    const Grid2D in = random_raster(rng, h, w);
    const Grid2D out = random_grid(rng, h, w);
    const auto frames = tile(in, out, f, s);
    const std::size_t want = ((h - f) / s + 1) * ((w - f) / s + 1);
    CHECK(frames.size() == want);
    CHECK(tile_count(h, w, f, s) == want);
    for (const FramePair& p : frames) {
      CHECK(p.origin_row % s == 0);
      CHECK(p.origin_col % s == 0);
      REQUIRE(p.input.height == f);
      REQUIRE(p.target.width == f);
      for (std::size_t r = 0; r < f; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
          CHECK(p.input.at(r, c) == in.at(p.origin_row + r, p.origin_col + c));
          CHECK(p.target.at(r, c) == out.at(p.origin_row + r, p.origin_col + c));
        }
      }
    }
  }
}

TEST_CASE("split examples and errors") {
  const auto labels = split(10, 0.2, 42);
  CHECK(std::count(labels.begin(), labels.end(), Split::kTest) == 2);
  CHECK(split(10, 0.2, 42) == labels);
  CHECK_THROWS_AS(split(1, 0.2, 0), ValidationError);
  CHECK_THROWS_AS(split(10, 0.0, 0), ValidationError);
  CHECK_THROWS_AS(split(10, 1.0, 0), ValidationError);
}

TEST_CASE("split size is round(count * fraction) and seeds differ") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(200);
    const double f = rng.uniform(0.01, 0.99);
    const auto labels = split(n, f, rng.below(1000));
    CHECK(static_cast<long long>(std::count(labels.begin(), labels.end(), Split::kTest)) ==
          std::llround(static_cast<double>(n) * f));
  }
  std::set<std::vector<Split>> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) seen.insert(split(50, 0.2, seed));
  CHECK(seen.size() > 15);
}

TEST_CASE("build_dataset: 10 base frames give 80 samples, 16 test") {
  Rng rng(9);
  const Grid2D raster = random_raster(rng, 32, 80);
  const Grid2D height = random_grid(rng, 32, 80, -30, 0);
  DataSetConfig cfg;
  cfg.frame_size = 16;
  cfg.stride = 16;
  cfg.smoothing = {3, 3};
  const DataSet d = build_dataset(raster, height, cfg);
  CHECK(d.base_count == 10);
  CHECK(d.samples.size() == 80);
  CHECK(d.indices(Split::kTest).size() == 16);
  CHECK(d.indices(Split::kTrain).size() == 64);
}

TEST_CASE("build_dataset invariants") {
  Rng rng(10);
  const Grid2D raster = random_raster(rng, 48, 40);
  const Grid2D height = random_grid(rng, 48, 40, -50, 5);
  DataSetConfig cfg;
  cfg.frame_size = 16;
  cfg.stride = 8;
  cfg.test_fraction = 0.3;
  cfg.seed = 11;
  cfg.smoothing = {5, 3};
  const DataSet d = build_dataset(raster, height, cfg);

  const Grid2D smoothed = smooth(height, cfg.smoothing);
  const auto frames = tile(raster, smoothed, cfg.frame_size, cfg.stride);
  REQUIRE(d.base_count == frames.size());
  CHECK(d.base_split == split(frames.size(), cfg.test_fraction, cfg.seed));

  // Normalization sees training base frames only.
  std::vector<Grid2D> train;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (d.base_split[i] == Split::kTrain) train.push_back(frames[i].target);
  CHECK(d.norm == fit_norm(train));

  REQUIRE(d.samples.size() == 8 * frames.size());
  for (std::size_t k = 0; k < d.samples.size(); ++k) {
    const Sample& s = d.samples[k];
    CHECK(s.base_index == k / 8);
    CHECK(s.augmentation == static_cast<int>(k % 8));
    CHECK(s.split == d.base_split[s.base_index]);
    CHECK(s.input.height == cfg.frame_size);
    CHECK(s.target.width == cfg.frame_size);
    CHECK(s.input.is_binary());
    const FramePair& base = frames[s.base_index];
    CHECK(s.origin_row == base.origin_row);
    CHECK(s.input == apply_dihedral(base.input, s.augmentation));
    CHECK(s.target == apply_dihedral(normalize(base.target, d.norm), s.augmentation));
    if (s.split == Split::kTrain) {
      for (float v : s.target.values) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
}

TEST_CASE("build_dataset rejects a non-binary raster") {
  Grid2D raster(16, 32, 1.0, 0.5f);
  CHECK_THROWS_AS(build_dataset(raster, Grid2D(16, 32, 1.0), DataSetConfig{16, 16, 0.5, 0, {1, 1}}), FormatError);
}

TEST_CASE("dataset directory round-trip") {
  Rng rng(12);
  const Grid2D raster = random_raster(rng, 24, 24);
  const Grid2D height = random_grid(rng, 24, 24, -20, 1);
  const DataSet d = build_dataset(raster, height, DataSetConfig{8, 8, 0.25, 5, {3, 3}});
  const fs::path dir = fs::temp_directory_path() / "cmpnet_test_dataset";
  fs::remove_all(dir);
  write_dataset(d, dir);
  CHECK(fs::exists(dir / "manifest.txt"));
  CHECK(fs::exists(dir / "sample_0_7_in.cmpg"));
  CHECK(fs::exists(dir / "sample_8_0_out.cmpg"));

  const DataSet back = read_dataset(dir);
  CHECK(back.norm == d.norm);
  CHECK(back.base_count == d.base_count);
  CHECK(back.base_split == d.base_split);
  CHECK(back.config.frame_size == 8);
  CHECK(back.config.seed == 5);
  CHECK(back.config.test_fraction == 0.25);
  REQUIRE(back.samples.size() == d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    CHECK(back.samples[i].input == d.samples[i].input);
    CHECK(back.samples[i].target == d.samples[i].target);
    CHECK(back.samples[i].split == d.samples[i].split);
    CHECK(back.samples[i].augmentation == d.samples[i].augmentation);
  }

  fs::remove(dir / "sample_3_2_out.cmpg");
  CHECK_THROWS_AS(read_dataset(dir), FormatError);
  fs::remove_all(dir);
  CHECK_THROWS_AS(read_dataset(dir), FormatError);
}

TEST_CASE("format_double round-trips") {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, static_cast<double>(rng.below(20)) - 10);
    CHECK(std::stod(format_double(v)) == v);
  }
}
