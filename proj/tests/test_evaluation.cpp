#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cmpnet/error.hpp"
#include "cmpnet/evaluation.hpp"
#include "cmpnet/model.hpp"
#include "cmpnet/random.hpp"

using namespace cmpnet;

namespace {

Grid2D random_grid(Rng& rng, std::size_t h, std::size_t w, double lo = -20, double hi = 5) {
  Grid2D g(h, w, 1.0);
  for (float& v : g.values) v = static_cast<float>(rng.uniform(lo, hi));
  return g;
}

// Dyadic values: exact in float and under affine maps with dyadic coefficients.
Grid2D dyadic_grid(Rng& rng, std::size_t h, std::size_t w) {
  Grid2D g(h, w, 1.0);
  for (float& v : g.values) v = static_cast<float>(static_cast<double>(rng.below(2049)) / 1024.0 - 1.0);
  return g;
}

Grid2D random_raster(Rng& rng, std::size_t h, std::size_t w, double pitch = 1.0) {
  Grid2D g(h, w, pitch);
  for (float& v : g.values) v = static_cast<float>(rng.below(2));
  return g;
}

struct Direct {
  double l1, rmse;
};

Direct direct_metrics(const std::vector<Grid2D>& p, const std::vector<Grid2D>& t) {
  double a = 0, s = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    double sa = 0, ss = 0;
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double d = static_cast<double>(t[k].values[i]) - p[k].values[i];
      sa += std::abs(d);
      ss += d * d;
    }
    a += sa / static_cast<double>(p[k].height * p[k].width);
    s += ss / static_cast<double>(p[k].height * p[k].width);
  }
  return {a / static_cast<double>(p.size()), std::sqrt(s / static_cast<double>(p.size()))};
}

ModelState small_state(std::uint64_t seed, NormStats norm = {-40, 2}) {
  return ModelState{UNet<float>::init(UNetConfig{2, 4, 3, 16}, seed), norm, std::nullopt, 0};
}

}  // namespace

TEST_CASE("metric examples") {
  Rng rng(1);
  const std::vector<Grid2D> truth{random_grid(rng, 4, 5), random_grid(rng, 4, 5)};
  CHECK(l1(truth, truth) == 0.0);
  CHECK(rmse(truth, truth) == 0.0);
  std::vector<Grid2D> shifted = truth;
  for (Grid2D& g : shifted)
    for (float& v : g.values) v += 2.0f;
  CHECK(l1(shifted, truth) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(rmse(shifted, truth) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("metric errors") {
  const std::vector<Grid2D> a{Grid2D(2, 2, 1.0)}, b{Grid2D(2, 3, 1.0)};
  CHECK_THROWS_AS(l1(a, b), FormatError);
  CHECK_THROWS_AS(rmse(a, std::vector<Grid2D>{}), FormatError);
  CHECK_THROWS_AS(compute_metrics(std::vector<Grid2D>{}, std::vector<Grid2D>{}), ValidationError);
}

TEST_CASE("metrics match the direct formulas") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(5);
    std::vector<Grid2D> p, t;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t h = 1 + rng.below(9), w = 1 + rng.below(9);
      p.push_back(random_grid(rng, h, w));
      t.push_back(random_grid(rng, h, w));
    }
    const Metrics m = compute_metrics(p, t);
    const Direct d = direct_metrics(p, t);
    CHECK(m.l1_nm == doctest::Approx(d.l1).epsilon(1e-12));
    CHECK(m.rmse_nm == doctest::Approx(d.rmse).epsilon(1e-12));
    CHECK(m.sample_count == n);
    REQUIRE(m.per_sample.size() == n);
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(m.per_sample[k].rmse_nm >= m.per_sample[k].l1_nm);
      const Direct dk = direct_metrics({p[k]}, {t[k]});
      CHECK(m.per_sample[k].l1_nm == doctest::Approx(dk.l1).epsilon(1e-12));
    }
  }
}

TEST_CASE("metrics are invariant under a shared dihedral transform") {
  Rng rng(3);
  std::vector<Grid2D> p{random_grid(rng, 6, 6), random_grid(rng, 6, 6)};
  std::vector<Grid2D> t{random_grid(rng, 6, 6), random_grid(rng, 6, 6)};
  const Metrics base = compute_metrics(p, t);
  for (int id = 0; id < kDihedralCount; ++id) {
    std::vector<Grid2D> pt, tt;
    for (std::size_t k = 0; k < p.size(); ++k) {
      pt.push_back(apply_dihedral(p[k], id));
      tt.push_back(apply_dihedral(t[k], id));
    }
    const Metrics m = compute_metrics(pt, tt);
    CHECK(m.l1_nm == doctest::Approx(base.l1_nm).epsilon(1e-12));
    CHECK(m.rmse_nm == doctest::Approx(base.rmse_nm).epsilon(1e-12));
  }
}

TEST_CASE("normalized metrics rescale to nanometre metrics") {
  Rng rng(4);
  const NormStats stats{-3.0, 5.0};
  std::vector<Grid2D> p, t, pn, tn;
  for (int k = 0; k < 3; ++k) {
    pn.push_back(dyadic_grid(rng, 8, 8));
    tn.push_back(dyadic_grid(rng, 8, 8));
    p.push_back(denormalize(pn.back(), stats));
    t.push_back(denormalize(tn.back(), stats));
  }
  const double scale = (stats.max - stats.min) / 2.0;
  const Metrics nm = compute_metrics(p, t);
  const Metrics unit = compute_metrics(pn, tn);
  CHECK(std::abs(unit.l1_nm * scale - nm.l1_nm) <= 1e-9 * nm.l1_nm);
  CHECK(std::abs(unit.rmse_nm * scale - nm.rmse_nm) <= 1e-9 * nm.rmse_nm);
}

TEST_CASE("metrics csv and summary line") {
  Metrics m;
  m.l1_nm = 0.5;
  m.rmse_nm = 0.75;
  m.sample_count = 2;
  m.seconds_per_sample = 0.125;
  m.per_sample = {{0, 0.25, 1.0 / 3.0}, {1, 0.75, 1.0}};
  CHECK(metrics_csv(m) == "sample,l1_nm,rmse_nm\n0,0.25,0.333333333\n1,0.75,1\n");
  CHECK(summary_line(m) == "L1=0.5nm RMSE=0.75nm n=2 t_inf=0.125s");
}

TEST_CASE("cross sections") {
  Grid2D c(3, 5, 2.5, -7.25f);
  const auto pts = cross_section(c, 1);
  REQUIRE(pts.size() == 5);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].x_nm == doctest::Approx((static_cast<double>(i) + 0.5) * 2.5));
    CHECK(pts[i].height_nm == -7.25);
  }
  CHECK_THROWS_AS(cross_section(c, 3), ValidationError);

  Rng rng(5);
  const Grid2D a = random_grid(rng, 4, 9), b = random_grid(rng, 4, 9);
  const std::string csv = cross_section_csv(a, 2, &b);
  CHECK(csv.rfind("x_nm,height_nm,height2_nm\n", 0) == 0);
  const auto rows = parse_csv_numbers(csv);
  REQUIRE(rows.size() == 9);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 3);
    CHECK(rows[i][1] == doctest::Approx(a.at(2, i)).epsilon(1e-8));
    CHECK(rows[i][2] == doctest::Approx(b.at(2, i)).epsilon(1e-8));
  }
  CHECK(cross_section_csv(a, 0).rfind("x_nm,height_nm\n", 0) == 0);
  CHECK_THROWS_AS(cross_section_csv(a, 0, &c), FormatError);
}

TEST_CASE("reflect_index") {
  CHECK(reflect_index(0, 4) == 0);
  CHECK(reflect_index(3, 4) == 3);
  CHECK(reflect_index(4, 4) == 2);
  CHECK(reflect_index(6, 4) == 0);
  CHECK(reflect_index(7, 4) == 1);
  CHECK(reflect_index(-1, 4) == 1);
  CHECK(reflect_index(100, 1) == 0);
  for (std::ptrdiff_t i = -50; i < 50; ++i) CHECK(reflect_index(i, 5) < 5);
}

TEST_CASE("timed_predict is deterministic, bounded and timed") {
  const ModelState s = small_state(1);
  Rng rng(6);
  const Grid2D raster = random_raster(rng, 40, 24);
  for (bool full : {false, true}) {
    PredictOptions opt;
    opt.full_frame = full;
    const Prediction a = timed_predict(s, raster, opt);
    const Prediction b = timed_predict(s, raster, opt);
    CHECK(a.heights_nm == b.heights_nm);
    CHECK(a.heights_nm.height == 40);
    CHECK(a.heights_nm.width == 24);
    CHECK(a.seconds > 0.0);
    CHECK(a.warnings.empty());
    for (float v : a.heights_nm.values) {
      CHECK(v >= s.norm.min - 1e-4);
      CHECK(v <= s.norm.max + 1e-4);
    }
  }
}

TEST_CASE("stitched prediction equals per-frame inference") {
  const ModelState s = small_state(2);
  Rng rng(7);
  const Grid2D raster = random_raster(rng, 32, 48);
  PredictOptions opt;
  opt.batch_size = 4;
  const Prediction p = timed_predict(s, raster, opt);
  for (std::size_t r0 = 0; r0 < 32; r0 += 16) {
    for (std::size_t c0 = 0; c0 < 48; c0 += 16) {
      Tensor<float> x(Shape4{1, 1, 16, 16});
      for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) x.at(0, 0, r, c) = raster.at(r0 + r, c0 + c);
      const Tensor<float> y = s.net.predict(x);
      for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c)
          CHECK(p.heights_nm.at(r0 + r, c0 + c) == static_cast<float>(denormalize(y.at(0, 0, r, c), s.norm)));
    }
  }
}

TEST_CASE("full-frame prediction of a divisible grid is one forward pass") {
  const ModelState s = small_state(3);
  Rng rng(8);
  const Grid2D raster = random_raster(rng, 20, 36);
  PredictOptions opt;
  opt.full_frame = true;
  const Prediction p = timed_predict(s, raster, opt);
  // 20 x 36 pads to 20 x 36 (already divisible by 4).
  Tensor<float> x(Shape4{1, 1, 20, 36});
  for (std::size_t i = 0; i < raster.size(); ++i) x[i] = raster.values[i];
  const Tensor<float> y = s.net.predict(x);
  for (std::size_t i = 0; i < raster.size(); ++i)
    CHECK(p.heights_nm.values[i] == static_cast<float>(denormalize(y[i], s.norm)));
}

TEST_CASE("timed_predict pads odd sizes and warns on pitch mismatch") {
  const ModelState s = small_state(4);
  Rng rng(9);
  const Grid2D raster = random_raster(rng, 5, 3, 2.0);
  PredictOptions opt;
  opt.expected_pitch_nm = 1.0;
  const Prediction p = timed_predict(s, raster, opt);
  CHECK(p.heights_nm.height == 5);
  CHECK(p.heights_nm.width == 3);
  CHECK(p.heights_nm.pitch_nm == 2.0);
  REQUIRE(p.warnings.size() == 1);
  CHECK(p.warnings[0].find("pitch") != std::string::npos);

  CHECK_THROWS_AS(timed_predict(s, Grid2D(4, 4, 1.0, 0.5f)), FormatError);
  CHECK_THROWS_AS(timed_predict(s, Grid2D{}), ValidationError);
}
