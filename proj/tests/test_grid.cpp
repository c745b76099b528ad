#include <cmath>

#include "doctest.h"
#include "sobotrim/grid.hpp"
#include "test_util.hpp"

using namespace sobotrim;

TEST_CASE("gradient: constant map is exactly zero") {
  Grid g(2, 17, 1.0);
  auto u = constant_map(g, {3.0, -1.0});
  auto gf = gradient(u);
  for (double v : gf.entries) CHECK(v == 0.0);
}

TEST_CASE("gradient: identity map gives identity Jacobian everywhere") {
  Grid g(2, 17, 1.0);
  auto u = identity_map(g);
  auto gf = gradient(u);
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    auto e = gf.at(n);
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 2; ++c) CHECK(e[i * 2 + c] == doctest::Approx(i == c ? 1.0 : 0.0).epsilon(1e-12));
  }
}

TEST_CASE("gradient: affine map matches its matrix bit-exactly at interior nodes") {
  Grid g(3, 9, 1.0);
  const double A[3][2] = {{1.5, -0.25}, {0.0, 2.0}, {-1.0, 0.5}};
  auto u = map_from_function(g, 2, [&](const Point& x, std::span<double> out) {
    for (int c = 0; c < 2; ++c) out[c] = A[0][c] * x[0] + A[1][c] * x[1] + A[2][c] * x[2];
  });
  auto gf = gradient(u);
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    auto iv = g.node_at(n);
    bool interior = true;
    for (int i = 0; i < 3; ++i)
      if (iv[i] == 0 || iv[i] == g.res - 1) interior = false;
    if (!interior) continue;
    auto e = gf.at(n);
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 2; ++c) CHECK(e[i * 2 + c] == doctest::Approx(A[i][c]).epsilon(1e-10));
  }
}

TEST_CASE("gradient: sin derivative within 1e-3 at h <= 1/64") {
  Grid g(2, 129, 1.0);  // h = 1/64
  auto u = map_from_function(g, 2, [](const Point& x, std::span<double> out) {
    out[0] = std::sin(x[0]);
    out[1] = 0.0;
  });
  auto gf = gradient(u);
  Index center{g.res / 2, g.res / 2, 0, 0};
  auto e = gf.at(g.node_index(center));
  CHECK(std::abs(e[0] - 1.0) < 1e-3);
}

TEST_CASE("seminorm: zero for constants, closed form for identity") {
  Grid g(2, 65, 1.0);
  auto full = Region::full(g);
  CHECK(sobolev_seminorm(constant_map(g, {1.0, 2.0, 3.0}), 2.0, full) == 0.0);
  // |Du|^2 = 2 over area 4
  double s = sobolev_seminorm(identity_map(g), 2.0, full);
  CHECK(s * s == doctest::Approx(8.0).epsilon(0.01));
}

TEST_CASE("seminorm: x/|x| on the square minus a disk matches polar quadrature") {
  Grid g(2, 513, 1.0);
  auto u = angular_map(g);
  auto region = Region::of_cells(
      g, [](const Point& c) { return std::hypot(c[0], c[1]) > 0.25; }, "Q\\B(1/4)");

  // oracle: integral of 1/|x| over the square minus the disk, in polar
  // coordinates: int_0^{2pi} (R(theta) - 1/4) dtheta with R the square
  // boundary radius.  Simpson rule on a fine angular mesh.
  const int K = 4096;
  double oracle = 0.0;
  for (int i = 0; i <= K; ++i) {
    const double th = 2.0 * M_PI * i / K;
    const double R = 1.0 / std::max(std::abs(std::cos(th)), std::abs(std::sin(th)));
    const double w = (i == 0 || i == K) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    oracle += w * (R - 0.25);
  }
  oracle *= (2.0 * M_PI / K) / 3.0;

  const double s = sobolev_seminorm(u, 1.0, region);
  CHECK(s == doctest::Approx(oracle).epsilon(0.02));
}

TEST_CASE("seminorm: positive 1-homogeneity in the values") {
  Grid g(2, 33, 1.0);
  Rng rng(7);
  auto u = smooth_random_map(g, 2, rng);
  auto region = Region::full(g);
  const double s1 = sobolev_seminorm(u, 1.7, region);
  GridMap v = u;
  for (auto& x : v.values) x *= -2.5;
  const double s2 = sobolev_seminorm(v, 1.7, region);
  CHECK(s2 == doctest::Approx(2.5 * s1).epsilon(1e-12));
}

TEST_CASE("seminorm: additive over disjoint regions in p-th power") {
  Grid g(2, 33, 1.0);
  Rng rng(8);
  auto u = smooth_random_map(g, 2, rng);
  auto left = Region::of_cells(g, [](const Point& c) { return c[0] < 0.0; }, "left");
  auto right = left.complement();
  auto full = Region::full(g);
  const double p = 1.4;
  const double sl = sobolev_seminorm(u, p, left);
  const double sr = sobolev_seminorm(u, p, right);
  const double sf = sobolev_seminorm(u, p, full);
  CHECK(std::pow(sf, p) == doctest::Approx(std::pow(sl, p) + std::pow(sr, p)).epsilon(1e-12));
}

TEST_CASE("seminorm: empty region returns zero") {
  Grid g(2, 9, 1.0);
  auto u = identity_map(g);
  CHECK(sobolev_seminorm(u, 2.0, Region::empty(g)) == 0.0);
}

TEST_CASE("poincare-wirtinger: constant map has zero lhs") {
  Grid g(2, 33, 1.0);
  auto rep = poincare_wirtinger_ratio(constant_map(g, {4.0}), Region::full(g), 2.0);
  CHECK(rep.lhs == 0.0);
}

TEST_CASE("poincare-wirtinger: linear map ratio bounded across resolutions") {
  for (int res : {33, 65, 129}) {
    Grid g(2, res, 1.0);
    auto u = identity_map(g);
    auto rep = poincare_wirtinger_ratio(u, Region::full(g), 2.0, res > 65 ? 2 : 1);
    CHECK(rep.lhs > 0.0);
    CHECK(rep.lhs <= 1.0 * rep.rhs);  // dimension constant well below 1 here
  }
}

TEST_CASE("poincare-wirtinger: oscillation keeps the ratio bounded") {
  Grid g(2, 65, 1.0);
  double prev_ratio = 0.0;
  for (double k : {2.0, 4.0, 8.0}) {
    auto u = map_from_function(g, 1, [k](const Point& x, std::span<double> out) {
      out[0] = std::sin(k * x[0]);
    });
    auto rep = poincare_wirtinger_ratio(u, Region::full(g), 2.0);
    const double ratio = rep.lhs / rep.rhs;
    CHECK(ratio < 1.0);
    prev_ratio = std::max(prev_ratio, ratio);
  }
  CHECK(prev_ratio > 0.0);
}

TEST_CASE("reflect_extend: constant stays constant, mirror formula in 1-D") {
  Grid g1(1, 9, 1.0);  // h = 1/4
  auto u = map_from_function(g1, 1, [](const Point& x, std::span<double> out) { out[0] = x[0]; });
  auto ext = reflect_extend(u, 0.5);
  CHECK(ext.grid.inradius == doctest::Approx(2.0));
  // value at x in (1,2) must be 2 - x
  for (int64_t n = 0; n < ext.grid.num_nodes(); ++n) {
    const double x = ext.grid.coord(ext.grid.node_at(n)[0]);
    const double expect = (x > 1.0) ? 2.0 - x : (x < -1.0 ? -2.0 - x : x);
    CHECK(ext.at(n)[0] == doctest::Approx(expect).epsilon(1e-14));
  }

  Grid g2(2, 9, 1.0);
  auto c = constant_map(g2, {2.5});
  auto cext = reflect_extend(c, 0.25);
  for (double v : cext.values) CHECK(v == 2.5);
}

TEST_CASE("reflect_extend: restriction to the original cube is bit-exact") {
  Grid g(2, 17, 1.0);
  Rng rng(5);
  auto u = smooth_random_map(g, 3, rng);
  auto ext = reflect_extend(u, 0.25);
  const int k = static_cast<int>(std::lround(0.25 / g.h()));
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    auto iv = g.node_at(n);
    Index je = iv;
    for (int i = 0; i < g.m; ++i) je[i] += 2 * k;
    auto a = u.at(n);
    auto b = ext.at(ext.grid.node_index(je));
    for (int c = 0; c < 3; ++c) CHECK(a[c] == b[c]);
  }
}

TEST_CASE("reflect_extend: seminorm grows at most by the reflected cell count") {
  Grid g(2, 33, 1.0);
  Rng rng(6);
  auto u = smooth_random_map(g, 2, rng);
  auto ext = reflect_extend(u, 1.0);  // full reflection: 3^m copies
  const double p = 2.0;
  const double s0 = sobolev_seminorm(u, p, Region::full(g));
  const double s1 = sobolev_seminorm(ext, p, Region::full(ext.grid));
  CHECK(std::pow(s1, p) <= 9.0 * std::pow(s0, p) * 1.01);
}

TEST_CASE("reflect_extend: misaligned padding is rejected") {
  Grid g(2, 9, 1.0);
  auto u = identity_map(g);
  CHECK_THROWS_AS(reflect_extend(u, 0.3), Error);
}

TEST_CASE("translate: zero shift and constants are exact") {
  Grid g(2, 17, 1.0);
  Rng rng(9);
  auto u = smooth_random_map(g, 2, rng);
  auto t0 = translate(u, Point{0.0, 0.0});
  for (size_t i = 0; i < u.values.size(); ++i) CHECK(t0.values[i] == u.values[i]);

  auto c = constant_map(g, {1.0, -2.0});
  auto core = Region::of_cells(
      g, [](const Point& p) { return std::abs(p[0]) < 0.8 && std::abs(p[1]) < 0.8; }, "core");
  auto tc = translate(c, Point{0.1, -0.05}, &core);
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    CHECK(tc.at(n)[0] == doctest::Approx(1.0));
    CHECK(tc.at(n)[1] == doctest::Approx(-2.0));
  }
}

TEST_CASE("translate: L^p difference decays linearly in the shift") {
  Grid g(2, 65, 2.0);  // work on a larger cube, measure on the core
  auto u = map_from_function(g, 1, [](const Point& x, std::span<double> out) {
    out[0] = std::sin(1.3 * x[0] + 0.7 * x[1]);
  });
  auto core = Region::of_cells(
      g, [](const Point& c) { return std::abs(c[0]) < 1.0 && std::abs(c[1]) < 1.0; }, "core");
  const double h = g.h();
  std::vector<double> err;
  for (double s : {1.0, 2.0, 4.0}) {
    auto tu = translate(u, Point{s * h, 0.0}, &core);
    err.push_back(lp_distance(tu, u, 2.0, core));
  }
  CHECK(err[1] / err[0] == doctest::Approx(2.0).epsilon(0.05));
  CHECK(err[2] / err[1] == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("translate: rejects shifts that leave the domain") {
  Grid g(2, 9, 1.0);
  auto u = identity_map(g);
  CHECK_THROWS_AS(translate(u, Point{0.5, 0.0}), Error);
}

TEST_CASE("serialization: binary round trip and CSV export") {
  Grid g(2, 17, 1.5);
  Rng rng(11);
  auto u = smooth_random_map(g, 3, rng);
  auto dir = temp_dir("grid");
  save_gridmap(u, dir + "/u.grid");
  auto v = load_gridmap(dir + "/u.grid");
  CHECK(v.grid == u.grid);
  CHECK(v.ambient_dim == u.ambient_dim);
  for (size_t i = 0; i < u.values.size(); ++i) CHECK(v.values[i] == u.values[i]);
  export_csv(u, dir + "/u.csv");
  CHECK(std::filesystem::file_size(dir + "/u.csv") > 0);
}

TEST_CASE("region: volume and face-neighborhood style boxes") {
  Grid g(2, 65, 1.5);
  auto r = Region::box(g, Point{-0.5, -0.25}, Point{0.5, 0.25}, "box");
  CHECK(r.volume() == doctest::Approx(0.5).epsilon(0.08));
}
