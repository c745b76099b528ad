#include <cmath>

#include "doctest.h"
#include "sobotrim/trimming.hpp"
#include "test_util.hpp"

using namespace sobotrim;

namespace {
// planar bubble: the angular field times a radial bump, plus a base point
GridMap bubble_map(const st::Grid& g, double strength = 1.0) {
  return map_from_function(g, 2, [strength](const Point& x, std::span<double> out) {
    const double r = std::hypot(x[0], x[1]);
    const double bump = strength * std::exp(-r * r / 0.18);
    if (r < 1e-14) {
      out[0] = 0.0;
      out[1] = 0.0;
      return;
    }
    out[0] = bump * x[0] / r;
    out[1] = bump * x[1] / r;
  });
}
}  // namespace

TEST_CASE("degree: constants and the identity chart map") {
  Grid g(2, 65, 1.0);
  auto c = constant_map(g, {2.0, 1.0});
  std::vector<double> probe{0.0, 0.0};
  CHECK(brouwer_degree_winding(c, 0.5, probe) == 0);
  CHECK(brouwer_degree_simplex(c, 0.5, probe) == 0);

  auto id = identity_map(g);
  CHECK(brouwer_degree_winding(id, 0.5, probe) == 1);
  CHECK(brouwer_degree_simplex(id, 0.5, probe) == 1);
}

TEST_CASE("degree: bubble map, winding equals simplex on random probes") {
  Grid g(2, 129, 1.0);
  auto u = bubble_map(g);
  Rng rng(5);
  int checked = 0;
  for (int t = 0; t < 12 && checked < 3; ++t) {
    const double rr = rng.uniform(0.02, 0.15);
    const double th = rng.uniform(0.0, 6.28);
    std::vector<double> probe{rr * std::cos(th), rr * std::sin(th)};
    int w, s;
    try {
      w = brouwer_degree_winding(u, 0.375, probe);
      s = brouwer_degree_simplex(u, 0.375, probe);
    } catch (const Error&) {
      continue;  // unstable probe, resample
    }
    CHECK(w == s);
    CHECK(w != 0);
    ++checked;
  }
  CHECK(checked == 3);
}

TEST_CASE("degree: invariance under positive scaling of values") {
  Grid g(2, 65, 1.0);
  auto u = bubble_map(g);
  std::vector<double> probe{0.06, 0.03};
  const int d0 = brouwer_degree_winding(u, 0.375, probe);
  GridMap v = u;
  for (auto& x : v.values) x *= 3.7;
  std::vector<double> probe2{0.222, 0.111};
  CHECK(brouwer_degree_winding(v, 0.375, probe2) == d0);
}

TEST_CASE("degree: additivity over a quadrant partition") {
  Grid g(2, 65, 1.0);
  Rng rng(7);
  auto u = smooth_random_map(g, 2, rng, 2.5);
  std::vector<double> probe{0.05, -0.1};
  auto square = Region::of_cells(
      g, [](const Point& x) { return std::abs(x[0]) < 0.5 && std::abs(x[1]) < 0.5; }, "Q");
  const int total = brouwer_degree_region(u, square, probe);
  int sum = 0;
  for (int qx = 0; qx < 2; ++qx)
    for (int qy = 0; qy < 2; ++qy) {
      auto quad = Region::of_cells(
          g,
          [&](const Point& x) {
            const bool inx = qx ? (x[0] > 0 && x[0] < 0.5) : (x[0] > -0.5 && x[0] < 0);
            const bool iny = qy ? (x[1] > 0 && x[1] < 0.5) : (x[1] > -0.5 && x[1] < 0);
            return inx && iny;
          },
          "quad");
      sum += brouwer_degree_region(u, quad, probe);
    }
  CHECK(total == sum);
}

TEST_CASE("degree: unstable probes are refused") {
  Grid g(2, 65, 1.0);
  auto id = identity_map(g);
  // probe exactly on the boundary image of Q_{1/2}
  std::vector<double> probe{0.5, 0.0};
  CHECK_THROWS_AS(brouwer_degree_winding(id, 0.5, probe), Error);
}

TEST_CASE("manifold degree: funnel map covers deep probes with degree one") {
  auto F = Manifold::funnel_sphere(2, 0.4);
  Grid g(2, 257, 1.0);
  auto u = build_funnel_map(F, g);
  // a probe on the needle below the smallest test radius
  const double theta_min = 2.0 * std::asin((1.0 / 16.0) * std::sin(0.5));
  const double dp = 0.6 * theta_min;
  const double lam = F.funnel_lambda(dp);
  std::vector<double> probe{lam * std::sin(dp), 0.0, lam * std::cos(dp)};
  for (double r : {0.25, 0.125, 0.0625}) {
    const int deg = manifold_degree(u, F, r, probe);
    CHECK(std::abs(deg) == 1);
  }
}

TEST_CASE("trim_small_energy: constant boundary, spherical cap, threshold refusal") {
  auto S2 = Manifold::sphere(2);
  Grid g(2, 65, 1.0);

  auto c = constant_map(g, {0.0, 0.0, 1.0});
  auto res = trim_small_energy(c, S2, 2.0, 0.5);
  CHECK(res.energy_ratio == 0.0);
  for (int64_t n = 0; n < g.num_nodes(); ++n) CHECK(res.extension.at(n)[2] == doctest::Approx(1.0));

  // small cap loop: values stay inside the cap, boundary exact
  auto cap = map_from_function(g, 3, [](const Point& x, std::span<double> out) {
    const double th = 0.3 * (0.5 + 0.5 * std::sin(2.0 * std::atan2(x[1], x[0] + 2.0)));
    const double ph = std::atan2(x[1], x[0] + 2.0);
    out[0] = std::sin(th) * std::cos(ph);
    out[1] = std::sin(th) * std::sin(ph);
    out[2] = std::cos(th);
  });
  auto rc = trim_small_energy(cap, S2, 2.0, 1.5);
  CHECK(rc.manifold_residual < 1e-8);
  CHECK(rc.boundary_residual == 0.0);
  CHECK(rc.energy_ratio > 0.0);
  CHECK(rc.energy_ratio < 3.0);
  std::vector<double> north{0.0, 0.0, 1.0};
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    // cap containment: geodesic distance to the pole below the chart radius
    CHECK(S2.geodesic_distance(
              S2.project(std::vector<double>(rc.extension.at(n).begin(),
                                             rc.extension.at(n).end())),
              north) < 1.0);
  }

  // an energetic boundary loop is refused
  auto wild = map_from_function(g, 3, [](const Point& x, std::span<double> out) {
    const double th = 2.5 * std::sin(9.0 * x[0]) + 1.2 * std::cos(7.0 * x[1]);
    const double ph = 8.0 * x[1];
    out[0] = std::sin(th) * std::cos(ph);
    out[1] = std::sin(th) * std::sin(ph);
    out[2] = std::cos(th);
  });
  CHECK_THROWS_AS(trim_small_energy(wild, S2, 2.0, 0.2), Error);
}

TEST_CASE("trim_small_energy: energy ratio stable across resolutions") {
  auto S2 = Manifold::sphere(2);
  std::vector<double> ratios;
  for (int res : {65, 129, 257}) {
    Grid g(2, res, 1.0);
    auto cap = map_from_function(g, 3, [](const Point& x, std::span<double> out) {
      const double th = 0.3 * (0.5 + 0.5 * std::sin(2.0 * std::atan2(x[1], x[0] + 2.0)));
      const double ph = std::atan2(x[1], x[0] + 2.0);
      out[0] = std::sin(th) * std::cos(ph);
      out[1] = std::sin(th) * std::sin(ph);
      out[2] = std::cos(th);
    });
    ratios.push_back(trim_small_energy(cap, S2, 2.0, 1.5).energy_ratio);
  }
  const double mx = *std::max_element(ratios.begin(), ratios.end());
  const double mn = *std::min_element(ratios.begin(), ratios.end());
  CHECK(mx / mn < 2.0);
}

TEST_CASE("trim_global: bounded smooth sphere map succeeds with exact boundary") {
  auto S2 = Manifold::sphere(2);
  Grid g(2, 129, 1.0);
  Rng rng(11);
  auto u = sphere_valued_map(g, rng, 0.5);
  TrimGlobalOptions opt;
  opt.alpha = 1.2;
  auto out = trim_global(u, S2, 2.0, opt);
  REQUIRE(out.ok);
  CHECK(out.result.boundary_residual == 0.0);
  CHECK(out.result.sup_norm <= 1.0 + 1e-6);
  CHECK(out.result.manifold_residual < 1e-6);
  CHECK(out.result.energy_ratio < 5.0);
}

TEST_CASE("trim_global: interior bubble with smooth boundary is flattened") {
  auto S2 = Manifold::sphere(2);
  Grid g(2, 257, 1.0);
  // a sphere-valued bubble: wraps a cap in the interior, settles near the
  // boundary; gentle enough that refined cubes reach the chart zone
  auto u = map_from_function(g, 3, [](const Point& x, std::span<double> out) {
    const double r = std::hypot(x[0], x[1]);
    const double th = M_PI * std::exp(-r * r / 0.55);
    if (r < 1e-14) {
      out[0] = 0.0;
      out[1] = 0.0;
      out[2] = -1.0;
      return;
    }
    out[0] = std::sin(th) * x[0] / r;
    out[1] = std::sin(th) * x[1] / r;
    out[2] = std::cos(th);
  });
  TrimGlobalOptions opt;
  opt.alpha = 0.9;
  opt.kappa = 1.5;
  opt.max_refinements = 3;
  auto out = trim_global(u, S2, 2.0, opt);
  REQUIRE(out.ok);
  CHECK(out.result.sup_norm <= 1.0 + 1e-6);
  CHECK(out.result.boundary_residual == 0.0);
}

TEST_CASE("trim_global: funnel counterexample fails with a populated obstruction probe") {
  auto F = Manifold::funnel_sphere(2, 0.4);
  Grid g(2, 129, 1.0);
  auto u = build_funnel_map(F, g);
  TrimGlobalOptions opt;
  opt.alpha = 0.8;
  opt.max_refinements = 1;
  auto out = trim_global(u, F, 2.0, opt);
  CHECK(!out.ok);
  CHECK(out.failing_cube >= 0);
  CHECK(std::abs(out.obstruction_winding) == 1);
}

TEST_CASE("geodesic 1-d trim: constants, antipodes, across the funnel neck") {
  auto S2 = Manifold::sphere(2);
  std::vector<double> a{0.0, 0.0, 1.0};
  auto same = geodesic_trim_1d(a, a, S2);
  for (int64_t n = 0; n < same.grid.num_nodes(); ++n)
    CHECK(same.at(n)[2] == doctest::Approx(1.0));

  std::vector<double> b{0.0, 0.0, -1.0};
  auto path = geodesic_trim_1d(a, b, S2, 129);
  double len = 0.0;
  for (int64_t n = 0; n + 1 < path.grid.num_nodes(); ++n) {
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = path.at(n + 1)[c] - path.at(n)[c];
      d2 += d * d;
    }
    len += std::sqrt(d2);
  }
  CHECK(len == doctest::Approx(M_PI).epsilon(0.03));

  auto A = Manifold::algebraic_funnel(2, 3.0);
  const double s1 = 0.1, s2 = 1.4;
  std::vector<double> p1{A.algebraic_profile(s1), 0.0, s1};
  std::vector<double> p2{-A.algebraic_profile(s2), 0.0, s2};
  auto fpath = geodesic_trim_1d(p1, p2, A, 129);
  double flen = 0.0;
  for (int64_t n = 0; n + 1 < fpath.grid.num_nodes(); ++n) {
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = fpath.at(n + 1)[c] - fpath.at(n)[c];
      d2 += d * d;
    }
    flen += std::sqrt(d2);
  }
  CHECK(flen == doctest::Approx(A.geodesic_distance(p1, p2)).epsilon(0.03));
}

TEST_CASE("obstruction certificate: funnel passes, compact control fails") {
  auto F = Manifold::funnel_sphere(2, 0.4);
  Grid g(2, 257, 1.0);
  auto u = build_funnel_map(F, g);
  const double theta_min = 2.0 * std::asin((1.0 / 8.0) * std::sin(0.5));
  std::vector<std::vector<double>> probes;
  for (double f : {0.5, 0.65, 0.8}) {
    const double dp = f * theta_min;
    const double lam = F.funnel_lambda(dp);
    probes.push_back({lam * std::sin(dp), 0.0, lam * std::cos(dp)});
  }
  auto cert = obstruction_certificate(u, F, probes, {0.5, 0.25, 0.125}, 10);
  // energies nondecreasing as a function of the radius
  CHECK(cert.ball_energies[0] >= cert.ball_energies[1]);
  CHECK(cert.ball_energies[1] >= cert.ball_energies[2]);
  CHECK(cert.ball_energies[2] > 0.0);
  CHECK(cert.epsilon > 0.0);
  for (const auto& e : cert.battery) {
    CHECK(e.gap >= cert.epsilon);
    CHECK(e.sup < 1e6);
  }
  for (const auto& row : cert.degrees)
    for (int d : row) CHECK(std::abs(d) == 1);

  auto dir = temp_dir("cert");
  export_certificate(cert, dir + "/cert.json");
  CHECK(std::filesystem::file_size(dir + "/cert.json") > 10);

  // compact control: constant map on the sphere has no covering degrees
  auto S2 = Manifold::sphere(2);
  auto c = constant_map(g, {0.0, 0.0, 1.0});
  std::vector<std::vector<double>> probe2{{1.0, 0.0, 0.0}};
  CHECK_THROWS_AS(obstruction_certificate(c, S2, probe2, {0.25}, 2), Error);
}

TEST_CASE("product lift: identity at m = n, factor two one dimension up") {
  auto F = Manifold::funnel_sphere(2, 0.4);
  Grid g(2, 129, 1.0);
  auto u = build_funnel_map(F, g);
  ObstructionCertificate cert;
  cert.epsilon = 0.42;
  auto same = product_obstruction(u, cert, 2);
  CHECK(same.lifted_gap == doctest::Approx(0.42));
  auto lifted = product_obstruction(u, cert, 3, 9);
  CHECK(lifted.expected_factor == doctest::Approx(2.0));
  CHECK(lifted.lifted_gap == doctest::Approx(2.0 * 0.42).epsilon(0.05));
}
