#include <cmath>

#include "doctest.h"
#include "sobotrim/homogenization.hpp"
#include "test_util.hpp"

using namespace sobotrim;

namespace {
struct Setup {
  Grid grid;
  Cubication cub;
  Setup() : grid(2, 81, 1.25), cub(2, 1.0, 0.25, grid) {}
};

GoodBadPartition all_bad(const Cubication& cub) {
  GoodBadPartition part;
  part.rho = 0.25;
  part.cells.resize(static_cast<size_t>(cub.face_count(cub.m())));
  for (auto& c : part.cells) c.good = false;
  part.in_bad.resize(static_cast<size_t>(cub.m()) + 1);
  part.in_good.resize(static_cast<size_t>(cub.m()) + 1);
  for (int d = 0; d <= cub.m(); ++d) {
    part.in_bad[static_cast<size_t>(d)].assign(static_cast<size_t>(cub.face_count(d)), 1);
    part.in_good[static_cast<size_t>(d)].assign(static_cast<size_t>(cub.face_count(d)), 0);
  }
  return part;
}
}  // namespace

TEST_CASE("skeleton seminorm: constants vanish, single faces match grid_core") {
  Setup s;
  auto c = constant_map(s.grid, {1.0, 2.0});
  std::vector<int64_t> edges;
  for (int64_t i = 0; i < s.cub.face_count(1); ++i) edges.push_back(i);
  auto sm = restrict_to_skeleton(c, s.cub, 1, edges);
  CHECK(skeleton_seminorm(sm, 1.5) == 0.0);

  auto lin = identity_map(s.grid);
  auto sm1 = restrict_to_skeleton(lin, s.cub, 1, {edges[5]});
  const auto& fv = sm1.faces.begin()->second;
  const double direct = sobolev_seminorm(fv, 2.0, Region::full(fv.grid));
  CHECK(skeleton_seminorm(sm1, 2.0) == doctest::Approx(direct));
}

TEST_CASE("skeleton seminorm: corner mismatch raises TraceIncompatible") {
  Setup s;
  auto u = identity_map(s.grid);
  // two edges sharing a vertex, plus the vertex with a wrong value
  Face e1;
  e1.axes = 1;
  e1.corner = Index{1, 2, 0, 0};
  Face v;
  v.axes = 0;
  v.corner = Index{2, 2, 0, 0};
  auto sm = restrict_to_skeleton(u, s.cub, 1, {s.cub.face_index(e1)});
  auto vv = restrict_to_face(u, s.cub, 0, s.cub.face_index(v));
  for (auto& x : vv.values) x += 0.5;  // break the trace
  sm.faces[{0, s.cub.face_index(v)}] = vv;
  CHECK(trace_mismatch(sm) > 0.4);
  CHECK_THROWS_AS(skeleton_seminorm(sm, 2.0), Error);
}

TEST_CASE("homogenize_cube: constants extend to constants, p >= i refused") {
  auto boundary = [](const Point&, std::span<double> out) { out[0] = 7.0; };
  auto v = homogenize_cube(boundary, 2, 1.0, 33, 1, 1.0);
  for (double x : v.values) CHECK(x == 7.0);
  CHECK_THROWS_AS(homogenize_cube(boundary, 2, 1.0, 33, 1, 2.0), Error);
  CHECK_THROWS_AS(homogenize_cube(boundary, 2, 1.0, 33, 1, 2.5), Error);
}

TEST_CASE("homogenize_cube: angular boundary gives the radial-ray structure") {
  auto boundary = [](const Point& b, std::span<double> out) {
    const double th = std::atan2(b[1], b[0]);
    out[0] = std::cos(th);
    out[1] = std::sin(th);
  };
  const double eta = 1.0;
  auto v = homogenize_cube(boundary, 2, eta, 65, 2, 1.0);
  // ray-trace oracle at 64 rays: interior samples equal the projected
  // boundary values
  std::vector<double> got(2), want(2);
  for (int k = 0; k < 64; ++k) {
    const double th = 2.0 * M_PI * (k + 0.5) / 64;
    Point d{std::cos(th), std::sin(th)};
    const double linf = std::max(std::abs(d[0]), std::abs(d[1]));
    for (double srad : {0.3, 0.6, 0.9}) {
      Point x{srad * d[0] / linf, srad * d[1] / linf};  // fixed max-norm ray
      sample(v, x, got);
      Point b{eta * d[0] / linf, eta * d[1] / linf};
      boundary(b, want);
      CHECK(std::abs(got[0] - want[0]) < 0.02);
      CHECK(std::abs(got[1] - want[1]) < 0.02);
    }
  }
  // max-norm radial constancy along sampled rays
  for (int k = 0; k < 32; ++k) {
    const double th = 2.0 * M_PI * (k + 0.25) / 32;
    Point d{std::cos(th), std::sin(th)};
    const double linf = std::max(std::abs(d[0]), std::abs(d[1]));
    std::vector<double> ref(2), cur(2);
    sample(v, Point{0.95 * d[0] / linf, 0.95 * d[1] / linf}, ref);
    for (double srad : {0.35, 0.55, 0.75}) {
      sample(v, Point{srad * d[0] / linf, srad * d[1] / linf}, cur);
      CHECK(std::abs(cur[0] - ref[0]) < 0.02);
      CHECK(std::abs(cur[1] - ref[1]) < 0.02);
    }
  }
}

TEST_CASE("homogenize_cube: energy ratio stable across the eta sweep") {
  for (double p : {1.0, 1.5}) {
    std::vector<double> ratios;
    for (double eta : {0.25, 0.125, 0.0625}) {
      auto boundary = [eta](const Point& b, std::span<double> out) {
        // fixed angular profile independent of the scale
        const double th = std::atan2(b[1] / eta, b[0] / eta);
        out[0] = std::cos(2.0 * th);
        out[1] = std::sin(2.0 * th);
      };
      auto v = homogenize_cube(boundary, 2, eta, 65, 2, p);
      const double num = std::pow(sobolev_seminorm(v, p, Region::full(v.grid)), p);

      // boundary seminorm of the profile: 1-D quadrature over the four sides
      Grid bg(1, 65, eta);
      double den = 0.0;
      for (int side = 0; side < 4; ++side) {
        auto bu = map_from_function(bg, 2, [&](const Point& t, std::span<double> out) {
          Point b{};
          if (side == 0) b = Point{eta, t[0]};
          if (side == 1) b = Point{-eta, t[0]};
          if (side == 2) b = Point{t[0], eta};
          if (side == 3) b = Point{t[0], -eta};
          boundary(b, out);
        });
        den += std::pow(sobolev_seminorm(bu, p, Region::full(bg)), p);
      }
      ratios.push_back(num / (eta * den));
    }
    const double mx = *std::max_element(ratios.begin(), ratios.end());
    const double mn = *std::min_element(ratios.begin(), ratios.end());
    CHECK(mx / mn < 1.3);
  }
}

TEST_CASE("extend_skeleton: identity when everything is pinned, constants stay constant") {
  Setup s;
  auto part = all_bad(s.cub);
  Rng rng(5);
  auto u = smooth_random_map(s.grid, 2, rng, 2.0);

  // pin all faces of all dimensions: output must equal input
  SkeletonMap pinned;
  pinned.cub = &s.cub;
  pinned.ambient_dim = 2;
  for (int d = 0; d <= 2; ++d)
    for (int64_t i = 0; i < s.cub.face_count(d); ++i)
      pinned.faces[{d, i}] = restrict_to_face(u, s.cub, d, i);
  auto res = extend_skeleton(pinned, s.cub, part, 1, 1.5);
  for (const auto& [key, vals] : pinned.faces) {
    const auto& out = res.filled.faces.at(key);
    for (size_t i = 0; i < vals.values.size(); ++i) CHECK(out.values[i] == vals.values[i]);
  }

  // constants: fill from the 1-skeleton only
  auto c = constant_map(s.grid, {2.5, -1.0});
  SkeletonMap pc;
  pc.cub = &s.cub;
  pc.ambient_dim = 2;
  for (int d = 0; d <= 1; ++d)
    for (int64_t i = 0; i < s.cub.face_count(d); ++i)
      pc.faces[{d, i}] = restrict_to_face(c, s.cub, d, i);
  auto resc = extend_skeleton(pc, s.cub, part, 1, 1.5);
  for (int64_t i = 0; i < s.cub.face_count(2); ++i) {
    const auto& vals = resc.filled.faces.at({2, i});
    for (size_t k = 0; k + 1 < vals.values.size(); k += 2) {
      CHECK(vals.values[k] == doctest::Approx(2.5));
      CHECK(vals.values[k + 1] == doctest::Approx(-1.0));
    }
  }
  CHECK(resc.dim_energy_p[2] == doctest::Approx(0.0));
}

TEST_CASE("extend_skeleton: bad square filled radially, range contained, boundary exact") {
  Setup s;
  auto part = all_bad(s.cub);
  auto u = angular_map(s.grid);
  SkeletonMap pinned;
  pinned.cub = &s.cub;
  pinned.ambient_dim = 2;
  for (int d = 0; d <= 1; ++d)
    for (int64_t i = 0; i < s.cub.face_count(d); ++i)
      pinned.faces[{d, i}] = restrict_to_face(u, s.cub, d, i);
  auto res = extend_skeleton(pinned, s.cub, part, 1, 1.5);

  // range containment per component
  double in_lo = 1e300, in_hi = -1e300;
  for (const auto& [key, vals] : pinned.faces)
    for (size_t i = 0; i < vals.values.size(); i += 2) {
      in_lo = std::min(in_lo, vals.values[i]);
      in_hi = std::max(in_hi, vals.values[i]);
    }
  double sup = 0.0;
  for (int64_t i = 0; i < s.cub.face_count(2); ++i) {
    const auto& vals = res.filled.faces.at({2, i});
    for (size_t k = 0; k < vals.values.size(); k += 2) {
      CHECK(vals.values[k] >= in_lo - 1e-12);
      CHECK(vals.values[k] <= in_hi + 1e-12);
      sup = std::max(sup, std::hypot(vals.values[k], vals.values[k + 1]));
    }
  }
  CHECK(sup <= 1.0 + 1e-9);  // convex hull of unit vectors

  // boundary fidelity: the filled square agrees with the pinned edges
  // bit-exactly at the edge nodes
  CHECK(trace_mismatch(res.filled) == 0.0);
}

TEST_CASE("extend_skeleton: refuses p >= ell + 1") {
  Setup s;
  auto part = all_bad(s.cub);
  SkeletonMap pinned;
  pinned.cub = &s.cub;
  pinned.ambient_dim = 1;
  CHECK_THROWS_AS(extend_skeleton(pinned, s.cub, part, 1, 2.0), Error);
}

TEST_CASE("extend_skeleton: energy estimate terms recorded across an eta sweep") {
  // fill a single bad square from an angular boundary at three scales; the
  // ratio energy / (eta * boundary-energy) stays within 30 percent
  std::vector<double> ratios;
  for (double eta : {0.25, 0.125, 0.0625}) {
    Grid grid(2, 161, 1.25);
    Cubication cub(2, 1.0, eta, grid);
    auto part = all_bad(cub);
    auto u = angular_map(grid);
    SkeletonMap pinned;
    pinned.cub = &cub;
    pinned.ambient_dim = 2;
    for (int d = 0; d <= 1; ++d)
      for (int64_t i = 0; i < cub.face_count(d); ++i)
        pinned.faces[{d, i}] = restrict_to_face(u, cub, d, i);
    const double p = 1.5;
    auto res = extend_skeleton(pinned, cub, part, 1, p);
    double bdry = 0.0;
    for (const auto& [key, vals] : pinned.faces)
      if (key.dim == 1)
        bdry += std::pow(sobolev_seminorm(vals, p, Region::full(vals.grid)), p);
    ratios.push_back(res.dim_energy_p[2] / (eta * bdry));
  }
  const double mx = *std::max_element(ratios.begin(), ratios.end());
  const double mn = *std::min_element(ratios.begin(), ratios.end());
  CHECK(mx / mn < 1.5);
}

TEST_CASE("skeleton map export bundle") {
  Setup s;
  auto u = identity_map(s.grid);
  auto sm = restrict_to_skeleton(u, s.cub, 1, {0, 1, 2});
  auto dir = temp_dir("skel");
  export_skeleton_map(sm, dir + "/bundle");
  CHECK(std::filesystem::exists(dir + "/bundle/manifest.json"));
}

TEST_CASE("rasterize: top faces land back on the host grid exactly") {
  Setup s;
  Rng rng(7);
  auto u = smooth_random_map(s.grid, 2, rng, 2.0);
  SkeletonMap sm;
  sm.cub = &s.cub;
  sm.ambient_dim = 2;
  for (int64_t i = 0; i < s.cub.face_count(2); ++i)
    sm.faces[{2, i}] = restrict_to_face(u, s.cub, 2, i);
  GridMap target(s.grid, 2, 0.0);
  rasterize_top_faces(sm, target);
  // inside the cubication the values match u
  for (int64_t n = 0; n < s.grid.num_nodes(); ++n) {
    const Point x = s.grid.node_point(s.grid.node_at(n));
    if (std::abs(x[0]) <= 1.0 - 1e-9 && std::abs(x[1]) <= 1.0 - 1e-9) {
      CHECK(target.at(n)[0] == u.at(n)[0]);
      CHECK(target.at(n)[1] == u.at(n)[1]);
    }
  }
}
