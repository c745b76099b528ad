#include <cmath>

#include "doctest.h"
#include "sobotrim/opening.hpp"
#include "test_util.hpp"

using namespace sobotrim;

TEST_CASE("zeta profile: plateau, identity tail, slope bound, containment") {
  auto prof = build_zeta(0.05, 0.12);
  CHECK(prof.eval(0.0) == 0.0);
  CHECK(prof.eval(0.049) == 0.0);
  CHECK(prof.eval(0.12) == doctest::Approx(0.12).epsilon(1e-12));
  CHECK(prof.eval(0.5) == 0.5);
  Rng rng(2);
  for (int t = 0; t < 10000; ++t) {
    const double x = rng.uniform(0.0, 0.2);
    const double v = prof.eval(x);
    CHECK(v <= x + 1e-12);                 // never pushes outward
    CHECK(v >= -1e-15);
    CHECK(prof.deriv(x) <= prof.peak + 1e-12);
    CHECK(prof.deriv(x) >= -1e-15);
  }
  // derivative consistent with the values
  for (int t = 0; t < 200; ++t) {
    const double x = rng.uniform(0.051, 0.119);
    const double fd = (prof.eval(x + 1e-7) - prof.eval(x - 1e-7)) / 2e-7;
    CHECK(fd == doctest::Approx(prof.deriv(x)).epsilon(1e-4));
  }
}

namespace {
struct Setup {
  Grid grid;
  Cubication cub;
  Setup() : grid(2, 81, 1.25), cub(2, 1.0, 0.25, grid) {}
};
}  // namespace

TEST_CASE("open_map: constant map stays itself everywhere") {
  Setup s;
  auto u = constant_map(s.grid, {1.0, -2.0, 0.5});
  std::vector<int64_t> faces;
  for (int64_t c = 0; c < s.cub.face_count(1); ++c) faces.push_back(c);
  OpeningOptions opt;
  opt.p = 2.0;
  auto res = open_map(u, s.cub, faces, 1, opt);
  for (size_t i = 0; i < u.values.size(); ++i) CHECK(res.opened.values[i] == u.values[i]);
}

TEST_CASE("open_map: identity outside the inflated skeleton is bit-exact") {
  Setup s;
  Rng rng(5);
  auto u = smooth_random_map(s.grid, 2, rng, 3.0);
  // open around the vertices of the central cube only
  std::vector<int64_t> faces;
  Face v;
  v.axes = 0;
  v.corner = Index{2, 2, 0, 0};
  faces.push_back(s.cub.face_index(v));
  OpeningOptions opt;
  auto res = open_map(u, s.cub, faces, 0, opt);

  const double eta = s.cub.eta();
  Point lo{}, hi{};
  s.cub.face_box(v, lo, hi);
  int changed = 0;
  for (int64_t n = 0; n < s.grid.num_nodes(); ++n) {
    const Point x = s.grid.node_point(s.grid.node_at(n));
    const double d = std::max(std::abs(x[0] - lo[0]), std::abs(x[1] - lo[1]));
    auto a = u.at(n);
    auto b = res.opened.at(n);
    if (d > 2.0 * opt.rho * eta + 1e-12) {
      CHECK(a[0] == b[0]);
      CHECK(a[1] == b[1]);
    } else if (a[0] != b[0]) {
      ++changed;
    }
  }
  CHECK(changed > 0);  // something was actually opened
}

TEST_CASE("open_map: fiber constancy around vertices, exact plateau") {
  Setup s;
  Rng rng(7);
  auto u = smooth_random_map(s.grid, 2, rng, 2.0);
  Face v;
  v.axes = 0;
  v.corner = Index{2, 2, 0, 0};
  std::vector<int64_t> faces{s.cub.face_index(v)};
  OpeningOptions opt;
  auto res = open_map(u, s.cub, faces, 0, opt);
  REQUIRE(res.diagnostics.size() == 1);
  CHECK(res.diagnostics[0].fiber_variance_max < 1e-18);

  // direct scan: the composed map collapses the plateau to one point
  Point vx = s.cub.face_center(v);
  std::vector<double> ref(2), cur(2);
  sample(u, res.map.apply(vx), ref);
  Rng rng2(8);
  for (int t = 0; t < 100; ++t) {
    Point x = vx;
    x[0] += rng2.uniform(-1.0, 1.0) * opt.rho * s.cub.eta();
    x[1] += rng2.uniform(-1.0, 1.0) * opt.rho * s.cub.eta();
    sample(u, res.map.apply(x), cur);
    CHECK(cur[0] == ref[0]);
    CHECK(cur[1] == ref[1]);
  }
}

TEST_CASE("open_map: edge opening makes the map one-dimensional along the edge tube") {
  Setup s;
  Rng rng(9);
  auto u = smooth_random_map(s.grid, 3, rng, 2.5);
  // all edges of one bad cube
  std::vector<int64_t> faces = s.cub.faces_of_cell(4, 1);  // center cell of the 3x3
  OpeningOptions opt;
  opt.p = 1.5;
  auto res = open_map(u, s.cub, faces, 1, opt);
  for (const auto& d : res.diagnostics) CHECK(d.fiber_variance_max < 1e-18);

  // normal fibers across an edge interior are constant
  const Face e = s.cub.face(1, faces[0]);
  Point lo{}, hi{};
  s.cub.face_box(e, lo, hi);
  const int tang = ((e.axes >> 0) & 1) ? 0 : 1;
  const int norm = 1 - tang;
  std::vector<double> ref(3), cur(3);
  for (int ts = 1; ts < 5; ++ts) {
    Point base{};
    base[tang] = lo[tang] + (hi[tang] - lo[tang]) * ts / 5.0;
    base[norm] = lo[norm];
    bool have = false;
    for (double off : {-0.9, -0.4, 0.3, 0.8}) {
      Point x = base;
      x[norm] += off * opt.rho * s.cub.eta();
      sample(u, res.map.apply(x), cur);
      if (!have) {
        ref = cur;
        have = true;
      } else {
        for (int c = 0; c < 3; ++c) CHECK(cur[static_cast<size_t>(c)] == ref[static_cast<size_t>(c)]);
      }
    }
  }
}

TEST_CASE("open_map: idempotence on the plateaus") {
  Setup s;
  Rng rng(11);
  auto u = smooth_random_map(s.grid, 2, rng, 2.0);
  std::vector<int64_t> faces = s.cub.faces_of_cell(4, 1);
  OpeningOptions opt;
  auto res1 = open_map(u, s.cub, faces, 1, opt);
  auto res2 = open_map(res1.opened, s.cub, faces, 1, opt);
  // values on plateau nodes unchanged by the second pass
  const double eta = s.cub.eta();
  for (int64_t fidx : faces) {
    const Face f = s.cub.face(1, fidx);
    Point lo{}, hi{};
    s.cub.face_box(f, lo, hi);
    for (int64_t n = 0; n < s.grid.num_nodes(); ++n) {
      const Point x = s.grid.node_point(s.grid.node_at(n));
      // deep inside the plateau of the edge tube
      bool inside = true;
      for (int a = 0; a < 2; ++a) {
        if ((f.axes >> a) & 1) {
          if (x[a] < lo[a] + 0.3 * eta || x[a] > hi[a] - 0.3 * eta) inside = false;
        } else {
          if (std::abs(x[a] - lo[a]) > 0.5 * opt.rho * eta) inside = false;
        }
      }
      if (!inside) continue;
      auto a1 = res1.opened.at(n);
      auto a2 = res2.opened.at(n);
      for (int c = 0; c < 2; ++c)
        CHECK(std::abs(a1[c] - a2[c]) < 1e-12);
    }
  }
}

TEST_CASE("select_shift: constant map gives zero energy, spike is dodged") {
  Setup s;
  auto c = constant_map(s.grid, {2.0});
  Face v;
  v.axes = 0;
  v.corner = Index{2, 2, 0, 0};
  OpeningOptions opt;
  auto ch = select_shift(c, s.cub, 0, s.cub.face_index(v), opt);
  CHECK(ch.chosen_energy == doctest::Approx(0.0));

  // linear map: all candidates comparable, chosen below twice the average
  auto lin = identity_map(s.grid);
  auto chl = select_shift(lin, s.cub, 0, s.cub.face_index(v), opt);
  CHECK(chl.chosen_energy <= 2.0 * chl.average_energy);
  CHECK(chl.chosen_energy > 0.0);

  // a sharp bump at the vertex: the chosen shift moves the plateau off it
  const Point vx = s.cub.face_center(v);
  auto spike = map_from_function(s.grid, 1, [&](const Point& x, std::span<double> out) {
    const double d2 = (x[0] - vx[0]) * (x[0] - vx[0]) + (x[1] - vx[1]) * (x[1] - vx[1]);
    out[0] = std::exp(-d2 / (2 * 0.02 * 0.02));
  });
  OpeningOptions fine = opt;
  fine.shift_candidates_per_axis = 5;
  fine.select_stride = 2;
  auto chs = select_shift(spike, s.cub, 0, s.cub.face_index(v), fine);
  double znorm = 0.0;
  for (double zz : chs.shift) znorm = std::max(znorm, std::abs(zz));
  CHECK(znorm > 0.0);
  CHECK(chs.chosen_energy <= 2.0 * chs.average_energy);
}

TEST_CASE("open_map: energy ratio over the skeleton neighborhood stays moderate") {
  Setup s;
  Rng rng(13);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    auto u = smooth_random_map(s.grid, 2, rng, 2.5);
    std::vector<int64_t> faces = s.cub.faces_of_cell(4, 1);
    OpeningOptions opt;
    opt.p = 2.0;
    auto res = open_map(u, s.cub, faces, 1, opt);
    if (res.energy_before > 0.0) worst = std::max(worst, res.energy_after / res.energy_before);
  }
  CHECK(worst < 12.0);
  CHECK(worst > 0.0);
}

TEST_CASE("flatness bound: constant map vanishes, shrinking cubes stay bounded") {
  Setup s;
  Rng rng(15);
  auto u = smooth_random_map(s.grid, 2, rng, 2.0);
  // open around the full 1-skeleton of the center cell; tau is one vertex
  std::vector<int64_t> faces = s.cub.faces_of_cell(4, 1);
  OpeningOptions opt;
  opt.p = 1.5;  // ell = 1 <= p + 1
  auto res = open_map(u, s.cub, faces, 1, opt);

  Face v;
  v.axes = 0;
  v.corner = Index{2, 2, 0, 0};
  const int64_t tau = s.cub.face_index(v);
  const Point vx = s.cub.face_center(v);
  std::vector<std::pair<Point, double>> probes;
  const double eta = s.cub.eta();
  for (double r : {opt.rho * eta, opt.rho * eta / 2, opt.rho * eta / 4})
    probes.push_back({vx, r});
  // an out-of-tube probe must be rejected
  Point off = vx;
  off[0] += 3 * eta;
  probes.push_back({off, opt.rho * eta});

  auto rep = flatness_bound_check(res.opened, s.cub, tau, 0, opt.rho, opt.p, probes);
  CHECK(rep.rejected == 1);
  CHECK(rep.max_ratio < 50.0);

  auto czero = constant_map(s.grid, {1.0});
  auto repz = flatness_bound_check(czero, s.cub, tau, 0, opt.rho, opt.p, probes);
  for (const auto& smp : repz.samples)
    if (smp.accepted) CHECK(smp.lhs == 0.0);
}

TEST_CASE("opening diagnostics export") {
  Setup s;
  Rng rng(17);
  auto u = smooth_random_map(s.grid, 2, rng, 2.0);
  std::vector<int64_t> faces = s.cub.faces_of_cell(0, 0);
  OpeningOptions opt;
  auto res = open_map(u, s.cub, faces, 0, opt);
  auto dir = temp_dir("open");
  export_opening_diagnostics(res.diagnostics, dir + "/opening.json");
  CHECK(std::filesystem::file_size(dir + "/opening.json") > 10);
}
