#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "sobotrim/grid.hpp"
#include "sobotrim/rng.hpp"

namespace st = sobotrim;

inline st::GridMap constant_map(const st::Grid& g, std::vector<double> c) {
  return st::map_from_function(g, static_cast<int>(c.size()),
                               [&](const st::Point&, std::span<double> out) {
                                 std::copy(c.begin(), c.end(), out.begin());
                               });
}

inline st::GridMap identity_map(const st::Grid& g) {
  return st::map_from_function(g, g.m, [&](const st::Point& x, std::span<double> out) {
    for (int i = 0; i < g.m; ++i) out[i] = x[i];
  });
}

// x/|x| into the unit circle; the singular center node takes the +x value.
inline st::GridMap angular_map(const st::Grid& g) {
  return st::map_from_function(g, 2, [&](const st::Point& x, std::span<double> out) {
    const double r = std::hypot(x[0], x[1]);
    if (r < 1e-14) {
      out[0] = 1.0;
      out[1] = 0.0;
      return;
    }
    out[0] = x[0] / r;
    out[1] = x[1] / r;
  });
}

// Smooth low-frequency S^2-valued test map.
inline st::GridMap sphere_valued_map(const st::Grid& g, st::Rng& rng, double amp = 0.8) {
  double a1 = rng.uniform(0.5, 2.0), a2 = rng.uniform(0.5, 2.0);
  double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
  return st::map_from_function(g, 3, [=](const st::Point& x, std::span<double> out) {
    const double th = amp * std::sin(a1 * x[0] + p1);
    const double ph = amp * std::cos(a2 * x[1] + p2);
    out[0] = std::cos(th) * std::cos(ph);
    out[1] = std::cos(th) * std::sin(ph);
    out[2] = std::sin(th);
  });
}

// Smooth scalar/vector map with controllable roughness for batteries.
inline st::GridMap smooth_random_map(const st::Grid& g, int nu, st::Rng& rng,
                                     double freq = 2.0) {
  std::vector<double> a(nu), b(nu), ph(nu), amp(nu);
  for (int c = 0; c < nu; ++c) {
    a[c] = rng.uniform(0.3, freq);
    b[c] = rng.uniform(0.3, freq);
    ph[c] = rng.uniform(0.0, 6.28);
    amp[c] = rng.uniform(0.3, 1.0);
  }
  return st::map_from_function(g, nu, [=](const st::Point& x, std::span<double> out) {
    for (size_t c = 0; c < amp.size(); ++c) {
      double s = 0.0;
      for (int i = 0; i < g.m; ++i) s += (i % 2 ? b[c] : a[c]) * x[i];
      out[c] = amp[c] * std::sin(s + ph[c]);
    }
  });
}

inline std::string temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("sobotrim_test_" + tag);
  std::filesystem::create_directories(p);
  return p.string();
}
