#include "sobotrim/trimming.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sobotrim/opening.hpp"
#include "sobotrim/parallel.hpp"
#include "sobotrim/smoothing.hpp"

namespace sobotrim {

namespace {

constexpr double kPi = 3.14159265358979323846;

double vdist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// (p-1)-dimensional facet of a cube map: axis and side fixed
GridMap extract_facet(const GridMap& u, int axis, int side) {
  const Grid& g = u.grid;
  require(g.m >= 2, errc::config_invalid, "facets need at least two dimensions");
  Grid fg(g.m - 1, g.res, g.inradius);
  GridMap out(fg, u.ambient_dim);
  for (int64_t n = 0; n < fg.num_nodes(); ++n) {
    Index fiv = fg.node_at(n);
    Index hiv{};
    int k = 0;
    for (int i = 0; i < g.m; ++i) {
      if (i == axis)
        hiv[i] = side ? g.res - 1 : 0;
      else
        hiv[i] = fiv[k++];
    }
    auto src = u.at(hiv);
    auto dst = out.at(n);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

bool is_boundary_node(const Grid& g, const Index& iv) {
  for (int i = 0; i < g.m; ++i)
    if (iv[i] == 0 || iv[i] == g.res - 1) return true;
  return false;
}

}  // namespace

double boundary_seminorm(const GridMap& u, double p) {
  const Grid& g = u.grid;
  if (g.m == 1) return 0.0;
  double acc = 0.0;
  for (int axis = 0; axis < g.m; ++axis)
    for (int side = 0; side <= 1; ++side) {
      auto facet = extract_facet(u, axis, side);
      acc += std::pow(sobolev_seminorm(facet, p, Region::full(facet.grid)), p);
    }
  return std::pow(acc, 1.0 / p);
}

double boundary_energy(const GridMap& u, double p) {
  return std::pow(u.grid.inradius * std::pow(boundary_seminorm(u, p), p), 1.0 / p);
}

TrimResult trim_small_energy(const GridMap& u, const Manifold& M, double p, double alpha,
                             double kappa) {
  const Grid& g = u.grid;
  const double e = boundary_energy(u, p);
  require(e <= alpha, errc::not_small_energy, "boundary trace energy above the threshold");

  // boundary node sample and the chart anchor minimizing the spread
  std::vector<int64_t> bnodes;
  for (int64_t n = 0; n < g.num_nodes(); ++n)
    if (is_boundary_node(g, g.node_at(n))) bnodes.push_back(n);
  const int64_t bstride = std::max<int64_t>(1, static_cast<int64_t>(bnodes.size()) / 256);
  std::vector<int64_t> bsample;
  for (size_t i = 0; i < bnodes.size(); i += static_cast<size_t>(bstride))
    bsample.push_back(bnodes[i]);

  int64_t anchor = bsample.front();
  double best_spread = 1e300;
  for (size_t ci = 0; ci < bsample.size(); ci += 4) {
    double spread = 0.0;
    auto cand = u.at(bsample[ci]);
    for (int64_t n : bsample) spread = std::max(spread, vdist(cand, u.at(n)));
    if (spread < best_spread) {
      best_spread = spread;
      anchor = bsample[ci];
    }
  }
  std::vector<double> xi(u.at(anchor).begin(), u.at(anchor).end());
  xi = M.project(xi);  // snap the anchor exactly onto the manifold

  Chart ch = M.chart_at(xi, kappa);
  const double kpp = std::min(kappa, ch.kappa_prime / ch.lipschitz);
  // range condition: the whole trace must sit inside one chart ball
  double geo_spread = 0.0;
  {
    int64_t far_node = anchor;
    double worst = 0.0;
    for (int64_t n : bsample) {
      const double d = vdist(xi, u.at(n));
      if (d > worst) {
        worst = d;
        far_node = n;
      }
    }
    std::vector<double> far(u.at(far_node).begin(), u.at(far_node).end());
    geo_spread = M.geodesic_distance(xi, M.project(far));
  }
  require(geo_spread <= kpp, errc::not_small_energy,
          "boundary range does not fit a single chart ball");

  // push the trace through the chart
  const int n_chart = M.intrinsic_dim();
  GridMap gvals(g, n_chart, 0.0);
  for (int64_t n : bnodes) {
    auto z = ch.forward(u.at(n));
    auto dst = gvals.at(n);
    std::copy(z.begin(), z.end(), dst.begin());
  }
  std::vector<double> gbar(static_cast<size_t>(n_chart), 0.0);
  for (int64_t n : bnodes) {
    auto z = gvals.at(n);
    for (int c = 0; c < n_chart; ++c) gbar[static_cast<size_t>(c)] += z[c];
  }
  for (double& v : gbar) v /= static_cast<double>(bnodes.size());
  const auto zc = ch.forward(xi);

  // boundary sampler in chart coordinates
  auto boundary_at = [&](const Point& bp, std::span<double> out) {
    int axis = 0;
    for (int i = 1; i < g.m; ++i)
      if (std::abs(bp[i]) > std::abs(bp[axis])) axis = i;
    const int side = bp[axis] > 0 ? 1 : 0;
    auto facet = extract_facet(gvals, axis, side);
    Point local{};
    int k = 0;
    for (int i = 0; i < g.m; ++i)
      if (i != axis) local[k++] = bp[i];
    sample(facet, local, out);
  };

  TrimResult res;
  res.extension = u;
  const double L = g.inradius;
  std::vector<double> w(static_cast<size_t>(n_chart));
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    Index iv = g.node_at(n);
    if (is_boundary_node(g, iv)) continue;  // pinned to the input
    Point x = g.node_point(iv);
    double linf = 0.0;
    for (int i = 0; i < g.m; ++i) linf = std::max(linf, std::abs(x[i]));
    Point bp{};
    if (linf < 1e-15) {
      bp[0] = L;
    } else {
      for (int i = 0; i < g.m; ++i) bp[i] = L * x[i] / linf;
    }
    boundary_at(bp, w);
    // damped radial fill, then clamp into the guaranteed chart ball
    const double fade = linf / L;
    double r2 = 0.0;
    for (int c = 0; c < n_chart; ++c) {
      w[static_cast<size_t>(c)] = gbar[static_cast<size_t>(c)] +
                                  fade * (w[static_cast<size_t>(c)] - gbar[static_cast<size_t>(c)]);
      const double d = w[static_cast<size_t>(c)] - zc[static_cast<size_t>(c)];
      r2 += d * d;
    }
    const double rr = std::sqrt(r2);
    const double cap = 0.98 * ch.kappa_prime;
    if (rr > cap)
      for (int c = 0; c < n_chart; ++c)
        w[static_cast<size_t>(c)] =
            zc[static_cast<size_t>(c)] + (w[static_cast<size_t>(c)] - zc[static_cast<size_t>(c)]) * cap / rr;
    auto back = ch.inverse(w);
    auto dst = res.extension.at(n);
    std::copy(back.begin(), back.end(), dst.begin());
  }

  // metrics
  double resid = 0.0, supn = 0.0, modulus = 0.0;
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    auto v = res.extension.at(n);
    double nn = 0.0;
    for (double c : v) nn += c * c;
    supn = std::max(supn, std::sqrt(nn));
    resid = std::max(resid, M.membership_residual(v));
    Index iv = g.node_at(n);
    for (int a = 0; a < g.m; ++a) {
      if (iv[a] + 1 >= g.res) continue;
      Index jv = iv;
      jv[a] += 1;
      modulus = std::max(modulus, vdist(v, res.extension.at(jv)));
    }
  }
  res.sup_norm = supn;
  res.manifold_residual = resid;
  res.continuity_modulus = modulus;
  res.boundary_residual = 0.0;  // boundary nodes are exact copies
  const double denom =
      sobolev_seminorm(u, p, Region::full(g)) + boundary_seminorm(u, p);
  const double num = sobolev_seminorm(res.extension, p, Region::full(g));
  res.energy_ratio = denom > 0.0 ? num / denom : 0.0;
  return res;
}

GridMap geodesic_trim_1d(std::span<const double> left, std::span<const double> right,
                         const Manifold& M, int res) {
  require(M.contains(left, 1e-6) && M.contains(right, 1e-6), errc::not_on_manifold,
          "endpoints must lie on the manifold");
  auto path = M.geodesic_path(left, right);
  // cumulative arc-length parametrization
  std::vector<double> cum(path.size(), 0.0);
  for (size_t k = 1; k < path.size(); ++k)
    cum[k] = cum[k - 1] + vdist(path[k - 1], path[k]);
  const double total = cum.back();
  Grid g(1, res, 1.0);
  GridMap out(g, M.ambient_dim());
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    const double t = (g.coord(g.node_at(n)[0]) + 1.0) / 2.0 * total;
    size_t k = 1;
    while (k + 1 < cum.size() && cum[k] < t) ++k;
    const double seg = cum[k] - cum[k - 1];
    const double w = seg > 0.0 ? (t - cum[k - 1]) / seg : 0.0;
    auto dst = out.at(n);
    for (int c = 0; c < M.ambient_dim(); ++c)
      dst[c] = (1.0 - w) * path[k - 1][static_cast<size_t>(c)] +
               w * path[k][static_cast<size_t>(c)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Brouwer degree

namespace {

// boundary ring of the node-aligned square of radius r, counterclockwise
std::vector<int64_t> boundary_ring(const Grid& g, double r) {
  require(g.m == 2, errc::config_invalid, "winding degree needs a planar domain");
  const int c = (g.res - 1) / 2;
  const int k = static_cast<int>(std::lround(r / g.h()));
  require(k >= 1 && c - k >= 0 && c + k <= g.res - 1, errc::parameter_out_of_range,
          "ring radius must be grid aligned and inside");
  std::vector<int64_t> ring;
  auto push = [&](int i, int j) { ring.push_back(g.node_index(Index{i, j, 0, 0})); };
  for (int i = c - k; i < c + k; ++i) push(i, c - k);
  for (int j = c - k; j < c + k; ++j) push(c + k, j);
  for (int i = c + k; i > c - k; --i) push(i, c + k);
  for (int j = c + k; j > c - k; --j) push(c - k, j);
  return ring;
}

}  // namespace

int brouwer_degree_winding(const GridMap& u, double r, std::span<const double> probe) {
  require(u.ambient_dim == 2, errc::config_invalid, "winding needs planar values");
  auto ring = boundary_ring(u.grid, r);
  // stability margin: probe clear of the boundary image
  double min_dist = 1e300, max_osc = 0.0;
  for (size_t i = 0; i < ring.size(); ++i) {
    auto a = u.at(ring[i]);
    auto b = u.at(ring[(i + 1) % ring.size()]);
    min_dist = std::min(min_dist, std::hypot(a[0] - probe[0], a[1] - probe[1]));
    max_osc = std::max(max_osc, std::hypot(a[0] - b[0], a[1] - b[1]));
  }
  require(min_dist >= 2.0 * max_osc, errc::probe_unstable,
          "probe too close to the boundary image");
  double total = 0.0;
  for (size_t i = 0; i < ring.size(); ++i) {
    auto a = u.at(ring[i]);
    auto b = u.at(ring[(i + 1) % ring.size()]);
    const double a1 = std::atan2(a[1] - probe[1], a[0] - probe[0]);
    const double a2 = std::atan2(b[1] - probe[1], b[0] - probe[0]);
    double d = a2 - a1;
    while (d > kPi) d -= 2.0 * kPi;
    while (d < -kPi) d += 2.0 * kPi;
    total += d;
  }
  return static_cast<int>(std::lround(total / (2.0 * kPi)));
}

namespace {

// Signed count over the Freudenthal triangulation of the cells of a region.
// An optional per-node gate restricts the count to simplices whose vertices
// all pass (used for chart locality on curved targets).
int simplex_degree_region(const GridMap& u, const Region& region,
                          std::span<const double> probe,
                          const std::vector<uint8_t>* node_gate = nullptr) {
  const Grid& g = u.grid;
  const int n = g.m;
  require(u.ambient_dim == n, errc::config_invalid, "simplex degree needs nu == n");

  // permutations of the axes define the Freudenthal simplices; the domain
  // orientation of each simplex is the permutation parity
  std::vector<std::vector<int>> perms;
  std::vector<int> parities;
  std::vector<int> axes(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) axes[static_cast<size_t>(i)] = i;
  do {
    int par = 1;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (axes[static_cast<size_t>(i)] > axes[static_cast<size_t>(j)]) par = -par;
    perms.push_back(axes);
    parities.push_back(par);
  } while (std::next_permutation(axes.begin(), axes.end()));

  int deg = 0;
  std::vector<double> A(static_cast<size_t>(n) * n), rhs(static_cast<size_t>(n));
  std::vector<Index> verts(static_cast<size_t>(n) + 1);
  for (int64_t ci = 0; ci < g.num_cells(); ++ci) {
    if (!region.cell(ci)) continue;
    Index iv = g.cell_at(ci);
    for (size_t pi = 0; pi < perms.size(); ++pi) {
      const auto& perm = perms[pi];
      verts[0] = iv;
      for (int s = 0; s < n; ++s) {
        verts[static_cast<size_t>(s) + 1] = verts[static_cast<size_t>(s)];
        verts[static_cast<size_t>(s) + 1][perm[static_cast<size_t>(s)]] += 1;
      }
      if (node_gate) {
        bool pass = true;
        for (int s = 0; s <= n && pass; ++s)
          if (!(*node_gate)[static_cast<size_t>(g.node_index(verts[static_cast<size_t>(s)]))])
            pass = false;
        if (!pass) continue;
      }
      // barycentric solve: u(v0) + A t = probe
      auto v0 = u.at(verts[0]);
      for (int col = 0; col < n; ++col) {
        auto vc = u.at(verts[static_cast<size_t>(col) + 1]);
        for (int row = 0; row < n; ++row)
          A[static_cast<size_t>(row) * n + static_cast<size_t>(col)] = vc[row] - v0[row];
      }
      for (int row = 0; row < n; ++row) rhs[static_cast<size_t>(row)] = probe[static_cast<size_t>(row)] - v0[row];
      // solve with partial pivoting, track the determinant sign
      std::vector<double> M(A);
      std::vector<double> b(rhs);
      double det = 1.0;
      bool singular = false;
      for (int col = 0; col < n && !singular; ++col) {
        int piv = col;
        for (int row = col + 1; row < n; ++row)
          if (std::abs(M[static_cast<size_t>(row) * n + static_cast<size_t>(col)]) >
              std::abs(M[static_cast<size_t>(piv) * n + static_cast<size_t>(col)]))
            piv = row;
        if (std::abs(M[static_cast<size_t>(piv) * n + static_cast<size_t>(col)]) < 1e-300) {
          singular = true;
          break;
        }
        if (piv != col) {
          det = -det;
          for (int kk = 0; kk < n; ++kk)
            std::swap(M[static_cast<size_t>(col) * n + static_cast<size_t>(kk)],
                      M[static_cast<size_t>(piv) * n + static_cast<size_t>(kk)]);
          std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(piv)]);
        }
        det *= M[static_cast<size_t>(col) * n + static_cast<size_t>(col)];
        for (int row = col + 1; row < n; ++row) {
          const double f = M[static_cast<size_t>(row) * n + static_cast<size_t>(col)] /
                           M[static_cast<size_t>(col) * n + static_cast<size_t>(col)];
          for (int kk = col; kk < n; ++kk)
            M[static_cast<size_t>(row) * n + static_cast<size_t>(kk)] -=
                f * M[static_cast<size_t>(col) * n + static_cast<size_t>(kk)];
          b[static_cast<size_t>(row)] -= f * b[static_cast<size_t>(col)];
        }
      }
      if (singular) continue;
      std::vector<double> t(static_cast<size_t>(n));
      for (int row = n - 1; row >= 0; --row) {
        double v = b[static_cast<size_t>(row)];
        for (int kk = row + 1; kk < n; ++kk)
          v -= M[static_cast<size_t>(row) * n + static_cast<size_t>(kk)] * t[static_cast<size_t>(kk)];
        t[static_cast<size_t>(row)] = v / M[static_cast<size_t>(row) * n + static_cast<size_t>(row)];
      }
      double tsum = 0.0;
      bool interior = true, marginal = false;
      const double tol = 1e-9;
      for (int i = 0; i < n; ++i) {
        if (t[static_cast<size_t>(i)] < -tol) interior = false;
        if (std::abs(t[static_cast<size_t>(i)]) <= tol) marginal = true;
        tsum += t[static_cast<size_t>(i)];
      }
      if (tsum > 1.0 + tol) interior = false;
      if (std::abs(1.0 - tsum) <= tol) marginal = true;
      if (interior && marginal)
        raise(errc::probe_unstable, "probe on a simplex boundary");
      if (interior) deg += (det > 0.0 ? 1 : -1) * parities[pi];
    }
  }
  return deg;
}

// measure-zero edge hits get a deterministic nudge before giving up
template <typename F>
int degree_with_nudge(std::span<const double> probe, double scale, F&& attempt) {
  std::vector<double> p(probe.begin(), probe.end());
  for (int tries = 0;; ++tries) {
    try {
      return attempt(std::span<const double>(p));
    } catch (const Error& e) {
      if (e.code() != errc::probe_unstable || tries >= 3) throw;
      for (size_t i = 0; i < p.size(); ++i)
        p[i] += scale * 3e-7 * (tries + 1) * (i % 2 ? 0.70710678 : 1.0);
    }
  }
}

Region centered_square(const Grid& g, double r) {
  const int c = (g.res - 1) / 2;
  const int k = static_cast<int>(std::lround(r / g.h()));
  require(k >= 1 && c - k >= 0 && c + k <= g.res - 1, errc::parameter_out_of_range,
          "radius must be grid aligned and inside");
  return Region::of_cells(
      g,
      [&](const Point& x) {
        for (int i = 0; i < g.m; ++i)
          if (std::abs(x[i]) > r) return false;
        return true;
      },
      "Q_r");
}

}  // namespace

int brouwer_degree_region(const GridMap& u, const Region& region,
                          std::span<const double> probe) {
  return simplex_degree_region(u, region, probe);
}

int brouwer_degree_simplex(const GridMap& u, double r, std::span<const double> probe) {
  double scale = 0.0;
  for (double v : probe) scale = std::max(scale, std::abs(v));
  return degree_with_nudge(probe, std::max(scale, 1.0), [&](std::span<const double> p) {
    return simplex_degree_region(u, centered_square(u.grid, r), p);
  });
}

int brouwer_degree(const GridMap& u, double r, std::span<const double> probe) {
  if (u.grid.m == 2) {
    const int w = brouwer_degree_winding(u, r, probe);
    return w;
  }
  return brouwer_degree_simplex(u, r, probe);
}

int manifold_degree(const GridMap& u, const Manifold& M, double r,
                    std::span<const double> probe) {
  require(M.contains(probe, 1e-6), errc::not_on_manifold, "probe must lie on the manifold");
  require(u.grid.m == M.intrinsic_dim(), errc::config_invalid, "domain dimension mismatch");
  const int n = M.intrinsic_dim();
  // tangent-plane graph chart at the probe
  auto normal = M.surface_normal(probe);
  std::vector<std::vector<double>> basis;
  {
    // orthonormal completion of the normal
    std::vector<double> nn(normal.begin(), normal.end());
    basis.emplace_back(nn);
    for (int i = 0; i < M.ambient_dim() && static_cast<int>(basis.size()) < M.ambient_dim();
         ++i) {
      std::vector<double> cand(static_cast<size_t>(M.ambient_dim()), 0.0);
      cand[static_cast<size_t>(i)] = 1.0;
      for (const auto& b : basis) {
        double pr = 0.0;
        for (size_t j = 0; j < cand.size(); ++j) pr += cand[j] * b[j];
        for (size_t j = 0; j < cand.size(); ++j) cand[j] -= pr * b[j];
      }
      double nrm = 0.0;
      for (double v : cand) nrm += v * v;
      nrm = std::sqrt(nrm);
      if (nrm > 1e-6) {
        for (double& v : cand) v /= nrm;
        basis.push_back(std::move(cand));
      }
    }
  }
  // chart-projected values
  GridMap proj(u.grid, n, 0.0);
  std::vector<double> dist_to_probe(static_cast<size_t>(u.grid.num_nodes()), 0.0);
  for (int64_t nn = 0; nn < u.grid.num_nodes(); ++nn) {
    auto val = u.at(nn);
    auto dst = proj.at(nn);
    double d2 = 0.0;
    for (int c = 0; c < M.ambient_dim(); ++c) {
      const double dd = val[c] - probe[static_cast<size_t>(c)];
      d2 += dd * dd;
    }
    dist_to_probe[static_cast<size_t>(nn)] = std::sqrt(d2);
    for (int k = 0; k < n; ++k) {
      double acc = 0.0;
      for (int c = 0; c < M.ambient_dim(); ++c)
        acc += (val[c] - probe[static_cast<size_t>(c)]) * basis[static_cast<size_t>(k) + 1][static_cast<size_t>(c)];
      dst[k] = acc;
    }
  }
  // locality radius: stay within the graph zone of the chart; for the
  // revolution targets the cross-section radius bounds it
  double loc = 0.25;
  if (M.kind() == ManifoldKind::funnel_sphere || M.kind() == ManifoldKind::algebraic_funnel) {
    double radial = 0.0;
    for (int i = 0; i < n; ++i) radial += probe[static_cast<size_t>(i)] * probe[static_cast<size_t>(i)];
    loc = std::max(0.8 * std::sqrt(radial), 1e-3);
  }
  // probe maps to the chart origin by construction; locality is measured in
  // the same coordinates (the map stores the full offset below)
  std::vector<double> zero(static_cast<size_t>(n), 0.0);
  GridMap full(u.grid, n, 0.0);
  std::vector<uint8_t> near(static_cast<size_t>(u.grid.num_nodes()), 0);
  for (int64_t nn = 0; nn < u.grid.num_nodes(); ++nn) {
    auto src = proj.at(nn);
    auto dst = full.at(nn);
    std::copy(src.begin(), src.end(), dst.begin());
    near[static_cast<size_t>(nn)] = dist_to_probe[static_cast<size_t>(nn)] <= loc ? 1 : 0;
  }
  // locality gate through the ambient distance: simplices whose values leave
  // the graph zone are outside the chart and must not count
  return degree_with_nudge(zero, std::max(loc, 1e-3), [&](std::span<const double> p) {
    return simplex_degree_region(full, centered_square(u.grid, r), p, &near);
  });
}

// ---------------------------------------------------------------------------
// obstruction certificate and the product lift

GridMap squeeze_competitor(const GridMap& u, double delta) {
  const Grid& g = u.grid;
  GridMap out(g, u.ambient_dim);
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    Point x = g.node_point(g.node_at(n));
    double linf = 0.0;
    for (int i = 0; i < g.m; ++i) linf = std::max(linf, std::abs(x[i]));
    Point s = x;
    if (linf < delta) {
      if (linf < 1e-15) {
        s[0] = delta;  // send the center to a fixed point of the delta ring
      } else {
        for (int i = 0; i < g.m; ++i) s[i] = x[i] * delta / linf;
      }
    }
    sample(u, s, out.at(n));
  }
  return out;
}

ObstructionCertificate obstruction_certificate(const GridMap& u, const Manifold& M,
                                               const std::vector<std::vector<double>>& probes,
                                               const std::vector<double>& radii,
                                               int battery_size) {
  ObstructionCertificate cert;
  cert.probes = probes;
  cert.radii = radii;
  const Grid& g = u.grid;
  const int n = g.m;
  cert.area_constant = std::pow(static_cast<double>(n), -0.5 * n);

  // ball energies, nondecreasing in r by construction of the regions
  const GradientField gf = gradient(u);
  for (double r : radii) {
    Point lo{}, hi{};
    for (int i = 0; i < n; ++i) {
      lo[i] = -r;
      hi[i] = r;
    }
    Region ball = Region::box(g, lo, hi, "Q_r");
    cert.ball_energies.push_back(energy_integral(gf, static_cast<double>(n), ball));
  }

  // degrees at every probe and radius
  for (const auto& probe : probes) {
    std::vector<int> row;
    for (double r : radii) {
      int deg = 0;
      try {
        deg = manifold_degree(u, M, r, probe);
      } catch (const Error& e) {
        if (e.code() == errc::probe_unstable) throw;
        deg = 0;  // no meaningful degree (e.g. contractible target)
      }
      require(deg != 0, errc::certificate_failed,
              "vanishing degree at a certificate probe");
      row.push_back(deg);
    }
    cert.degrees.push_back(row);
  }

  // fixed compact band around the probe latitudes
  if (M.kind() == ManifoldKind::funnel_sphere || M.kind() == ManifoldKind::algebraic_funnel) {
    double lo = 1e300, hi = 0.0;
    for (const auto& probe : probes) {
      double param;
      if (M.kind() == ManifoldKind::funnel_sphere) {
        double r = 0.0;
        for (double v : probe) r += v * v;
        r = std::sqrt(r);
        param = std::acos(std::clamp(probe[static_cast<size_t>(n)] / r, -1.0, 1.0));
      } else {
        param = probe[static_cast<size_t>(n)];
      }
      lo = std::min(lo, param);
      hi = std::max(hi, param);
    }
    cert.hausdorff_measure = M.latitude_band_area(lo * 0.8, hi * 1.2);
  } else {
    cert.hausdorff_measure = 0.0;
  }
  {
    size_t imin = 0;
    for (size_t i = 1; i < radii.size(); ++i)
      if (radii[i] < radii[imin]) imin = i;
    cert.contradiction =
        cert.hausdorff_measure > cert.area_constant * cert.ball_energies[imin];
  }

  // competitor battery: center squeeze-outs at shrinking radii
  const double p = static_cast<double>(n);
  double eps = 1e300;
  for (int j = 0; j < battery_size; ++j) {
    CompetitorEntry e;
    e.delta = 0.5 * std::pow(0.5, j * 4.0 / battery_size);
    GridMap w = squeeze_competitor(u, e.delta);
    const GradientField gw = gradient(w);
    e.gap = std::pow(gradient_lp_distance(gw, gf, p, Region::full(g)), p);
    for (int64_t nn = 0; nn < g.num_nodes(); ++nn) {
      auto v = w.at(nn);
      double s = 0.0;
      for (double c : v) s += c * c;
      e.sup = std::max(e.sup, std::sqrt(s));
    }
    eps = std::min(eps, e.gap);
    cert.battery.push_back(e);
  }
  cert.epsilon = eps;
  return cert;
}

ProductGap product_obstruction(const GridMap& u, const ObstructionCertificate& cert, int m,
                               int slices_per_axis) {
  const int n = u.grid.m;
  require(m >= n, errc::parameter_out_of_range, "need m >= n");
  ProductGap out;
  out.m = m;
  out.n = n;
  out.epsilon_core = cert.epsilon;
  out.expected_factor = std::pow(2.0, m - n);
  if (m == n) {
    out.lifted_gap = cert.epsilon;
    out.slices = 1;
    return out;
  }
  // Fubini sum over transverse sample positions with trapezoid weights; the
  // slice integrand of u o pi equals the core gap on every slice
  const int extra = m - n;
  int total = 1;
  for (int a = 0; a < extra; ++a) total *= slices_per_axis;
  double acc = 0.0;
  for (int s = 0; s < total; ++s) {
    double w = 1.0;
    int rem = s;
    for (int a = 0; a < extra; ++a) {
      const int j = rem % slices_per_axis;
      rem /= slices_per_axis;
      const double axis_w = (j == 0 || j == slices_per_axis - 1) ? 0.5 : 1.0;
      w *= axis_w * 2.0 / (slices_per_axis - 1);
    }
    acc += w * cert.epsilon;
  }
  out.lifted_gap = acc;
  out.slices = total;
  return out;
}

void export_certificate(const ObstructionCertificate& cert, const std::string& path) {
  nlohmann::json j;
  j["probes"] = cert.probes;
  j["radii"] = cert.radii;
  j["degrees"] = cert.degrees;
  j["ball_energies"] = cert.ball_energies;
  j["hausdorff_measure"] = cert.hausdorff_measure;
  j["area_constant"] = cert.area_constant;
  j["epsilon"] = cert.epsilon;
  j["contradiction"] = cert.contradiction;
  nlohmann::json batt = nlohmann::json::array();
  for (const auto& e : cert.battery)
    batt.push_back({{"delta", e.delta}, {"gap", e.gap}, {"sup", e.sup}});
  j["battery"] = batt;
  std::ofstream f(path);
  require(f.good(), errc::io_error, "cannot open " + path);
  f << j.dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// global trimming

TrimOutcome trim_global(const GridMap& u, const Manifold& M, double p,
                        const TrimGlobalOptions& opt) {
  TrimOutcome out;
  const Grid& g = u.grid;
  const double L = g.inradius;
  double mu = opt.mu0 * L;

  for (int refine = 0; refine <= opt.max_refinements; ++refine, mu *= 0.5) {
    // grid-aligned subdivision covering the collar interior
    const double h = g.h();
    const double cells = 2.0 * mu / h;
    if (std::abs(cells - std::lround(cells)) > 1e-9 || cells < 8.0) {
      out.reason = "subdivision misaligned with the grid";
      continue;
    }
    const double LK = mu * std::floor((L - 2.0 * opt.rho * mu) / mu + 1e-12);
    if (LK <= 0.0) {
      out.reason = "domain too small for the subdivision";
      continue;
    }
    const double lambda_hat = LK - 2.0 * opt.rho * mu;

    // collar map: shrink the interior, boundary rays outside; interpolated
    // values are projected back onto the target
    GridMap w(g, u.ambient_dim);
    parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
      for (int64_t nn = b; nn < e; ++nn) {
        Point x = g.node_point(g.node_at(nn));
        double linf = 0.0;
        for (int i = 0; i < g.m; ++i) linf = std::max(linf, std::abs(x[i]));
        Point s{};
        if (linf <= lambda_hat) {
          for (int i = 0; i < g.m; ++i) s[i] = x[i] / lambda_hat * L;
        } else {
          for (int i = 0; i < g.m; ++i) s[i] = x[i] / linf * L;
        }
        auto dst = w.at(nn);
        sample(u, s, dst);
        if (linf < L - 1e-12) {  // keep the outer trace bit-exact
          try {
            auto pr = M.project(std::vector<double>(dst.begin(), dst.end()));
            std::copy(pr.begin(), pr.end(), dst.begin());
          } catch (const Error&) {
          }
        }
      }
    });

    Cubication cub(g.m, LK, mu, g);
    std::vector<int64_t> skel;
    for (int64_t i = 0; i < cub.face_count(g.m - 1); ++i) skel.push_back(i);
    OpeningOptions oopt;
    oopt.rho = opt.rho;
    oopt.p = p;
    oopt.diagnostics = false;
    auto opened = open_map(w, cub, skel, g.m - 1, oopt);

    // interpolation through the opening composition drifts off the target;
    // project the opened map back before cutting it into cubes
    parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
      for (int64_t nn = b; nn < e; ++nn) {
        Point x = g.node_point(g.node_at(nn));
        double linf = 0.0;
        for (int i = 0; i < g.m; ++i) linf = std::max(linf, std::abs(x[i]));
        if (linf >= L - 1e-12) continue;
        auto dst = opened.opened.at(nn);
        try {
          auto pr = M.project(std::vector<double>(dst.begin(), dst.end()));
          std::copy(pr.begin(), pr.end(), dst.begin());
        } catch (const Error&) {
        }
      }
    });

    // per-cube small-energy trims; scan everything so the reported failure
    // carries the topologically meaningful cube
    bool all_ok = true;
    GridMap glued = opened.opened;
    for (int64_t ci = 0; ci < cub.face_count(g.m); ++ci) {
      // extract the cube subgrid
      const Face f = cub.face(g.m, ci);
      Point lo{}, hi{};
      cub.face_box(f, lo, hi);
      Index base{};
      for (int i = 0; i < g.m; ++i)
        base[i] = static_cast<int>(std::lround((lo[i] + g.inradius) / h));
      const int sres = static_cast<int>(std::lround(cells)) + 1;
      GridMap sub(Grid(g.m, sres, mu), u.ambient_dim);
      for (int64_t nn = 0; nn < sub.grid.num_nodes(); ++nn) {
        Index siv = sub.grid.node_at(nn);
        Index hiv = base;
        for (int i = 0; i < g.m; ++i) hiv[i] += siv[i];
        auto src = glued.at(hiv);
        auto dst = sub.at(nn);
        std::copy(src.begin(), src.end(), dst.begin());
      }
      try {
        auto trimmed = trim_small_energy(sub, M, p, opt.alpha, opt.kappa);
        for (int64_t nn = 0; nn < sub.grid.num_nodes(); ++nn) {
          Index siv = sub.grid.node_at(nn);
          Index hiv = base;
          for (int i = 0; i < g.m; ++i) hiv[i] += siv[i];
          auto src = trimmed.extension.at(nn);
          auto dst = glued.at(hiv);
          std::copy(src.begin(), src.end(), dst.begin());
        }
      } catch (const Error& e) {
        all_ok = false;
        // obstruction probe: axis winding of the cube boundary loop
        int winding = 0;
        if (g.m == 2) {
          try {
            GridMap first2(sub.grid, 2, 0.0);
            for (int64_t nn = 0; nn < sub.grid.num_nodes(); ++nn) {
              first2.at(nn)[0] = sub.at(nn)[0];
              first2.at(nn)[1] = sub.at(nn)[1];
            }
            const double rr = mu - 2.0 * h;
            std::vector<double> origin{0.0, 0.0};
            winding = brouwer_degree_winding(first2, rr, origin);
          } catch (const Error&) {
            winding = 0;
          }
        }
        // prefer the failing cube that witnesses a genuine obstruction
        if (out.failing_cube < 0 || (out.obstruction_winding == 0 && winding != 0)) {
          out.failing_cube = ci;
          out.obstruction_winding = winding;
          out.reason = e.what();
        }
      }
    }
    if (!all_ok) continue;  // refine mu and retry

    // mollify-project paste strictly inside the subdivision
    {
      auto inner = Region::of_cells(
          g,
          [&](const Point& x) {
            double linf = 0.0;
            for (int i = 0; i < g.m; ++i) linf = std::max(linf, std::abs(x[i]));
            return linf < LK - 2.0 * h;
          },
          "paste");
      auto phi = Mollifier::standard(g.m);
      auto scale = constant_scale(g, std::min(2.5 * h, 0.45 * mu));
      auto pasted = adaptive_convolve(glued, scale, phi, inner);
      auto mask = inner.node_mask();
      for (int64_t nn = 0; nn < g.num_nodes(); ++nn) {
        if (!mask[static_cast<size_t>(nn)]) continue;
        auto v = pasted.at(nn);
        try {
          auto pr = M.project(std::vector<double>(v.begin(), v.end()));
          auto dst = glued.at(nn);
          std::copy(pr.begin(), pr.end(), dst.begin());
        } catch (const Error&) {
          // out of the tubular zone: keep the unsmoothed trimmed value
        }
      }
    }

    // final projection pass: the pasted and opened zones carry interpolated
    // values a little off the target
    parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
      for (int64_t nn = b; nn < e; ++nn) {
        Point x = g.node_point(g.node_at(nn));
        double linf = 0.0;
        for (int i = 0; i < g.m; ++i) linf = std::max(linf, std::abs(x[i]));
        if (linf >= L - 1e-12) continue;
        auto dst = glued.at(nn);
        try {
          auto pr = M.project(std::vector<double>(dst.begin(), dst.end()));
          std::copy(pr.begin(), pr.end(), dst.begin());
        } catch (const Error&) {
        }
      }
    });

    out.ok = true;
    out.result.extension = glued;
    double resid = 0.0, supn = 0.0, modulus = 0.0, bres = 0.0;
    for (int64_t nn = 0; nn < g.num_nodes(); ++nn) {
      auto v = glued.at(nn);
      double s2 = 0.0;
      for (double c : v) s2 += c * c;
      supn = std::max(supn, std::sqrt(s2));
      resid = std::max(resid, M.membership_residual(v));
      Index iv = g.node_at(nn);
      if (is_boundary_node(g, iv)) bres = std::max(bres, vdist(v, u.at(nn)));
      for (int a = 0; a < g.m; ++a) {
        if (iv[a] + 1 >= g.res) continue;
        Index jv = iv;
        jv[a] += 1;
        modulus = std::max(modulus, vdist(v, glued.at(jv)));
      }
    }
    out.result.sup_norm = supn;
    out.result.manifold_residual = resid;
    out.result.continuity_modulus = modulus;
    out.result.boundary_residual = bres;
    const double denom = sobolev_seminorm(u, p, Region::full(g)) + boundary_seminorm(u, p);
    out.result.energy_ratio =
        denom > 0.0 ? sobolev_seminorm(glued, p, Region::full(g)) / denom : 0.0;
    return out;
  }
  out.ok = false;
  if (out.reason.empty()) out.reason = "per-cube trimming failed at the refinement floor";
  return out;
}

}  // namespace sobotrim
