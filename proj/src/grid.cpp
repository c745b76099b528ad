#include "sobotrim/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "sobotrim/parallel.hpp"

namespace sobotrim {

namespace {
int g_threads = 1;
}

void set_thread_count(int n) { g_threads = std::max(1, n); }
int thread_count() { return g_threads; }

Grid::Grid(int m_, int res_, double inradius_) : m(m_), res(res_), inradius(inradius_) {
  require(m >= 1 && m <= kMaxDim, errc::config_invalid, "dimension must be 1..4");
  require(res >= 3, errc::config_invalid, "grid needs at least 3 samples per axis");
  require(inradius > 0.0, errc::config_invalid, "inradius must be positive");
}

int64_t Grid::num_nodes() const {
  int64_t n = 1;
  for (int i = 0; i < m; ++i) n *= res;
  return n;
}

int64_t Grid::num_cells() const {
  int64_t n = 1;
  for (int i = 0; i < m; ++i) n *= (res - 1);
  return n;
}

int64_t Grid::node_index(const Index& iv) const {
  int64_t flat = 0;
  for (int i = 0; i < m; ++i) flat = flat * res + iv[i];
  return flat;
}

Index Grid::node_at(int64_t flat) const {
  Index iv{};
  for (int i = m - 1; i >= 0; --i) {
    iv[i] = static_cast<int>(flat % res);
    flat /= res;
  }
  return iv;
}

int64_t Grid::cell_index(const Index& iv) const {
  int64_t flat = 0;
  for (int i = 0; i < m; ++i) flat = flat * (res - 1) + iv[i];
  return flat;
}

Index Grid::cell_at(int64_t flat) const {
  Index iv{};
  for (int i = m - 1; i >= 0; --i) {
    iv[i] = static_cast<int>(flat % (res - 1));
    flat /= (res - 1);
  }
  return iv;
}

Point Grid::node_point(const Index& iv) const {
  Point p{};
  for (int i = 0; i < m; ++i) p[i] = coord(iv[i]);
  return p;
}

GridMap::GridMap(const Grid& g, int nu, double fill) : grid(g), ambient_dim(nu) {
  require(nu >= 1, errc::config_invalid, "ambient dimension must be positive");
  values.assign(static_cast<size_t>(g.num_nodes()) * nu, fill);
}

GradientField::GradientField(const Grid& g, int nu) : grid(g), ambient_dim(nu) {
  entries.assign(static_cast<size_t>(g.num_nodes()) * g.m * nu, 0.0);
}

double GradientField::frobenius(int64_t node) const {
  auto e = at(node);
  double s = 0.0;
  for (double v : e) s += v * v;
  return std::sqrt(s);
}

Region Region::full(const Grid& g, std::string desc) {
  Region r;
  r.grid = g;
  r.cells.assign(static_cast<size_t>(g.num_cells()), 1);
  r.description = std::move(desc);
  return r;
}

Region Region::empty(const Grid& g, std::string desc) {
  Region r;
  r.grid = g;
  r.cells.assign(static_cast<size_t>(g.num_cells()), 0);
  r.description = std::move(desc);
  return r;
}

Region Region::of_cells(const Grid& g, const std::function<bool(const Point&)>& pred,
                        std::string desc) {
  Region r = empty(g, std::move(desc));
  const double h = g.h();
  for (int64_t c = 0; c < g.num_cells(); ++c) {
    Index iv = g.cell_at(c);
    Point center{};
    for (int i = 0; i < g.m; ++i) center[i] = g.coord(iv[i]) + 0.5 * h;
    r.cells[static_cast<size_t>(c)] = pred(center) ? 1 : 0;
  }
  return r;
}

Region Region::box(const Grid& g, const Point& lo, const Point& hi, std::string desc) {
  return of_cells(
      g,
      [&](const Point& c) {
        for (int i = 0; i < g.m; ++i)
          if (c[i] < lo[i] || c[i] > hi[i]) return false;
        return true;
      },
      std::move(desc));
}

int64_t Region::active_cells() const {
  int64_t n = 0;
  for (uint8_t v : cells) n += v;
  return n;
}

double Region::volume() const {
  double hm = 1.0;
  for (int i = 0; i < grid.m; ++i) hm *= grid.h();
  return static_cast<double>(active_cells()) * hm;
}

std::vector<uint8_t> Region::node_mask() const {
  std::vector<uint8_t> mask(static_cast<size_t>(grid.num_nodes()), 0);
  const int corners = 1 << grid.m;
  for (int64_t c = 0; c < grid.num_cells(); ++c) {
    if (!cells[static_cast<size_t>(c)]) continue;
    Index base = grid.cell_at(c);
    for (int k = 0; k < corners; ++k) {
      Index iv = base;
      for (int i = 0; i < grid.m; ++i) iv[i] += (k >> i) & 1;
      mask[static_cast<size_t>(grid.node_index(iv))] = 1;
    }
  }
  return mask;
}

Region Region::intersect(const Region& o) const {
  require(grid == o.grid, errc::config_invalid, "region grids differ");
  Region r = *this;
  for (size_t i = 0; i < cells.size(); ++i) r.cells[i] = cells[i] && o.cells[i];
  r.description = description + "&" + o.description;
  return r;
}

Region Region::unite(const Region& o) const {
  require(grid == o.grid, errc::config_invalid, "region grids differ");
  Region r = *this;
  for (size_t i = 0; i < cells.size(); ++i) r.cells[i] = cells[i] || o.cells[i];
  r.description = description + "|" + o.description;
  return r;
}

Region Region::complement() const {
  Region r = *this;
  for (size_t i = 0; i < cells.size(); ++i) r.cells[i] = cells[i] ? 0 : 1;
  r.description = "!" + description;
  return r;
}

bool Region::disjoint(const Region& o) const {
  for (size_t i = 0; i < cells.size(); ++i)
    if (cells[i] && o.cells[i]) return false;
  return true;
}

GradientField gradient(const GridMap& u) {
  const Grid& g = u.grid;
  require(g.res >= 3, errc::config_invalid, "gradient needs res >= 3");
  GradientField out(g, u.ambient_dim);
  const int nu = u.ambient_dim;
  const double inv2h = 1.0 / (2.0 * g.h());

  parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
    for (int64_t node = b; node < e; ++node) {
      Index iv = g.node_at(node);
      auto dst = out.at(node);
      for (int axis = 0; axis < g.m; ++axis) {
        Index a = iv, bk = iv;
        double c0, c1, c2;
        if (iv[axis] == 0) {
          // one-sided second order forward
          a[axis] = 1;
          bk[axis] = 2;
          c0 = -3.0, c1 = 4.0, c2 = -1.0;
        } else if (iv[axis] == g.res - 1) {
          a[axis] = g.res - 2;
          bk[axis] = g.res - 3;
          c0 = 3.0, c1 = -4.0, c2 = 1.0;
        } else {
          a[axis] = iv[axis] + 1;
          bk[axis] = iv[axis] - 1;
          c0 = 0.0, c1 = 1.0, c2 = -1.0;
        }
        auto v0 = u.at(iv);
        auto v1 = u.at(a);
        auto v2 = u.at(bk);
        for (int c = 0; c < nu; ++c)
          dst[axis * nu + c] = (c0 * v0[c] + c1 * v1[c] + c2 * v2[c]) * inv2h;
      }
    }
  });
  return out;
}

double integrate_nodes(const Grid& g, const Region& region,
                       const std::function<double(int64_t)>& node_value) {
  require(g == region.grid, errc::config_invalid, "region grid mismatch");
  double hm = 1.0;
  for (int i = 0; i < g.m; ++i) hm *= g.h();
  const int corners = 1 << g.m;
  const double w = hm / corners;

  // cache per-node values so shared corners are evaluated once
  std::vector<double> vals(static_cast<size_t>(g.num_nodes()),
                           std::numeric_limits<double>::quiet_NaN());
  auto mask = region.node_mask();
  parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
    for (int64_t n = b; n < e; ++n)
      if (mask[static_cast<size_t>(n)]) vals[static_cast<size_t>(n)] = node_value(n);
  });

  return parallel_sum(g.num_cells(), [&](int64_t c) {
    if (!region.cells[static_cast<size_t>(c)]) return 0.0;
    Index base = g.cell_at(c);
    double acc = 0.0;
    for (int k = 0; k < corners; ++k) {
      Index iv = base;
      for (int i = 0; i < g.m; ++i) iv[i] += (k >> i) & 1;
      acc += vals[static_cast<size_t>(g.node_index(iv))];
    }
    return acc * w;
  });
}

double energy_integral(const GradientField& g, double p, const Region& region) {
  return integrate_nodes(g.grid, region, [&](int64_t node) {
    const double f = g.frobenius(node);
    return std::pow(f, p);
  });
}

double seminorm_of_field(const GradientField& g, double p, const Region& region) {
  require(p >= 1.0, errc::parameter_out_of_range, "p must be >= 1");
  if (region.active_cells() == 0) return 0.0;
  return std::pow(energy_integral(g, p, region), 1.0 / p);
}

double sobolev_seminorm(const GridMap& u, double p, const Region& region) {
  return seminorm_of_field(gradient(u), p, region);
}

PoincareReport poincare_wirtinger_ratio(const GridMap& u, const Region& region, double p,
                                        int stride) {
  const Grid& g = u.grid;
  require(g == region.grid, errc::config_invalid, "region grid mismatch");
  PoincareReport rep;
  const int nu = u.ambient_dim;
  const double h = g.h();

  // cell-center samples
  std::vector<double> pts;
  std::vector<double> vals;
  for (int64_t c = 0; c < g.num_cells(); ++c) {
    if (!region.cells[static_cast<size_t>(c)]) continue;
    Index iv = g.cell_at(c);
    bool keep = true;
    for (int i = 0; i < g.m; ++i)
      if (iv[i] % stride != 0) keep = false;
    if (!keep) continue;
    Point x{};
    for (int i = 0; i < g.m; ++i) x[i] = g.coord(iv[i]) + 0.5 * h;
    std::vector<double> v(nu);
    sample(u, x, v);
    for (int i = 0; i < g.m; ++i) pts.push_back(x[i]);
    for (int c2 = 0; c2 < nu; ++c2) vals.push_back(v[c2]);
  }
  const int64_t n = static_cast<int64_t>(vals.size()) / nu;
  if (n == 0) return rep;

  double lhs = parallel_sum(n, [&](int64_t i) {
    double acc = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < nu; ++c) {
        const double d = vals[i * nu + c] - vals[j * nu + c];
        d2 += d * d;
      }
      acc += std::pow(std::sqrt(d2), p);
    }
    return acc;
  });
  rep.lhs = lhs / (static_cast<double>(n) * static_cast<double>(n));

  // bounding-box diameter of the sample set
  double diam2 = 0.0;
  for (int i = 0; i < g.m; ++i) {
    double lo = 1e300, hi = -1e300;
    for (int64_t k = 0; k < n; ++k) {
      lo = std::min(lo, pts[k * g.m + i]);
      hi = std::max(hi, pts[k * g.m + i]);
    }
    diam2 += (hi - lo) * (hi - lo);
  }
  const double vol = region.volume();
  if (vol > 0.0) {
    GradientField gf = gradient(u);
    rep.rhs = std::pow(std::sqrt(diam2), p) * energy_integral(gf, p, region) / vol;
  }
  return rep;
}

GridMap reflect_extend(const GridMap& u, double pad) {
  const Grid& g = u.grid;
  const double h = g.h();
  const double cells = pad / h;
  const int k = static_cast<int>(std::lround(cells));
  require(std::abs(cells - k) < 1e-9 && k >= 0, errc::padding_misaligned,
          "padding is not a whole number of cells");
  require(2 * k <= g.res - 1, errc::padding_misaligned,
          "padding exceeds one full reflection");

  Grid ge(g.m, g.res + 4 * k, g.inradius + 2.0 * pad);
  GridMap out(ge, u.ambient_dim);
  const int period = 2 * (g.res - 1);
  parallel_for(ge.num_nodes(), [&](int64_t b, int64_t e) {
    for (int64_t node = b; node < e; ++node) {
      Index iv = ge.node_at(node);
      Index src{};
      for (int i = 0; i < g.m; ++i) {
        int t = iv[i] - 2 * k;
        t = ((t % period) + period) % period;
        src[i] = (t < g.res) ? t : period - t;
      }
      auto d = out.at(node);
      auto s = u.at(src);
      std::copy(s.begin(), s.end(), d.begin());
    }
  });
  return out;
}

void sample(const GridMap& u, const Point& x, std::span<double> out) {
  const Grid& g = u.grid;
  const double h = g.h();
  const double eps = 1e-9 * g.inradius;
  Index cell{};
  double frac[kMaxDim];
  for (int i = 0; i < g.m; ++i) {
    double xi = x[i];
    require(xi >= -g.inradius - eps && xi <= g.inradius + eps, errc::domain_exceeded,
            "sample point outside grid");
    xi = std::clamp(xi, -g.inradius, g.inradius);
    double t = (xi + g.inradius) / h;
    int c = std::min(static_cast<int>(t), g.res - 2);
    cell[i] = c;
    frac[i] = t - c;
  }
  const int nu = u.ambient_dim;
  std::fill(out.begin(), out.end(), 0.0);
  const int corners = 1 << g.m;
  for (int kc = 0; kc < corners; ++kc) {
    double w = 1.0;
    Index iv = cell;
    for (int i = 0; i < g.m; ++i) {
      const int bit = (kc >> i) & 1;
      w *= bit ? frac[i] : (1.0 - frac[i]);
      iv[i] += bit;
    }
    if (w == 0.0) continue;
    auto v = u.at(iv);
    for (int c = 0; c < nu; ++c) out[c] += w * v[c];
  }
}

void sample_gradient(const GradientField& gf, const Point& x, std::span<double> out) {
  const Grid& g = gf.grid;
  const double h = g.h();
  const double eps = 1e-9 * g.inradius;
  Index cell{};
  double frac[kMaxDim];
  for (int i = 0; i < g.m; ++i) {
    double xi = x[i];
    require(xi >= -g.inradius - eps && xi <= g.inradius + eps, errc::domain_exceeded,
            "sample point outside grid");
    xi = std::clamp(xi, -g.inradius, g.inradius);
    double t = (xi + g.inradius) / h;
    int c = std::min(static_cast<int>(t), g.res - 2);
    cell[i] = c;
    frac[i] = t - c;
  }
  std::fill(out.begin(), out.end(), 0.0);
  const int corners = 1 << g.m;
  for (int kc = 0; kc < corners; ++kc) {
    double w = 1.0;
    Index iv = cell;
    for (int i = 0; i < g.m; ++i) {
      const int bit = (kc >> i) & 1;
      w *= bit ? frac[i] : (1.0 - frac[i]);
      iv[i] += bit;
    }
    if (w == 0.0) continue;
    auto e = gf.at(g.node_index(iv));
    for (size_t c = 0; c < e.size(); ++c) out[c] += w * e[c];
  }
}

GridMap translate(const GridMap& u, const Point& v, const Region* where) {
  GridMap out = u;
  const Grid& g = u.grid;
  std::vector<uint8_t> mask;
  if (where) {
    require(where->grid == g, errc::config_invalid, "translate region grid mismatch");
    mask = where->node_mask();
  }
  parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
    for (int64_t node = b; node < e; ++node) {
      if (where && !mask[static_cast<size_t>(node)]) continue;
      Point x = g.node_point(g.node_at(node));
      for (int i = 0; i < g.m; ++i) x[i] -= v[i];
      sample(u, x, out.at(node));
    }
  });
  return out;
}

double lp_distance(const GridMap& a, const GridMap& b, double p, const Region& region) {
  require(a.grid == b.grid && a.ambient_dim == b.ambient_dim, errc::config_invalid,
          "map shapes differ");
  const int nu = a.ambient_dim;
  const double integral = integrate_nodes(a.grid, region, [&](int64_t n) {
    double d2 = 0.0;
    auto va = a.at(n);
    auto vb = b.at(n);
    for (int c = 0; c < nu; ++c) {
      const double d = va[c] - vb[c];
      d2 += d * d;
    }
    return std::pow(std::sqrt(d2), p);
  });
  return std::pow(integral, 1.0 / p);
}

double lp_norm(const GridMap& a, double p, const Region& region) {
  const int nu = a.ambient_dim;
  const double integral = integrate_nodes(a.grid, region, [&](int64_t n) {
    double d2 = 0.0;
    auto va = a.at(n);
    for (int c = 0; c < nu; ++c) d2 += va[c] * va[c];
    return std::pow(std::sqrt(d2), p);
  });
  return std::pow(integral, 1.0 / p);
}

double gradient_lp_distance(const GradientField& a, const GradientField& b, double p,
                            const Region& region) {
  require(a.grid == b.grid && a.ambient_dim == b.ambient_dim, errc::config_invalid,
          "field shapes differ");
  const double integral = integrate_nodes(a.grid, region, [&](int64_t n) {
    auto ea = a.at(n);
    auto eb = b.at(n);
    double d2 = 0.0;
    for (size_t i = 0; i < ea.size(); ++i) {
      const double d = ea[i] - eb[i];
      d2 += d * d;
    }
    return std::pow(std::sqrt(d2), p);
  });
  return std::pow(integral, 1.0 / p);
}

void save_gridmap(const GridMap& u, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), errc::io_error, "cannot open " + path);
  nlohmann::json hdr = {{"m", u.grid.m},
                        {"res", u.grid.res},
                        {"inradius", u.grid.inradius},
                        {"ambient_dim", u.ambient_dim}};
  f << hdr.dump() << "\n";
  f.write(reinterpret_cast<const char*>(u.values.data()),
          static_cast<std::streamsize>(u.values.size() * sizeof(double)));
  require(f.good(), errc::io_error, "write failed: " + path);
}

GridMap load_gridmap(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), errc::io_error, "cannot open " + path);
  std::string line;
  std::getline(f, line);
  nlohmann::json hdr = nlohmann::json::parse(line, nullptr, false);
  require(!hdr.is_discarded(), errc::io_error, "bad grid header in " + path);
  Grid g(hdr.at("m").get<int>(), hdr.at("res").get<int>(), hdr.at("inradius").get<double>());
  GridMap u(g, hdr.at("ambient_dim").get<int>());
  f.read(reinterpret_cast<char*>(u.values.data()),
         static_cast<std::streamsize>(u.values.size() * sizeof(double)));
  require(f.gcount() == static_cast<std::streamsize>(u.values.size() * sizeof(double)),
          errc::io_error, "truncated grid file " + path);
  return u;
}

void export_csv(const GridMap& u, const std::string& path) {
  require(u.grid.m <= 2, errc::config_invalid, "CSV export only for m <= 2");
  std::ofstream f(path);
  require(f.good(), errc::io_error, "cannot open " + path);
  f.precision(17);
  for (int i = 0; i < u.grid.m; ++i) f << "x" << i + 1 << ",";
  for (int c = 0; c < u.ambient_dim; ++c) f << "v" << c << (c + 1 < u.ambient_dim ? "," : "\n");
  for (int64_t n = 0; n < u.grid.num_nodes(); ++n) {
    Point x = u.grid.node_point(u.grid.node_at(n));
    for (int i = 0; i < u.grid.m; ++i) f << x[i] << ",";
    auto v = u.at(n);
    for (int c = 0; c < u.ambient_dim; ++c) f << v[c] << (c + 1 < u.ambient_dim ? "," : "\n");
  }
}

GridMap map_from_function(const Grid& g, int nu,
                          const std::function<void(const Point&, std::span<double>)>& f) {
  GridMap u(g, nu);
  parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
    for (int64_t node = b; node < e; ++node)
      f(g.node_point(g.node_at(node)), u.at(node));
  });
  return u;
}

}  // namespace sobotrim
