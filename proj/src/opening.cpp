#include "sobotrim/opening.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sobotrim/parallel.hpp"

namespace sobotrim {

namespace {

// integral of the quintic smoothstep
double is5(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * t * (2.5 + t * (-3.0 + t));
}

double s5(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

}  // namespace

ZetaProfile build_zeta(double zero_r, double id_r, double sharpness) {
  require(zero_r > 0.0 && id_r > zero_r, errc::parameter_out_of_range,
          "profile radii must satisfy 0 < zero < id");
  ZetaProfile p;
  p.zero_r = zero_r;
  p.id_r = id_r;
  p.tau0 = std::clamp(sharpness, 0.05, 0.8);
  // mean slope over the ramp and the single-crossing peak value
  const double M = id_r / (id_r - zero_r);
  p.peak = 2.0 * M - (1.0 - p.tau0);
  return p;
}

double ZetaProfile::deriv(double t) const {
  if (t <= zero_r) return 0.0;
  if (t >= id_r) return 1.0;
  const double tau = (t - zero_r) / (id_r - zero_r);
  if (tau <= tau0) return peak * s5(tau / tau0);
  return 1.0 + (peak - 1.0) * s5((1.0 - tau) / (1.0 - tau0));
}

double ZetaProfile::eval(double t) const {
  if (t <= zero_r) return 0.0;
  if (t >= id_r) return t;
  const double w = id_r - zero_r;
  const double tau = (t - zero_r) / w;
  if (tau <= tau0) return w * peak * tau0 * is5(tau / tau0);
  const double head = w * peak * tau0 * 0.5;
  const double body = w * (tau - tau0);
  const double tail = w * (peak - 1.0) * (1.0 - tau0) * (0.5 - is5((1.0 - tau) / (1.0 - tau0)));
  return head + body + tail;
}

namespace {

// nested radii strictly inside (rho, 2 rho)
std::vector<double> radius_chain(double rho, int ell) {
  std::vector<double> r(static_cast<size_t>(ell) + 1);
  for (int i = 0; i <= ell; ++i) r[static_cast<size_t>(i)] = rho * (1.0 + (ell - i + 1.0) / (ell + 2.0));
  return r;
}

struct FaceGeom {
  Point lo{}, hi{};   // tangential extents (normal axes have lo == hi)
  uint8_t axes = 0;
};

// one layer application at a point
Point apply_layer(const OpeningMap::Layer& layer, const Cubication& cub, const Point& x,
                  int m) {
  // locate the best matching active face of this dimension
  const double eta = cub.eta();
  const double L = cub.inradius();
  int64_t best = -1;
  double best_norm = 1e300;
  Face best_face;

  // enumerate axis subsets of the right size
  for (uint8_t mask = 0; mask < (1 << m); ++mask) {
    if (__builtin_popcount(mask) != layer.dim) continue;
    Face f;
    f.axes = mask;
    bool feasible = true;
    double norm_d = 0.0;
    for (int i = 0; i < m; ++i) {
      const double t = (x[i] + L) / (2.0 * eta);
      if ((mask >> i) & 1) {
        int c = static_cast<int>(std::floor(t));
        c = std::clamp(c, 0, cub.cells_per_axis() - 1);
        // tangential gate: within the face extent plus the tube radius
        const double lo = -L + 2.0 * eta * c, hi = lo + 2.0 * eta;
        if (x[i] < lo - layer.gate_r || x[i] > hi + layer.gate_r) feasible = false;
        f.corner[i] = c;
      } else {
        const int plane = static_cast<int>(std::lround(t));
        if (plane < 0 || plane > cub.cells_per_axis()) {
          feasible = false;
          break;
        }
        const double d = std::abs(x[i] - (-L + 2.0 * eta * plane));
        if (d > layer.gate_r) feasible = false;
        norm_d = std::max(norm_d, d);
        f.corner[i] = plane;
      }
    }
    if (!feasible) continue;
    const int64_t idx = cub.face_index(f);
    if (!layer.active[static_cast<size_t>(idx)]) continue;
    if (norm_d < best_norm) {
      best_norm = norm_d;
      best = idx;
      best_face = f;
    }
  }
  if (best < 0) return x;

  // contract the normal coordinates with the per-face shift
  const auto& z = layer.shift[static_cast<size_t>(best)];
  Point out = x;
  double T = 0.0;
  double off[kMaxDim];
  int nrm[kMaxDim];
  int k = 0;
  for (int i = 0; i < m; ++i) {
    if ((best_face.axes >> i) & 1) continue;
    const double plane = -L + 2.0 * eta * best_face.corner[i];
    off[k] = (x[i] - plane) + z[static_cast<size_t>(k)];
    T = std::max(T, std::abs(off[k]));
    nrm[k] = i;
    ++k;
  }
  const double gv = layer.prof.eval(T);
  const double alpha = T > 0.0 ? gv / T : 0.0;
  for (int j = 0; j < k; ++j) {
    const double plane = -L + 2.0 * eta * best_face.corner[nrm[j]];
    out[nrm[j]] = plane + alpha * off[j] - z[static_cast<size_t>(j)];
  }
  return out;
}

}  // namespace

Point OpeningMap::apply(const Point& x, int apply_from_dim) const {
  Point y = x;
  for (int i = std::min(apply_from_dim, ell); i >= 0; --i)
    y = apply_layer(layers[static_cast<size_t>(i)], *cub, y, m);
  return y;
}

namespace {

// Candidate scan for one face of the partially built map: layers up to and
// including `dim` are applied with the face's shift set to each candidate,
// and the discrete energy of u o Phi over the strided neighborhood decides.
ShiftChoice scan_shift(const GridMap& u, const Cubication& cub, OpeningMap& Phi, int dim,
                       int64_t fidx, const OpeningOptions& opt) {
  const Grid& g = u.grid;
  const int m = cub.m();
  const double eta = cub.eta();
  auto& layer = Phi.layers[static_cast<size_t>(dim)];
  const Face f = cub.face(dim, fidx);
  Region nb = cub.neighborhood(f, 2.0 * opt.rho * eta);

  std::vector<Point> pts;
  const double h = g.h();
  for (int64_t c = 0; c < g.num_cells(); ++c) {
    if (!nb.cell(c)) continue;
    Index iv = g.cell_at(c);
    bool keep = true;
    for (int a = 0; a < m; ++a)
      if (iv[a] % opt.select_stride != 0) keep = false;
    if (!keep) continue;
    Point x{};
    for (int a = 0; a < m; ++a) x[a] = g.coord(iv[a]) + 0.5 * h;
    pts.push_back(x);
  }

  const int ncand_axis = std::max(1, opt.shift_candidates_per_axis);
  const int nnormal = m - dim;
  int ncand = 1;
  for (int a = 0; a < nnormal; ++a) ncand *= ncand_axis;
  const int nu = u.ambient_dim;
  const double fd = std::max(h, layer.shift_r / 8.0);

  ShiftChoice out;
  double best_energy = 1e300, sum_energy = 0.0;
  std::vector<double> vp(static_cast<size_t>(nu)), vm(static_cast<size_t>(nu));
  for (int cand = 0; cand < ncand; ++cand) {
    std::vector<double> z(static_cast<size_t>(nnormal), 0.0);
    int rem = cand;
    for (int a = 0; a < nnormal; ++a) {
      const int j = rem % ncand_axis;
      rem /= ncand_axis;
      z[static_cast<size_t>(a)] =
          ncand_axis == 1 ? 0.0 : -layer.shift_r + 2.0 * layer.shift_r * j / (ncand_axis - 1);
    }
    layer.shift[static_cast<size_t>(fidx)] = z;
    double acc = 0.0;
    for (const Point& x : pts) {
      double fro2 = 0.0;
      for (int a = 0; a < m; ++a) {
        Point xp = x, xm = x;
        xp[a] += fd;
        xm[a] -= fd;
        sample(u, Phi.apply(xp, dim), vp);
        sample(u, Phi.apply(xm, dim), vm);
        for (int cc = 0; cc < nu; ++cc) {
          const double d = (vp[static_cast<size_t>(cc)] - vm[static_cast<size_t>(cc)]) / (2.0 * fd);
          fro2 += d * d;
        }
      }
      acc += std::pow(fro2, opt.p / 2.0);
    }
    sum_energy += acc;
    if (acc < best_energy) {
      best_energy = acc;
      out.shift = z;
    }
  }
  out.chosen_energy = best_energy;
  out.average_energy = sum_energy / std::max(1, ncand);
  layer.shift[static_cast<size_t>(fidx)] = out.shift;
  return out;
}

}  // namespace

ShiftChoice select_shift(const GridMap& u, const Cubication& cub, int dim, int64_t face,
                         const OpeningOptions& opt) {
  // single-face model situation: a one-layer opening map around this face
  require(dim >= 0 && dim < cub.m(), errc::parameter_out_of_range, "bad face dimension");
  OpeningMap Phi;
  Phi.m = cub.m();
  Phi.ell = dim;
  Phi.rho = opt.rho;
  Phi.eta = cub.eta();
  Phi.cub = &cub;
  Phi.layers.resize(static_cast<size_t>(dim) + 1);
  for (int i = 0; i < dim; ++i) {
    auto& empty_layer = Phi.layers[static_cast<size_t>(i)];
    empty_layer.dim = i;
    empty_layer.active.assign(static_cast<size_t>(cub.face_count(i)), 0);
    empty_layer.prof = build_zeta(1.0, 2.0);
  }
  auto& layer = Phi.layers[static_cast<size_t>(dim)];
  layer.dim = dim;
  const double eta = cub.eta();
  const double lower = opt.rho * 1.25 * eta;  // model radii within (rho, 2 rho)
  layer.shift_r = (2.0 * opt.rho * eta - lower) / 4.0;
  layer.gate_r = 2.0 * opt.rho * eta - layer.shift_r;
  layer.prof = build_zeta(lower + layer.shift_r, layer.gate_r);
  layer.active.assign(static_cast<size_t>(cub.face_count(dim)), 0);
  layer.active[static_cast<size_t>(face)] = 1;
  layer.shift.assign(static_cast<size_t>(cub.face_count(dim)),
                     std::vector<double>(static_cast<size_t>(cub.m() - dim), 0.0));
  return scan_shift(u, cub, Phi, dim, face, opt);
}

bool OpeningMap::touched(const Point& x) const {
  const Point y = apply(x);
  for (int i = 0; i < m; ++i)
    if (y[i] != x[i]) return true;
  return false;
}

OpeningResult open_map(const GridMap& u, const Cubication& cub,
                       const std::vector<int64_t>& ell_faces, int ell,
                       const OpeningOptions& opt) {
  const Grid& g = u.grid;
  require(g == cub.host(), errc::eta_misaligned, "map must live on the cubication grid");
  require(ell >= 0 && ell < cub.m(), errc::parameter_out_of_range, "ell out of range");
  const int m = cub.m();
  const double eta = cub.eta();
  const double rho = opt.rho;

  OpeningResult res;
  OpeningMap& Phi = res.map;
  Phi.m = m;
  Phi.ell = ell;
  Phi.rho = rho;
  Phi.eta = eta;
  Phi.cub = &cub;
  Phi.layers.resize(static_cast<size_t>(ell) + 1);

  // active faces per dimension: the given ell-faces and their closures
  std::vector<std::vector<uint8_t>> active(static_cast<size_t>(ell) + 1);
  for (int d = 0; d <= ell; ++d)
    active[static_cast<size_t>(d)].assign(static_cast<size_t>(cub.face_count(d)), 0);
  for (int64_t fe : ell_faces) active[static_cast<size_t>(ell)][static_cast<size_t>(fe)] = 1;
  for (int d = ell; d >= 1; --d)
    for (int64_t i = 0; i < cub.face_count(d); ++i)
      if (active[static_cast<size_t>(d)][static_cast<size_t>(i)])
        for (int64_t s : cub.subfaces(d, i))
          active[static_cast<size_t>(d) - 1][static_cast<size_t>(s)] = 1;

  const auto chain = radius_chain(rho, ell);
  auto chain_prev = [&](int i) { return i == 0 ? 2.0 * rho : chain[static_cast<size_t>(i) - 1]; };

  // set up layers: gate radius, shift budget and profile per dimension
  for (int i = 0; i <= ell; ++i) {
    auto& layer = Phi.layers[static_cast<size_t>(i)];
    layer.dim = i;
    const double gap = (chain_prev(i) - chain[static_cast<size_t>(i)]) * eta;
    layer.shift_r = gap / 4.0;
    layer.gate_r = chain_prev(i) * eta - layer.shift_r;
    layer.prof = build_zeta(chain[static_cast<size_t>(i)] * eta + layer.shift_r, layer.gate_r);
    layer.active = active[static_cast<size_t>(i)];
    layer.shift.assign(static_cast<size_t>(cub.face_count(i)),
                       std::vector<double>(static_cast<size_t>(m - i), 0.0));
  }

  // choose per-face shifts, dimension by dimension from the vertices up;
  // energy of the candidate composite is scanned on a strided subgrid of
  // the face neighborhood
  const int nu = u.ambient_dim;
  for (int i = 0; i <= ell; ++i) {
    auto& layer = Phi.layers[static_cast<size_t>(i)];
    for (int64_t fidx = 0; fidx < cub.face_count(i); ++fidx) {
      if (!layer.active[static_cast<size_t>(fidx)]) continue;
      auto choice = scan_shift(u, cub, Phi, i, fidx, opt);
      layer.shift[static_cast<size_t>(fidx)] = choice.shift;
      if (opt.diagnostics) {
        FaceDiagnostic d;
        d.dim = i;
        d.face = fidx;
        d.shift = choice.shift;
        d.chosen_scan_energy = choice.chosen_energy;
        d.average_scan_energy = choice.average_energy;
        res.diagnostics.push_back(d);
      }
    }
  }
  (void)nu;

  // compose onto the grid: untouched nodes copy their values bit-exactly
  res.opened = u;
  parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
    std::vector<double> val(static_cast<size_t>(nu));
    for (int64_t node = b; node < e; ++node) {
      const Point x = g.node_point(g.node_at(node));
      const Point y = Phi.apply(x);
      bool moved = false;
      for (int i = 0; i < m; ++i)
        if (y[i] != x[i]) moved = true;
      if (!moved) continue;
      sample(u, y, val);
      auto dst = res.opened.at(node);
      std::copy(val.begin(), val.end(), dst.begin());
    }
  });

  // region-level energies and per-face diagnostics
  Region tube = Region::empty(g, "E^ell+Q");
  for (int64_t fe : ell_faces)
    tube = tube.unite(cub.neighborhood(cub.face(ell, fe), 2.0 * rho * eta));
  const GradientField gu = gradient(u);
  const GradientField gop = gradient(res.opened);
  res.energy_before = seminorm_of_field(gu, opt.p, tube);
  res.energy_after = seminorm_of_field(gop, opt.p, tube);

  if (opt.diagnostics) {
    for (auto& d : res.diagnostics) {
      Region nb = cub.neighborhood(cub.face(d.dim, d.face), 2.0 * rho * eta);
      d.energy_before = seminorm_of_field(gu, opt.p, nb);
      d.energy_after = seminorm_of_field(gop, opt.p, nb);
      // fiber constancy scan: tangential samples x normal probes
      const Face f = cub.face(d.dim, d.face);
      Point lo{}, hi{};
      cub.face_box(f, lo, hi);
      const double probe_r = rho * eta * 0.98;
      double worst = 0.0;
      std::vector<double> ref(static_cast<size_t>(nu)), cur(static_cast<size_t>(nu));
      const int tsamp = 5;
      for (int ts = 0; ts < tsamp; ++ts) {
        Point base{};
        for (int a = 0; a < m; ++a) {
          if ((f.axes >> a) & 1)
            base[a] = lo[a] + (hi[a] - lo[a]) * (ts + 0.5) / tsamp;
          else
            base[a] = lo[a];
        }
        bool have_ref = false;
        for (int pr = 0; pr < (1 << (m - d.dim)); ++pr) {
          Point x = base;
          int bit = 0;
          for (int a = 0; a < m; ++a) {
            if ((f.axes >> a) & 1) continue;
            x[a] += ((pr >> bit) & 1) ? probe_r : -probe_r;
            ++bit;
          }
          sample(u, Phi.apply(x), cur);
          if (!have_ref) {
            ref = cur;
            have_ref = true;
          } else {
            for (int cc = 0; cc < nu; ++cc)
              worst = std::max(worst, std::abs(cur[static_cast<size_t>(cc)] - ref[static_cast<size_t>(cc)]));
          }
        }
      }
      d.fiber_variance_max = worst * worst;
    }
  }
  return res;
}

FlatnessReport flatness_bound_check(const GridMap& u_op, const Cubication& cub,
                                    int64_t tau_face, int tau_dim, double rho, double p,
                                    const std::vector<std::pair<Point, double>>& probes) {
  FlatnessReport rep;
  const Grid& g = u_op.grid;
  const double eta = cub.eta();
  const Face tau = cub.face(tau_dim, tau_face);
  Region tube = cub.neighborhood(tau, rho * eta);
  Point lo{}, hi{};
  cub.face_box(tau, lo, hi);
  const GradientField gf = gradient(u_op);
  const double rhs_int = energy_integral(gf, p, tube);
  const double rhs = std::pow(eta, p - g.m) * rhs_int;

  for (const auto& [x, r] : probes) {
    FlatnessSample s;
    s.center = x;
    s.r = r;
    // the probe cube must sit inside the tube
    bool inside = true;
    for (int a = 0; a < g.m; ++a) {
      const double tlo = ((tau.axes >> a) & 1) ? lo[a] - rho * eta : lo[a] - rho * eta;
      const double thi = ((tau.axes >> a) & 1) ? hi[a] + rho * eta : hi[a] + rho * eta;
      if (x[a] - r < tlo - 1e-12 || x[a] + r > thi + 1e-12) inside = false;
    }
    if (!inside) {
      s.accepted = false;
      ++rep.rejected;
      rep.samples.push_back(s);
      continue;
    }
    Point blo = x, bhi = x;
    for (int a = 0; a < g.m; ++a) {
      blo[a] -= r;
      bhi[a] += r;
    }
    Region cube = Region::box(g, blo, bhi, "probe");
    s.lhs = std::pow(r, p - g.m) * energy_integral(gf, p, cube);
    s.rhs = rhs;
    rep.max_ratio = std::max(rep.max_ratio, s.rhs > 0 ? s.lhs / s.rhs : 0.0);
    rep.samples.push_back(s);
  }
  return rep;
}

void export_opening_diagnostics(const std::vector<FaceDiagnostic>& diags,
                                const std::string& path) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& d : diags)
    out.push_back({{"dim", d.dim},
                   {"face", d.face},
                   {"shift", d.shift},
                   {"energy_before", d.energy_before},
                   {"energy_after", d.energy_after},
                   {"fiber_variance_max", d.fiber_variance_max}});
  std::ofstream f(path);
  require(f.good(), errc::io_error, "cannot open " + path);
  f << out.dump(1) << "\n";
}

}  // namespace sobotrim
