#include "sobotrim/cubication.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sobotrim/parallel.hpp"

namespace sobotrim {

Cubication::Cubication(int m, double domain_inradius, double eta, const Grid& host)
    : m_(m), eta_(eta), inradius_(domain_inradius), host_(host) {
  require(m == host.m, errc::config_invalid, "cubication dimension must match the grid");
  require(eta > 0.0 && domain_inradius > 0.0, errc::eta_misaligned, "bad sizes");
  const double cells = domain_inradius / eta;
  ncells_ = static_cast<int>(std::lround(cells));
  require(std::abs(cells - ncells_) < 1e-9 && ncells_ >= 1, errc::eta_misaligned,
          "eta must divide the domain inradius");
  const double h = host.h();
  const double span = 2.0 * eta / h;
  require(std::abs(span - std::lround(span)) < 1e-9, errc::eta_misaligned,
          "cube edge must be a whole number of grid cells");
  const double off = (host.inradius - domain_inradius) / h;
  require(off > -1e-9 && std::abs(off - std::lround(off)) < 1e-9, errc::eta_misaligned,
          "cubication must sit on grid nodes inside the grid");

  for (int d = 0; d <= m_; ++d) {
    masks_[d].clear();
    offsets_[d].clear();
    int64_t off_acc = 0;
    for (uint8_t mask = 0; mask < (1 << m_); ++mask) {
      if (__builtin_popcount(mask) != d) continue;
      masks_[d].push_back(mask);
      offsets_[d].push_back(off_acc);
      int64_t cnt = 1;
      for (int i = 0; i < m_; ++i) cnt *= (mask >> i) & 1 ? ncells_ : ncells_ + 1;
      off_acc += cnt;
    }
    offsets_[d].push_back(off_acc);
  }
}

int64_t Cubication::face_count(int dim) const {
  require(dim >= 0 && dim <= m_, errc::config_invalid, "bad face dimension");
  return offsets_[dim].back();
}

Face Cubication::face(int dim, int64_t index) const {
  require(index >= 0 && index < face_count(dim), errc::config_invalid, "face index range");
  size_t s = 0;
  while (offsets_[dim][s + 1] <= index) ++s;
  const uint8_t mask = masks_[dim][s];
  int64_t rem = index - offsets_[dim][s];
  Face f;
  f.axes = mask;
  for (int i = m_ - 1; i >= 0; --i) {
    const int extent = (mask >> i) & 1 ? ncells_ : ncells_ + 1;
    f.corner[i] = static_cast<int>(rem % extent);
    rem /= extent;
  }
  return f;
}

int64_t Cubication::face_index(const Face& f) const {
  const int dim = f.dim();
  size_t s = 0;
  while (masks_[dim][s] != f.axes) ++s;
  int64_t flat = 0;
  for (int i = 0; i < m_; ++i) {
    const int extent = (f.axes >> i) & 1 ? ncells_ : ncells_ + 1;
    flat = flat * extent + f.corner[i];
  }
  return offsets_[dim][s] + flat;
}

void Cubication::face_box(const Face& f, Point& lo, Point& hi) const {
  for (int i = 0; i < m_; ++i) {
    lo[i] = -inradius_ + 2.0 * eta_ * f.corner[i];
    hi[i] = lo[i] + ((f.axes >> i) & 1 ? 2.0 * eta_ : 0.0);
  }
}

Point Cubication::face_center(const Face& f) const {
  Point lo{}, hi{};
  face_box(f, lo, hi);
  Point c{};
  for (int i = 0; i < m_; ++i) c[i] = 0.5 * (lo[i] + hi[i]);
  return c;
}

std::vector<int64_t> Cubication::faces_of_cell(int64_t cell, int dim) const {
  const Face cf = face(m_, cell);
  std::vector<int64_t> out;
  for (uint8_t mask : masks_[dim]) {
    // offsets along the axes not in the sub-face
    const uint8_t rest = static_cast<uint8_t>(~mask & ((1 << m_) - 1));
    std::vector<int> rest_axes;
    for (int i = 0; i < m_; ++i)
      if ((rest >> i) & 1) rest_axes.push_back(i);
    const int combos = 1 << rest_axes.size();
    for (int k = 0; k < combos; ++k) {
      Face f;
      f.axes = mask;
      f.corner = cf.corner;
      for (size_t j = 0; j < rest_axes.size(); ++j)
        f.corner[rest_axes[j]] += (k >> j) & 1;
      out.push_back(face_index(f));
    }
  }
  return out;
}

std::vector<int64_t> Cubication::subfaces(int dim, int64_t index) const {
  require(dim >= 1, errc::config_invalid, "vertices have no subfaces");
  const Face f = face(dim, index);
  std::vector<int64_t> out;
  for (int i = 0; i < m_; ++i) {
    if (!((f.axes >> i) & 1)) continue;
    for (int side = 0; side <= 1; ++side) {
      Face sub = f;
      sub.axes = static_cast<uint8_t>(f.axes & ~(1 << i));
      sub.corner[i] += side;
      out.push_back(face_index(sub));
    }
  }
  return out;
}

std::vector<int64_t> Cubication::cofaces(int dim, int64_t index) const {
  require(dim < m_, errc::config_invalid, "top cells have no cofaces");
  const Face f = face(dim, index);
  std::vector<int64_t> out;
  for (int i = 0; i < m_; ++i) {
    if ((f.axes >> i) & 1) continue;
    for (int side = 0; side <= 1; ++side) {
      Face co = f;
      co.axes = static_cast<uint8_t>(f.axes | (1 << i));
      co.corner[i] -= side;
      if (co.corner[i] < 0 || co.corner[i] > ncells_ - 1) continue;
      out.push_back(face_index(co));
    }
  }
  return out;
}

Region Cubication::neighborhood(const Face& f, double r) const {
  Point lo{}, hi{};
  face_box(f, lo, hi);
  for (int i = 0; i < m_; ++i) {
    lo[i] -= r;
    hi[i] += r;
  }
  return Region::box(host_, lo, hi, "face+Q_r");
}

GoodBadPartition classify(const GridMap& u, const Cubication& cub, const Manifold& M,
                          const ClassifyParams& params) {
  const Grid& g = u.grid;
  require(g == cub.host(), errc::config_invalid, "map must live on the cubication host grid");
  require(u.ambient_dim == M.ambient_dim(), errc::config_invalid, "ambient dimension mismatch");
  require(g.inradius + 1e-12 >= cub.inradius() + 2.0 * params.rho * cub.eta(),
          errc::config_invalid, "grid too small for the inflated cube neighborhoods");

  // membership gate on a node subsample
  {
    double worst = 0.0;
    const int64_t stride = std::max<int64_t>(1, g.num_nodes() / 4096);
    for (int64_t n = 0; n < g.num_nodes(); n += stride)
      worst = std::max(worst, M.membership_residual(u.at(n)));
    require(worst < params.membership_tol, errc::input_not_manifold_valued,
            "input values leave the target manifold");
  }

  GoodBadPartition part;
  part.R = params.R;
  part.lambda = params.lambda;
  part.rho = params.rho;
  part.p = params.p;

  const GradientField gf = gradient(u);
  const double eta = cub.eta();
  const double collar = 2.0 * params.rho * eta;
  const int64_t ncells = cub.face_count(cub.m());
  part.cells.resize(static_cast<size_t>(ncells));

  const double h = g.h();
  const int m = g.m;
  const int nu = u.ambient_dim;
  for (int64_t c = 0; c < ncells; ++c) {
    const Face f = cub.face(cub.m(), c);
    Region nb = cub.neighborhood(f, collar);
    CellStats st;
    const double energy = energy_integral(gf, params.p, nb);
    st.rescaled_energy =
        std::pow(energy, 1.0 / params.p) / std::pow(eta, (m - params.p) / params.p);

    // mean geodesic distance on a strided cell-center subsample
    Point lo{}, hi{};
    cub.face_box(f, lo, hi);
    double acc = 0.0;
    int64_t cnt = 0;
    std::vector<double> val(static_cast<size_t>(nu));
    for (int64_t cc = 0; cc < g.num_cells(); ++cc) {
      if (!nb.cell(cc)) continue;
      Index iv = g.cell_at(cc);
      bool strided = true;
      for (int i = 0; i < m; ++i)
        if (iv[i] % params.dist_stride != 0) strided = false;
      if (!strided) continue;
      Point x{};
      for (int i = 0; i < m; ++i) x[i] = g.coord(iv[i]) + 0.5 * h;
      sample(u, x, val);
      acc += M.distance_to_basepoint(val);
      ++cnt;
    }
    st.mean_dist = cnt > 0 ? acc / static_cast<double>(cnt) : 0.0;
    st.good = st.mean_dist <= params.R && st.rescaled_energy <= params.lambda;
    part.cells[static_cast<size_t>(c)] = st;
  }

  // subskeleton membership per dimension
  part.in_bad.resize(static_cast<size_t>(cub.m()) + 1);
  part.in_good.resize(static_cast<size_t>(cub.m()) + 1);
  for (int d = 0; d <= cub.m(); ++d) {
    part.in_bad[static_cast<size_t>(d)].assign(static_cast<size_t>(cub.face_count(d)), 0);
    part.in_good[static_cast<size_t>(d)].assign(static_cast<size_t>(cub.face_count(d)), 0);
  }
  for (int64_t c = 0; c < ncells; ++c) {
    auto& mark = part.cells[static_cast<size_t>(c)].good ? part.in_good : part.in_bad;
    for (int d = 0; d <= cub.m(); ++d)
      for (int64_t fidx : cub.faces_of_cell(c, d))
        mark[static_cast<size_t>(d)][static_cast<size_t>(fidx)] = 1;
  }
  return part;
}

Region bad_region(const Cubication& cub, const GoodBadPartition& part) {
  return skeleton_region(cub, part, cub.m(), 2.0 * part.rho * cub.eta());
}

Region skeleton_region(const Cubication& cub, const GoodBadPartition& part, int dim,
                       double r) {
  Region acc = Region::empty(cub.host(), "E^" + std::to_string(dim));
  for (int64_t i = 0; i < cub.face_count(dim); ++i) {
    if (!part.in_bad[static_cast<size_t>(dim)][static_cast<size_t>(i)]) continue;
    acc = acc.unite(cub.neighborhood(cub.face(dim, i), r));
  }
  acc.description = "E^" + std::to_string(dim) + "+Q_r";
  return acc;
}

MeasureBoundReport bad_measure_report(const GridMap& u, const Cubication& cub,
                                      const Manifold& M, const GoodBadPartition& part) {
  MeasureBoundReport rep;
  rep.lhs = bad_region(cub, part).volume();

  const Grid& g = u.grid;
  Region full = Region::full(g);
  const int nu = u.ambient_dim;
  rep.term_R = integrate_nodes(g, full, [&](int64_t n) {
    return M.distance_to_basepoint(u.at(n));
  }) / part.R;
  const GradientField gf = gradient(u);
  rep.term_lambda =
      std::pow(cub.eta() / part.lambda, part.p) * energy_integral(gf, part.p, full);
  const double denom = rep.term_R + rep.term_lambda;
  rep.ratio = denom > 0.0 ? rep.lhs / denom : 0.0;

  // per-cube counting sum: each bad cube contributes its normalized
  // distance and energy terms, at least one of which exceeds one
  const double eta = cub.eta();
  const double collar = 2.0 * part.rho * eta;
  double cube_sum = 0.0;
  for (int64_t c = 0; c < cub.face_count(cub.m()); ++c) {
    if (part.cells[static_cast<size_t>(c)].good) continue;
    const Face f = cub.face(cub.m(), c);
    Region nb = cub.neighborhood(f, collar);
    const double vol = nb.volume();
    const double dist_int = integrate_nodes(g, nb, [&](int64_t n) {
      return M.distance_to_basepoint(u.at(n));
    });
    const double energy = energy_integral(gf, part.p, nb);
    cube_sum += dist_int / (part.R * vol) +
                energy / (std::pow(part.lambda, part.p) * std::pow(eta, g.m - part.p));
  }
  const double cube_vol = std::pow(2.0 * eta * (1.0 + 2.0 * part.rho), g.m);
  rep.count_ratio = cube_sum > 0.0 ? rep.lhs / (cube_vol * cube_sum) : 0.0;
  (void)nu;
  return rep;
}

void export_partition(const Cubication& cub, const GoodBadPartition& part,
                      const std::string& path) {
  nlohmann::json out = nlohmann::json::array();
  for (int64_t c = 0; c < cub.face_count(cub.m()); ++c) {
    const auto& st = part.cells[static_cast<size_t>(c)];
    const Face f = cub.face(cub.m(), c);
    nlohmann::json corner = nlohmann::json::array();
    for (int i = 0; i < cub.m(); ++i) corner.push_back(f.corner[i]);
    out.push_back({{"face", c},
                   {"corner", corner},
                   {"mean_dist", st.mean_dist},
                   {"rescaled_energy", st.rescaled_energy},
                   {"good", st.good}});
  }
  std::ofstream f(path);
  require(f.good(), errc::io_error, "cannot open " + path);
  f << out.dump(1) << "\n";
}

}  // namespace sobotrim
