#include "sobotrim/homogenization.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace sobotrim {

namespace {

std::vector<int> spanned_axes(const Face& f, int m) {
  std::vector<int> axes;
  for (int i = 0; i < m; ++i)
    if ((f.axes >> i) & 1) axes.push_back(i);
  return axes;
}

}  // namespace

GridMap restrict_to_face(const GridMap& u, const Cubication& cub, int dim, int64_t index) {
  const Grid& g = u.grid;
  require(g == cub.host(), errc::config_invalid, "map not on the cubication grid");
  const Face f = cub.face(dim, index);
  const auto axes = spanned_axes(f, cub.m());
  const double h = g.h();
  const int fres = dim == 0 ? 1 : static_cast<int>(std::lround(2.0 * cub.eta() / h)) + 1;

  Point lo{}, hi{};
  cub.face_box(f, lo, hi);
  // host node index of the face corner
  Index base{};
  for (int i = 0; i < g.m; ++i)
    base[i] = static_cast<int>(std::lround((lo[i] + g.inradius) / h));

  if (dim == 0) {
    // a vertex: a single value wrapped in the smallest legal grid
    GridMap out(Grid(1, 3, cub.eta()), u.ambient_dim);
    auto v = u.at(base);
    for (int k = 0; k < 3; ++k)
      std::copy(v.begin(), v.end(), out.at(Index{k, 0, 0, 0}).begin());
    return out;
  }

  GridMap out(Grid(dim, fres, cub.eta()), u.ambient_dim);
  const Grid& fg = out.grid;
  for (int64_t n = 0; n < fg.num_nodes(); ++n) {
    Index fiv = fg.node_at(n);
    Index hiv = base;
    for (int k = 0; k < dim; ++k) hiv[axes[static_cast<size_t>(k)]] += fiv[k];
    auto src = u.at(hiv);
    auto dst = out.at(n);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

SkeletonMap restrict_to_skeleton(const GridMap& u, const Cubication& cub, int dim,
                                 const std::vector<int64_t>& face_ids) {
  SkeletonMap sm;
  sm.cub = &cub;
  sm.ambient_dim = u.ambient_dim;
  for (int64_t idx : face_ids) sm.faces[{dim, idx}] = restrict_to_face(u, cub, dim, idx);
  return sm;
}

namespace {

// sample the stored value of a face at a host-space point lying on it
void sample_face(const SkeletonMap& sm, const FaceKey& key, const Point& host_pt,
                 std::span<double> out) {
  const auto it = sm.faces.find(key);
  require(it != sm.faces.end(), errc::trace_incompatible, "face values missing");
  const Cubication& cub = *sm.cub;
  const Face f = cub.face(key.dim, key.index);
  if (key.dim == 0) {
    auto v = it->second.at(Index{0, 0, 0, 0});
    std::copy(v.begin(), v.end(), out.begin());
    return;
  }
  const auto axes = spanned_axes(f, cub.m());
  const Point c = cub.face_center(f);
  Point local{};
  for (int k = 0; k < key.dim; ++k)
    local[k] = host_pt[axes[static_cast<size_t>(k)]] - c[axes[static_cast<size_t>(k)]];
  sample(it->second, local, out);
}

}  // namespace

double trace_mismatch(const SkeletonMap& sm) {
  require(sm.cub != nullptr, errc::config_invalid, "unbound skeleton map");
  const Cubication& cub = *sm.cub;
  double worst = 0.0;
  std::vector<double> a(static_cast<size_t>(sm.ambient_dim)),
      b(static_cast<size_t>(sm.ambient_dim));
  for (const auto& [key, vals] : sm.faces) {
    if (key.dim == 0) continue;
    for (int64_t sub : cub.subfaces(key.dim, key.index)) {
      FaceKey skey{key.dim - 1, sub};
      if (!sm.faces.count(skey)) continue;
      // compare on the subface's own nodes
      const Face sf = cub.face(skey.dim, skey.index);
      const auto it = sm.faces.find(skey);
      const Grid& fg = it->second.grid;
      const auto axes = spanned_axes(sf, cub.m());
      const Point c = cub.face_center(sf);
      for (int64_t n = 0; n < fg.num_nodes(); ++n) {
        Point host = c;
        if (skey.dim > 0) {
          Index iv = fg.node_at(n);
          for (int k = 0; k < skey.dim; ++k)
            host[axes[static_cast<size_t>(k)]] += fg.coord(iv[k]);
        }
        auto ref = it->second.at(n);
        sample_face(sm, key, host, a);
        for (int cc = 0; cc < sm.ambient_dim; ++cc)
          worst = std::max(worst, std::abs(a[static_cast<size_t>(cc)] - ref[cc]));
        if (skey.dim == 0) break;  // vertex grids repeat one value
      }
    }
  }
  return worst;
}

double skeleton_seminorm(const SkeletonMap& sm, double p, double trace_tol) {
  require(trace_mismatch(sm) <= trace_tol, errc::trace_incompatible,
          "shared faces disagree in the sense of traces");
  double acc = 0.0;
  for (const auto& [key, vals] : sm.faces) {
    if (key.dim == 0) continue;
    const double s = sobolev_seminorm(vals, p, Region::full(vals.grid));
    acc += std::pow(s, p);
  }
  return std::pow(acc, 1.0 / p);
}

GridMap homogenize_cube(
    const std::function<void(const Point&, std::span<double>)>& boundary, int i,
    double eta, int res, int nu, double p) {
  require(p < static_cast<double>(i), errc::homogenization_illposed,
          "the radial extension has infinite W^{1,p} energy for p >= i");
  Grid g(i, res, eta);
  GridMap out(g, nu);
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    Point x = g.node_point(g.node_at(n));
    double linf = 0.0;
    for (int k = 0; k < i; ++k) linf = std::max(linf, std::abs(x[k]));
    Point b{};
    if (linf < 1e-15) {
      b[0] = eta;  // center convention: the +x1 axis ray
    } else {
      for (int k = 0; k < i; ++k) b[k] = eta * x[k] / linf;
    }
    boundary(b, out.at(n));
  }
  return out;
}

GridMap homogenize_face(const SkeletonMap& sm, int dim, int64_t face, double p) {
  require(sm.cub != nullptr, errc::config_invalid, "unbound skeleton map");
  const Cubication& cub = *sm.cub;
  const Face f = cub.face(dim, face);
  const auto axes = spanned_axes(f, cub.m());
  const Point center = cub.face_center(f);
  const double eta = cub.eta();
  const double h = cub.host().h();
  const int fres = static_cast<int>(std::lround(2.0 * eta / h)) + 1;

  // boundary sampler over the subfaces
  auto subs = cub.subfaces(dim, face);
  auto boundary = [&](const Point& local, std::span<double> out) {
    // pick the facet whose fixed axis attains the max norm
    int k_star = 0;
    for (int k = 1; k < dim; ++k)
      if (std::abs(local[k]) > std::abs(local[k_star])) k_star = k;
    const int host_axis = axes[static_cast<size_t>(k_star)];
    const int side = local[k_star] > 0.0 ? 1 : 0;
    // find that facet among the subfaces
    for (int64_t sidx : subs) {
      const Face sf = cub.face(dim - 1, sidx);
      if ((sf.axes >> host_axis) & 1) continue;       // still spans the axis
      if (sf.axes != (f.axes & ~(1 << host_axis))) continue;
      if (sf.corner[host_axis] != f.corner[host_axis] + side) continue;
      Point host = center;
      for (int k = 0; k < dim; ++k) host[axes[static_cast<size_t>(k)]] += local[k];
      sample_face(sm, {dim - 1, sidx}, host, out);
      return;
    }
    raise(errc::trace_incompatible, "boundary facet not stored");
  };
  return homogenize_cube(boundary, dim, eta, fres, sm.ambient_dim, p);
}

ExtendResult extend_skeleton(const SkeletonMap& pinned, const Cubication& cub,
                             const GoodBadPartition& part, int ell, double p) {
  require(p < ell + 1.0, errc::homogenization_illposed,
          "iterated homogenization needs p < ell + 1");
  ExtendResult res;
  res.filled = pinned;
  res.filled.cub = &cub;
  const int m = cub.m();

  // continuity modulus of the pinned data: max adjacent-node jump
  for (const auto& [key, vals] : pinned.faces) {
    if (key.dim == 0) continue;
    const Grid& fg = vals.grid;
    for (int64_t n = 0; n < fg.num_nodes(); ++n) {
      Index iv = fg.node_at(n);
      for (int a = 0; a < fg.m; ++a) {
        if (iv[a] + 1 >= fg.res) continue;
        Index jv = iv;
        jv[a] += 1;
        auto va = vals.at(iv);
        auto vb = vals.at(jv);
        for (int c = 0; c < vals.ambient_dim; ++c)
          res.max_input_jump = std::max(res.max_input_jump, std::abs(va[c] - vb[c]));
      }
    }
  }

  res.dim_energy_p.assign(static_cast<size_t>(m) + 1, 0.0);
  res.dim_estimate_p.assign(static_cast<size_t>(m) + 1, 0.0);
  for (int i = ell + 1; i <= m; ++i) {
    for (int64_t idx = 0; idx < cub.face_count(i); ++idx) {
      if (!part.in_bad[static_cast<size_t>(i)][static_cast<size_t>(idx)]) continue;
      if (res.filled.has(i, idx)) {
        // pinned faces contribute to the estimate side
        const auto& vals = res.filled.faces.at({i, idx});
        const double s = sobolev_seminorm(vals, p, Region::full(vals.grid));
        res.dim_estimate_p[static_cast<size_t>(i)] +=
            std::pow(cub.eta(), m - i) * std::pow(s, p);
        continue;
      }
      GridMap v = homogenize_face(res.filled, i, idx, p);
      const double s = sobolev_seminorm(v, p, Region::full(v.grid));
      res.dim_energy_p[static_cast<size_t>(i)] += std::pow(s, p);
      res.filled.faces[{i, idx}] = std::move(v);
    }
  }
  return res;
}

void rasterize_top_faces(const SkeletonMap& sm, GridMap& target) {
  require(sm.cub != nullptr, errc::config_invalid, "unbound skeleton map");
  const Cubication& cub = *sm.cub;
  const Grid& g = target.grid;
  require(g == cub.host(), errc::config_invalid, "target not on the host grid");
  const double h = g.h();
  for (const auto& [key, vals] : sm.faces) {
    if (key.dim != cub.m()) continue;
    const Face f = cub.face(key.dim, key.index);
    Point lo{}, hi{};
    cub.face_box(f, lo, hi);
    Index base{};
    for (int i = 0; i < g.m; ++i)
      base[i] = static_cast<int>(std::lround((lo[i] + g.inradius) / h));
    const Grid& fg = vals.grid;
    for (int64_t n = 0; n < fg.num_nodes(); ++n) {
      Index fiv = fg.node_at(n);
      Index hiv = base;
      for (int k = 0; k < fg.m; ++k) hiv[k] += fiv[k];
      auto src = vals.at(n);
      auto dst = target.at(hiv);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
}

void export_skeleton_map(const SkeletonMap& sm, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  int counter = 0;
  const double mismatch = trace_mismatch(sm);
  for (const auto& [key, vals] : sm.faces) {
    const std::string name = "face_" + std::to_string(key.dim) + "_" +
                             std::to_string(key.index) + ".grid";
    save_gridmap(vals, dir + "/" + name);
    manifest.push_back({{"dim", key.dim}, {"index", key.index}, {"file", name}});
    ++counter;
  }
  nlohmann::json top = {{"faces", manifest}, {"trace_mismatch", mismatch}};
  std::ofstream f(dir + "/manifest.json");
  require(f.good(), errc::io_error, "cannot open manifest");
  f << top.dump(1) << "\n";
}

}  // namespace sobotrim
