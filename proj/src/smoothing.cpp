#include "sobotrim/smoothing.hpp"

#include <algorithm>
#include <cmath>

#include "sobotrim/parallel.hpp"

namespace sobotrim {

Mollifier Mollifier::standard(int m) {
  Mollifier phi;
  phi.dim = m;
  // unit mass on a fine tensor grid of the raw bump exp(-1/(1-|y|^2))
  const int K = 101;
  double mass = 0.0;
  std::vector<double> y(static_cast<size_t>(m));
  std::vector<int> idx(static_cast<size_t>(m), 0);
  const double step = 2.0 / K;
  while (true) {
    double r2 = 0.0;
    for (int i = 0; i < m; ++i) {
      y[static_cast<size_t>(i)] = -1.0 + (idx[static_cast<size_t>(i)] + 0.5) * step;
      r2 += y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
    }
    if (r2 < 1.0) mass += std::exp(-1.0 / (1.0 - r2));
    int carry = 0;
    while (carry < m && ++idx[static_cast<size_t>(carry)] == K) {
      idx[static_cast<size_t>(carry)] = 0;
      ++carry;
    }
    if (carry == m) break;
  }
  mass *= std::pow(step, m);
  phi.norm_const = 1.0 / mass;
  return phi;
}

double Mollifier::eval(std::span<const double> y) const {
  double r2 = 0.0;
  for (double v : y) r2 += v * v;
  if (r2 >= 1.0) return 0.0;
  return norm_const * std::exp(-1.0 / (1.0 - r2));
}

namespace {

double box_dist_linf(const Point& x, const Point& lo, const Point& hi, int m) {
  double d = 0.0;
  for (int i = 0; i < m; ++i)
    d = std::max(d, std::max(lo[i] - x[i], x[i] - hi[i]));
  return std::max(d, 0.0);
}

}  // namespace

ScaleField build_transition(const Cubication& cub, const GoodBadPartition& part,
                            const TransitionParams& params) {
  const Grid& g = cub.host();
  const double eta = cub.eta();
  const double rl = params.rho_lower;
  require(0.0 < rl && rl < params.rho, errc::parameter_out_of_range,
          "need 0 < rho_lower < rho");
  const double t = params.t > 0.0 ? params.t : 0.5 * std::min(rl, params.rho - rl);
  // plateau collar, ramp, and smoothing radius budget inside the rho_lower
  // collar; the raw slope must stay strictly below one
  const double collar = 0.10 * rl * eta;
  const double ramp = 0.75 * rl * eta;
  const double smooth_r = 0.10 * rl * eta;
  require(t < params.rho - rl, errc::transition_infeasible, "plateau exceeds the scale gap");
  require(t * eta / ramp < 0.999, errc::transition_infeasible,
          "plateau too tall for the collar ramp");

  ScaleField sf;
  sf.t = t;
  sf.eta = eta;
  sf.rho_lower = rl;
  sf.rho = params.rho;
  sf.psi = GridMap(g, 1, 0.0);

  // boxes of the good cubes
  std::vector<Point> glo, ghi;
  for (int64_t c = 0; c < cub.face_count(cub.m()); ++c) {
    if (!part.cells[static_cast<size_t>(c)].good) continue;
    Point lo{}, hi{};
    cub.face_box(cub.face(cub.m(), c), lo, hi);
    glo.push_back(lo);
    ghi.push_back(hi);
  }
  if (glo.empty()) {
    sf.max_slope = 0.0;
    return sf;  // psi identically zero
  }

  GridMap raw(g, 1, 0.0);
  parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
    for (int64_t n = b; n < e; ++n) {
      const Point x = g.node_point(g.node_at(n));
      double d = 1e300;
      for (size_t k = 0; k < glo.size(); ++k)
        d = std::min(d, box_dist_linf(x, glo[k], ghi[k], g.m));
      double v;
      if (d <= collar)
        v = t * eta;
      else if (d >= collar + ramp)
        v = 0.0;
      else
        v = t * eta * (1.0 - (d - collar) / ramp);
      raw.values[static_cast<size_t>(n)] = v;
    }
  });

  // separable triangle smoothing of the ramp; radius below one cell keeps
  // the raw field
  const int rad = static_cast<int>(std::floor(smooth_r / g.h()));
  if (rad >= 1) {
    GridMap cur = raw;
    for (int axis = 0; axis < g.m; ++axis) {
      GridMap next(g, 1, 0.0);
      parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
        for (int64_t n = b; n < e; ++n) {
          Index iv = g.node_at(n);
          double acc = 0.0, wacc = 0.0;
          for (int o = -rad; o <= rad; ++o) {
            Index jv = iv;
            jv[axis] = std::clamp(iv[axis] + o, 0, g.res - 1);
            const double w = 1.0 - std::abs(o) / (rad + 1.0);
            acc += w * cur.values[static_cast<size_t>(g.node_index(jv))];
            wacc += w;
          }
          next.values[static_cast<size_t>(n)] = acc / wacc;
        }
      });
      cur = next;
    }
    sf.psi = cur;
  } else {
    sf.psi = raw;
  }

  // grid nodes cannot exceed the plateau and the measured slope must stay
  // below one
  auto gf = gradient(sf.psi);
  double slope = 0.0;
  for (int64_t n = 0; n < g.num_nodes(); ++n) slope = std::max(slope, gf.frobenius(n));
  sf.max_slope = slope;
  require(slope < 1.0, errc::transition_infeasible, "measured scale slope reaches one");
  return sf;
}

ScaleField constant_scale(const Grid& g, double value) {
  ScaleField sf;
  sf.t = value;
  sf.eta = 1.0;
  sf.psi = GridMap(g, 1, value);
  sf.max_slope = 0.0;
  return sf;
}

namespace {

// shared quadrature node list on [-1,1]^m (midpoint tensor rule)
struct Quad {
  std::vector<double> y;  // node coordinates, m per entry
  std::vector<double> w;  // normalized weights, sum exactly one
};

Quad make_quad(const Mollifier& phi, int m, int k) {
  Quad q;
  std::vector<int> idx(static_cast<size_t>(m), 0);
  std::vector<double> y(static_cast<size_t>(m));
  double acc = 0.0;
  while (true) {
    for (int i = 0; i < m; ++i)
      y[static_cast<size_t>(i)] = -1.0 + (idx[static_cast<size_t>(i)] + 0.5) * 2.0 / k;
    const double w = phi.eval(y);
    if (w > 0.0) {
      for (int i = 0; i < m; ++i) q.y.push_back(y[static_cast<size_t>(i)]);
      q.w.push_back(w);
      acc += w;
    }
    int carry = 0;
    while (carry < m && ++idx[static_cast<size_t>(carry)] == k) {
      idx[static_cast<size_t>(carry)] = 0;
      ++carry;
    }
    if (carry == m) break;
  }
  for (double& w : q.w) w /= acc;
  return q;
}

}  // namespace

GridMap adaptive_convolve(const GridMap& u, const ScaleField& psi, const Mollifier& phi,
                          const Region& omega, const ConvolveOptions& opt,
                          ConvolveStats* stats) {
  const Grid& g = u.grid;
  require(psi.psi.grid == g, errc::config_invalid, "scale field grid mismatch");
  require(omega.grid == g, errc::config_invalid, "omega grid mismatch");
  const auto mask = omega.node_mask();
  const Quad quad = make_quad(phi, g.m, opt.quad_per_axis);
  const int nq = static_cast<int>(quad.w.size());
  const int nu = u.ambient_dim;
  const double h = g.h();

  // domain margin: every kernel support must stay inside the grid
  for (int64_t n = 0; n < g.num_nodes(); ++n) {
    if (!mask[static_cast<size_t>(n)]) continue;
    const Point x = g.node_point(g.node_at(n));
    const double pv = psi.value(n);
    for (int i = 0; i < g.m; ++i)
      require(std::abs(x[i]) + pv <= g.inradius + 1e-12, errc::domain_exceeded,
              "kernel support leaves the domain");
  }

  GridMap out = u;
  std::vector<int64_t> id_count((g.num_nodes() + kChunk - 1) / kChunk, 0);
  std::vector<int64_t> sub_count(id_count.size(), 0);
  parallel_for(g.num_nodes(), [&](int64_t b, int64_t e) {
    std::vector<double> val(static_cast<size_t>(nu)), acc(static_cast<size_t>(nu));
    for (int64_t n = b; n < e; ++n) {
      if (!mask[static_cast<size_t>(n)]) continue;
      const double pv = psi.value(n);
      if (pv == 0.0) {
        ++id_count[static_cast<size_t>(b / kChunk)];
        continue;  // exact pass-through
      }
      if (pv < opt.min_cells * h) {
        ++sub_count[static_cast<size_t>(b / kChunk)];
        continue;  // sub-grid kernel: recorded identity fallback
      }
      const Point x = g.node_point(g.node_at(n));
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int qi = 0; qi < nq; ++qi) {
        Point s = x;
        for (int i = 0; i < g.m; ++i)
          s[i] -= pv * quad.y[static_cast<size_t>(qi) * g.m + static_cast<size_t>(i)];
        sample(u, s, val);
        const double w = quad.w[static_cast<size_t>(qi)];
        for (int c = 0; c < nu; ++c) acc[static_cast<size_t>(c)] += w * val[static_cast<size_t>(c)];
      }
      auto dst = out.at(n);
      std::copy(acc.begin(), acc.end(), dst.begin());
    }
  });
  if (stats) {
    for (auto v : id_count) stats->identity_nodes += v;
    for (auto v : sub_count) stats->subgrid_nodes += v;
  }
  return out;
}

namespace {

double modulus_impl(const GridMap& u, const GradientField* gf, const ScaleField& psi,
                    double p, const Region& omega, const ConvolveOptions& opt) {
  const Grid& g = u.grid;
  const Quad quad = make_quad(Mollifier::standard(g.m), g.m, opt.quad_per_axis);
  // candidate directions: the kernel's own quadrature nodes
  const int nq = static_cast<int>(quad.w.size());
  const int nu = gf ? g.m * u.ambient_dim : u.ambient_dim;
  double worst = 0.0;
  std::vector<double> val(static_cast<size_t>(nu));
  for (int qi = 0; qi < nq; ++qi) {
    const double integral = integrate_nodes(g, omega, [&](int64_t n) {
      const double pv = psi.value(n);
      Point x = g.node_point(g.node_at(n));
      for (int i = 0; i < g.m; ++i)
        x[i] -= pv * quad.y[static_cast<size_t>(qi) * g.m + static_cast<size_t>(i)];
      double d2 = 0.0;
      if (gf) {
        sample_gradient(*gf, x, val);
        auto ref = gf->at(n);
        for (int c = 0; c < nu; ++c) {
          const double d = val[static_cast<size_t>(c)] - ref[static_cast<size_t>(c)];
          d2 += d * d;
        }
      } else {
        sample(u, x, val);
        auto ref = u.at(n);
        for (int c = 0; c < nu; ++c) {
          const double d = val[static_cast<size_t>(c)] - ref[static_cast<size_t>(c)];
          d2 += d * d;
        }
      }
      return std::pow(std::sqrt(d2), p);
    });
    worst = std::max(worst, std::pow(integral, 1.0 / p));
  }
  return worst;
}

}  // namespace

double translation_modulus(const GridMap& u, const ScaleField& psi, double p,
                           const Region& omega, const ConvolveOptions& opt) {
  return modulus_impl(u, nullptr, psi, p, omega, opt);
}

double gradient_translation_modulus(const GridMap& u, const ScaleField& psi, double p,
                                    const Region& omega, const ConvolveOptions& opt) {
  const GradientField gf = gradient(u);
  return modulus_impl(u, &gf, psi, p, omega, opt);
}

}  // namespace sobotrim
