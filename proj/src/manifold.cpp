#include "sobotrim/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <queue>

#include "sobotrim/rng.hpp"

namespace sobotrim {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// quintic smoothstep, cubic contact at both ends
double smoothstep5(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

// Deterministic orthonormal basis whose last vector is v (unit).
std::vector<std::vector<double>> adapted_basis(std::span<const double> v) {
  const int nu = static_cast<int>(v.size());
  std::vector<std::vector<double>> basis;
  basis.emplace_back(v.begin(), v.end());
  for (int i = 0; i < nu && static_cast<int>(basis.size()) < nu; ++i) {
    std::vector<double> cand(nu, 0.0);
    cand[i] = 1.0;
    for (const auto& b : basis) {
      const double pr = dot(cand, b);
      for (int j = 0; j < nu; ++j) cand[j] -= pr * b[j];
    }
    const double nn = norm(cand);
    if (nn > 1e-6) {
      for (double& x : cand) x /= nn;
      basis.push_back(std::move(cand));
    }
  }
  // reorder so v comes last
  std::rotate(basis.begin(), basis.begin() + 1, basis.end());
  return basis;
}

// golden-section minimization of a unimodal 1-D function
template <typename F>
double golden_min(F&& f, double lo, double hi, int iters = 80) {
  const double gr = 0.61803398874989484820;
  double a = lo, b = hi;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < iters; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

constexpr double kPi = 3.14159265358979323846;

struct CloudFull : Manifold::Cloud {
  std::vector<int> deg_off, flat;
};

}  // namespace

Manifold Manifold::euclidean(int n) {
  require(n >= 1, errc::parameter_out_of_range, "n must be positive");
  Manifold m;
  m.kind_ = ManifoldKind::euclidean;
  m.n_ = n;
  m.nu_ = n;
  m.basepoint_.assign(static_cast<size_t>(n), 0.0);
  return m;
}

Manifold Manifold::sphere(int n) {
  require(n >= 1, errc::parameter_out_of_range, "n must be positive");
  Manifold m;
  m.kind_ = ManifoldKind::sphere;
  m.n_ = n;
  m.nu_ = n + 1;
  m.basepoint_.assign(static_cast<size_t>(n) + 1, 0.0);
  m.basepoint_[static_cast<size_t>(n)] = 1.0;
  return m;
}

Manifold Manifold::funnel_sphere(int n, double alpha) {
  require(n >= 2, errc::parameter_out_of_range, "funnel needs n >= 2");
  require(alpha >= 0.0 && alpha < (n - 1.0) / n, errc::parameter_out_of_range,
          "alpha must lie in [0, (n-1)/n)");
  Manifold m;
  m.kind_ = ManifoldKind::funnel_sphere;
  m.n_ = n;
  m.nu_ = n + 1;
  m.alpha_ = alpha;
  // puncture at the north pole e_{n+1}; basepoint at the antipode where the
  // embedding coincides with the round sphere
  m.basepoint_.assign(static_cast<size_t>(n) + 1, 0.0);
  m.basepoint_[static_cast<size_t>(n)] = -1.0;
  return m;
}

Manifold Manifold::algebraic_funnel(int n, double beta) {
  require(n >= 2, errc::parameter_out_of_range, "funnel needs n >= 2");
  require(beta > static_cast<double>(n) / (n - 1.0), errc::parameter_out_of_range,
          "beta must exceed n/(n-1)");
  Manifold m;
  m.kind_ = ManifoldKind::algebraic_funnel;
  m.n_ = n;
  m.nu_ = n + 1;
  m.beta_ = beta;
  m.basepoint_.assign(static_cast<size_t>(n) + 1, 0.0);  // the apex
  return m;
}

bool Manifold::compact() const {
  switch (kind_) {
    case ManifoldKind::sphere: return true;
    case ManifoldKind::funnel_sphere: return alpha_ == 0.0;
    default: return false;
  }
}

std::string Manifold::name() const {
  switch (kind_) {
    case ManifoldKind::euclidean: return "euclidean";
    case ManifoldKind::sphere: return "sphere";
    case ManifoldKind::funnel_sphere: return "funnel_sphere";
    case ManifoldKind::algebraic_funnel: return "algebraic_funnel";
  }
  return "?";
}

double Manifold::funnel_lambda(double d) const {
  if (alpha_ == 0.0) return 1.0;
  if (d >= 1.0) return 1.0;
  const double raw = std::pow(-std::log(d), alpha_);
  if (d <= 0.5) return raw;
  const double s = smoothstep5((d - 0.5) / 0.5);
  return (1.0 - s) * raw + s;
}

double Manifold::funnel_lambda_deriv(double d) const {
  if (alpha_ == 0.0 || d >= 1.0) return 0.0;
  const double raw = std::pow(-std::log(d), alpha_);
  const double rawp = -alpha_ * std::pow(-std::log(d), alpha_ - 1.0) / d;
  if (d <= 0.5) return rawp;
  const double t = (d - 0.5) / 0.5;
  const double s = smoothstep5(t);
  const double sp = 30.0 * t * t * (t - 1.0) * (t - 1.0) / 0.5;
  return (1.0 - s) * rawp + sp * (1.0 - raw);
}

std::vector<double> Manifold::funnel_embed(std::span<const double> sphere_pt) const {
  const double c = std::clamp(sphere_pt[static_cast<size_t>(n_)], -1.0, 1.0);
  const double d = std::acos(c);
  const double lam = funnel_lambda(std::max(d, 1e-300));
  std::vector<double> out(sphere_pt.begin(), sphere_pt.end());
  for (double& x : out) x *= lam;
  return out;
}

double Manifold::algebraic_profile(double s) const {
  if (s <= 0.0) return 0.0;
  return std::sqrt(s) * std::pow(1.0 + s, 0.5 - beta_);
}

double Manifold::latitude_band_area(double lo, double hi) const {
  require(kind_ == ManifoldKind::funnel_sphere || kind_ == ManifoldKind::algebraic_funnel,
          errc::parameter_out_of_range, "band area defined on the revolution targets");
  require(hi > lo && lo > 0.0, errc::parameter_out_of_range, "bad band parameters");
  // area of the unit (n-1)-sphere
  double sphere_area = 2.0;  // n = 1 fallback
  if (n_ == 2) sphere_area = 2.0 * kPi;
  if (n_ == 3) sphere_area = 4.0 * kPi;
  auto cross_radius = [&](double t) {
    if (kind_ == ManifoldKind::funnel_sphere) return funnel_lambda(t) * std::sin(t);
    return algebraic_profile(t);
  };
  auto slant = [&](double t) {
    const double eps = 1e-6;
    double rp, zp;
    if (kind_ == ManifoldKind::funnel_sphere) {
      auto R = [&](double d) { return funnel_lambda(d) * std::sin(d); };
      auto Z = [&](double d) { return funnel_lambda(d) * std::cos(d); };
      rp = (R(t + eps) - R(t - eps)) / (2 * eps);
      zp = (Z(t + eps) - Z(t - eps)) / (2 * eps);
    } else {
      rp = (algebraic_profile(t + eps) - algebraic_profile(std::max(t - eps, 0.0))) /
           (t + eps - std::max(t - eps, 0.0));
      zp = 1.0;
    }
    return std::hypot(rp, zp);
  };
  const int K = 4000;
  double acc = 0.0;
  for (int i = 0; i < K; ++i) {
    const double a = lo + (hi - lo) * i / K;
    const double b = lo + (hi - lo) * (i + 1) / K;
    const double mid = 0.5 * (a + b);
    auto f = [&](double t) {
      return sphere_area * std::pow(cross_radius(t), n_ - 1) * slant(t);
    };
    acc += (b - a) / 6.0 * (f(a) + 4.0 * f(mid) + f(b));
  }
  return acc;
}

double Manifold::membership_residual(std::span<const double> y) const {
  switch (kind_) {
    case ManifoldKind::euclidean: return 0.0;
    case ManifoldKind::sphere: return std::abs(norm(y) - 1.0);
    case ManifoldKind::funnel_sphere: {
      const double r = norm(y);
      if (r < 1e-12) return 1e300;
      const double d = std::acos(std::clamp(y[static_cast<size_t>(n_)] / r, -1.0, 1.0));
      if (d < 1e-12) return 1e300;
      return std::abs(r - funnel_lambda(d));
    }
    case ManifoldKind::algebraic_funnel: {
      const double s = y[static_cast<size_t>(n_)];
      double r2 = 0.0;
      for (int i = 0; i < n_; ++i) r2 += y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
      if (s < 0.0) return std::sqrt(r2) - s;
      const double prof = algebraic_profile(s);
      return std::abs(r2 - prof * prof);
    }
  }
  return 1e300;
}

// ---------------------------------------------------------------------------
// projection

std::vector<double> Manifold::project(std::span<const double> y) const {
  switch (kind_) {
    case ManifoldKind::euclidean:
      return {y.begin(), y.end()};

    case ManifoldKind::sphere: {
      const double r = norm(y);
      require(r > 1e-9, errc::outside_tubular_neighborhood,
              "sphere projection undefined at the focal point");
      std::vector<double> out(y.begin(), y.end());
      for (double& x : out) x /= r;
      return out;
    }

    case ManifoldKind::funnel_sphere: {
      const double r = norm(y);
      require(r > 1e-9, errc::outside_tubular_neighborhood,
              "projection undefined near the origin");
      const size_t last = static_cast<size_t>(n_);
      const double psi0 = std::acos(std::clamp(y[last] / r, -1.0, 1.0));
      // in-plane direction orthogonal to the axis
      std::vector<double> e(static_cast<size_t>(nu_), 0.0);
      double tn = 0.0;
      for (int i = 0; i < n_; ++i) tn += y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
      tn = std::sqrt(tn);
      if (tn > 1e-12) {
        for (int i = 0; i < n_; ++i) e[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] / tn;
      } else {
        e[0] = 1.0;
      }
      auto fval = [&](double psi) {
        const double lam = funnel_lambda(psi);
        return lam * lam - 2.0 * r * lam * std::cos(psi - psi0);
      };
      // graded coarse scan, then golden refinement around the best bracket
      const double floor_psi = 1e-7;
      double fbest = fval(kPi);
      std::vector<double> mesh;
      for (int i = 0; i <= 200; ++i)
        mesh.push_back(std::exp(std::log(floor_psi) +
                                (std::log(0.5) - std::log(floor_psi)) * i / 200.0));
      for (int i = 1; i <= 300; ++i) mesh.push_back(0.5 + (kPi - 0.5) * i / 300.0);
      int best_i = static_cast<int>(mesh.size()) - 1;
      for (size_t i = 0; i < mesh.size(); ++i) {
        const double f = fval(mesh[i]);
        if (f < fbest) {
          fbest = f;
          best_i = static_cast<int>(i);
        }
      }
      const double lo = best_i > 0 ? mesh[static_cast<size_t>(best_i) - 1] : floor_psi;
      const double hi = best_i + 1 < static_cast<int>(mesh.size())
                            ? mesh[static_cast<size_t>(best_i) + 1]
                            : kPi;
      double psi = golden_min(fval, lo, hi, 40);
      // derivative bisection polish; golden section alone stalls at sqrt(eps)
      auto fprime = [&](double p) {
        const double lam = funnel_lambda(p);
        const double lp = funnel_lambda_deriv(p);
        return 2.0 * lam * lp - 2.0 * r * (lp * std::cos(p - psi0) - lam * std::sin(p - psi0));
      };
      {
        double bl = std::max(lo, psi - 1e-3), bh = std::min(hi, psi + 1e-3);
        if (fprime(bl) < 0.0 && fprime(bh) > 0.0) {
          for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (bl + bh);
            if (fprime(mid) < 0.0)
              bl = mid;
            else
              bh = mid;
          }
          psi = 0.5 * (bl + bh);
        }
      }
      require(psi > 2.0 * floor_psi, errc::outside_tubular_neighborhood,
              "projection slides into the funnel end");
      const double lam = funnel_lambda(psi);
      std::vector<double> out(static_cast<size_t>(nu_), 0.0);
      for (int i = 0; i < nu_; ++i)
        out[static_cast<size_t>(i)] = lam * (std::cos(psi) * (i == n_ ? 1.0 : 0.0) +
                                             std::sin(psi) * e[static_cast<size_t>(i)]);
      return out;
    }

    case ManifoldKind::algebraic_funnel: {
      const size_t last = static_cast<size_t>(n_);
      double rq = 0.0;
      for (int i = 0; i < n_; ++i) rq += y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
      rq = std::sqrt(rq);
      const double t = y[last];
      auto fval = [&](double q) {
        const double s = q * q;
        const double dr = algebraic_profile(s) - rq;
        const double dz = s - t;
        return dr * dr + dz * dz;
      };
      const double qmax = std::sqrt(std::max(4.0 * std::abs(t) + 4.0, 16.0));
      double fbest = fval(0.0);
      int best_i = 0;
      const int K = 600;
      for (int i = 1; i <= K; ++i) {
        const double q = qmax * i / K;
        const double f = fval(q);
        if (f < fbest) {
          fbest = f;
          best_i = i;
        }
      }
      const double lo = best_i > 0 ? qmax * (best_i - 1) / K : 0.0;
      const double hi = best_i < K ? qmax * (best_i + 1) / K : qmax;
      double q = golden_min(fval, lo, hi, 40);
      auto fprime = [&](double qq) {
        const double s = qq * qq;
        const double rho = algebraic_profile(s);
        double drho_dq = 0.0;
        if (s > 0.0) {
          const double a = 0.5 - beta_;
          const double drho_ds = 0.5 / std::sqrt(s) * std::pow(1.0 + s, a) +
                                 std::sqrt(s) * a * std::pow(1.0 + s, a - 1.0);
          drho_dq = drho_ds * 2.0 * qq;
        }
        return 2.0 * (rho - rq) * drho_dq + 2.0 * (s - t) * 2.0 * qq;
      };
      {
        double bl = std::max(lo, q - 1e-3), bh = std::min(hi, q + 1e-3);
        if (fprime(bl) < 0.0 && fprime(bh) > 0.0) {
          for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (bl + bh);
            if (fprime(mid) < 0.0)
              bl = mid;
            else
              bh = mid;
          }
          q = 0.5 * (bl + bh);
        }
      }
      const double s = q * q;
      const double rho = algebraic_profile(s);
      std::vector<double> out(static_cast<size_t>(nu_), 0.0);
      if (rho > 1e-12) {
        require(rq > 1e-12, errc::outside_tubular_neighborhood,
                "ambiguous projection on the symmetry axis");
        for (int i = 0; i < n_; ++i) out[static_cast<size_t>(i)] = rho * y[static_cast<size_t>(i)] / rq;
      }
      out[last] = s;
      return out;
    }
  }
  raise(errc::numeric_failure, "unreachable");
}

std::vector<double> Manifold::project_newton(std::span<const double> y) const {
  // damped Newton on the squared-distance Lagrangian of the implicit
  // surface equation; falls back to the profile solve when no implicit
  // form exists
  if (kind_ == ManifoldKind::euclidean) return {y.begin(), y.end()};
  if (kind_ == ManifoldKind::funnel_sphere) return project(y);

  const int nu = nu_;
  auto Gfun = [&](std::span<const double> x) -> double {
    if (kind_ == ManifoldKind::sphere) return dot(x, x) - 1.0;
    double r2 = 0.0;
    for (int i = 0; i < n_; ++i) r2 += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
    const double s = x[static_cast<size_t>(n_)];
    return r2 - s * std::pow(1.0 + s, 1.0 - 2.0 * beta_);
  };
  auto Ggrad = [&](std::span<const double> x, std::span<double> g) {
    if (kind_ == ManifoldKind::sphere) {
      for (int i = 0; i < nu; ++i) g[static_cast<size_t>(i)] = 2.0 * x[static_cast<size_t>(i)];
      return;
    }
    for (int i = 0; i < n_; ++i) g[static_cast<size_t>(i)] = 2.0 * x[static_cast<size_t>(i)];
    const double s = x[static_cast<size_t>(n_)];
    const double a = 1.0 - 2.0 * beta_;
    g[static_cast<size_t>(n_)] = -(std::pow(1.0 + s, a) + s * a * std::pow(1.0 + s, a - 1.0));
  };
  auto Ghess_diag = [&](std::span<const double> x, std::span<double> hd) {
    if (kind_ == ManifoldKind::sphere) {
      for (int i = 0; i < nu; ++i) hd[static_cast<size_t>(i)] = 2.0;
      return;
    }
    for (int i = 0; i < n_; ++i) hd[static_cast<size_t>(i)] = 2.0;
    const double s = x[static_cast<size_t>(n_)];
    const double a = 1.0 - 2.0 * beta_;
    hd[static_cast<size_t>(n_)] =
        -(2.0 * a * std::pow(1.0 + s, a - 1.0) + s * a * (a - 1.0) * std::pow(1.0 + s, a - 2.0));
  };

  std::vector<double> x = project(y);  // warm start from the profile solve
  double mu = 0.0;
  const int dim = nu + 1;
  std::vector<double> F(static_cast<size_t>(dim)), g(static_cast<size_t>(nu)),
      hd(static_cast<size_t>(nu)), sol(static_cast<size_t>(dim));
  std::vector<double> J(static_cast<size_t>(dim) * dim);
  auto residual = [&](const std::vector<double>& xx, double m2, std::vector<double>& out) {
    Ggrad(xx, g);
    for (int i = 0; i < nu; ++i)
      out[static_cast<size_t>(i)] =
          xx[static_cast<size_t>(i)] - y[static_cast<size_t>(i)] + m2 * g[static_cast<size_t>(i)];
    out[static_cast<size_t>(nu)] = Gfun(xx);
  };
  residual(x, mu, F);
  double fn = 0.0;
  for (double v : F) fn += v * v;
  for (int it = 0; it < 60 && fn > 1e-26; ++it) {
    Ggrad(x, g);
    Ghess_diag(x, hd);
    std::fill(J.begin(), J.end(), 0.0);
    for (int i = 0; i < nu; ++i) {
      J[static_cast<size_t>(i) * dim + static_cast<size_t>(i)] = 1.0 + mu * hd[static_cast<size_t>(i)];
      J[static_cast<size_t>(i) * dim + static_cast<size_t>(nu)] = g[static_cast<size_t>(i)];
      J[static_cast<size_t>(nu) * dim + static_cast<size_t>(i)] = g[static_cast<size_t>(i)];
    }
    std::vector<double> rhs(F);
    for (double& v : rhs) v = -v;
    std::vector<double> A(J);
    bool singular = false;
    for (int c = 0; c < dim && !singular; ++c) {
      int piv = c;
      for (int r = c + 1; r < dim; ++r)
        if (std::abs(A[static_cast<size_t>(r) * dim + static_cast<size_t>(c)]) >
            std::abs(A[static_cast<size_t>(piv) * dim + static_cast<size_t>(c)]))
          piv = r;
      if (std::abs(A[static_cast<size_t>(piv) * dim + static_cast<size_t>(c)]) < 1e-300) {
        singular = true;
        break;
      }
      if (piv != c)
        for (int k = 0; k < dim; ++k) {
          std::swap(A[static_cast<size_t>(c) * dim + static_cast<size_t>(k)],
                    A[static_cast<size_t>(piv) * dim + static_cast<size_t>(k)]);
          if (k == 0) std::swap(rhs[static_cast<size_t>(c)], rhs[static_cast<size_t>(piv)]);
        }
      for (int r = c + 1; r < dim; ++r) {
        const double f =
            A[static_cast<size_t>(r) * dim + static_cast<size_t>(c)] / A[static_cast<size_t>(c) * dim + static_cast<size_t>(c)];
        for (int k = c; k < dim; ++k)
          A[static_cast<size_t>(r) * dim + static_cast<size_t>(k)] -= f * A[static_cast<size_t>(c) * dim + static_cast<size_t>(k)];
        rhs[static_cast<size_t>(r)] -= f * rhs[static_cast<size_t>(c)];
      }
    }
    if (singular) break;
    for (int r = dim - 1; r >= 0; --r) {
      double v = rhs[static_cast<size_t>(r)];
      for (int k = r + 1; k < dim; ++k)
        v -= A[static_cast<size_t>(r) * dim + static_cast<size_t>(k)] * sol[static_cast<size_t>(k)];
      sol[static_cast<size_t>(r)] = v / A[static_cast<size_t>(r) * dim + static_cast<size_t>(r)];
    }
    double step = 1.0;
    bool moved = false;
    for (int tries = 0; tries < 30; ++tries) {
      std::vector<double> xn(x);
      for (int i = 0; i < nu; ++i) xn[static_cast<size_t>(i)] += step * sol[static_cast<size_t>(i)];
      const double mun = mu + step * sol[static_cast<size_t>(nu)];
      std::vector<double> Fn(static_cast<size_t>(dim));
      residual(xn, mun, Fn);
      double fnn = 0.0;
      for (double v : Fn) fnn += v * v;
      if (fnn < fn) {
        x = xn;
        mu = mun;
        F = Fn;
        fn = fnn;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  require(fn < 1e-18, errc::outside_tubular_neighborhood,
          "projection Newton did not converge");
  return x;
}

// ---------------------------------------------------------------------------
// meridian arc table and geodesics

double Manifold::meridian_distance(double d) const {
  static std::mutex mtx;
  {
    std::lock_guard<std::mutex> lk(mtx);
    if (!meridian_) {
      auto table = std::make_shared<std::vector<double>>();
      const int K = 20000;
      table->resize(2 * (static_cast<size_t>(K) + 1));
      std::vector<double>& tb = *table;
      if (kind_ == ManifoldKind::funnel_sphere) {
        // graded mesh in the latitude angle, fine near the puncture;
        // cumulative arc measured from the basepoint at d = pi
        const double dmin = 1e-7;
        auto node = [&](int i) {
          const double t = static_cast<double>(i) / K;
          if (t < 0.5)
            return std::exp(std::log(dmin) + (std::log(0.5) - std::log(dmin)) * (t / 0.5));
          return 0.5 + (kPi - 0.5) * ((t - 0.5) / 0.5);
        };
        auto speed = [&](double dd) {
          const double lam = funnel_lambda(dd);
          const double lp = funnel_lambda_deriv(dd);
          return std::sqrt(lam * lam + lp * lp);
        };
        tb[2 * static_cast<size_t>(K)] = node(K);
        tb[2 * static_cast<size_t>(K) + 1] = 0.0;
        for (int i = K - 1; i >= 0; --i) {
          const double a = node(i), b = node(i + 1);
          const double mid = 0.5 * (a + b);
          const double seg = (b - a) / 6.0 * (speed(a) + 4.0 * speed(mid) + speed(b));
          tb[2 * static_cast<size_t>(i)] = a;
          tb[2 * static_cast<size_t>(i) + 1] = tb[2 * (static_cast<size_t>(i) + 1) + 1] + seg;
        }
      } else if (kind_ == ManifoldKind::algebraic_funnel) {
        // parametrize by q = sqrt(height); arc from the apex upward
        const double qmax = std::sqrt(200.0);
        auto rho = [&](double s) { return algebraic_profile(s); };
        auto speed_q = [&](double q) {
          const double eps = 1e-6;
          const double qm = std::max(q - eps, 0.0);
          const double drho = (rho((q + eps) * (q + eps)) - rho(qm * qm)) / (q + eps - qm);
          const double dz = 2.0 * q;
          return std::sqrt(drho * drho + dz * dz);
        };
        tb[0] = 0.0;
        tb[1] = 0.0;
        for (int i = 1; i <= K; ++i) {
          const double a = qmax * (i - 1) / K, b = qmax * i / K;
          const double mid = 0.5 * (a + b);
          const double seg = (b - a) / 6.0 * (speed_q(a) + 4.0 * speed_q(mid) + speed_q(b));
          tb[2 * static_cast<size_t>(i)] = b;
          tb[2 * static_cast<size_t>(i) + 1] = tb[2 * (static_cast<size_t>(i) - 1) + 1] + seg;
        }
      }
      meridian_ = table;
    }
  }
  const std::vector<double>& tb = *meridian_;
  const int K = static_cast<int>(tb.size() / 2) - 1;
  const double q = d;
  if (q <= tb[0]) return tb[1];
  if (q >= tb[2 * static_cast<size_t>(K)]) return tb[2 * static_cast<size_t>(K) + 1];
  int lo = 0, hi = K;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (tb[2 * static_cast<size_t>(mid)] <= q)
      lo = mid;
    else
      hi = mid;
  }
  const double t =
      (q - tb[2 * static_cast<size_t>(lo)]) / (tb[2 * static_cast<size_t>(hi)] - tb[2 * static_cast<size_t>(lo)]);
  return tb[2 * static_cast<size_t>(lo) + 1] +
         t * (tb[2 * static_cast<size_t>(hi) + 1] - tb[2 * static_cast<size_t>(lo) + 1]);
}

double Manifold::distance_to_basepoint(std::span<const double> y) const {
  switch (kind_) {
    case ManifoldKind::euclidean: return norm(y);
    case ManifoldKind::sphere: {
      const double c = std::clamp(dot(y, basepoint_) / std::max(norm(y), 1e-300), -1.0, 1.0);
      return std::acos(c);
    }
    case ManifoldKind::funnel_sphere: {
      const double r = norm(y);
      if (r < 1e-12) return 0.0;
      const double d = std::acos(std::clamp(y[static_cast<size_t>(n_)] / r, -1.0, 1.0));
      return meridian_distance(std::max(d, 1e-7));
    }
    case ManifoldKind::algebraic_funnel: {
      const double s = std::max(y[static_cast<size_t>(n_)], 0.0);
      return meridian_distance(std::sqrt(s));
    }
  }
  return 0.0;
}

const Manifold::Cloud& Manifold::cloud() const {
  static std::mutex mtx;
  std::lock_guard<std::mutex> lk(mtx);
  if (cloud_) return *cloud_;
  require(kind_ == ManifoldKind::funnel_sphere || kind_ == ManifoldKind::algebraic_funnel,
          errc::numeric_failure, "sample cloud only built for funnel targets");

  auto cl = std::make_shared<CloudFull>();
  cl->nu = 3;
  // 2-D revolution section; higher intrinsic dimensions reduce to it
  std::vector<double> params, radii, axial;
  if (kind_ == ManifoldKind::funnel_sphere) {
    const double dmin = 1e-4;
    for (int i = 0; i <= 220; ++i)
      params.push_back(std::exp(std::log(dmin) + (std::log(0.5) - std::log(dmin)) * i / 220.0));
    for (int i = 1; i <= 330; ++i) params.push_back(0.5 + (kPi - 1e-3 - 0.5) * i / 330.0);
    for (double d : params) {
      const double lam = funnel_lambda(d);
      radii.push_back(lam * std::sin(d));
      axial.push_back(lam * std::cos(d));
    }
  } else {
    const double qmax = std::sqrt(60.0);
    for (int i = 1; i <= 500; ++i) {
      const double q = qmax * i / 500.0;
      params.push_back(q);
      radii.push_back(algebraic_profile(q * q));
      axial.push_back(q * q);
    }
  }
  const int nrings = static_cast<int>(params.size());
  double circ_total = 0.0;
  for (double r : radii) circ_total += 2.0 * kPi * r;
  const double target = 100000.0;
  std::vector<int> counts(static_cast<size_t>(nrings));
  for (int r = 0; r < nrings; ++r)
    counts[static_cast<size_t>(r)] =
        std::max(12, static_cast<int>(std::lround(2.0 * kPi * radii[static_cast<size_t>(r)] / circ_total * target)));

  cl->ring_offset.push_back(0);
  for (int r = 0; r < nrings; ++r) {
    cl->ring_param.push_back(params[static_cast<size_t>(r)]);
    const int cnt = counts[static_cast<size_t>(r)];
    for (int j = 0; j < cnt; ++j) {
      const double phi = 2.0 * kPi * j / cnt;
      cl->pts.push_back(radii[static_cast<size_t>(r)] * std::cos(phi));
      cl->pts.push_back(radii[static_cast<size_t>(r)] * std::sin(phi));
      cl->pts.push_back(axial[static_cast<size_t>(r)]);
    }
    cl->ring_offset.push_back(static_cast<int>(cl->pts.size() / 3));
  }
  const int base_node = static_cast<int>(cl->pts.size() / 3);
  if (kind_ == ManifoldKind::funnel_sphere)
    cl->pts.insert(cl->pts.end(), {0.0, 0.0, -1.0});
  else
    cl->pts.insert(cl->pts.end(), {0.0, 0.0, 0.0});

  const int64_t N = cl->size();
  std::vector<std::vector<int>> adj(static_cast<size_t>(N));
  auto link = [&](int a, int b) {
    adj[static_cast<size_t>(a)].push_back(b);
    adj[static_cast<size_t>(b)].push_back(a);
  };
  for (int r = 0; r < nrings; ++r) {
    const int off = cl->ring_offset[static_cast<size_t>(r)];
    const int cnt = cl->ring_offset[static_cast<size_t>(r) + 1] - off;
    for (int j = 0; j < cnt; ++j) link(off + j, off + (j + 1) % cnt);
    if (r + 1 < nrings) {
      const int off2 = cl->ring_offset[static_cast<size_t>(r) + 1];
      const int cnt2 = cl->ring_offset[static_cast<size_t>(r) + 2] - off2;
      for (int j = 0; j < cnt; ++j) {
        const double phi = 2.0 * kPi * j / cnt;
        const int k = static_cast<int>(std::floor(phi / (2.0 * kPi) * cnt2));
        link(off + j, off2 + ((k % cnt2) + cnt2) % cnt2);
        link(off + j, off2 + (((k + 1) % cnt2) + cnt2) % cnt2);
      }
    }
  }
  if (kind_ == ManifoldKind::funnel_sphere) {
    const int off = cl->ring_offset[static_cast<size_t>(nrings) - 1];
    const int cnt = cl->ring_offset[static_cast<size_t>(nrings)] - off;
    for (int j = 0; j < cnt; ++j) link(base_node, off + j);
  } else {
    const int off = cl->ring_offset[0];
    const int cnt = cl->ring_offset[1] - off;
    for (int j = 0; j < cnt; ++j) link(base_node, off + j);
  }

  cl->deg_off.assign(static_cast<size_t>(N) + 1, 0);
  for (int64_t i = 0; i < N; ++i)
    cl->deg_off[static_cast<size_t>(i) + 1] =
        cl->deg_off[static_cast<size_t>(i)] + static_cast<int>(adj[static_cast<size_t>(i)].size());
  cl->flat.resize(static_cast<size_t>(cl->deg_off[static_cast<size_t>(N)]));
  for (int64_t i = 0; i < N; ++i)
    std::copy(adj[static_cast<size_t>(i)].begin(), adj[static_cast<size_t>(i)].end(),
              cl->flat.begin() + cl->deg_off[static_cast<size_t>(i)]);

  cl->base_dist.assign(static_cast<size_t>(N), 1e300);
  using QE = std::pair<double, int>;
  std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
  cl->base_dist[static_cast<size_t>(base_node)] = 0.0;
  pq.push({0.0, base_node});
  while (!pq.empty()) {
    auto [dcur, i] = pq.top();
    pq.pop();
    if (dcur > cl->base_dist[static_cast<size_t>(i)] + 1e-15) continue;
    auto pi = cl->point(i);
    for (int k = cl->deg_off[static_cast<size_t>(i)]; k < cl->deg_off[static_cast<size_t>(i) + 1]; ++k) {
      const int j = cl->flat[static_cast<size_t>(k)];
      const double w = dist(pi, cl->point(j));
      if (dcur + w < cl->base_dist[static_cast<size_t>(j)] - 1e-15) {
        cl->base_dist[static_cast<size_t>(j)] = dcur + w;
        pq.push({dcur + w, j});
      }
    }
  }
  cloud_ = cl;
  return *cloud_;
}

namespace {

void section_coords(const Manifold& M, std::span<const double> y, double& radial,
                    double& axial_out) {
  const int n = M.intrinsic_dim();
  double r2 = 0.0;
  for (int i = 0; i < n; ++i) r2 += y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
  radial = std::sqrt(r2);
  axial_out = y[static_cast<size_t>(n)];
}

int cloud_nearest(const Manifold::Cloud& cl, double radial, double axial, double phi) {
  int best = -1;
  double bestd = 1e300;
  const int nrings = static_cast<int>(cl.ring_param.size());
  const double qx = radial * std::cos(phi), qy = radial * std::sin(phi);
  for (int r = 0; r < nrings; ++r) {
    const int off = cl.ring_offset[static_cast<size_t>(r)];
    const int cnt = cl.ring_offset[static_cast<size_t>(r) + 1] - off;
    auto p0 = cl.point(off);
    const double rr = std::hypot(p0[0], p0[1]);
    const double dz = p0[2] - axial;
    const double dr = rr - radial;
    if (dz * dz + dr * dr > bestd) continue;
    const int j = static_cast<int>(std::lround(phi / (2.0 * kPi) * cnt));
    for (int dj = -2; dj <= 2; ++dj) {
      const int idx = off + (((j + dj) % cnt) + cnt) % cnt;
      auto p = cl.point(idx);
      const double d2 = (p[0] - qx) * (p[0] - qx) + (p[1] - qy) * (p[1] - qy) + (p[2] - axial) * (p[2] - axial);
      if (d2 < bestd) {
        bestd = d2;
        best = idx;
      }
    }
  }
  return best;
}

}  // namespace

std::vector<double> Manifold::surface_normal(std::span<const double> xi) const {
  require(kind_ != ManifoldKind::euclidean, errc::parameter_out_of_range,
          "full-dimensional target has no surface normal");
  std::vector<double> nrm(static_cast<size_t>(nu_), 0.0);
  if (kind_ == ManifoldKind::sphere) {
    const double r = norm(xi);
    for (int i = 0; i < nu_; ++i) nrm[static_cast<size_t>(i)] = xi[static_cast<size_t>(i)] / r;
    return nrm;
  }
  // revolution surface: in-plane normal of the profile curve
  double radial = 0.0;
  for (int i = 0; i < n_; ++i) radial += xi[static_cast<size_t>(i)] * xi[static_cast<size_t>(i)];
  radial = std::sqrt(radial);
  double rp, zp;
  const double eps = 1e-6;
  if (kind_ == ManifoldKind::funnel_sphere) {
    const double r = norm(xi);
    const double d = std::acos(std::clamp(xi[static_cast<size_t>(n_)] / r, -1.0, 1.0));
    auto R = [&](double t) { return funnel_lambda(t) * std::sin(t); };
    auto Z = [&](double t) { return funnel_lambda(t) * std::cos(t); };
    rp = (R(d + eps) - R(d - eps)) / (2 * eps);
    zp = (Z(d + eps) - Z(d - eps)) / (2 * eps);
  } else {
    const double s = std::max(xi[static_cast<size_t>(n_)], eps);
    rp = (algebraic_profile(s + eps) - algebraic_profile(s - eps)) / (2 * eps);
    zp = 1.0;
  }
  const double sp = std::hypot(rp, zp);
  if (radial > 1e-12) {
    for (int i = 0; i < n_; ++i)
      nrm[static_cast<size_t>(i)] = (zp / sp) * xi[static_cast<size_t>(i)] / radial;
  } else {
    nrm[0] = zp / sp;
  }
  nrm[static_cast<size_t>(n_)] = -rp / sp;
  return nrm;
}

std::vector<std::vector<double>> Manifold::geodesic_path(std::span<const double> xi1,
                                                         std::span<const double> xi2) const {
  require(contains(xi1, 1e-6) && contains(xi2, 1e-6), errc::not_on_manifold,
          "geodesic endpoints must lie on the manifold");
  std::vector<std::vector<double>> path;
  const int K = 64;
  if (kind_ == ManifoldKind::euclidean) {
    for (int k = 0; k <= K; ++k) {
      std::vector<double> p(static_cast<size_t>(nu_));
      for (int i = 0; i < nu_; ++i)
        p[static_cast<size_t>(i)] =
            xi1[static_cast<size_t>(i)] +
            (xi2[static_cast<size_t>(i)] - xi1[static_cast<size_t>(i)]) * k / K;
      path.push_back(std::move(p));
    }
    return path;
  }
  if (kind_ == ManifoldKind::sphere) {
    const double ang = std::acos(std::clamp(dot(xi1, xi2), -1.0, 1.0));
    // orthonormal companion of xi1 in the plane of the two points
    std::vector<double> e(static_cast<size_t>(nu_), 0.0);
    double en = 0.0;
    for (int i = 0; i < nu_; ++i) {
      e[static_cast<size_t>(i)] =
          xi2[static_cast<size_t>(i)] - std::cos(ang) * xi1[static_cast<size_t>(i)];
      en += e[static_cast<size_t>(i)] * e[static_cast<size_t>(i)];
    }
    en = std::sqrt(en);
    if (en < 1e-12) {
      // identical or antipodal endpoints: pick a deterministic companion
      auto basis = adapted_basis(xi1);
      e.assign(basis[0].begin(), basis[0].end());
      en = 1.0;
    }
    for (double& v : e) v /= en;
    for (int k = 0; k <= K; ++k) {
      const double t = ang * k / K;
      std::vector<double> p(static_cast<size_t>(nu_));
      for (int i = 0; i < nu_; ++i)
        p[static_cast<size_t>(i)] =
            std::cos(t) * xi1[static_cast<size_t>(i)] + std::sin(t) * e[static_cast<size_t>(i)];
      path.push_back(std::move(p));
    }
    return path;
  }

  // revolution targets: compute the section path and rotate it back into
  // the true configuration
  double r1, z1, r2, z2;
  section_coords(*this, xi1, r1, z1);
  section_coords(*this, xi2, r2, z2);
  double omega = 0.0;
  if (r1 > 1e-12 && r2 > 1e-12) {
    double d = 0.0;
    for (int i = 0; i < n_; ++i) d += xi1[static_cast<size_t>(i)] * xi2[static_cast<size_t>(i)];
    omega = std::acos(std::clamp(d / (r1 * r2), -1.0, 1.0));
  }
  // in-plane frame of the cross-section components
  std::vector<double> w1(static_cast<size_t>(n_), 0.0), w2(static_cast<size_t>(n_), 0.0);
  if (r1 > 1e-12)
    for (int i = 0; i < n_; ++i) w1[static_cast<size_t>(i)] = xi1[static_cast<size_t>(i)] / r1;
  else
    w1[0] = 1.0;
  double w2n = 0.0;
  for (int i = 0; i < n_; ++i) {
    w2[static_cast<size_t>(i)] =
        (r2 > 1e-12 ? xi2[static_cast<size_t>(i)] / r2 : 0.0) -
        std::cos(omega) * w1[static_cast<size_t>(i)];
    w2n += w2[static_cast<size_t>(i)] * w2[static_cast<size_t>(i)];
  }
  w2n = std::sqrt(w2n);
  if (w2n > 1e-12) {
    for (double& v : w2) v /= w2n;
  } else {
    // aligned or opposite cross-sections: any perpendicular companion works
    for (int i = 0; i < n_; ++i) {
      std::fill(w2.begin(), w2.end(), 0.0);
      w2[static_cast<size_t>(i)] = 1.0;
      double pr = 0.0;
      for (int j = 0; j < n_; ++j) pr += w2[static_cast<size_t>(j)] * w1[static_cast<size_t>(j)];
      double nn = 0.0;
      for (int j = 0; j < n_; ++j) {
        w2[static_cast<size_t>(j)] -= pr * w1[static_cast<size_t>(j)];
        nn += w2[static_cast<size_t>(j)] * w2[static_cast<size_t>(j)];
      }
      if (nn > 1e-6) {
        for (double& v : w2) v /= std::sqrt(nn);
        break;
      }
    }
  }
  // graph shortest path in the 2-D section, then straightening
  auto sp = section_path(r1, z1, r2, z2, omega);
  for (const auto& q : sp) {
    std::vector<double> p(static_cast<size_t>(nu_), 0.0);
    for (int i = 0; i < n_; ++i)
      p[static_cast<size_t>(i)] =
          q[0] * w1[static_cast<size_t>(i)] + q[1] * w2[static_cast<size_t>(i)];
    p[static_cast<size_t>(n_)] = q[2];
    path.push_back(std::move(p));
  }
  return path;
}

std::vector<std::vector<double>> Manifold::section_path(double r1, double z1, double r2,
                                                        double z2, double omega) const {
  const auto& cl = static_cast<const CloudFull&>(cloud());
  const int a = cloud_nearest(cl, r1, z1, 0.0);
  const int b = cloud_nearest(cl, r2, z2, omega);
  require(a >= 0 && b >= 0, errc::not_on_manifold, "point outside the sampled surface");

  std::vector<std::vector<double>> path;
  path.push_back({r1, 0.0, z1});
  if (a != b) {
    const int64_t N = cl.size();
    std::vector<double> dd(static_cast<size_t>(N), 1e300);
    std::vector<int> prev(static_cast<size_t>(N), -1);
    using QE = std::pair<double, int>;
    std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
    dd[static_cast<size_t>(a)] = 0.0;
    pq.push({0.0, a});
    while (!pq.empty()) {
      auto [dc, i] = pq.top();
      pq.pop();
      if (i == b) break;
      if (dc > dd[static_cast<size_t>(i)] + 1e-15) continue;
      auto pi = cl.point(i);
      for (int k = cl.deg_off[static_cast<size_t>(i)]; k < cl.deg_off[static_cast<size_t>(i) + 1];
           ++k) {
        const int j = cl.flat[static_cast<size_t>(k)];
        const double w = dist(pi, cl.point(j));
        if (dc + w < dd[static_cast<size_t>(j)] - 1e-15) {
          dd[static_cast<size_t>(j)] = dc + w;
          prev[static_cast<size_t>(j)] = i;
          pq.push({dc + w, j});
        }
      }
    }
    require(dd[static_cast<size_t>(b)] < 1e299, errc::numeric_failure,
            "disconnected sample graph");
    std::vector<std::vector<double>> rev;
    for (int v = b; v != -1; v = prev[static_cast<size_t>(v)]) {
      auto p = cl.point(v);
      rev.push_back({p[0], p[1], p[2]});
    }
    for (auto it = rev.rbegin(); it != rev.rend(); ++it) path.push_back(*it);
  }
  path.push_back({r2 * std::cos(omega), r2 * std::sin(omega), z2});

  // local straightening: move interior vertices to projected midpoints
  Manifold section = *this;
  section.n_ = 2;
  section.nu_ = 3;
  section.cloud_.reset();
  for (int sweep = 0; sweep < 12; ++sweep) {
    for (size_t k = 1; k + 1 < path.size(); ++k) {
      std::vector<double> mid(3);
      for (int c = 0; c < 3; ++c)
        mid[static_cast<size_t>(c)] =
            0.5 * (path[k - 1][static_cast<size_t>(c)] + path[k + 1][static_cast<size_t>(c)]);
      try {
        path[k] = section.project(mid);
      } catch (const Error&) {
        // keep the old vertex when the midpoint falls outside the reach
      }
    }
  }
  return path;
}

double Manifold::geodesic_distance(std::span<const double> xi1,
                                   std::span<const double> xi2) const {
  require(contains(xi1, 1e-6) && contains(xi2, 1e-6), errc::not_on_manifold,
          "geodesic endpoints must lie on the manifold");
  if (kind_ == ManifoldKind::euclidean) return dist(xi1, xi2);
  if (kind_ == ManifoldKind::sphere)
    return std::acos(std::clamp(dot(xi1, xi2), -1.0, 1.0));

  // revolution targets: reduce to the 2-D section through both points;
  // canonical endpoint order keeps the result exactly symmetric
  double r1, z1, r2, z2;
  section_coords(*this, xi1, r1, z1);
  section_coords(*this, xi2, r2, z2);
  if (std::tie(z1, r1) > std::tie(z2, r2)) {
    std::swap(r1, r2);
    std::swap(z1, z2);
    std::swap(xi1, xi2);
  }
  double omega = 0.0;
  if (r1 > 1e-12 && r2 > 1e-12) {
    double d = 0.0;
    for (int i = 0; i < n_; ++i) d += xi1[static_cast<size_t>(i)] * xi2[static_cast<size_t>(i)];
    omega = std::acos(std::clamp(d / (r1 * r2), -1.0, 1.0));
  }
  auto path = section_path(r1, z1, r2, z2, omega);
  double len = 0.0;
  for (size_t k = 0; k + 1 < path.size(); ++k) len += dist(path[k], path[k + 1]);
  return len;
}

// ---------------------------------------------------------------------------
// tubular radius

double Manifold::tubular_radius(double Rbar) const {
  require(Rbar > 0.0, errc::parameter_out_of_range, "Rbar must be positive");
  switch (kind_) {
    case ManifoldKind::euclidean: return std::numeric_limits<double>::infinity();
    case ManifoldKind::sphere: return 0.5;  // half the focal distance
    default: break;
  }
  auto curv_bound = [&](double t) {
    const double eps = 1e-5;
    double rho, rhom, rhop, z, zm, zp;
    if (kind_ == ManifoldKind::funnel_sphere) {
      auto R = [&](double d) { return funnel_lambda(d) * std::sin(d); };
      auto Z = [&](double d) { return funnel_lambda(d) * std::cos(d); };
      rho = R(t), rhom = R(t - eps), rhop = R(t + eps);
      z = Z(t), zm = Z(t - eps), zp = Z(t + eps);
    } else {
      auto R = [&](double q) { return algebraic_profile(q * q); };
      auto Z = [&](double q) { return q * q; };
      rho = R(t), rhom = R(t - eps), rhop = R(t + eps);
      z = Z(t), zm = Z(t - eps), zp = Z(t + eps);
    }
    const double rp = (rhop - rhom) / (2 * eps), rpp = (rhop - 2 * rho + rhom) / (eps * eps);
    const double zp1 = (zp - zm) / (2 * eps), zpp = (zp - 2 * z + zm) / (eps * eps);
    const double sp = std::sqrt(rp * rp + zp1 * zp1);
    const double kmer = std::abs(rp * zpp - zp1 * rpp) / (sp * sp * sp);
    const double kpar = rho > 1e-9 ? std::abs(zp1) / (rho * sp) : kmer;
    return std::max(kmer, kpar);
  };

  double kmax = 0.0;
  const int K = 400;
  if (kind_ == ManifoldKind::funnel_sphere) {
    for (int i = 0; i <= K; ++i) {
      const double d =
          std::exp(std::log(1e-4) + (std::log(kPi - 1e-3) - std::log(1e-4)) * i / K);
      if (meridian_distance(d) <= Rbar + 0.1) kmax = std::max(kmax, curv_bound(d));
    }
  } else {
    for (int i = 1; i <= K; ++i) {
      const double q = std::sqrt(60.0) * i / K;
      if (meridian_distance(q) <= Rbar + 0.1) kmax = std::max(kmax, curv_bound(q));
    }
  }
  double iota = 0.5 / std::max(kmax, 1e-9);
  iota = std::min(iota, 0.5);

  // verify on random perturbed samples, shrinking on failure
  Rng rng(424242);
  for (int round = 0; round < 6; ++round) {
    bool ok = true;
    for (int trial = 0; trial < 2000 && ok; ++trial) {
      std::vector<double> xi;
      if (kind_ == ManifoldKind::funnel_sphere) {
        const double d = std::exp(rng.uniform(std::log(1e-3), std::log(kPi - 1e-2)));
        if (meridian_distance(d) > Rbar) continue;
        const double lam = funnel_lambda(d);
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        xi.assign(static_cast<size_t>(nu_), 0.0);
        xi[0] = lam * std::sin(d) * std::cos(phi);
        xi[1] = lam * std::sin(d) * std::sin(phi);
        xi[static_cast<size_t>(n_)] = lam * std::cos(d);
      } else {
        const double q = rng.uniform(0.0, std::sqrt(60.0));
        if (meridian_distance(q) > Rbar) continue;
        const double s = q * q;
        const double rho = algebraic_profile(s);
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        xi.assign(static_cast<size_t>(nu_), 0.0);
        xi[0] = rho * std::cos(phi);
        xi[1] = rho * std::sin(phi);
        xi[static_cast<size_t>(n_)] = s;
      }
      std::vector<double> y(xi);
      std::vector<double> dir(static_cast<size_t>(nu_));
      double pert2 = 0.0;
      for (auto& v : dir) {
        v = rng.normal();
        pert2 += v * v;
      }
      const double pn = std::sqrt(pert2);
      for (int i = 0; i < nu_; ++i)
        y[static_cast<size_t>(i)] += iota * 0.95 * dir[static_cast<size_t>(i)] / pn;
      try {
        auto pr = project(y);
        if (dist(pr, xi) > 4.0 * iota && distance_to_basepoint(pr) > 2.0 * Rbar) ok = false;
      } catch (const Error&) {
        ok = false;
      }
    }
    if (ok) break;
    iota *= 0.5;
  }
  return iota;
}

// ---------------------------------------------------------------------------
// charts

Chart Manifold::chart_at(std::span<const double> xi, double kappa) const {
  require(kappa > 0.0, errc::parameter_out_of_range, "kappa must be positive");
  require(contains(xi, 1e-6), errc::not_on_manifold, "chart center must lie on the manifold");
  Chart ch;
  ch.center.assign(xi.begin(), xi.end());
  ch.kappa = kappa;

  if (kind_ == ManifoldKind::euclidean) {
    std::vector<double> c(xi.begin(), xi.end());
    ch.kappa_prime = kappa;
    ch.lipschitz = 1.0;
    ch.forward = [c](std::span<const double> y) {
      std::vector<double> z(y.size());
      for (size_t i = 0; i < y.size(); ++i) z[i] = y[i] - c[i];
      return z;
    };
    ch.inverse = [c](std::span<const double> z) {
      std::vector<double> y(z.size());
      for (size_t i = 0; i < z.size(); ++i) y[i] = z[i] + c[i];
      return y;
    };
    return ch;
  }

  if (kind_ == ManifoldKind::sphere || kind_ == ManifoldKind::funnel_sphere) {
    // pull back to the round sphere; stereographic projection from the
    // antipode of the (pullback) center, scaled to the local size
    const double scale = (kind_ == ManifoldKind::sphere) ? 1.0 : norm(xi);
    std::vector<double> center_hat(xi.begin(), xi.end());
    const double cn = norm(center_hat);
    require(cn > 1e-12, errc::no_uniform_chart, "degenerate chart center");
    for (double& v : center_hat) v /= cn;
    const bool pullback = (kind_ == ManifoldKind::funnel_sphere);
    if (pullback) {
      require(scale <= chart_cutoff_, errc::no_uniform_chart,
              "chart center beyond the uniform zone of the funnel");
      require(kappa <= 0.9, errc::no_uniform_chart, "funnel charts limited to radius 0.9");
    } else {
      require(kappa < kPi - 0.1, errc::parameter_out_of_range, "chart radius too large");
    }
    auto basis = adapted_basis(center_hat);
    const int n = n_;
    const Manifold* self = this;
    ch.forward = [basis, n, scale](std::span<const double> y) {
      std::vector<double> yy(y.begin(), y.end());
      const double r = norm(yy);
      for (double& v : yy) v /= r;
      std::vector<double> c(static_cast<size_t>(n) + 1);
      for (int i = 0; i <= n; ++i)
        c[static_cast<size_t>(i)] = dot(yy, basis[static_cast<size_t>(i)]);
      std::vector<double> z(static_cast<size_t>(n));
      const double den = 1.0 + c[static_cast<size_t>(n)];
      for (int i = 0; i < n; ++i) z[static_cast<size_t>(i)] = scale * c[static_cast<size_t>(i)] / den;
      return z;
    };
    ch.inverse = [basis, n, scale, self, pullback](std::span<const double> z) {
      double z2 = 0.0;
      for (double v : z) z2 += (v / scale) * (v / scale);
      std::vector<double> c(static_cast<size_t>(n) + 1);
      for (int i = 0; i < n; ++i)
        c[static_cast<size_t>(i)] = 2.0 * (z[static_cast<size_t>(i)] / scale) / (1.0 + z2);
      c[static_cast<size_t>(n)] = (1.0 - z2) / (1.0 + z2);
      std::vector<double> x(static_cast<size_t>(n) + 1, 0.0);
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
          x[static_cast<size_t>(j)] +=
              c[static_cast<size_t>(i)] * basis[static_cast<size_t>(i)][static_cast<size_t>(j)];
      if (pullback) return self->funnel_embed(x);
      return x;
    };
    // sampled two-sided Lipschitz constant over the cap
    double lip = 1.0;
    Rng rng(777);
    for (int t = 0; t < 600; ++t) {
      const double th = kappa * std::sqrt(rng.uniform());
      const double dirang = rng.uniform(0.0, 2.0 * kPi);
      auto cap_point = [&](double theta) {
        std::vector<double> x(static_cast<size_t>(nu_), 0.0);
        for (int j = 0; j < nu_; ++j)
          x[static_cast<size_t>(j)] =
              std::cos(theta) * basis[static_cast<size_t>(n)][static_cast<size_t>(j)] +
              std::sin(theta) * (std::cos(dirang) * basis[0][static_cast<size_t>(j)] +
                                 (n_ > 1 ? std::sin(dirang) * basis[1][static_cast<size_t>(j)] : 0.0));
        return x;
      };
      auto x1 = cap_point(th);
      auto x2 = cap_point(th + 1e-4);
      std::vector<double> y1 = pullback ? funnel_embed(x1) : x1;
      std::vector<double> y2 = pullback ? funnel_embed(x2) : x2;
      auto z1 = ch.forward(y1), z2 = ch.forward(y2);
      const double dz = dist(z1, z2);
      const double dy = dist(y1, y2);
      if (dy > 1e-12 && dz > 1e-12) {
        lip = std::max(lip, dz / dy);
        lip = std::max(lip, dy / dz);
      }
    }
    ch.lipschitz = lip * 1.05;
    ch.kappa_prime =
        0.9 * scale * std::tan(std::min(kappa, 1.4) / 2.0) / (pullback ? ch.lipschitz : 1.0);
    return ch;
  }

  // algebraic funnel: arc-length x unwrapped-angle chart, away from the
  // apex and the narrow end
  require(n_ == 2, errc::no_uniform_chart, "algebraic funnel charts implemented for n = 2");
  const double s_xi = xi[2];
  const double rho_xi = algebraic_profile(std::max(s_xi, 0.0));
  require(rho_xi > 0.05 && s_xi < 40.0, errc::no_uniform_chart,
          "chart center too close to the apex or the funnel end");
  const double phi_xi = std::atan2(xi[1], xi[0]);
  const double arc_xi = meridian_distance(std::sqrt(std::max(s_xi, 0.0)));
  const Manifold* self = this;
  ch.forward = [self, phi_xi, arc_xi, rho_xi](std::span<const double> y) {
    const double s = std::max(y[2], 0.0);
    const double arc = self->meridian_distance(std::sqrt(s));
    double dphi = std::atan2(y[1], y[0]) - phi_xi;
    while (dphi > kPi) dphi -= 2.0 * kPi;
    while (dphi < -kPi) dphi += 2.0 * kPi;
    return std::vector<double>{arc - arc_xi, rho_xi * dphi};
  };
  ch.inverse = [self, phi_xi, arc_xi, rho_xi](std::span<const double> z) {
    const double arc = arc_xi + z[0];
    double lo = 0.0, hi = std::sqrt(199.0);
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (self->meridian_distance(mid) < arc)
        lo = mid;
      else
        hi = mid;
    }
    const double q = 0.5 * (lo + hi);
    const double s = q * q;
    const double rho = self->algebraic_profile(s);
    const double phi = phi_xi + z[1] / rho_xi;
    return std::vector<double>{rho * std::cos(phi), rho * std::sin(phi), s};
  };
  double lip = 1.0;
  Rng rng(778);
  for (int t = 0; t < 400; ++t) {
    std::vector<double> z{rng.uniform(-kappa, kappa), rng.uniform(-kappa, kappa)};
    auto y = ch.inverse(z);
    for (int axis = 0; axis < 2; ++axis) {
      std::vector<double> z2(z);
      z2[static_cast<size_t>(axis)] += 1e-5;
      auto y2 = ch.inverse(z2);
      const double r = dist(y, y2) / 1e-5;
      if (r > 1e-12) lip = std::max({lip, r, 1.0 / r});
    }
  }
  ch.lipschitz = lip * 1.05;
  ch.kappa_prime = 0.9 * kappa / ch.lipschitz;
  return ch;
}

// ---------------------------------------------------------------------------
// counterexample embeddings

std::vector<double> funnel_domain_diffeo(const Manifold& funnel, const Point& x, int m,
                                         double theta_max) {
  // cube -> ball radial map, then an equal-area style cap parametrization
  double linf = 0.0, l2 = 0.0;
  for (int i = 0; i < m; ++i) {
    linf = std::max(linf, std::abs(x[i]));
    l2 += x[i] * x[i];
  }
  l2 = std::sqrt(l2);
  const int nu = funnel.ambient_dim();
  std::vector<double> out(static_cast<size_t>(nu), 0.0);
  if (linf < 1e-15) {
    out[static_cast<size_t>(m)] = 1.0;  // the puncture direction
    return out;
  }
  const double theta =
      2.0 * std::asin(std::clamp(linf * std::sin(theta_max / 2.0), -1.0, 1.0));
  for (int i = 0; i < m; ++i) out[static_cast<size_t>(i)] = std::sin(theta) * (x[i] / l2);
  out[static_cast<size_t>(m)] = std::cos(theta);
  return out;
}

GridMap build_funnel_map(const Manifold& funnel, const Grid& grid, double theta_max) {
  require(funnel.kind() == ManifoldKind::funnel_sphere, errc::parameter_out_of_range,
          "funnel map needs a funnel sphere target");
  require(grid.m == funnel.intrinsic_dim(), errc::parameter_out_of_range,
          "grid dimension must match the intrinsic dimension");
  require(theta_max > 0.0 && theta_max <= 1.2, errc::parameter_out_of_range,
          "cap radius out of range");
  const int nu = funnel.ambient_dim();
  GridMap u = map_from_function(grid, nu, [&](const Point& x, std::span<double> out) {
    Point xs = x;
    for (int i = 0; i < grid.m; ++i) xs[i] /= grid.inradius;
    auto sp = funnel_domain_diffeo(funnel, xs, grid.m, theta_max);
    auto v = funnel.funnel_embed(sp);
    std::copy(v.begin(), v.end(), out.begin());
  });
  // removable singular node at the center: nearest-neighbor continuation
  if (grid.res % 2 == 1) {
    Index c{};
    for (int i = 0; i < grid.m; ++i) c[i] = grid.res / 2;
    Index nb = c;
    nb[0] += 1;
    auto dst = u.at(c);
    auto src = u.at(nb);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return u;
}

double algebraic_gamma_lower(int n, double beta) { return 1.0 / (n * (beta - 1.0)); }
double algebraic_gamma_upper(int n) { return (n - 1.0) / n; }

GridMap build_algebraic_bad_map(const Manifold& funnel, double gamma, const Grid& grid) {
  require(funnel.kind() == ManifoldKind::algebraic_funnel, errc::parameter_out_of_range,
          "needs an algebraic funnel target");
  const int n = funnel.intrinsic_dim();
  require(grid.m == n, errc::parameter_out_of_range, "grid dimension mismatch");
  const double beta = funnel.beta();
  require(gamma > algebraic_gamma_lower(n, beta) && gamma < algebraic_gamma_upper(n),
          errc::parameter_out_of_range, "gamma outside the admissible window");

  auto w_of = [gamma](double r) {
    if (r >= 2.0 / 3.0) return 0.0;
    const double raw = std::pow(-std::log(r), gamma);
    if (r <= 1.0 / 3.0) return raw;
    return raw * smoothstep5((2.0 / 3.0 - r) / (1.0 / 3.0));
  };
  const int nu = funnel.ambient_dim();
  GridMap u = map_from_function(grid, nu, [&](const Point& x, std::span<double> out) {
    double r = 0.0;
    for (int i = 0; i < n; ++i) r += x[i] * x[i];
    r = std::sqrt(r);
    std::fill(out.begin(), out.end(), 0.0);
    if (r < 1e-15) return;  // patched below
    const double w = w_of(r);
    const double f = std::sqrt(w) / std::pow(1.0 + w, beta - 0.5);
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = f * x[i] / r;
    out[static_cast<size_t>(n)] = w;
  });
  if (grid.res % 2 == 1) {
    Index c{};
    for (int i = 0; i < grid.m; ++i) c[i] = grid.res / 2;
    Index nb = c;
    nb[0] += 1;
    auto dst = u.at(c);
    auto src = u.at(nb);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return u;
}

}  // namespace sobotrim
