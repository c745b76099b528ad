#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sobotrim/grid.hpp"

namespace sobotrim {

enum class ManifoldKind { euclidean, sphere, funnel_sphere, algebraic_funnel };

// Bi-Lipschitz chart around a point, used by the trimming construction.
struct Chart {
  std::vector<double> center;  // xi on N
  double kappa = 0.0;          // geodesic radius covered on N
  double kappa_prime = 0.0;    // Euclidean ball of this radius fits in the image
  double lipschitz = 1.0;      // bound on |DPsi| and |DPsi^{-1}|
  std::function<std::vector<double>(std::span<const double>)> forward;
  std::function<std::vector<double>(std::span<const double>)> inverse;
};

// Embedded target manifold N^n in R^nu.  Immutable; geodesic machinery is
// built once and then serves read-only queries.
class Manifold {
 public:
  static Manifold euclidean(int n);
  static Manifold sphere(int n);
  // F(x) = lambda(x) x on S^n minus the north pole; lambda blows up like
  // (log 1/d)^alpha at the puncture.  alpha = 0 gives the compact control
  // case.  Requires alpha < (n-1)/n.
  static Manifold funnel_sphere(int n, double alpha);
  // revolution surface |y'|^2 = s/(1+s)^{2 beta - 1}, s = y_{n+1} >= 0;
  // requires beta > n/(n-1).
  static Manifold algebraic_funnel(int n, double beta);

  ManifoldKind kind() const { return kind_; }
  int intrinsic_dim() const { return n_; }
  int ambient_dim() const { return nu_; }
  bool compact() const;
  const std::vector<double>& basepoint() const { return basepoint_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  std::string name() const;

  double membership_residual(std::span<const double> y) const;
  bool contains(std::span<const double> y, double tol = 1e-8) const {
    return membership_residual(y) < tol;
  }

  // Nearest point projection; closed form where available, 1-D profile
  // search on the revolution targets.
  std::vector<double> project(std::span<const double> y) const;
  // Damped Newton on the squared-distance Lagrangian of the implicit
  // surface equation (sphere / algebraic funnel); cross-check route.
  std::vector<double> project_newton(std::span<const double> y) const;

  double geodesic_distance(std::span<const double> xi1, std::span<const double> xi2) const;
  // discrete geodesic polyline between two points (shortest-path graph
  // query refined by midpoint straightening)
  std::vector<std::vector<double>> geodesic_path(std::span<const double> xi1,
                                                 std::span<const double> xi2) const;
  // distance to the basepoint; meridian arc integral on revolution targets
  double distance_to_basepoint(std::span<const double> y) const;
  // unit normal of the embedded surface (codimension-one targets)
  std::vector<double> surface_normal(std::span<const double> xi) const;

  // conservative sampled width so that projection succeeds within distance
  // iota of the geodesic ball B(a; Rbar)
  double tubular_radius(double Rbar) const;

  Chart chart_at(std::span<const double> xi, double kappa) const;
  double chart_scale_cutoff() const { return chart_cutoff_; }

  // funnel geometry
  double funnel_lambda(double d) const;        // lambda as function of the angle to the puncture
  double funnel_lambda_deriv(double d) const;  // d lambda / d d
  // n-dimensional Hausdorff measure of the latitude band between two profile
  // parameters (angles for the funnel sphere, heights for the algebraic one)
  double latitude_band_area(double lo, double hi) const;
  // embeds a pullback sphere point into R^{n+1}
  std::vector<double> funnel_embed(std::span<const double> sphere_pt) const;
  double algebraic_profile(double s) const;  // |y'| as a function of the height

  // Dense sample cloud of the embedded surface with a neighbor graph
  // (n = 2 revolution targets); used by the pairwise geodesic oracle.
  struct Cloud {
    int nu = 3;
    std::vector<double> pts;
    std::vector<int> ring_offset;     // ring r occupies [offset[r], offset[r+1])
    std::vector<double> ring_param;   // latitude angle / height per ring
    std::vector<double> base_dist;    // Dijkstra distance from the basepoint node
    int64_t size() const { return static_cast<int64_t>(pts.size()) / nu; }
    std::span<const double> point(int64_t i) const {
      return {pts.data() + i * nu, static_cast<size_t>(nu)};
    }
  };
  const Cloud& cloud() const;

 private:
  Manifold() = default;
  ManifoldKind kind_ = ManifoldKind::sphere;
  int n_ = 2, nu_ = 3;
  double alpha_ = 0.0, beta_ = 0.0;
  double chart_cutoff_ = 4.0;
  std::vector<double> basepoint_;
  mutable std::shared_ptr<const Cloud> cloud_;
  mutable std::shared_ptr<std::vector<double>> meridian_;  // cumulative arc table

  double meridian_distance(double d) const;  // arc length from the basepoint latitude
  std::vector<std::vector<double>> section_path(double r1, double z1, double r2, double z2,
                                                double omega) const;
  friend struct ManifoldTestAccess;
};

// u = F o f where f is a fixed smooth diffeomorphism from the cube onto a
// closed cap neighborhood of the puncture, f(0) at the puncture.  Grid
// dimension must equal the intrinsic dimension.
GridMap build_funnel_map(const Manifold& funnel, const Grid& grid, double theta_max = 1.0);

// the algebraic bad map (w profile |log r|^gamma); validates the gamma window
GridMap build_algebraic_bad_map(const Manifold& funnel, double gamma, const Grid& grid);
double algebraic_gamma_lower(int n, double beta);
double algebraic_gamma_upper(int n);

// cube -> cap diffeomorphism used by the funnel map (exposed for oracles)
std::vector<double> funnel_domain_diffeo(const Manifold& funnel, const Point& x, int m,
                                         double theta_max);

}  // namespace sobotrim
