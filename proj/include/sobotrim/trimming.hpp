#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sobotrim/homogenization.hpp"
#include "sobotrim/manifold.hpp"

namespace sobotrim {

struct TrimResult {
  GridMap extension;
  double boundary_residual = 0.0;   // max node deviation against the input trace
  double energy_ratio = 0.0;        // ||Dv|| / (||Du||_Q + ||Du||_boundary)
  double continuity_modulus = 0.0;  // max adjacent-node jump of the extension
  double sup_norm = 0.0;
  double manifold_residual = 0.0;
};

// scale-invariant boundary energy (inradius * int_{boundary} |Du|^p)^{1/p}
double boundary_energy(const GridMap& u, double p);
// boundary trace seminorm itself, as a skeleton quantity
double boundary_seminorm(const GridMap& u, double p);

// Chart-based bounded extension for a map whose boundary trace has energy
// below alpha: push the trace through a chart, extend by a damped max-norm
// radial fill of the chart image, clamp into the guaranteed ball and pull
// back.  Boundary nodes are pinned to the input bit-exactly.
TrimResult trim_small_energy(const GridMap& u, const Manifold& M, double p, double alpha,
                             double kappa = 1.0);

struct TrimOutcome {
  bool ok = false;
  TrimResult result;
  std::string reason;
  int64_t failing_cube = -1;
  int obstruction_winding = 0;  // axis winding of the failing boundary loop
};

struct TrimGlobalOptions {
  double rho = 0.25;
  double mu0 = 0.25;       // initial subdivision inradius
  int max_refinements = 2; // mu halvings before giving up
  double alpha = 0.35;     // small-energy threshold
  double kappa = 1.3;
  double collar = 0.75;    // inner shrink factor of the zero-degree collar
};

// Full trimming construction: zero-degree collar, subdivision, opening
// around the codimension-one skeleton, per-cube small-energy trims and a
// mollify-project paste.
TrimOutcome trim_global(const GridMap& u, const Manifold& M, double p,
                        const TrimGlobalOptions& opt = {});

// discrete shortest geodesic between two endpoint values
GridMap geodesic_trim_1d(std::span<const double> left, std::span<const double> right,
                         const Manifold& M, int res = 65);

// --------------------------------------------------------------------------
// Brouwer degree

// Degree of a chart-valued map (nu == n) on the centered square of inradius
// r with respect to the probe point y.
int brouwer_degree_winding(const GridMap& u, double r, std::span<const double> probe);
int brouwer_degree_simplex(const GridMap& u, double r, std::span<const double> probe);
int brouwer_degree(const GridMap& u, double r, std::span<const double> probe);
// signed-simplex count over an arbitrary cell region (degree additivity)
int brouwer_degree_region(const GridMap& u, const Region& region,
                          std::span<const double> probe);

// Degree of a manifold-valued map against a probe point on N: composes with
// the orthogonal projection onto the tangent plane at the probe.
int manifold_degree(const GridMap& u, const Manifold& M, double r,
                    std::span<const double> probe_on_manifold);

// --------------------------------------------------------------------------
// obstruction certificates

struct CompetitorEntry {
  double delta = 0.0;  // squeeze-out radius of the competitor
  double gap = 0.0;    // int |Dw - Du|^n
  double sup = 0.0;    // sup norm of the competitor (finite: it is bounded)
};

struct ObstructionCertificate {
  std::vector<std::vector<double>> probes;  // points on N
  std::vector<double> radii;
  std::vector<std::vector<int>> degrees;    // [probe][radius]
  std::vector<double> ball_energies;        // int_{Q_r} |Du|^n per radius
  double hausdorff_measure = 0.0;           // H^n(K) of the probe band
  double area_constant = 0.0;               // Jac <= c |Du|^n constant
  double epsilon = 0.0;                     // empirical gap from the battery
  std::vector<CompetitorEntry> battery;
  bool contradiction = false;  // H^n(K) > c * int_{Q_rmin} |Du|^n
};

ObstructionCertificate obstruction_certificate(const GridMap& u, const Manifold& M,
                                               const std::vector<std::vector<double>>& probes,
                                               const std::vector<double>& radii,
                                               int battery_size = 10);

// builds the competitor u composed with the center squeeze-out at radius delta
GridMap squeeze_competitor(const GridMap& u, double delta);

struct ProductGap {
  int m = 0, n = 0;
  double epsilon_core = 0.0;
  double lifted_gap = 0.0;      // Fubini slice sum
  double expected_factor = 0.0; // 2^{m-n}
  int slices = 0;
};

// Fubini lift of the certificate gap to m > n via sampled slices of u o pi.
ProductGap product_obstruction(const GridMap& u, const ObstructionCertificate& cert, int m,
                               int slices_per_axis = 9);

void export_certificate(const ObstructionCertificate& cert, const std::string& path);

}  // namespace sobotrim
