#pragma once

#include <vector>

#include "sobotrim/cubication.hpp"
#include "sobotrim/grid.hpp"

namespace sobotrim {

// Compactly supported radial bump on the unit ball, unit mass.
struct Mollifier {
  int dim = 2;
  double norm_const = 1.0;

  static Mollifier standard(int m);
  // density at a point of [-1,1]^m (zero outside the ball)
  double eval(std::span<const double> y) const;
};

// Variable convolution scale: t*eta on the good set, vanishing across a
// collar of width rho_lower*eta into the bad set, slope strictly below one.
struct ScaleField {
  GridMap psi;  // scalar field on the host grid
  double t = 0.0, eta = 0.0, rho_lower = 0.0, rho = 0.0;
  double max_slope = 0.0;  // measured discrete Lipschitz constant

  double plateau() const { return t * eta; }
  double value(int64_t node) const { return psi.values[static_cast<size_t>(node)]; }
};

struct TransitionParams {
  double t = -1.0;  // < 0 picks the default 0.3 * min(rho_lower, rho - rho_lower)
  double rho_lower = 0.125;
  double rho = 0.25;
};

// Builds the transition field for a partition; throws TransitionInfeasible
// when the requested plateau cannot keep the slope below one.
ScaleField build_transition(const Cubication& cub, const GoodBadPartition& part,
                            const TransitionParams& params);

// constant-scale field (used by the plain mollify-and-project route)
ScaleField constant_scale(const Grid& g, double value);

struct ConvolveOptions {
  int quad_per_axis = 9;   // tensor quadrature nodes per axis
  double min_cells = 2.0;  // kernel radius below this many cells falls back
                           // to the identity (recorded, not an error)
};

struct ConvolveStats {
  int64_t identity_nodes = 0;  // psi == 0 pass-through
  int64_t subgrid_nodes = 0;   // sub-grid kernel fallback
};

// phi_psi * u on the nodes of omega; other nodes keep u.  Nodes with
// psi == 0 copy u bit-exactly.
GridMap adaptive_convolve(const GridMap& u, const ScaleField& psi, const Mollifier& phi,
                          const Region& omega, const ConvolveOptions& opt = {},
                          ConvolveStats* stats = nullptr);

// sup over the kernel's own quadrature directions of ||tau_{psi v}(u) - u||_p;
// dominates the convolution error by convexity
double translation_modulus(const GridMap& u, const ScaleField& psi, double p,
                           const Region& omega, const ConvolveOptions& opt = {});

// same modulus for the gradient field
double gradient_translation_modulus(const GridMap& u, const ScaleField& psi, double p,
                                    const Region& omega, const ConvolveOptions& opt = {});

}  // namespace sobotrim
