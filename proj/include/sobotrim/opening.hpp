#pragma once

#include <cstdint>
#include <vector>

#include "sobotrim/cubication.hpp"
#include "sobotrim/grid.hpp"

namespace sobotrim {

// 1-D radial profile for the opening map: g == 0 on [0, zero_r], g(t) == t
// beyond id_r, monotone in between with g(t) <= t and g' <= gmax.  The slope
// shape rises once above 1 and then decays back to 1, so the composed map
// never pushes points outward.
struct ZetaProfile {
  double zero_r = 0.0;
  double id_r = 1.0;
  double peak = 1.0;   // maximum slope (the declared G bound)
  double tau0 = 0.25;  // fraction of the ramp spent rising to the peak

  double eval(double t) const;
  double deriv(double t) const;
};

ZetaProfile build_zeta(double zero_r, double id_r, double sharpness = 0.25);

struct FaceDiagnostic {
  int dim = 0;
  int64_t face = -1;
  std::vector<double> shift;
  double energy_before = 0.0;    // ||Du||_Lp over the face neighborhood
  double energy_after = 0.0;     // same for the opened map
  double fiber_variance_max = 0.0;
  double chosen_scan_energy = 0.0;   // argmin of the shift scan
  double average_scan_energy = 0.0;  // candidate average (Fubini bound check)
};

// The composed opening map Phi: layers are applied from the top dimension
// down to the vertices; each layer contracts normal coordinates of its
// active faces with a per-face averaging shift.
struct OpeningMap {
  int m = 2;
  int ell = 0;
  double rho = 0.25, eta = 0.25;

  struct Layer {
    int dim = 0;
    double gate_r = 0.0;   // tube radius (identity beyond it)
    double shift_r = 0.0;  // shift budget
    ZetaProfile prof;
    std::vector<uint8_t> active;             // per face of this dimension
    std::vector<std::vector<double>> shift;  // per face, m-dim components
  };
  std::vector<Layer> layers;  // index i = dimension, 0..ell
  const Cubication* cub = nullptr;

  // composed evaluation; apply_down_to allows evaluating partial composites
  Point apply(const Point& x, int apply_from_dim) const;
  Point apply(const Point& x) const { return apply(x, ell); }
  bool touched(const Point& x) const;
};

struct OpeningOptions {
  double rho = 0.25;
  int shift_candidates_per_axis = 3;  // per normal axis
  int select_stride = 4;              // subsampling for shift-energy scans
  double p = 2.0;
  bool diagnostics = true;
};

struct OpeningResult {
  OpeningMap map;
  GridMap opened;
  std::vector<FaceDiagnostic> diagnostics;
  double energy_before = 0.0;  // ||Du||_Lp on E^ell + Q_{2 rho eta}
  double energy_after = 0.0;   // ||D u_op||_Lp on the same region
};

// Opens u around the given ell-faces (and all their subfaces).  The opened
// map agrees with u bit-exactly outside the inflated subskeleton.
OpeningResult open_map(const GridMap& u, const Cubication& cub,
                       const std::vector<int64_t>& ell_faces, int ell,
                       const OpeningOptions& opt);

// Shift choice for one face in the single-face model situation: scans a
// uniform candidate grid in the normal cube and returns the energy
// minimizer; the chosen energy never exceeds twice the candidate average.
struct ShiftChoice {
  std::vector<double> shift;
  double chosen_energy = 0.0;
  double average_energy = 0.0;
};

ShiftChoice select_shift(const GridMap& u, const Cubication& cub, int dim, int64_t face,
                         const OpeningOptions& opt);

// flatness: for sampled cubes Q_r(x) inside the tube of an (ell-1)-face,
// compare r^{p-m} int |Du_op|^p against eta^{p-m} int over the whole tube
struct FlatnessSample {
  Point center{};
  double r = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool accepted = true;
};

struct FlatnessReport {
  std::vector<FlatnessSample> samples;
  double max_ratio = 0.0;
  int rejected = 0;
};

FlatnessReport flatness_bound_check(const GridMap& u_op, const Cubication& cub,
                                    int64_t tau_face, int tau_dim, double rho, double p,
                                    const std::vector<std::pair<Point, double>>& probes);

void export_opening_diagnostics(const std::vector<FaceDiagnostic>& diags,
                                const std::string& path);

}  // namespace sobotrim
