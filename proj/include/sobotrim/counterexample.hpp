#pragma once

#include <string>
#include <vector>

#include "sobotrim/manifold.hpp"
#include "sobotrim/trimming.hpp"

namespace sobotrim {

struct Section4Options {
  std::vector<double> radii{0.25, 0.125, 0.0625};
  int battery = 10;
  int lift_m = 0;            // 0 or n keeps the core dimension
  double theta_max = 1.0;    // cap radius of the funnel domain map
  double gamma_w = 0.3;      // w-profile exponent of the algebraic map
  int energy_k_lo = 3, energy_k_hi = 7;  // annulus scales 2^{-k}
};

// End-to-end reproduction of the non-density evidence: finite critical
// energy, unbounded range, nonzero degrees on shrinking balls, and the
// competitor gap, optionally lifted by the product construction.
struct GapReport {
  std::string target;
  int n = 2, m = 2;
  double alpha = 0.0, beta = 0.0, gamma_w = 0.0;

  std::vector<double> annulus_deltas;
  std::vector<double> annulus_energies;  // cumulative W^{1,n} energies
  double last_increment_ratio = 0.0;     // final increment over the total
  bool energy_cauchy = false;

  std::vector<double> sup_deltas;
  std::vector<double> sup_values;
  double fitted_exponent = 0.0;
  double expected_exponent = 0.0;
  bool unbounded = false;

  ObstructionCertificate certificate;
  bool certificate_ok = false;

  ProductGap lift;
  bool lift_ok = true;

  std::string failure_stage;  // empty when everything passed
  bool passed = false;
};

GapReport reproduce_section4(const Manifold& M, const Grid& grid,
                             const Section4Options& opt = {});

void export_gap_report(const GapReport& rep, const std::string& path);

}  // namespace sobotrim
