#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sobotrim/cubication.hpp"
#include "sobotrim/grid.hpp"
#include "sobotrim/manifold.hpp"
#include "sobotrim/smoothing.hpp"

namespace sobotrim {

// Measured constants of the two directed-distance claims plus the auxiliary
// energy-ratio constants; produced by the calibration pre-pass and consumed
// by the schedule.
struct EmpiricalConstants {
  double c_prime = 1.0;        // good-cube directed distance over rescaled energy
  double c_dprime = 1.0;       // transition-zone variant
  double opening_ratio = 1.0;  // per-face opening energy growth
  double homog_ratio = 1.0;    // homogenization energy growth
  double drift = 1.0;          // max/min spread across the battery resolutions
};

struct ScheduleStep {
  double R = 1.0;
  double Rbar = 1.0;
  double lambda = 1.0;
  double eta = 0.25;
  double iota = 0.5;
};

struct StageSchedule {
  std::vector<ScheduleStep> steps;
  double rho = 0.25, rho_lower = 0.125, t = -1.0, gamma = 0.5;
};

struct PipelineParams {
  double p = 2.0;
  double rho = 0.25;
  double rho_lower = 0.125;
  double t = -1.0;  // transition plateau factor; < 0 picks the default
  double gamma = 0.5;
  double R = 2.0;
  double lambda = 0.5;
  double eta = 0.25;
  int dist_stride = 2;
  EmpiricalConstants constants;
};

struct ClaimCheck {
  int id = 0;
  std::string label;
  double lhs = 0.0;
  double rhs = 0.0;  // already scaled by the empirical constant
  bool pass = true;
};

// One pipeline stage: every intermediate map plus its measured numbers.
struct TransformRecord {
  std::string stage;  // open | smooth | project | extend | juxtapose
  GridMap output;
  double energy = 0.0;
  double sup_norm = 0.0;
  double manifold_residual = 0.0;
  std::vector<std::pair<std::string, double>> measurements;
};

struct StageResult {
  std::vector<TransformRecord> records;
  std::vector<ClaimCheck> claims;
  GoodBadPartition partition;
  GridMap u_ext;   // reflected input on the enlarged cube
  GridMap u_jx;    // juxtaposed output on the enlarged grid
  double eta = 0.0;
  bool trimming_failed = false;
  std::string trimming_reason;
};

// Runs classification, opening, adaptive smoothing, projection, bounded
// extension and juxtaposition for one parameter set.  Claims are evaluated
// as numbered diagnostics.
StageResult run_stage(const GridMap& u, const Manifold& M, const PipelineParams& params);

// feasible schedule: R_i grows without bound, lambda_i <= iota(Rbar_i)/max(C',C''),
// eta_i grid-admissible and decreasing with eta_i / lambda_i -> 0
StageSchedule make_schedule(const GridMap& u, const Manifold& M, const PipelineParams& base,
                            int steps);

struct ConvergenceStep {
  ScheduleStep params;
  double l2_error = 0.0;       // L^p distance to the input on the unit cube
  double seminorm_error = 0.0; // L^p distance of the gradients
  double relative_w1p = 0.0;   // combined relative W^{1,p} error
  double sup_norm = 0.0;
  bool claims_pass = true;
};

struct ConvergenceReport {
  std::vector<ConvergenceStep> trend;
  bool converged = false;
  bool trimming_failed = false;
  double final_relative = 0.0;
};

ConvergenceReport converge(const GridMap& u, const Manifold& M, const PipelineParams& base,
                           const StageSchedule& schedule, double rel_tolerance);

// calibration pre-pass on a battery of smooth maps: measures C', C'' and the
// opening/homogenization ratios across two resolutions
EmpiricalConstants calibrate(const Manifold& M, double p, int battery, uint64_t seed,
                             const std::vector<int>& resolutions);

// the plain Section-3 route: mollify at a fixed scale and project back
GridMap mollify_project(const GridMap& u, const Manifold& M, double epsilon);

void export_claims_csv(const std::vector<std::vector<ClaimCheck>>& all,
                       const std::string& path);
void export_convergence_csv(const ConvergenceReport& rep, const std::string& path);

}  // namespace sobotrim
