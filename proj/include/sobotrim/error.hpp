#pragma once

#include <stdexcept>
#include <string>

namespace sobotrim {

// Failure codes shared by the whole library.  The C API maps them onto the
// coarse st_status values; inside the C++ core they travel as exceptions.
enum class errc {
  ok = 0,
  padding_misaligned,
  domain_exceeded,
  eta_misaligned,
  outside_tubular_neighborhood,
  not_on_manifold,
  no_uniform_chart,
  parameter_out_of_range,
  input_not_manifold_valued,
  transition_infeasible,
  trace_incompatible,
  homogenization_illposed,
  not_small_energy,
  trimming_failed,
  probe_unstable,
  certificate_failed,
  sample_rejected,
  claim_violation,
  config_invalid,
  io_error,
  numeric_failure,
};

const char* errc_name(errc c);

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& msg) {
  throw Error(code, msg);
}

inline void require(bool cond, errc code, const std::string& msg) {
  if (!cond) raise(code, msg);
}

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::ok: return "Ok";
    case errc::padding_misaligned: return "PaddingMisaligned";
    case errc::domain_exceeded: return "DomainExceeded";
    case errc::eta_misaligned: return "EtaMisaligned";
    case errc::outside_tubular_neighborhood: return "OutsideTubularNeighborhood";
    case errc::not_on_manifold: return "NotOnManifold";
    case errc::no_uniform_chart: return "NoUniformChart";
    case errc::parameter_out_of_range: return "ParameterOutOfRange";
    case errc::input_not_manifold_valued: return "InputNotManifoldValued";
    case errc::transition_infeasible: return "TransitionInfeasible";
    case errc::trace_incompatible: return "TraceIncompatible";
    case errc::homogenization_illposed: return "HomogenizationIllposed";
    case errc::not_small_energy: return "NotSmallEnergy";
    case errc::trimming_failed: return "TrimmingFailed";
    case errc::probe_unstable: return "ProbeUnstable";
    case errc::certificate_failed: return "CertificateFailed";
    case errc::sample_rejected: return "SampleRejected";
    case errc::claim_violation: return "ClaimViolation";
    case errc::config_invalid: return "ConfigInvalid";
    case errc::io_error: return "IoError";
    case errc::numeric_failure: return "NumericFailure";
  }
  return "Unknown";
}

}  // namespace sobotrim
