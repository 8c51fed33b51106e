#pragma once

#include <cstdint>

#include "fadekey/devices.hpp"
#include "fadekey/montecarlo.hpp"

// Finite-key analysis for the three-intensity decoy protocol: concentration
// intervals on the observed tallies, single-photon bounds in both bases, the
// phase-error estimate, and the extractable key length.

namespace fadekey {

struct SecurityBudget {
  double eps_sec = 1e-5;  // secrecy failure probability
  double eps_cor = 1e-15; // correctness failure probability
  double f_ec = 1.16;     // error-correction inefficiency

  void validate() const;
};

// Observed (or predicted) counts as reals, so the same estimator serves the
// sampled tallies and the closed-form expectations.
struct TallyReal {
  double pulses = 0.0;
  double clicks[2][3] = {{0, 0, 0}, {0, 0, 0}};
  double errors[2][3] = {{0, 0, 0}, {0, 0, 0}};

  static TallyReal from(const TallyTable& t);

  double clicks_in(Basis b) const {
    const auto& row = clicks[static_cast<int>(b)];
    return row[0] + row[1] + row[2];
  }
  double errors_in(Basis b) const {
    const auto& row = errors[static_cast<int>(b)];
    return row[0] + row[1] + row[2];
  }
};

struct DecoyEstimates {
  double s_x0 = 0.0;  // vacuum-event lower bound, key basis
  double s_x1 = 0.0;  // single-photon lower bound, key basis
  double s_z1 = 0.0;  // single-photon lower bound, test basis
  double v_z1 = 0.0;  // single-photon error upper bound, test basis
  double phi_x = 0.5; // phase-error-rate upper bound
  bool failed = false; // test-basis single-photon bound came out non-positive
};

// Statistical-fluctuation radius used for every raw count: Hoeffding with
// failure weight eps/21.
double fluctuation_delta(double count, double eps);

// Decoy-state bounds from the observed tallies.  apply_fluctuations = false
// evaluates the same algebra at the expectation values (the delta -> 0
// limit); the phase-error correction term stays either way.
DecoyEstimates decoy_bounds(const TallyReal& tallies, const SourceParams& source,
                            const SecurityBudget& budget,
                            bool apply_fluctuations = true);

enum class KeyStatus {
  ok,
  no_sifted_data,    // key basis saw no clicks
  estimation_failed, // decoy system gave no positive single-photon bound
};

struct KeyLength {
  std::uint64_t bits = 0;
  KeyStatus status = KeyStatus::ok;
};

// Extractable secret length: floor of
//   s_x0 + s_x1 - s_x1 h(phi_x) - n_X f_ec h(e_obs)
//   - 6 log2(21/eps_sec) - log2(2/eps_cor),
// clamped at zero.
KeyLength key_length(const TallyReal& tallies, const DecoyEstimates& est,
                     const SecurityBudget& budget);

// l / N for N > 0 total pulses.
double finite_key_rate(const KeyLength& l, double n_pulses);

} // namespace fadekey
