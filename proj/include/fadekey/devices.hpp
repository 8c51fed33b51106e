#pragma once

#include <array>
#include <cstdint>
#include <string>

// Source and receiver models: three-intensity decoy source, four-detector
// polarization receiver, and the closed-form per-pulse gain/error model the
// binned simulation and the analytic rate predictions both evaluate.

namespace fadekey {

enum class Basis : int { x = 0, z = 1 };

// Detector indices: X basis reads H/V, Z basis reads D/A.
enum class DetectorId : int { h = 0, v = 1, d = 2, a = 3 };

constexpr Basis basis_of(DetectorId id) {
  return (id == DetectorId::h || id == DetectorId::v) ? Basis::x : Basis::z;
}
constexpr int bit_of(DetectorId id) {
  return (id == DetectorId::v || id == DetectorId::a) ? 1 : 0;
}

struct SourceParams {
  double q_x;                  // probability of choosing the X basis
  std::array<double, 3> mu;    // intensities, mu[0] > mu[1] > mu[2] = 0
  std::array<double, 3> p_mu;  // intensity probabilities, sum to 1
  double rep_rate;             // pulses per second
  // Receiver basis choice: false = biased to match Alice's q_x (the default,
  // consistent with the parameter optimization), true = passive 50:50
  // splitter emulation.
  bool passive = false;

  // Bob's probability of measuring in the given basis.
  double bob_basis_prob(Basis b) const {
    if (passive) return 0.5;
    return b == Basis::x ? q_x : 1.0 - q_x;
  }

  void validate() const; // throws std::invalid_argument with the failing field
};

struct DetectorParams {
  double y0;      // dark/background click probability per gate
  double b;       // stray-light coefficient: P_bg(eta) = y0 + b*eta
  double eta_det; // detector efficiency

  double background(double eta) const { return y0 + b * eta; }
};

struct DetectorSuite {
  std::array<DetectorParams, 4> det; // indexed by DetectorId
  double eta_bob;      // receiver optics transmission
  double e_mis;        // polarization misalignment error probability
  double dead_time;    // seconds
  double timing_jitter; // seconds

  void validate() const;

  const DetectorParams& at(DetectorId id) const {
    return det[static_cast<int>(id)];
  }
  // Arithmetic mean of the basis pair's detector efficiencies.
  double pair_eta_det(Basis b) const;
  // Aggregate background click probability of the basis pair, clamped to 1.
  double pair_background(Basis b, double eta) const;

  // Named presets; throws std::invalid_argument for unknown names.
  static DetectorSuite builtin(const std::string& name);
};

// Intrinsic error of a background click (it lands on either detector of the
// pair with equal probability).
inline constexpr double e0 = 0.5;

// eta * eta_bob * mean pair detector efficiency.
double system_transmittance(const DetectorSuite& suite, double eta, Basis basis);

// Q_k = 1 - (1 - Y_bg) * exp(-mu_k * eta_sys): probability that a pulse of
// intensity index k (0-based) produces a click in the matching basis.
double expected_gain(const SourceParams& source, const DetectorSuite& suite,
                     double eta, int k, Basis basis = Basis::x);

// E_k * Q_k = e0*Y_bg + e_mis*(1 - exp(-mu_k * eta_sys)): joint probability
// of a click that is also an error.
double expected_error_rate(const SourceParams& source, const DetectorSuite& suite,
                           double eta, int k, Basis basis = Basis::x);

// Precomputed closed-form gain/error evaluator.  The binned sampler and the
// analytic predictions share this object so the two paths round identically.
class GainModel {
 public:
  GainModel(const SourceParams& source, const DetectorSuite& suite);

  // -mu_k * eta_bob * pair_eta_det: exp(coef*eta) is the no-click factor.
  double exp_arg(Basis b, int k, double eta) const {
    return coef_[static_cast<int>(b)][k] * eta;
  }
  double background(Basis b, double eta) const {
    const int i = static_cast<int>(b);
    const double sum = y0_sum_[i] + b_sum_[i] * eta;
    return sum > 1.0 ? 1.0 : sum;
  }
  // Inputs: the pair background and e = exp(-mu_k*eta_sys).
  double gain_from_exp(double ybg, double e) const {
    return 1.0 - (1.0 - ybg) * e;
  }
  double error_from_exp(double ybg, double e) const {
    return e0 * ybg + e_mis_ * (1.0 - e);
  }

  double gain(Basis b, int k, double eta) const;
  double error_rate(Basis b, int k, double eta) const;

 private:
  double coef_[2][3];
  double y0_sum_[2];
  double b_sum_[2];
  double e_mis_;
};

// Per-photon-number yield and error articulation used by the photon-resolved
// oracle: y(n) = 1 - (1-Y_bg)(1-eta_sys)^n, and the error part mirrors the
// pulse-level closed form with exp replaced by the n-photon no-click factor.
double photon_yield(const DetectorSuite& suite, double eta, int n, Basis basis);
double photon_error_yield(const DetectorSuite& suite, double eta, int n,
                          Basis basis);

} // namespace fadekey
