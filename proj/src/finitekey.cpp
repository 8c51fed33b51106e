#include "fadekey/finitekey.hpp"

#include <cmath>
#include <stdexcept>

#include "fadekey/math.hpp"

namespace fadekey {

void SecurityBudget::validate() const {
  if (!(eps_sec > 0.0) || !(eps_sec < 1.0)) {
    throw std::invalid_argument("eps_sec must be in (0, 1)");
  }
  if (!(eps_cor > 0.0) || !(eps_cor < 1.0)) {
    throw std::invalid_argument("eps_cor must be in (0, 1)");
  }
  if (!(f_ec >= 1.0)) {
    throw std::invalid_argument("error-correction inefficiency f_ec must be >= 1");
  }
}

TallyReal TallyReal::from(const TallyTable& t) {
  TallyReal r;
  r.pulses = static_cast<double>(t.pulses);
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 3; ++k) {
      r.clicks[b][k] = static_cast<double>(t.clicks[b][k]);
      r.errors[b][k] = static_cast<double>(t.errors[b][k]);
    }
  }
  return r;
}

double fluctuation_delta(double count, double eps) {
  if (count <= 0.0) return 0.0;
  return std::sqrt(0.5 * count * std::log(21.0 / eps));
}

namespace {

// Correction added to the single-photon error ratio when promoting the
// test-basis estimate to the key basis: a, b, c, d = (failure weight,
// observed ratio, test-basis events, key-basis events).
double phase_error_correction(double a, double b, double c, double d) {
  if (c <= 0.0 || d <= 0.0) return 0.5;
  if (b <= 0.0) return 0.0;
  if (b >= 1.0) b = 1.0 - 1e-12;
  const double cd = c * d;
  const double sum = c + d;
  const double vb = (1.0 - b) * b;
  const double arg = sum / (cd * vb) * (21.0 / a) * (21.0 / a);
  if (!(arg > 1.0)) return 0.0;
  const double val = sum * vb / (cd * ln2) * std::log2(arg);
  return val > 0.0 ? std::sqrt(val) : 0.0;
}

} // namespace

DecoyEstimates decoy_bounds(const TallyReal& tallies, const SourceParams& source,
                            const SecurityBudget& budget,
                            bool apply_fluctuations) {
  source.validate();
  budget.validate();

  const double mu1 = source.mu[0];
  const double mu2 = source.mu[1];
  const double mu3 = source.mu[2]; // = 0 by validation; kept symbolic below

  // Poissonian photon-number weights across the intensity mix.
  double tau0 = 0.0;
  double tau1 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double w = source.p_mu[k] * std::exp(-source.mu[k]);
    tau0 += w;
    tau1 += w * source.mu[k];
  }

  const double nx = tallies.clicks_in(Basis::x);
  const double nz = tallies.clicks_in(Basis::z);
  const double mz = tallies.errors_in(Basis::z);
  const double dn_x = apply_fluctuations ? fluctuation_delta(nx, budget.eps_sec) : 0.0;
  const double dn_z = apply_fluctuations ? fluctuation_delta(nz, budget.eps_sec) : 0.0;
  const double dm_z = apply_fluctuations ? fluctuation_delta(mz, budget.eps_sec) : 0.0;

  // Scaled counts with the concentration radius folded in:
  // n+/-_k = (e^mu_k / p_k)(n_k +/- delta).
  auto scaled = [&](const double row[3], double delta, int k, double sign) {
    return std::exp(source.mu[k]) / source.p_mu[k] * (row[k] + sign * delta);
  };

  DecoyEstimates est;

  // Vacuum events in the key basis from the vacuum intensity.
  const double denom_23 = mu2 - mu3;
  const double sx0 =
      tau0 * (mu2 * scaled(tallies.clicks[0], dn_x, 2, -1.0) -
              mu3 * scaled(tallies.clicks[0], dn_x, 1, +1.0)) /
      denom_23;
  est.s_x0 = sx0 > 0.0 ? sx0 : 0.0;

  // Single-photon events, same algebra per basis.
  auto single_photon = [&](const double row[3], double delta, double s0) {
    const double num =
        scaled(row, delta, 1, -1.0) - scaled(row, delta, 2, +1.0) -
        (mu2 * mu2 - mu3 * mu3) / (mu1 * mu1) *
            (scaled(row, delta, 0, +1.0) - s0 / tau0);
    const double den = mu1 * denom_23 - mu2 * mu2 + mu3 * mu3;
    return tau1 * mu1 * num / den;
  };

  const double sx1_raw = single_photon(tallies.clicks[0], dn_x, est.s_x0);
  double sx1 = sx1_raw > 0.0 ? sx1_raw : 0.0;
  const double sx_cap = nx - est.s_x0;
  if (sx1 > sx_cap) sx1 = sx_cap > 0.0 ? sx_cap : 0.0;
  est.s_x1 = sx1;

  const double sz0_raw =
      tau0 * (mu2 * scaled(tallies.clicks[1], dn_z, 2, -1.0) -
              mu3 * scaled(tallies.clicks[1], dn_z, 1, +1.0)) /
      denom_23;
  const double sz0 = sz0_raw > 0.0 ? sz0_raw : 0.0;
  const double sz1 = single_photon(tallies.clicks[1], dn_z, sz0);
  est.s_z1 = sz1;
  if (!(sz1 > 0.0)) {
    est.failed = true;
    est.phi_x = 0.5;
    est.v_z1 = 0.0;
    return est;
  }

  // Single-photon errors in the test basis (upper bound).
  double vz1 = tau1 *
               (scaled(tallies.errors[1], dm_z, 1, +1.0) -
                scaled(tallies.errors[1], dm_z, 2, -1.0)) /
               denom_23;
  if (vz1 < 0.0) vz1 = 0.0;
  if (vz1 > sz1) vz1 = sz1;
  est.v_z1 = vz1;

  const double ratio = vz1 / sz1;
  double phi = ratio + phase_error_correction(budget.eps_sec, ratio, sz1, est.s_x1);
  if (phi < 0.0) phi = 0.0;
  if (phi > 0.5) phi = 0.5;
  est.phi_x = phi;
  return est;
}

KeyLength key_length(const TallyReal& tallies, const DecoyEstimates& est,
                     const SecurityBudget& budget) {
  budget.validate();
  KeyLength out;
  const double nx = tallies.clicks_in(Basis::x);
  if (!(nx > 0.0)) {
    out.status = KeyStatus::no_sifted_data;
    return out;
  }
  if (est.failed) {
    out.status = KeyStatus::estimation_failed;
    return out;
  }
  const double e_obs = tallies.errors_in(Basis::x) / nx;
  const double raw = est.s_x0 + est.s_x1 -
                     est.s_x1 * binary_entropy(est.phi_x) -
                     nx * budget.f_ec * binary_entropy(e_obs) -
                     6.0 * std::log2(21.0 / budget.eps_sec) -
                     std::log2(2.0 / budget.eps_cor);
  if (raw > 0.0) {
    out.bits = static_cast<std::uint64_t>(std::floor(raw));
  }
  return out;
}

double finite_key_rate(const KeyLength& l, double n_pulses) {
  if (!(n_pulses > 0.0)) {
    throw std::invalid_argument("finite_key_rate needs a positive pulse count");
  }
  return static_cast<double>(l.bits) / n_pulses;
}

} // namespace fadekey
