#include "fadekey/sampling.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fadekey/kernels/api.hpp"
#include "fadekey/math.hpp"

namespace fadekey {

namespace {

using kernels::exp1;
using kernels::log1;
using kernels::PhiloxStream;

// Exact log(n!) by accumulation for the table range.
const std::vector<double>& lfact_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(1024);
    t[0] = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) {
      t[i] = t[i - 1] + log1(static_cast<double>(i));
    }
    return t;
  }();
  return table;
}

constexpr double half_log_two_pi = 0.91893853320467274178032973640562;

} // namespace

double log_factorial(std::uint64_t n) {
  const auto& table = lfact_table();
  if (n < table.size()) return table[n];
  const double x = static_cast<double>(n);
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Stirling series; next omitted term < 1e-19 for n >= 1024.
  return (x + 0.5) * log1(x) - x + half_log_two_pi +
         inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0)));
}

bool bernoulli(PhiloxStream& s, double p) { return s.next_u01() < p; }

namespace {

std::uint64_t binomial_inversion(PhiloxStream& s, std::uint64_t n, double p) {
  // p <= 0.5 and n*p < ~30 here, so (1-p)^n = exp(n log(1-p)) cannot
  // underflow and the walk terminates quickly.
  const double odds = p / (1.0 - p);
  const double f0 = exp1(static_cast<double>(n) * log1(1.0 - p));
  double u = s.next_u01();
  double f = f0;
  std::uint64_t k = 0;
  while (u > f && k < n) {
    u -= f;
    ++k;
    f *= (static_cast<double>(n - k + 1) / static_cast<double>(k)) * odds;
    if (f <= 0.0) break; // exhausted tail mass (u within rounding of 1)
  }
  return k;
}

std::uint64_t binomial_btrs(PhiloxStream& s, std::uint64_t n, double p) {
  // Hoermann's transformed rejection with squeeze; valid for p <= 0.5 and
  // n*p >= 10.
  const double nd = static_cast<double>(n);
  const double q = 1.0 - p;
  const double spq = std::sqrt(nd * p * q);
  const double b = 1.15 + 2.53 * spq;
  const double a = -0.0873 + 0.0248 * b + 0.01 * p;
  const double c = nd * p + 0.5;
  const double v_r = 0.92 - 4.2 / b;
  const double alpha = (2.83 + 5.1 / b) * spq;
  const double lpq = log1(p / q);
  const double m = std::floor((nd + 1.0) * p);
  const double h = log_factorial(static_cast<unsigned long long>(m)) +
                   log_factorial(static_cast<unsigned long long>(nd - m));

  for (;;) {
    const double u = s.next_u01() - 0.5;
    const double v = s.next_u01();
    const double us = 0.5 - std::fabs(u);
    const double kd = std::floor((2.0 * a / us + b) * u + c);
    if (kd < 0.0 || kd > nd) continue;
    if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kd);
    const double v2 = log1(v * alpha / (a / (us * us) + b));
    const double bound =
        h - log_factorial(static_cast<unsigned long long>(kd)) -
        log_factorial(static_cast<unsigned long long>(nd - kd)) +
        (kd - m) * lpq;
    if (v2 <= bound) return static_cast<std::uint64_t>(kd);
  }
}

} // namespace

std::uint64_t binomial(PhiloxStream& s, std::uint64_t n, double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::domain_error("binomial: p outside [0,1]");
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  if (p > 0.5) return n - binomial(s, n, 1.0 - p);
  const double np = static_cast<double>(n) * p;
  if (np < 30.0) return binomial_inversion(s, n, p);
  return binomial_btrs(s, n, p);
}

namespace {

std::uint64_t poisson_inversion(PhiloxStream& s, double mu) {
  double u = s.next_u01();
  double f = exp1(-mu);
  std::uint64_t k = 0;
  while (u > f) {
    u -= f;
    ++k;
    f *= mu / static_cast<double>(k);
    if (f <= 0.0) break;
  }
  return k;
}

std::uint64_t poisson_ptrs(PhiloxStream& s, double mu) {
  // Hoermann's transformed rejection for the Poisson; valid for mu >= 10.
  const double b = 0.931 + 2.53 * std::sqrt(mu);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mu = log1(mu);

  for (;;) {
    const double u = s.next_u01() - 0.5;
    const double v = s.next_u01();
    const double us = 0.5 - std::fabs(u);
    const double kd = std::floor((2.0 * a / us + b) * u + mu + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kd);
    if (kd < 0.0 || (us < 0.013 && v > us)) continue;
    const double lhs = log1(v * inv_alpha / (a / (us * us) + b));
    const double rhs = -mu + kd * log_mu -
                       log_factorial(static_cast<unsigned long long>(kd));
    if (lhs <= rhs) return static_cast<std::uint64_t>(kd);
  }
}

} // namespace

std::uint64_t poisson(PhiloxStream& s, double mu) {
  if (!(mu >= 0.0)) throw std::domain_error("poisson: mean must be >= 0");
  if (mu == 0.0) return 0;
  if (mu < 10.0) return poisson_inversion(s, mu);
  return poisson_ptrs(s, mu);
}

void multinomial(PhiloxStream& s, std::uint64_t n, const double* p, int k,
                 std::uint64_t* out) {
  std::uint64_t remaining = n;
  double mass_left = 1.0;
  for (int i = 0; i < k - 1; ++i) {
    if (remaining == 0 || mass_left <= 0.0) {
      out[i] = 0;
      continue;
    }
    double cond = p[i] / mass_left;
    if (cond > 1.0) cond = 1.0;
    if (cond < 0.0) cond = 0.0;
    out[i] = binomial(s, remaining, cond);
    remaining -= out[i];
    mass_left -= p[i];
  }
  out[k - 1] = remaining;
}

} // namespace fadekey
