#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

// Shared kernel math, written once as templates over a small vector-ops
// concept and instantiated by both the scalar and the AVX2 backend.  Every
// operation used here is either exact (bit manipulation, blends) or correctly
// rounded per IEEE-754 (+,-,*,/,sqrt,fma), so the two instantiations produce
// bitwise-identical results.  The project builds with -ffp-contract=off so
// the compiler cannot fuse or split anything behind our back; all fusing is
// explicit via Ops::fma.
//
// Accuracy targets (validated in test_kernels):
//   v_exp  : < 4e-16 relative over [-708.39, 709.78]; returns 0 below the
//            smallest-normal cutoff (subnormal outputs are not produced).
//   v_log  : < 1e-15 relative for normal positive inputs.
//   v_ppnd : normal quantile (AS241 PPND16 rational approximations),
//            |Phi(v_ppnd(u)) - u| < 1e-12 over (0,1).

namespace fadekey::kernels::detail {

// ------------------------------------------------------------ coefficients

inline constexpr double exp_log2e = 1.4426950408889634073599;
inline constexpr double exp_c1 = 6.93145751953125e-1;          // ln2 high part
inline constexpr double exp_c2 = 1.42860682030941723212e-6;    // ln2 low part
inline constexpr double exp_min_arg = -708.396418532264106224; // below: 0
inline constexpr double exp_max_arg = 709.782712893383996843;  // above: +inf

inline constexpr double exp_p[3] = {
    1.26177193074810590878e-4,
    3.02994407707441961300e-2,
    9.99999999999999999910e-1,
};
inline constexpr double exp_q[4] = {
    3.00198505138664455042e-6,
    2.52448340349684104192e-3,
    2.27265548208155028766e-1,
    2.00000000000000000005e0,
};

inline constexpr double log_sqrth = 0.70710678118654752440;
inline constexpr double log_ln2_lo = 2.121944400546905827679e-4;
inline constexpr double log_ln2_hi = 0.693359375;

inline constexpr double log_p[6] = {
    1.01875663804580931796e-4,
    4.97494994976747001425e-1,
    4.70579119878881725854e0,
    1.44989225341610930846e1,
    1.79368678507819816313e1,
    7.70838733755885391666e0,
};
inline constexpr double log_q[5] = { // monic
    1.12873587189167450590e1,
    4.52279145837532221105e1,
    8.29875266912776603211e1,
    7.11544750618563894466e1,
    2.31251620126765340583e1,
};

// AS241 PPND16 coefficient sets, highest order first.
inline constexpr double ppnd_split1 = 0.425;
inline constexpr double ppnd_const1 = 0.180625; // split1^2
inline constexpr double ppnd_split2 = 5.0;

inline constexpr double ppnd_a[8] = {
    2.5090809287301226727e+3, 3.3430575583588128105e+4,
    6.7265770927008700853e+4, 4.5921953931549871457e+4,
    1.3731693765509461125e+4, 1.9715909503065514427e+3,
    1.3314166789178437745e+2, 3.3871328727963666080e0,
};
inline constexpr double ppnd_b[8] = {
    5.2264952788528545610e+3, 2.8729085735721942674e+4,
    3.9307895800092710610e+4, 2.1213794301586595867e+4,
    5.3941960214247511077e+3, 6.8718700749205790830e+2,
    4.2313330701600911252e+1, 1.0,
};
inline constexpr double ppnd_c[8] = {
    7.74545014278341407640e-4, 2.27238449892691845833e-2,
    2.41780725177450611770e-1, 1.27045825245236838258e0,
    3.64784832476320460504e0,  5.76949722146069140550e0,
    4.63033784615654529590e0,  1.42343711074968357734e0,
};
inline constexpr double ppnd_d[8] = {
    1.05075007164441684324e-9, 5.47593808499534494600e-4,
    1.51986665636164571966e-2, 1.48103976427480074590e-1,
    6.89767334985100004550e-1, 1.67638483018380384940e0,
    2.05319162663775882187e0,  1.0,
};
inline constexpr double ppnd_e[8] = {
    2.01033439929228813265e-7, 2.71155556874348757815e-5,
    1.24266094738807843860e-3, 2.65321895265761230930e-2,
    2.96560571828504891230e-1, 1.78482653991729133580e0,
    5.46378491116411436990e0,  6.65790464350110377720e0,
};
inline constexpr double ppnd_f[8] = {
    2.04426310338993978564e-15, 1.42151175831644588870e-7,
    1.84631831751005468180e-5,  7.86869131145613259100e-4,
    1.48753612908506148525e-2,  1.36929880922735805310e-1,
    5.99832206555887937690e-1,  1.0,
};

// ---------------------------------------------------------------- scalars

// The scalar ops: the reference semantics every other backend must match.
struct ScalarOps {
  using V = double;
  using M = bool;

  static V set1(double c) { return c; }
  static V add(V a, V b) { return a + b; }
  static V sub(V a, V b) { return a - b; }
  static V mul(V a, V b) { return a * b; }
  static V div(V a, V b) { return a / b; }
  static V fma(V a, V b, V c) { return std::fma(a, b, c); }
  static V sqrt(V a) { return std::sqrt(a); }
  static V floor(V a) { return std::floor(a); }
  static V abs(V a) { return std::fabs(a); }
  // Tie/NaN semantics chosen to match vminpd/vmaxpd: second operand on ties.
  static V min(V a, V b) { return a < b ? a : b; }
  static V max(V a, V b) { return a > b ? a : b; }
  static M lt(V a, V b) { return a < b; }
  static M le(V a, V b) { return a <= b; }
  static M gt(V a, V b) { return a > b; }
  static V blend(M m, V a, V b) { return m ? a : b; }

  // 2^n for integral n in [-1022, 1023]; exact.
  static V pow2i(V q) {
    const auto n = static_cast<std::int64_t>(q);
    const std::uint64_t bits = static_cast<std::uint64_t>(n + 1023) << 52;
    V d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
  }

  // Mantissa in [0.5, 1) and unbiased-exponent+1 (so x = m * 2^e) for normal
  // positive x; exact bit surgery.
  static V frexp_mantissa(V x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    bits = (bits & 0x000FFFFFFFFFFFFFull) | 0x3FE0000000000000ull;
    V m;
    std::memcpy(&m, &bits, sizeof(m));
    return m;
  }
  static V frexp_exponent(V x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    const auto raw = static_cast<std::int64_t>((bits >> 52) & 0x7FFull);
    return static_cast<double>(raw - 1022);
  }
};

// ---------------------------------------------------------------- kernels

template <class O>
inline typename O::V polevl(typename O::V x, const double* c, int degree) {
  auto r = O::set1(c[0]);
  for (int i = 1; i <= degree; ++i) r = O::fma(r, x, O::set1(c[i]));
  return r;
}

// Monic polynomial: leading coefficient 1 is implicit.
template <class O>
inline typename O::V p1evl(typename O::V x, const double* c, int degree) {
  auto r = O::add(x, O::set1(c[0]));
  for (int i = 1; i < degree; ++i) r = O::fma(r, x, O::set1(c[i]));
  return r;
}

template <class O>
inline typename O::V v_exp(typename O::V x) {
  using V = typename O::V;
  V q = O::floor(O::fma(O::set1(exp_log2e), x, O::set1(0.5)));
  // Clamp the scale exponent so out-of-range lanes stay finite garbage that
  // the boundary blends below discard.
  q = O::min(O::max(q, O::set1(-1022.0)), O::set1(1023.0));
  V r = O::fma(q, O::set1(-exp_c1), x);
  r = O::fma(q, O::set1(-exp_c2), r);
  const V rr = O::mul(r, r);
  const V px = O::mul(r, polevl<O>(rr, exp_p, 2));
  V e = O::div(px, O::sub(polevl<O>(rr, exp_q, 3), px));
  e = O::fma(O::set1(2.0), e, O::set1(1.0));
  e = O::mul(e, O::pow2i(q));
  e = O::blend(O::lt(x, O::set1(exp_min_arg)), O::set1(0.0), e);
  e = O::blend(O::gt(x, O::set1(exp_max_arg)),
               O::set1(std::numeric_limits<double>::infinity()), e);
  return e;
}

// Natural log for normal positive inputs (the only domain the project uses).
template <class O>
inline typename O::V v_log(typename O::V x) {
  using V = typename O::V;
  const V m = O::frexp_mantissa(x);
  V e = O::frexp_exponent(x);
  const auto low = O::lt(m, O::set1(log_sqrth));
  e = O::sub(e, O::blend(low, O::set1(1.0), O::set1(0.0)));
  V xr = O::sub(O::blend(low, O::add(m, m), m), O::set1(1.0));
  const V z = O::mul(xr, xr);
  V y = O::mul(xr, O::div(O::mul(z, polevl<O>(xr, log_p, 5)),
                          p1evl<O>(xr, log_q, 5)));
  y = O::fma(e, O::set1(-log_ln2_lo), y);
  y = O::fma(O::set1(-0.5), z, y);
  V out = O::add(xr, y);
  out = O::fma(e, O::set1(log_ln2_hi), out);
  return out;
}

// Standard normal quantile, AS241 PPND16.  Valid on (0,1) exclusive.
template <class O>
inline typename O::V v_ppnd(typename O::V u) {
  using V = typename O::V;
  const V q = O::sub(u, O::set1(0.5));

  // Central region |q| <= 0.425.
  const V nq = O::sub(O::set1(0.0), q);
  const V rc = O::fma(q, nq, O::set1(ppnd_const1));
  const V central =
      O::mul(q, O::div(polevl<O>(rc, ppnd_a, 7), polevl<O>(rc, ppnd_b, 7)));

  // Tails: r = min(u, 1-u), s = sqrt(-log r), two rational pieces.
  const V rt = O::min(u, O::sub(O::set1(1.0), u));
  const V s = O::sqrt(O::sub(O::set1(0.0), v_log<O>(rt)));
  const V t1 = O::sub(s, O::set1(1.6));
  const V near_tail =
      O::div(polevl<O>(t1, ppnd_c, 7), polevl<O>(t1, ppnd_d, 7));
  const V t2 = O::sub(s, O::set1(ppnd_split2));
  const V far_tail =
      O::div(polevl<O>(t2, ppnd_e, 7), polevl<O>(t2, ppnd_f, 7));
  V tail = O::blend(O::le(s, O::set1(ppnd_split2)), near_tail, far_tail);
  tail = O::blend(O::lt(q, O::set1(0.0)), O::sub(O::set1(0.0), tail), tail);

  return O::blend(O::le(O::abs(q), O::set1(ppnd_split1)), central, tail);
}

// Log-normal fade sample: min(1, eta_o * exp(sigma*z - sigma^2/2)).
// neg_half_sigma2 is precomputed once by the caller so every backend uses the
// same rounded constant.
template <class O>
inline typename O::V v_lognormal(typename O::V u, double eta_o, double sigma,
                                 double neg_half_sigma2) {
  using V = typename O::V;
  const V z = v_ppnd<O>(u);
  const V t = O::fma(O::set1(sigma), z, O::set1(neg_half_sigma2));
  return O::min(O::set1(1.0), O::mul(O::set1(eta_o), v_exp<O>(t)));
}

} // namespace fadekey::kernels::detail
