// AVX2+FMA backend: instantiates the shared kernel templates on 4-wide
// doubles and runs Philox 8 blocks at a time (SoA).  Built with -mavx2 -mfma;
// results are bitwise-identical to the scalar backend because every template
// op maps to an exact or correctly-rounded instruction (see detail.hpp).

#include "fadekey/kernels/detail.hpp"
#include "fadekey/kernels/philox.hpp"

#include <immintrin.h>

namespace fadekey::kernels {

// Loop tails reuse the single-value scalar path from kernels_scalar.cpp.
double exp1(double);
double log1(double);
double normal_quantile1(double);
double uniform1(std::uint64_t, std::uint32_t, std::uint64_t);
double lognormal1(std::uint64_t, std::uint32_t, std::uint64_t, double, double);

namespace {

struct Avx2Ops {
  using V = __m256d;
  using M = __m256d;

  static V set1(double c) { return _mm256_set1_pd(c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V div(V a, V b) { return _mm256_div_pd(a, b); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V sqrt(V a) { return _mm256_sqrt_pd(a); }
  static V floor(V a) { return _mm256_floor_pd(a); }
  static V abs(V a) {
    return _mm256_andnot_pd(_mm256_set1_pd(-0.0), a);
  }
  static V min(V a, V b) { return _mm256_min_pd(a, b); }
  static V max(V a, V b) { return _mm256_max_pd(a, b); }
  static M lt(V a, V b) { return _mm256_cmp_pd(a, b, _CMP_LT_OQ); }
  static M le(V a, V b) { return _mm256_cmp_pd(a, b, _CMP_LE_OQ); }
  static M gt(V a, V b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static V blend(M m, V a, V b) { return _mm256_blendv_pd(b, a, m); }

  static V pow2i(V q) {
    // q integral in [-1022, 1023]: q + (2^52 + 1023) carries q+1023 in the
    // low mantissa bits exactly; mask and shift into the exponent field.
    const V t = _mm256_add_pd(q, _mm256_set1_pd(0x1.0p52 + 1023.0));
    __m256i bits = _mm256_castpd_si256(t);
    bits = _mm256_and_si256(bits, _mm256_set1_epi64x(0x7FF));
    return _mm256_castsi256_pd(_mm256_slli_epi64(bits, 52));
  }

  static V frexp_mantissa(V x) {
    __m256i bits = _mm256_castpd_si256(x);
    bits = _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFll));
    bits = _mm256_or_si256(bits, _mm256_set1_epi64x(0x3FE0000000000000ll));
    return _mm256_castsi256_pd(bits);
  }
  static V frexp_exponent(V x) {
    // Raw exponent field (positive normals) to double via the 2^52 trick,
    // then the exact small-integer subtraction; matches the scalar value.
    __m256i raw = _mm256_srli_epi64(_mm256_castpd_si256(x), 52);
    raw = _mm256_or_si256(raw, _mm256_set1_epi64x(0x4330000000000000ll));
    const V d = _mm256_sub_pd(_mm256_castsi256_pd(raw), _mm256_set1_pd(0x1.0p52));
    return _mm256_sub_pd(d, _mm256_set1_pd(1022.0));
  }
};

// 32x32 -> 64 multiply of all 8 lanes by a broadcast constant, split into
// high and low 32-bit halves.
inline void mul_hi_lo(__m256i a, __m256i m, __m256i* hi, __m256i* lo) {
  const __m256i even = _mm256_mul_epu32(a, m);
  const __m256i odd = _mm256_mul_epu32(_mm256_srli_epi64(a, 32), m);
  *lo = _mm256_blend_epi32(even, _mm256_slli_epi64(odd, 32), 0xAA);
  *hi = _mm256_blend_epi32(_mm256_srli_epi64(even, 32), odd, 0xAA);
}

// Eight Philox4x32-10 blocks; returns the (w0<<32)|w1 outputs as two vectors
// of four 64-bit lanes in block order: out0 = blocks 0..3, out1 = blocks 4..7.
inline void philox8_u64(std::uint64_t seed, std::uint32_t domain,
                        std::uint64_t index0, __m256i* out0, __m256i* out1) {
  alignas(32) std::uint32_t lo[8], hi[8];
  for (int lane = 0; lane < 8; ++lane) {
    const std::uint64_t idx = index0 + static_cast<std::uint64_t>(lane);
    lo[lane] = static_cast<std::uint32_t>(idx);
    hi[lane] = static_cast<std::uint32_t>(idx >> 32);
  }
  __m256i c0 = _mm256_setzero_si256();
  __m256i c1 = _mm256_load_si256(reinterpret_cast<const __m256i*>(lo));
  __m256i c2 = _mm256_load_si256(reinterpret_cast<const __m256i*>(hi));
  __m256i c3 = _mm256_set1_epi32(static_cast<int>(domain));
  __m256i k0 = _mm256_set1_epi32(static_cast<int>(static_cast<std::uint32_t>(seed)));
  __m256i k1 = _mm256_set1_epi32(static_cast<int>(static_cast<std::uint32_t>(seed >> 32)));
  const __m256i m0 = _mm256_set1_epi32(static_cast<int>(philox_m0));
  const __m256i m1 = _mm256_set1_epi32(static_cast<int>(philox_m1));
  const __m256i w0 = _mm256_set1_epi32(static_cast<int>(philox_w0));
  const __m256i w1 = _mm256_set1_epi32(static_cast<int>(philox_w1));

  for (int round = 0; round < 10; ++round) {
    __m256i hi0, lo0, hi1, lo1;
    mul_hi_lo(c0, m0, &hi0, &lo0);
    mul_hi_lo(c2, m1, &hi1, &lo1);
    const __m256i n0 = _mm256_xor_si256(_mm256_xor_si256(hi1, c1), k0);
    const __m256i n2 = _mm256_xor_si256(_mm256_xor_si256(hi0, c3), k1);
    c0 = n0;
    c1 = lo1;
    c2 = n2;
    c3 = lo0;
    k0 = _mm256_add_epi32(k0, w0);
    k1 = _mm256_add_epi32(k1, w1);
  }

  // u64 lane = w1 | (w0 << 32); unpack interleaves within 128-bit halves, so
  // A holds blocks {0,1,4,5} and B holds {2,3,6,7} before the permute.
  const __m256i a = _mm256_unpacklo_epi32(c1, c0);
  const __m256i b = _mm256_unpackhi_epi32(c1, c0);
  *out0 = _mm256_permute2x128_si256(a, b, 0x20);
  *out1 = _mm256_permute2x128_si256(a, b, 0x31);
}

inline __m256d u01_from_bits4(__m256i u) {
  __m256i mant = _mm256_srli_epi64(u, 12);
  mant = _mm256_or_si256(mant, _mm256_set1_epi64x(0x3FF0000000000000ll));
  const __m256d d = _mm256_castsi256_pd(mant);
  return _mm256_add_pd(_mm256_sub_pd(d, _mm256_set1_pd(1.0)),
                       _mm256_set1_pd(0x1.0p-53));
}

} // namespace

namespace avx2_backend {

void exp_batch(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, detail::v_exp<Avx2Ops>(_mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = exp1(x[i]);
}

void log_batch(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, detail::v_log<Avx2Ops>(_mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = log1(x[i]);
}

void normal_quantile_batch(const double* u, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, detail::v_ppnd<Avx2Ops>(_mm256_loadu_pd(u + i)));
  }
  for (; i < n; ++i) out[i] = normal_quantile1(u[i]);
}

void uniform_batch(std::uint64_t seed, std::uint32_t domain,
                   std::uint64_t index0, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256i u0, u1;
    philox8_u64(seed, domain, index0 + i, &u0, &u1);
    _mm256_storeu_pd(out + i, u01_from_bits4(u0));
    _mm256_storeu_pd(out + i + 4, u01_from_bits4(u1));
  }
  for (; i < n; ++i) out[i] = uniform1(seed, domain, index0 + i);
}

void lognormal_batch(std::uint64_t seed, std::uint32_t domain,
                     std::uint64_t index0, std::size_t n, double eta_o,
                     double sigma, double* out) {
  const double neg_half_sigma2 = -0.5 * (sigma * sigma);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256i u0, u1;
    philox8_u64(seed, domain, index0 + i, &u0, &u1);
    _mm256_storeu_pd(out + i,
                     detail::v_lognormal<Avx2Ops>(u01_from_bits4(u0), eta_o,
                                                  sigma, neg_half_sigma2));
    _mm256_storeu_pd(out + i + 4,
                     detail::v_lognormal<Avx2Ops>(u01_from_bits4(u1), eta_o,
                                                  sigma, neg_half_sigma2));
  }
  for (; i < n; ++i) {
    out[i] = lognormal1(seed, domain, index0 + i, eta_o, sigma);
  }
}

} // namespace avx2_backend
} // namespace fadekey::kernels
