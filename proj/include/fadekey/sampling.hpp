#pragma once

#include <cstdint>

#include "fadekey/kernels/philox.hpp"

// Discrete samplers on top of the Philox streams.  Scalar by design: their
// control flow is data-dependent (inversion walks, rejection loops), which
// SIMD would only obscure.  All transcendentals go through the kernel
// exp/log so draws are reproducible independent of the host libm.
//
// Algorithms: binomial uses CDF inversion when n*min(p,1-p) < 30 and the
// transformed-rejection sampler with squeeze (BTRS) above; Poisson uses CDF
// inversion below mean 10 and the transformed rejection (PTRS) above.
// Distribution correctness is covered by chi-square goodness-of-fit tests.

namespace fadekey {

bool bernoulli(kernels::PhiloxStream& s, double p);

std::uint64_t binomial(kernels::PhiloxStream& s, std::uint64_t n, double p);

std::uint64_t poisson(kernels::PhiloxStream& s, double mu);

// Splits n across k categories with probabilities p[0..k-1] summing to 1
// (within rounding); exact conservation: out sums to n, the last category
// absorbs the remainder.
void multinomial(kernels::PhiloxStream& s, std::uint64_t n, const double* p,
                 int k, std::uint64_t* out);

} // namespace fadekey
