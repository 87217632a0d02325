#pragma once

#include <array>

#include "ghyena/tape.hpp"
#include "ghyena/tensor.hpp"

namespace ghyena {

// The six (l,h,p) index triples with nonzero Levi-Civita symbol; the vector
// long convolution is a signed sum of scalar convolutions over these.
struct LeviCivitaEntry {
  int l, h, p;
  double sign;
};

struct LeviCivitaPlan {
  std::array<LeviCivitaEntry, 6> entries;
  static const LeviCivitaPlan& standard();
};

// ---- raw kernels (no tape; used by oracles, checks, and benchmarks) --------

// u_i = sum_j q_j * k_{(i-j) mod N} for rank-1 signals.
Tensor circular_conv(const Tensor& q, const Tensor& k);
Tensor circular_conv_naive(const Tensor& q, const Tensor& k);

// Channelwise circular convolution of (N,d) signals.
Tensor scalar_long_conv(const Tensor& q, const Tensor& k);
Tensor scalar_long_conv_naive(const Tensor& q, const Tensor& k);

// u_i = sum_j q_j x k_{(i-j) mod N} on (N,3) signals, via six scalar
// convolutions in the Fourier domain. No 1/N factor at this layer.
Tensor vector_long_conv(const Tensor& q, const Tensor& k,
                        const LeviCivitaPlan& plan = LeviCivitaPlan::standard());
// Literal O(N^2) double loop with explicit cross products.
Tensor vector_long_conv_naive(const Tensor& q, const Tensor& k);

struct GeometricConvWeights {
  double l1 = 0, l2 = 0, l3 = 0, l4 = 0, l5 = 0;
};

struct GeometricConvOut {
  Tensor alpha3;  // (N,1)
  Tensor r3;      // (N,3)
};

// alpha3 = l1 (a1 (*) a2) + l2 sum_d (r1[d] (*) r2[d])
// r3     = l3 ||_d (a1 (*) r2[d]) + l4 ||_d (a2 (*) r1[d]) + l5 (r1 (*x) r2)
GeometricConvOut geometric_long_conv(const Tensor& a1, const Tensor& r1, const Tensor& a2,
                                     const Tensor& r2, const GeometricConvWeights& lw);
GeometricConvOut geometric_long_conv_naive(const Tensor& a1, const Tensor& r1, const Tensor& a2,
                                           const Tensor& r2, const GeometricConvWeights& lw);

// f~_i = w^T f_i ; f is (N,d), w is (d), result (N,1).
Tensor scalarize(const Tensor& f, const Tensor& w);

// ---- tape-level composite ---------------------------------------------------

// Trainable weights of the geometric long convolution for one forward pass.
struct GeometricConvParams {
  Value lambda1, lambda2, lambda3, lambda4, lambda5;  // rank-0 scalars
  Value w;                                            // (d,1) scalarization weights
};

struct GeometricConvValues {
  Value alpha3;  // (N,1)
  Value r3;      // (N,3)
};

Value scalarize(const Value& f, const Value& w);
GeometricConvValues geometric_conv(const Value& a1, const Value& r1, const Value& a2,
                                   const Value& r2, const GeometricConvParams& params);

}  // namespace ghyena
