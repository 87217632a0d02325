#pragma once

// Internal bridge between the tape and the FFT convolution kernels, so the
// backward dispatch in tape.cpp can route conv gradients without pulling the
// whole longconv interface in.

#include "ghyena/tensor.hpp"

namespace ghyena::convdetail {

Tensor scalar_conv_forward(const Tensor& q, const Tensor& k);
Tensor vector_conv_forward(const Tensor& q, const Tensor& k);

// b_i = a_{(-i) mod N} along axis 0.
Tensor reverse_rows_circular(const Tensor& a);

}  // namespace ghyena::convdetail
