#pragma once

#include "ghyena/rng.hpp"
#include "ghyena/tensor.hpp"

namespace ghyena {

// Uniform random rotation (3,3) with det +1, via a normalized quaternion.
Tensor random_rotation(Rng& rng);

// Rows transformed as R x_i; x is (N,3) or (3).
Tensor rotate_rows(const Tensor& x, const Tensor& r);

// ||R^T R - I||_F <= tol and det(R) > 0.
bool is_rotation(const Tensor& r, double tol = 1e-8);

// ||a - b||_F / max(||b||_F, 1e-300)
double rel_deviation(const Tensor& a, const Tensor& b);

double frobenius_norm(const Tensor& a);

}  // namespace ghyena
