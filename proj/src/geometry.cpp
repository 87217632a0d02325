#include "ghyena/geometry.hpp"

#include <cmath>

namespace ghyena {

Tensor random_rotation(Rng& rng) {
  double q[4];
  double norm2 = 0;
  do {
    norm2 = 0;
    for (double& c : q) {
      c = rng.normal();
      norm2 += c * c;
    }
  } while (norm2 < 1e-12);
  double inv = 1.0 / std::sqrt(norm2);
  double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
  Tensor r({3, 3});
  r.set(0, 1 - 2 * (y * y + z * z));
  r.set(1, 2 * (x * y - w * z));
  r.set(2, 2 * (x * z + w * y));
  r.set(3, 2 * (x * y + w * z));
  r.set(4, 1 - 2 * (x * x + z * z));
  r.set(5, 2 * (y * z - w * x));
  r.set(6, 2 * (x * z - w * y));
  r.set(7, 2 * (y * z + w * x));
  r.set(8, 1 - 2 * (x * x + y * y));
  return r;
}

Tensor rotate_rows(const Tensor& x, const Tensor& r) {
  if (r.rank() != 2 || r.dim(0) != 3 || r.dim(1) != 3) fail_invalid("rotate_rows: R must be (3,3)");
  bool vec = x.rank() == 1;
  if (vec && x.dim(0) != 3) fail_invalid("rotate_rows: vector must have length 3");
  if (!vec && (x.rank() != 2 || x.dim(1) != 3)) fail_invalid("rotate_rows: rows must be (N,3)");
  int64_t n = vec ? 1 : x.dim(0);
  Tensor out(x.shape(), x.dtype());
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t a = 0; a < 3; ++a) {
      double acc = 0;
      for (int64_t b = 0; b < 3; ++b) acc += r.at(a * 3 + b) * x.at(i * 3 + b);
      out.set(i * 3 + a, acc);
    }
  }
  return out;
}

bool is_rotation(const Tensor& r, double tol) {
  if (r.rank() != 2 || r.dim(0) != 3 || r.dim(1) != 3) return false;
  double dev = 0;
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (int64_t k = 0; k < 3; ++k) acc += r.at(k * 3 + i) * r.at(k * 3 + j);
      double target = i == j ? 1.0 : 0.0;
      dev += (acc - target) * (acc - target);
    }
  if (std::sqrt(dev) > tol) return false;
  double det = r.at(0) * (r.at(4) * r.at(8) - r.at(5) * r.at(7)) -
               r.at(1) * (r.at(3) * r.at(8) - r.at(5) * r.at(6)) +
               r.at(2) * (r.at(3) * r.at(7) - r.at(4) * r.at(6));
  return det > 0;
}

double frobenius_norm(const Tensor& a) {
  double acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double v = a.at(i);
    acc += v * v;
  }
  return std::sqrt(acc);
}

double rel_deviation(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) fail_invalid("rel_deviation: shape mismatch");
  double num = 0, den = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = a.at(i) - b.at(i);
    num += d * d;
    den += b.at(i) * b.at(i);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace ghyena
