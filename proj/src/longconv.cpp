#include "ghyena/longconv.hpp"

#include <complex>
#include <vector>

#include "conv_ops.hpp"
#include "ghyena/fft.hpp"

namespace ghyena {

const LeviCivitaPlan& LeviCivitaPlan::standard() {
  static const LeviCivitaPlan plan{{{{0, 1, 2, +1.0},
                                     {0, 2, 1, -1.0},
                                     {1, 2, 0, +1.0},
                                     {1, 0, 2, -1.0},
                                     {2, 0, 1, +1.0},
                                     {2, 1, 0, -1.0}}}};
  return plan;
}

namespace {

void require_cols(const char* op, const Tensor& q, const Tensor& k, int64_t cols) {
  if (q.rank() != 2 || k.rank() != 2 || !q.same_shape(k) || (cols > 0 && q.dim(1) != cols))
    fail_invalid(std::string(op) + ": incompatible shapes " + q.shape_str() + " and " + k.shape_str());
  if (q.dtype() != k.dtype()) fail_invalid(std::string(op) + ": dtype mismatch");
  if (q.dim(0) < 1) fail_invalid(std::string(op) + ": empty sequence");
}

// Spectra of every column of a (N,d) signal.
template <class T>
std::vector<std::vector<std::complex<T>>> column_spectra(const Tensor& a) {
  int64_t n = a.dim(0), d = a.dim(1);
  int64_t bins = n / 2 + 1;
  std::vector<T> col(static_cast<size_t>(n));
  std::vector<std::vector<std::complex<T>>> spec(static_cast<size_t>(d));
  auto src = a.data<T>();
  for (int64_t c = 0; c < d; ++c) {
    for (int64_t i = 0; i < n; ++i) col[static_cast<size_t>(i)] = src[i * d + c];
    spec[static_cast<size_t>(c)].resize(static_cast<size_t>(bins));
    fftdetail::rfft_into<T>(col.data(), n, spec[static_cast<size_t>(c)].data());
  }
  return spec;
}

template <class T>
void spectrum_to_column(const std::vector<std::complex<T>>& spec, Tensor& out, int64_t c) {
  int64_t n = out.dim(0), d = out.dim(1);
  std::vector<T> col(static_cast<size_t>(n));
  fftdetail::irfft_into<T>(spec.data(), n, col.data());
  auto dst = out.data<T>();
  for (int64_t i = 0; i < n; ++i) dst[i * d + c] = col[static_cast<size_t>(i)];
}

template <class T>
Tensor scalar_conv_impl(const Tensor& q, const Tensor& k) {
  int64_t n = q.dim(0), d = q.dim(1);
  auto qs = column_spectra<T>(q);
  auto ks = column_spectra<T>(k);
  Tensor out({n, d}, q.dtype());
  std::vector<std::complex<T>> prod(static_cast<size_t>(n / 2 + 1));
  for (int64_t c = 0; c < d; ++c) {
    const auto& a = qs[static_cast<size_t>(c)];
    const auto& b = ks[static_cast<size_t>(c)];
    for (size_t i = 0; i < prod.size(); ++i) prod[i] = a[i] * b[i];
    spectrum_to_column<T>(prod, out, c);
  }
  return out;
}

template <class T>
Tensor vector_conv_impl(const Tensor& q, const Tensor& k, const LeviCivitaPlan& plan) {
  int64_t n = q.dim(0);
  auto qs = column_spectra<T>(q);
  auto ks = column_spectra<T>(k);
  Tensor out({n, 3}, q.dtype());
  size_t bins = static_cast<size_t>(n / 2 + 1);
  std::vector<std::complex<T>> acc(bins);
  for (int l = 0; l < 3; ++l) {
    for (auto& v : acc) v = {T(0), T(0)};
    for (const auto& e : plan.entries) {
      if (e.l != l) continue;
      const auto& a = qs[static_cast<size_t>(e.h)];
      const auto& b = ks[static_cast<size_t>(e.p)];
      T s = static_cast<T>(e.sign);
      for (size_t i = 0; i < bins; ++i) acc[i] += s * (a[i] * b[i]);
    }
    spectrum_to_column<T>(acc, out, l);
  }
  return out;
}

}  // namespace

namespace convdetail {

Tensor scalar_conv_forward(const Tensor& q, const Tensor& k) {
  require_cols("scalar_conv", q, k, 0);
  return q.dtype() == Dtype::F64 ? scalar_conv_impl<double>(q, k) : scalar_conv_impl<float>(q, k);
}

Tensor vector_conv_forward(const Tensor& q, const Tensor& k) {
  require_cols("vector_conv", q, k, 3);
  const auto& plan = LeviCivitaPlan::standard();
  return q.dtype() == Dtype::F64 ? vector_conv_impl<double>(q, k, plan) : vector_conv_impl<float>(q, k, plan);
}

Tensor reverse_rows_circular(const Tensor& a) {
  int64_t n = a.dim(0), d = a.rank() == 2 ? a.dim(1) : 1;
  Tensor out(a.shape(), a.dtype());
  for (int64_t i = 0; i < n; ++i) {
    int64_t r = i == 0 ? 0 : n - i;
    for (int64_t c = 0; c < d; ++c) out.set(r * d + c, a.at(i * d + c));
  }
  return out;
}

}  // namespace convdetail

Tensor circular_conv(const Tensor& q, const Tensor& k) {
  if (q.rank() != 1 || k.rank() != 1 || q.dim(0) != k.dim(0))
    fail_invalid("circular_conv: rank-1 signals of equal length required, got " + q.shape_str() + " and " +
                 k.shape_str());
  if (q.dim(0) < 1) fail_invalid("circular_conv: empty signal");
  Tensor q2 = q.reshaped({q.dim(0), 1});
  Tensor k2 = k.reshaped({k.dim(0), 1});
  return convdetail::scalar_conv_forward(q2, k2).reshaped({q.dim(0)});
}

Tensor circular_conv_naive(const Tensor& q, const Tensor& k) {
  if (q.rank() != 1 || k.rank() != 1 || q.dim(0) != k.dim(0))
    fail_invalid("circular_conv: rank-1 signals of equal length required");
  int64_t n = q.dim(0);
  Tensor out({n}, q.dtype());
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0;
    for (int64_t j = 0; j < n; ++j) acc += q.at(j) * k.at(((i - j) % n + n) % n);
    out.set(i, acc);
  }
  return out;
}

Tensor scalar_long_conv(const Tensor& q, const Tensor& k) { return convdetail::scalar_conv_forward(q, k); }

Tensor scalar_long_conv_naive(const Tensor& q, const Tensor& k) {
  require_cols("scalar_long_conv", q, k, 0);
  int64_t n = q.dim(0), d = q.dim(1);
  Tensor out({n, d}, q.dtype());
  for (int64_t c = 0; c < d; ++c)
    for (int64_t i = 0; i < n; ++i) {
      double acc = 0;
      for (int64_t j = 0; j < n; ++j) acc += q.at(j * d + c) * k.at((((i - j) % n + n) % n) * d + c);
      out.set(i * d + c, acc);
    }
  return out;
}

Tensor vector_long_conv(const Tensor& q, const Tensor& k, const LeviCivitaPlan& plan) {
  require_cols("vector_long_conv", q, k, 3);
  return q.dtype() == Dtype::F64 ? vector_conv_impl<double>(q, k, plan) : vector_conv_impl<float>(q, k, plan);
}

Tensor vector_long_conv_naive(const Tensor& q, const Tensor& k) {
  require_cols("vector_long_conv", q, k, 3);
  int64_t n = q.dim(0);
  Tensor out({n, 3}, q.dtype());
  for (int64_t i = 0; i < n; ++i) {
    double u0 = 0, u1 = 0, u2 = 0;
    for (int64_t j = 0; j < n; ++j) {
      int64_t m = ((i - j) % n + n) % n;
      double a0 = q.at(j * 3), a1 = q.at(j * 3 + 1), a2 = q.at(j * 3 + 2);
      double b0 = k.at(m * 3), b1 = k.at(m * 3 + 1), b2 = k.at(m * 3 + 2);
      u0 += a1 * b2 - a2 * b1;
      u1 += a2 * b0 - a0 * b2;
      u2 += a0 * b1 - a1 * b0;
    }
    out.set(i * 3, u0);
    out.set(i * 3 + 1, u1);
    out.set(i * 3 + 2, u2);
  }
  return out;
}

namespace {
void require_geometric(const Tensor& a1, const Tensor& r1, const Tensor& a2, const Tensor& r2) {
  if (a1.rank() != 2 || a1.dim(1) != 1 || !a1.same_shape(a2))
    fail_invalid("geometric_long_conv: alpha signals must be (N,1), got " + a1.shape_str() + " and " +
                 a2.shape_str());
  if (r1.rank() != 2 || r1.dim(1) != 3 || !r1.same_shape(r2) || r1.dim(0) != a1.dim(0))
    fail_invalid("geometric_long_conv: vector signals must be (N,3) matching alphas, got " + r1.shape_str() +
                 " and " + r2.shape_str());
}
}  // namespace

GeometricConvOut geometric_long_conv(const Tensor& a1, const Tensor& r1, const Tensor& a2,
                                     const Tensor& r2, const GeometricConvWeights& lw) {
  require_geometric(a1, r1, a2, r2);
  int64_t n = a1.dim(0);
  Tensor aa = convdetail::scalar_conv_forward(a1, a2);       // (N,1)
  Tensor rr = convdetail::scalar_conv_forward(r1, r2);       // (N,3), per-component
  Tensor a1r2({n, 3}, a1.dtype());
  Tensor a2r1({n, 3}, a1.dtype());
  {
    // expand alphas over three columns for channelwise convs
    Tensor a1e({n, 3}, a1.dtype());
    Tensor a2e({n, 3}, a1.dtype());
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < 3; ++c) {
        a1e.set(i * 3 + c, a1.at(i));
        a2e.set(i * 3 + c, a2.at(i));
      }
    a1r2 = convdetail::scalar_conv_forward(a1e, r2);
    a2r1 = convdetail::scalar_conv_forward(a2e, r1);
  }
  Tensor cross = convdetail::vector_conv_forward(r1, r2);

  GeometricConvOut out;
  out.alpha3 = Tensor({n, 1}, a1.dtype());
  out.r3 = Tensor({n, 3}, a1.dtype());
  for (int64_t i = 0; i < n; ++i) {
    double dotsum = rr.at(i * 3) + rr.at(i * 3 + 1) + rr.at(i * 3 + 2);
    out.alpha3.set(i, lw.l1 * aa.at(i) + lw.l2 * dotsum);
    for (int64_t c = 0; c < 3; ++c)
      out.r3.set(i * 3 + c, lw.l3 * a1r2.at(i * 3 + c) + lw.l4 * a2r1.at(i * 3 + c) + lw.l5 * cross.at(i * 3 + c));
  }
  return out;
}

GeometricConvOut geometric_long_conv_naive(const Tensor& a1, const Tensor& r1, const Tensor& a2,
                                           const Tensor& r2, const GeometricConvWeights& lw) {
  require_geometric(a1, r1, a2, r2);
  int64_t n = a1.dim(0);
  GeometricConvOut out;
  out.alpha3 = Tensor({n, 1}, a1.dtype());
  out.r3 = Tensor({n, 3}, a1.dtype());
  for (int64_t i = 0; i < n; ++i) {
    double alpha = 0;
    double r[3] = {0, 0, 0};
    for (int64_t j = 0; j < n; ++j) {
      int64_t m = ((i - j) % n + n) % n;
      double s1 = a1.at(j), s2 = a2.at(m);
      double v1[3] = {r1.at(j * 3), r1.at(j * 3 + 1), r1.at(j * 3 + 2)};
      double v2[3] = {r2.at(m * 3), r2.at(m * 3 + 1), r2.at(m * 3 + 2)};
      alpha += lw.l1 * s1 * s2 + lw.l2 * (v1[0] * v2[0] + v1[1] * v2[1] + v1[2] * v2[2]);
      r[0] += lw.l3 * s1 * v2[0] + lw.l4 * s2 * v1[0] + lw.l5 * (v1[1] * v2[2] - v1[2] * v2[1]);
      r[1] += lw.l3 * s1 * v2[1] + lw.l4 * s2 * v1[1] + lw.l5 * (v1[2] * v2[0] - v1[0] * v2[2]);
      r[2] += lw.l3 * s1 * v2[2] + lw.l4 * s2 * v1[2] + lw.l5 * (v1[0] * v2[1] - v1[1] * v2[0]);
    }
    out.alpha3.set(i, alpha);
    for (int64_t c = 0; c < 3; ++c) out.r3.set(i * 3 + c, r[c]);
  }
  return out;
}

Tensor scalarize(const Tensor& f, const Tensor& w) {
  if (f.rank() != 2 || w.rank() != 1 || f.dim(1) != w.dim(0))
    fail_invalid("scalarize: dimension mismatch between " + f.shape_str() + " and " + w.shape_str());
  int64_t n = f.dim(0), d = f.dim(1);
  Tensor out({n, 1}, f.dtype());
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0;
    for (int64_t j = 0; j < d; ++j) acc += f.at(i * d + j) * w.at(j);
    out.set(i, acc);
  }
  return out;
}

// ---- tape-level ------------------------------------------------------------

Value scalarize(const Value& f, const Value& w) { return matmul(f, w); }

GeometricConvValues geometric_conv(const Value& a1, const Value& r1, const Value& a2,
                                   const Value& r2, const GeometricConvParams& params) {
  require_geometric(a1.tensor(), r1.tensor(), a2.tensor(), r2.tensor());
  Tensor ones13 = Tensor::full({1, 3}, 1.0, a1.tensor().dtype());
  Value a1e = matmul(a1, constant(ones13));
  Value a2e = matmul(a2, constant(ones13));

  Value alpha = add(mul(params.lambda1, scalar_conv(a1, a2)),
                    mul(params.lambda2, sum_axis(scalar_conv(r1, r2), 1)));
  Value r = add(add(mul(params.lambda3, scalar_conv(a1e, r2)), mul(params.lambda4, scalar_conv(a2e, r1))),
                mul(params.lambda5, vector_conv(r1, r2)));
  return {alpha, r};
}

}  // namespace ghyena
