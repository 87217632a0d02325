#include <doctest.h>

#include <cmath>

#include "ghyena/geometry.hpp"
#include "ghyena/longconv.hpp"
#include "ghyena/rng.hpp"

using namespace ghyena;

namespace {

Tensor random2(int64_t n, int64_t m, Rng& rng) {
  Tensor t({n, m});
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-1, 1));
  return t;
}

// independent in-test oracle: the five interaction terms as explicit loops
GeometricConvOut geometric_terms_loop(const Tensor& a1, const Tensor& r1, const Tensor& a2,
                                      const Tensor& r2, const GeometricConvWeights& lw) {
  int64_t n = a1.dim(0);
  GeometricConvOut out;
  out.alpha3 = Tensor({n, 1});
  out.r3 = Tensor({n, 3});
  for (int64_t i = 0; i < n; ++i) {
    double t1 = 0, t2 = 0, t3[3] = {0, 0, 0}, t4[3] = {0, 0, 0}, t5[3] = {0, 0, 0};
    for (int64_t j = 0; j < n; ++j) {
      int64_t m = ((i - j) % n + n) % n;
      t1 += a1.at(j) * a2.at(m);
      for (int64_t c = 0; c < 3; ++c) {
        t2 += r1.at(j * 3 + c) * r2.at(m * 3 + c);
        t3[c] += a1.at(j) * r2.at(m * 3 + c);
        t4[c] += a2.at(m) * r1.at(j * 3 + c);
      }
      double v1[3] = {r1.at(j * 3), r1.at(j * 3 + 1), r1.at(j * 3 + 2)};
      double v2[3] = {r2.at(m * 3), r2.at(m * 3 + 1), r2.at(m * 3 + 2)};
      t5[0] += v1[1] * v2[2] - v1[2] * v2[1];
      t5[1] += v1[2] * v2[0] - v1[0] * v2[2];
      t5[2] += v1[0] * v2[1] - v1[1] * v2[0];
    }
    out.alpha3.set(i, lw.l1 * t1 + lw.l2 * t2);
    for (int64_t c = 0; c < 3; ++c) out.r3.set(i * 3 + c, lw.l3 * t3[c] + lw.l4 * t4[c] + lw.l5 * t5[c]);
  }
  return out;
}

}  // namespace

TEST_SUITE("longconv") {

TEST_CASE("impulse kernel is the convolution identity") {
  Tensor q = Tensor::from({4}, {1, 2, 3, 4});
  Tensor delta0 = Tensor::from({4}, {1, 0, 0, 0});
  Tensor out = circular_conv(q, delta0);
  for (int64_t i = 0; i < 4; ++i) CHECK(out.at(i) == doctest::Approx(q.at(i)).epsilon(1e-14));

  Tensor delta1 = Tensor::from({4}, {0, 1, 0, 0});
  Tensor shifted = circular_conv(q, delta1);
  CHECK(shifted.at(0) == doctest::Approx(4).epsilon(1e-14));
  CHECK(shifted.at(1) == doctest::Approx(1).epsilon(1e-14));
  CHECK(shifted.at(2) == doctest::Approx(2).epsilon(1e-14));
  CHECK(shifted.at(3) == doctest::Approx(3).epsilon(1e-14));
}

TEST_CASE("circular convolution matches the double-loop oracle") {
  Rng rng(21);
  Tensor q({64});
  Tensor k({64});
  for (int64_t i = 0; i < 64; ++i) {
    q.set(i, rng.uniform(-1, 1));
    k.set(i, rng.uniform(-1, 1));
  }
  CHECK(rel_deviation(circular_conv(q, k), circular_conv_naive(q, k)) < 1e-10);
  Tensor q3({3});
  CHECK_THROWS_AS(circular_conv(q, q3), Error);
}

TEST_CASE("scalar long convolution runs per channel") {
  Rng rng(22);
  Tensor q = random2(32, 5, rng);
  Tensor k = random2(32, 5, rng);
  Tensor out = scalar_long_conv(q, k);
  CHECK(rel_deviation(out, scalar_long_conv_naive(q, k)) < 1e-10);

  // channel c equals the 1-d circular convolution of the columns
  for (int64_t c = 0; c < 5; ++c) {
    Tensor qc({32}), kc({32});
    for (int64_t i = 0; i < 32; ++i) {
      qc.set(i, q.at(i * 5 + c));
      kc.set(i, k.at(i * 5 + c));
    }
    Tensor col = circular_conv(qc, kc);
    for (int64_t i = 0; i < 32; ++i)
      CHECK(out.at(i * 5 + c) == doctest::Approx(col.at(i)).epsilon(1e-12));
  }

  Tensor zeros({32, 5});
  Tensor z = scalar_long_conv(q, zeros);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.at(i) == doctest::Approx(0.0).scale(1).epsilon(1e-14));

  // d=1 reduces to circular_conv
  Tensor q1 = random2(16, 1, rng);
  Tensor k1 = random2(16, 1, rng);
  Tensor direct = circular_conv(q1.reshaped({16}), k1.reshaped({16}));
  Tensor chan = scalar_long_conv(q1, k1);
  CHECK(rel_deviation(chan.reshaped({16}), direct) < 1e-12);
}

TEST_CASE("levi-civita plan structure") {
  const auto& plan = LeviCivitaPlan::standard();
  CHECK(plan.entries.size() == 6);
  int per_l[3] = {0, 0, 0};
  for (const auto& e : plan.entries) {
    CHECK((e.sign == 1.0 || e.sign == -1.0));
    CHECK(e.l >= 0);
    CHECK(e.l < 3);
    CHECK(e.h != e.p);
    per_l[e.l] += 1;
  }
  for (int c : per_l) CHECK(c == 2);
}

TEST_CASE("vector convolution basics") {
  // k = delta_0 * e_y, q_0 = e_x -> u_0 = e_z
  Tensor q({4, 3});
  q.set(0, 1.0);  // e_x at token 0
  Tensor k({4, 3});
  k.set(1, 1.0);  // e_y at token 0
  Tensor u = vector_long_conv(q, k);
  CHECK(u.at(2) == doctest::Approx(1.0).epsilon(1e-12));
  for (int64_t i = 0; i < u.numel(); ++i)
    if (i != 2) CHECK(std::abs(u.at(i)) < 1e-12);

  Tensor zeros({4, 3});
  Tensor uz = vector_long_conv(q, zeros);
  for (int64_t i = 0; i < uz.numel(); ++i) CHECK(uz.at(i) == 0.0);

  // N=1: single cross product e_x x e_y = e_z
  Tensor ex = Tensor::from({1, 3}, {1, 0, 0});
  Tensor ey = Tensor::from({1, 3}, {0, 1, 0});
  Tensor ez = vector_long_conv_naive(ex, ey);
  CHECK(ez.at(0) == 0.0);
  CHECK(ez.at(1) == 0.0);
  CHECK(ez.at(2) == doctest::Approx(1.0));

  // v x v = 0
  Tensor same = vector_long_conv_naive(ex, ex);
  for (int64_t i = 0; i < 3; ++i) CHECK(same.at(i) == 0.0);

  Tensor bad({4, 4});
  CHECK_THROWS_AS(vector_long_conv(bad, bad), Error);
}

TEST_CASE("vector convolution equals the naive oracle") {
  Rng rng(23);
  for (int64_t n : {1, 2, 3, 5, 8, 16, 64, 257}) {
    Tensor q = random2(n, 3, rng);
    Tensor k = random2(n, 3, rng);
    CAPTURE(n);
    CHECK(rel_deviation(vector_long_conv(q, k), vector_long_conv_naive(q, k)) < 1e-10);
  }
}

TEST_CASE("vector convolution rotation equivariance") {
  Rng rng(24);
  double worst = 0;
  for (int rep = 0; rep < 20; ++rep) {
    Tensor r = random_rotation(rng);
    Tensor q = random2(16, 3, rng);
    Tensor k = random2(16, 3, rng);
    Tensor lhs = vector_long_conv(rotate_rows(q, r), rotate_rows(k, r));
    Tensor rhs = rotate_rows(vector_long_conv(q, k), r);
    worst = std::max(worst, rel_deviation(lhs, rhs));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("kernel shift theorem") {
  Rng rng(25);
  Tensor q = random2(24, 3, rng);
  Tensor k = random2(24, 3, rng);
  int64_t s = 5;
  Tensor ks({24, 3});
  for (int64_t i = 0; i < 24; ++i)
    for (int64_t c = 0; c < 3; ++c) ks.set(((i + s) % 24) * 3 + c, k.at(i * 3 + c));
  Tensor base = vector_long_conv(q, k);
  Tensor shifted = vector_long_conv(q, ks);
  Tensor expect({24, 3});
  for (int64_t i = 0; i < 24; ++i)
    for (int64_t c = 0; c < 3; ++c) expect.set(((i + s) % 24) * 3 + c, base.at(i * 3 + c));
  CHECK(rel_deviation(shifted, expect) < 1e-10);
}

TEST_CASE("geometric convolution reduces to its parts") {
  Rng rng(26);
  Tensor a1 = random2(12, 1, rng);
  Tensor a2 = random2(12, 1, rng);
  Tensor r1 = random2(12, 3, rng);
  Tensor r2 = random2(12, 3, rng);

  GeometricConvOut only_scalar = geometric_long_conv(a1, r1, a2, r2, {1, 0, 0, 0, 0});
  Tensor aa = scalar_long_conv(a1, a2);
  CHECK(rel_deviation(only_scalar.alpha3, aa) < 1e-12);
  CHECK(frobenius_norm(only_scalar.r3) == 0.0);

  GeometricConvOut only_cross = geometric_long_conv(a1, r1, a2, r2, {0, 0, 0, 0, 1});
  CHECK(frobenius_norm(only_cross.alpha3) == 0.0);
  CHECK(rel_deviation(only_cross.r3, vector_long_conv(r1, r2)) < 1e-12);
}

TEST_CASE("geometric convolution matches the term-by-term oracle") {
  Rng rng(27);
  for (int64_t n : {1, 2, 3, 5, 8, 12, 64, 257}) {
    Tensor a1 = random2(n, 1, rng);
    Tensor a2 = random2(n, 1, rng);
    Tensor r1 = random2(n, 3, rng);
    Tensor r2 = random2(n, 3, rng);
    GeometricConvWeights lw{rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
                            rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
    GeometricConvOut fast = geometric_long_conv(a1, r1, a2, r2, lw);
    GeometricConvOut loop = geometric_terms_loop(a1, r1, a2, r2, lw);
    GeometricConvOut lib = geometric_long_conv_naive(a1, r1, a2, r2, lw);
    CAPTURE(n);
    CHECK(rel_deviation(fast.alpha3, loop.alpha3) < 1e-10);
    CHECK(rel_deviation(fast.r3, loop.r3) < 1e-10);
    CHECK(rel_deviation(lib.alpha3, loop.alpha3) < 1e-12);
    CHECK(rel_deviation(lib.r3, loop.r3) < 1e-12);
  }
}

TEST_CASE("geometric convolution is linear in the interaction weights") {
  Rng rng(28);
  Tensor a1 = random2(10, 1, rng);
  Tensor a2 = random2(10, 1, rng);
  Tensor r1 = random2(10, 3, rng);
  Tensor r2 = random2(10, 3, rng);
  GeometricConvWeights wa{0.3, -0.7, 1.2, 0.4, -0.9};
  GeometricConvWeights wb{-1.1, 0.6, -0.2, 1.5, 0.8};
  GeometricConvWeights wsum{wa.l1 + wb.l1, wa.l2 + wb.l2, wa.l3 + wb.l3, wa.l4 + wb.l4, wa.l5 + wb.l5};
  GeometricConvOut oa = geometric_long_conv(a1, r1, a2, r2, wa);
  GeometricConvOut ob = geometric_long_conv(a1, r1, a2, r2, wb);
  GeometricConvOut os = geometric_long_conv(a1, r1, a2, r2, wsum);
  Tensor sum_alpha({10, 1}), sum_r({10, 3});
  for (int64_t i = 0; i < 10; ++i) sum_alpha.set(i, oa.alpha3.at(i) + ob.alpha3.at(i));
  for (int64_t i = 0; i < 30; ++i) sum_r.set(i, oa.r3.at(i) + ob.r3.at(i));
  CHECK(rel_deviation(os.alpha3, sum_alpha) < 1e-12);
  CHECK(rel_deviation(os.r3, sum_r) < 1e-12);
}

TEST_CASE("scalarize") {
  Rng rng(29);
  Tensor f = random2(6, 4, rng);
  Tensor e1 = Tensor::from({4}, {1, 0, 0, 0});
  Tensor first = scalarize(f, e1);
  for (int64_t i = 0; i < 6; ++i) CHECK(first.at(i) == f.at(i * 4));

  Tensor zeros({4});
  Tensor z = scalarize(f, zeros);
  for (int64_t i = 0; i < 6; ++i) CHECK(z.at(i) == 0.0);

  Tensor w({4});
  for (int64_t i = 0; i < 4; ++i) w.set(i, rng.uniform(-1, 1));
  Tensor out = scalarize(f, w);
  for (int64_t i = 0; i < 6; ++i) {
    double acc = 0;
    for (int64_t j = 0; j < 4; ++j) acc += f.at(i * 4 + j) * w.at(j);
    CHECK(out.at(i) == doctest::Approx(acc).epsilon(1e-14));
  }
  Tensor w3({3});
  CHECK_THROWS_AS(scalarize(f, w3), Error);
}

TEST_CASE("tape-level geometric conv agrees with the raw kernel") {
  Rng rng(30);
  Tensor a1 = random2(9, 1, rng);
  Tensor a2 = random2(9, 1, rng);
  Tensor r1 = random2(9, 3, rng);
  Tensor r2 = random2(9, 3, rng);
  GeometricConvParams params{constant(Tensor::scalar(0.7)), constant(Tensor::scalar(1.3)),
                             constant(Tensor::scalar(-0.4)), constant(Tensor::scalar(0.9)),
                             constant(Tensor::scalar(1.1)), constant(Tensor::zeros({1, 1}))};
  GeometricConvValues v = geometric_conv(constant(a1), constant(r1), constant(a2), constant(r2), params);
  GeometricConvOut raw = geometric_long_conv(a1, r1, a2, r2, {0.7, 1.3, -0.4, 0.9, 1.1});
  CHECK(rel_deviation(v.alpha3.tensor(), raw.alpha3) < 1e-12);
  CHECK(rel_deviation(v.r3.tensor(), raw.r3) < 1e-12);
}

}  // TEST_SUITE
