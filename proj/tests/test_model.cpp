#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ghyena/geometry.hpp"
#include "ghyena/gradcheck.hpp"
#include "ghyena/model.hpp"
#include "ghyena/rng.hpp"

using namespace ghyena;

namespace {

Tensor random2(int64_t n, int64_t m, Rng& rng) {
  Tensor t({n, m});
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-1, 1));
  return t;
}

// direct evaluation of the three attention formulas, kept independent of the
// tape implementation
Tensor dot_attention_loops(const Tensor& q, const Tensor& k, const Tensor& v) {
  int64_t n = q.dim(0);
  Tensor out({n, 3});
  double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> logits(static_cast<size_t>(n));
    double mx = -1e300;
    for (int64_t j = 0; j < n; ++j) {
      double c = 0;
      for (int64_t d = 0; d < 3; ++d) c += q.at(i * 3 + d) * k.at(j * 3 + d);
      logits[static_cast<size_t>(j)] = c * inv_sqrt_n;
      mx = std::max(mx, logits[static_cast<size_t>(j)]);
    }
    double denom = 0;
    for (auto& l : logits) {
      l = std::exp(l - mx);
      denom += l;
    }
    for (int64_t d = 0; d < 3; ++d) {
      double acc = 0;
      for (int64_t j = 0; j < n; ++j) acc += logits[static_cast<size_t>(j)] / denom * v.at(j * 3 + d);
      out.set(i * 3 + d, acc);
    }
  }
  return out;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("equivariant pooling") {
  Tensor same({4, 3});
  for (int64_t i = 0; i < 4; ++i) {
    same.set(i * 3, 0.3);
    same.set(i * 3 + 1, -1.2);
    same.set(i * 3 + 2, 0.9);
  }
  Value pooled = pool_eqv_vector(constant(same));
  CHECK(pooled.tensor().at(0) == doctest::Approx(0.3));
  CHECK(pooled.tensor().at(1) == doctest::Approx(-1.2));
  CHECK(pooled.tensor().at(2) == doctest::Approx(0.9));

  Tensor two = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
  Value p2 = pool_eqv_vector(constant(two));
  CHECK(p2.tensor().at(0) == doctest::Approx(0.5));
  CHECK(p2.tensor().at(1) == doctest::Approx(0.5));
  CHECK(p2.tensor().at(2) == 0.0);

  Rng rng(61);
  Tensor x = random2(6, 3, rng);
  Tensor r = random_rotation(rng);
  Value a = pool_eqv_vector(constant(rotate_rows(x, r)));
  Tensor b = rotate_rows(pool_eqv_vector(constant(x)).tensor(), r);
  CHECK(rel_deviation(a.tensor(), b) < 1e-14);
}

TEST_CASE("dot-product vector attention") {
  Rng rng(62);
  // N=1 returns the value
  Tensor q1 = random2(1, 3, rng);
  Tensor k1 = random2(1, 3, rng);
  Tensor v1 = random2(1, 3, rng);
  Value u1 = dot_product_vector_attention(constant(q1), constant(k1), constant(v1));
  CHECK(rel_deviation(u1.tensor(), v1) < 1e-14);

  // equal logits average the values
  Tensor qz({4, 3});
  Tensor kz = random2(4, 3, rng);
  Tensor vz = random2(4, 3, rng);
  Value uz = dot_product_vector_attention(constant(qz), constant(kz), constant(vz));
  for (int64_t d = 0; d < 3; ++d) {
    double mean = 0;
    for (int64_t j = 0; j < 4; ++j) mean += vz.at(j * 3 + d) / 4.0;
    for (int64_t i = 0; i < 4; ++i) CHECK(uz.tensor().at(i * 3 + d) == doctest::Approx(mean).epsilon(1e-12));
  }

  // random case matches the independent loop evaluation
  Tensor q = random2(8, 3, rng);
  Tensor k = random2(8, 3, rng);
  Tensor v = random2(8, 3, rng);
  Value u = dot_product_vector_attention(constant(q), constant(k), constant(v));
  CHECK(rel_deviation(u.tensor(), dot_attention_loops(q, k, v)) < 1e-10);

  // attention rows are stochastic
  AttentionMatrices m = dot_product_attention_matrices(q, k);
  for (int64_t i = 0; i < 8; ++i) {
    double row = 0;
    for (int64_t j = 0; j < 8; ++j) {
      row += m.s.at(i * 8 + j);
      CHECK(m.s.at(i * 8 + j) >= 0.0);
    }
    CHECK(std::abs(row - 1.0) < 1e-9);
  }
  Tensor bad = random2(7, 3, rng);
  CHECK_THROWS_AS(dot_product_vector_attention(constant(q), constant(bad), constant(v)), Error);
}

TEST_CASE("cross-product vector attention") {
  // all pairs parallel -> zero output
  Tensor q({3, 3});
  Tensor k({3, 3});
  Tensor v({3, 3});
  for (int64_t i = 0; i < 3; ++i) {
    q.set(i * 3, static_cast<double>(i + 1));
    k.set(i * 3, 2.0 * static_cast<double>(i + 1));
    v.set(i * 3 + 1, 1.0);
  }
  Tensor u = cross_product_vector_attention(q, k, v);
  CHECK(frobenius_norm(u) < 1e-14);

  // N=1 basis identity: S = e_z, u = e_z x e_x = e_y
  Tensor ex = Tensor::from({1, 3}, {1, 0, 0});
  Tensor ey = Tensor::from({1, 3}, {0, 1, 0});
  Tensor u1 = cross_product_vector_attention(ex, ey, ex);
  CHECK(u1.at(0) == doctest::Approx(0.0));
  CHECK(u1.at(1) == doctest::Approx(1.0));
  CHECK(u1.at(2) == doctest::Approx(0.0));
}

TEST_CASE("g-transformer attention consumes the value path at N=1") {
  Rng rng(63);
  Tensor v1 = random2(1, 3, rng);
  Value u = dot_product_vector_attention(constant(random2(1, 3, rng)), constant(random2(1, 3, rng)),
                                         constant(v1));
  CHECK(rel_deviation(u.tensor(), v1) < 1e-14);
}

TEST_CASE("model forward basics") {
  // depth-0 model with identity embedding pools the coordinates
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = 3;
  cfg.depth = 0;
  GHyenaModel model = build_model(cfg, 64);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j) model.embed_w->set(i * 3 + j, i == j ? 1.0 : 0.0);
  Rng rng(64);
  Tensor x = random2(5, 3, rng);
  Tensor f = random2(5, 3, rng);
  Lease lease(nullptr);
  Value pred = model_forward_pool(model, x, f, lease);
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0;
    for (int64_t i = 0; i < 5; ++i) mean += x.at(i * 3 + c) / 5.0;
    CHECK(pred.tensor().at(c) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("model prediction rotates with the input") {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = 8;
  cfg.depth = 2;
  cfg.block.global_tokens = 4;
  GHyenaModel model = build_model(cfg, 65, InitMode::RandomAll);
  Rng rng(66);
  Tensor x = random2(10, 3, rng);
  Tensor f = random2(10, 6, rng);
  Tensor r = random_rotation(rng);
  Lease lease(nullptr);
  Value base = model_forward_pool(model, x, f, lease);
  Value rot = model_forward_pool(model, rotate_rows(x, r), f, lease);
  CHECK(rel_deviation(rot.tensor(), rotate_rows(base.tensor(), r)) < 1e-8);
}

TEST_CASE("gtransformer block is SE(3) equivariant") {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = 8;
  cfg.depth = 1;
  cfg.kind = BlockKind::GTransformer;
  cfg.block.global_tokens = 4;
  GHyenaModel model = build_model(cfg, 67, InitMode::RandomAll);
  Rng rng(68);
  Tensor x = random2(9, 3, rng);
  Tensor f = random2(9, 6, rng);
  Tensor r = random_rotation(rng);
  double t[3] = {0.5, -1.5, 0.25};
  Tensor xr = rotate_rows(x, r);
  for (int64_t i = 0; i < 9; ++i)
    for (int64_t c = 0; c < 3; ++c) xr.set(i * 3 + c, xr.at(i * 3 + c) + t[c]);
  Lease lease(nullptr);
  GeometricSequence sa{f, x, Tensor(), Tensor()};
  GeometricSequence sb{f, xr, Tensor(), Tensor()};
  SeqV oa = model_forward_seq(model, to_values(sa), lease);
  SeqV ob = model_forward_seq(model, to_values(sb), lease);
  Tensor expect = rotate_rows(oa.x.tensor(), r);
  for (int64_t i = 0; i < 9; ++i)
    for (int64_t c = 0; c < 3; ++c) expect.set(i * 3 + c, expect.at(i * 3 + c) + t[c]);
  CHECK(rel_deviation(ob.x.tensor(), expect) < 1e-8);
  CHECK(rel_deviation(ob.f.tensor(), oa.f.tensor()) < 1e-10);
}

TEST_CASE("end-to-end gradcheck of the pooled MSE") {
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = 6;
  cfg.depth = 2;
  cfg.block.global_tokens = 3;
  GHyenaModel model = build_model(cfg, 69, InitMode::RandomAll);
  for (auto& e : model.params.entries())
    for (int64_t i = 0; i < e.value->numel(); ++i) e.value->set(i, e.value->at(i) * 2.0);
  Rng rng(70);
  Tensor x = random2(8, 3, rng);
  Tensor f = random2(8, 4, rng);
  Tensor target = Tensor::from({3}, {0.4, -0.2, 0.9});
  auto loss_fn = [&](Lease& lease) {
    Value pred = model_forward_pool(model, x, f, lease);
    Value diff = sub(pred, constant(target));
    return scale(sum_all(mul(diff, diff)), 1.0 / 3.0);
  };
  CHECK(finite_diff_check(loss_fn, model.params, 1e-6) < 1e-4);
}

TEST_CASE("default configuration lands near the published parameter count") {
  ModelConfig cfg;  // 2 blocks, hidden 80, input 16
  GHyenaModel model = build_model(cfg, 71);
  double count = static_cast<double>(model.param_count());
  MESSAGE("parameter count: ", count);
  CHECK(count > 480000.0 * 0.8);
  CHECK(count < 480000.0 * 1.2);
}

TEST_CASE("checkpoint round trip") {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = 8;
  cfg.depth = 2;
  cfg.block.global_tokens = 4;
  cfg.block.gating = GatingMode::K;
  GHyenaModel model = build_model(cfg, 72, InitMode::RandomAll);
  model.trained_epochs = 11;
  std::string path = temp_path("ghyena_ckpt_test.ghk");
  save_model(model, path);

  GHyenaModel loaded = load_model(path);
  CHECK(loaded.cfg.hidden == 8);
  CHECK(loaded.cfg.depth == 2);
  CHECK(loaded.cfg.block.gating == GatingMode::K);
  CHECK(loaded.trained_epochs == 11);
  REQUIRE(loaded.params.size() == model.params.size());
  for (size_t i = 0; i < model.params.size(); ++i) {
    const auto& a = model.params.entries()[i];
    const auto& b = loaded.params.entries()[i];
    REQUIRE(a.name == b.name);
    for (int64_t k = 0; k < a.value->numel(); ++k) CHECK(a.value->at(k) == b.value->at(k));
  }

  // identical predictions after reload
  Rng rng(73);
  Tensor x = random2(8, 3, rng);
  Tensor f = random2(8, 6, rng);
  Lease lease(nullptr);
  Value pa = model_forward_pool(model, x, f, lease);
  Value pb = model_forward_pool(loaded, x, f, lease);
  for (int64_t c = 0; c < 3; ++c) CHECK(pa.tensor().at(c) == pb.tensor().at(c));

  // magic bytes guard
  {
    std::FILE* fp = std::fopen(path.c_str(), "r+b");
    REQUIRE(fp != nullptr);
    std::fputs("XXXX", fp);
    std::fclose(fp);
  }
  CHECK_THROWS_AS(load_model(path), Error);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".manifest");
}

}  // TEST_SUITE
