#include <doctest.h>

#include <cmath>

#include "ghyena/block.hpp"
#include "ghyena/checks.hpp"
#include "ghyena/geometry.hpp"
#include "ghyena/gradcheck.hpp"
#include "ghyena/model.hpp"
#include "ghyena/rng.hpp"

using namespace ghyena;

namespace {

Tensor random2(int64_t n, int64_t m, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t({n, m});
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

double silu_ref(double x) { return x / (1.0 + std::exp(-x)); }

// plain-loop re-implementation of the chain EGNN projection
struct LoopProjOut {
  Tensor f, x;
};

LoopProjOut egnn_loop_oracle(const Tensor& f, const Tensor& x, const ProjectionParams& p,
                             const Tensor* omega) {
  int64_t n = f.dim(0), d = f.dim(1);
  auto matvec = [&](const Tensor& w, const double* in, int64_t k, double* out) {
    for (int64_t j = 0; j < d; ++j) out[j] = 0;
    for (int64_t a = 0; a < k; ++a)
      for (int64_t j = 0; j < d; ++j) out[j] += in[a] * w.at(a * d + j);
  };
  std::vector<double> msum(static_cast<size_t>(n * d), 0.0);
  Tensor x_out = x;
  std::vector<double> fi(static_cast<size_t>(d)), fj(static_cast<size_t>(d)), tmp1(static_cast<size_t>(d)),
      tmp2(static_cast<size_t>(d));
  for (int64_t i = 0; i < n; ++i) {
    double upd[3] = {0, 0, 0};
    int cnt = 0;
    for (int64_t j : {i - 1, i + 1}) {
      if (j < 0 || j >= n) continue;
      ++cnt;
      double diff[3];
      double dist2 = 0;
      for (int64_t c = 0; c < 3; ++c) {
        diff[c] = x.at(i * 3 + c) - x.at(j * 3 + c);
        dist2 += diff[c] * diff[c];
      }
      double dist = std::sqrt(dist2);
      for (int64_t c = 0; c < d; ++c) {
        fi[static_cast<size_t>(c)] = f.at(i * d + c);
        fj[static_cast<size_t>(c)] = f.at(j * d + c);
      }
      matvec(*p.phi_l.w_self, fi.data(), d, tmp1.data());
      matvec(*p.phi_l.w_nb, fj.data(), d, tmp2.data());
      double s = p.phi_x.b->at(0);
      for (int64_t c = 0; c < d; ++c) {
        double pre = tmp1[static_cast<size_t>(c)] + tmp2[static_cast<size_t>(c)] +
                     dist * p.phi_l.w_dist->at(c) + p.phi_l.b->at(c);
        double m = silu_ref(pre);
        msum[static_cast<size_t>(i * d + c)] += m;
        s += m * p.phi_x.w->at(c);
      }
      for (int64_t c = 0; c < 3; ++c) upd[c] += diff[c] * s;
    }
    for (int64_t c = 0; c < 3; ++c)
      x_out.set(i * 3 + c, x.at(i * 3 + c) + upd[c] / static_cast<double>(cnt));
  }
  if (omega != nullptr) {
    int64_t g_count = omega->dim(1);
    std::vector<double> gx(static_cast<size_t>(g_count * 3), 0.0);
    std::vector<double> gh(static_cast<size_t>(g_count * d), 0.0);
    for (int64_t j = 0; j < g_count; ++j) {
      double cj = 0;
      for (int64_t i = 0; i < n; ++i) cj += omega->at(i * g_count + j);
      for (int64_t i = 0; i < n; ++i) {
        double w = omega->at(i * g_count + j);
        for (int64_t c = 0; c < 3; ++c) gx[static_cast<size_t>(j * 3 + c)] += w * x.at(i * 3 + c) / cj;
        for (int64_t c = 0; c < d; ++c) gh[static_cast<size_t>(j * d + c)] += w * f.at(i * d + c) / cj;
      }
    }
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t c = 0; c < d; ++c) fi[static_cast<size_t>(c)] = f.at(i * d + c);
      matvec(*p.phi_g.w_self, fi.data(), d, tmp1.data());
      for (int64_t j = 0; j < g_count; ++j) {
        double dist2 = 0;
        for (int64_t c = 0; c < 3; ++c) {
          double dv = x.at(i * 3 + c) - gx[static_cast<size_t>(j * 3 + c)];
          dist2 += dv * dv;
        }
        double ld = std::log1p(std::sqrt(dist2));
        matvec(*p.phi_g.w_glob, gh.data() + j * d, d, tmp2.data());
        for (int64_t c = 0; c < d; ++c) {
          double pre = tmp1[static_cast<size_t>(c)] + tmp2[static_cast<size_t>(c)] +
                       ld * p.phi_g.w_dist->at(c) + p.phi_g.b->at(c);
          msum[static_cast<size_t>(i * d + c)] += silu_ref(pre);
        }
      }
    }
  }
  LoopProjOut out;
  out.f = Tensor({n, d});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t c = 0; c < d; ++c) fi[static_cast<size_t>(c)] = f.at(i * d + c);
    matvec(*p.phi_f.w_self, fi.data(), d, tmp1.data());
    matvec(*p.phi_f.w_msg, msum.data() + i * d, d, tmp2.data());
    for (int64_t c = 0; c < d; ++c)
      out.f.set(i * d + c, tmp1[static_cast<size_t>(c)] + tmp2[static_cast<size_t>(c)] + p.phi_f.b->at(c));
  }
  out.x = x_out;
  return out;
}

}  // namespace

TEST_SUITE("block") {

TEST_CASE("siren weights contract") {
  ParamStore store;
  Rng rng(41);
  SirenNet net = make_siren(store, "s.", 5, rng, InitMode::Default, Dtype::F64);
  Lease lease(nullptr);
  Value w = siren_weights(7, net, lease, Dtype::F64);
  CHECK(w.tensor().dim(0) == 7);
  CHECK(w.tensor().dim(1) == 5);
  for (int64_t i = 0; i < w.tensor().numel(); ++i) CHECK(w.tensor().at(i) > 0.0);

  // zeroed final layer with bias b -> every weight softplus(b)
  for (int64_t i = 0; i < net.w3->numel(); ++i) net.w3->set(i, 0.0);
  for (int64_t i = 0; i < net.b3->numel(); ++i) net.b3->set(i, 0.3);
  Value w2 = siren_weights(7, net, lease, Dtype::F64);
  double expect = std::log1p(std::exp(0.3));
  for (int64_t i = 0; i < w2.tensor().numel(); ++i)
    CHECK(w2.tensor().at(i) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("siren weights pass a gradient check") {
  ParamStore store;
  Rng rng(42);
  SirenNet net = make_siren(store, "s.", 3, rng, InitMode::RandomAll, Dtype::F64);
  Tensor probe({6, 3});
  for (int64_t i = 0; i < probe.numel(); ++i) probe.set(i, rng.uniform(-1, 1));
  auto f = [&](Lease& lease) {
    return sum_all(mul(siren_weights(6, net, lease, Dtype::F64), constant(probe)));
  };
  CHECK(finite_diff_check(f, store, 1e-6) < 1e-4);
}

TEST_CASE("global context tokens") {
  Rng rng(43);
  Tensor f = random2(6, 4, rng);
  Tensor x = random2(6, 3, rng);

  // uniform weights produce the centroid / feature mean
  Tensor ones({6, 2});
  for (int64_t i = 0; i < ones.numel(); ++i) ones.set(i, 1.0);
  GlobalTokens g = compute_global_tokens(constant(f), constant(x), constant(ones));
  for (int64_t j = 0; j < 2; ++j)
    for (int64_t c = 0; c < 3; ++c) {
      double mean = 0;
      for (int64_t i = 0; i < 6; ++i) mean += x.at(i * 3 + c) / 6.0;
      CHECK(g.g.tensor().at(j * 3 + c) == doctest::Approx(mean).epsilon(1e-12));
    }

  // one-hot rows select a token
  Tensor onehot({6, 1});
  onehot.set(3, 1.0);
  // C_j must stay positive; zero rows elsewhere keep C=1
  GlobalTokens sel = compute_global_tokens(constant(f), constant(x), constant(onehot));
  for (int64_t c = 0; c < 3; ++c)
    CHECK(sel.g.tensor().at(c) == doctest::Approx(x.at(3 * 3 + c)).epsilon(1e-12));

  // nonpositive normalizer is an error
  Tensor zeros({6, 1});
  CHECK_THROWS_AS(compute_global_tokens(constant(f), constant(x), constant(zeros)), Error);
}

TEST_CASE("egnn projection with identical coordinates keeps them") {
  ParamStore store;
  Rng rng(44);
  ProjectionParams p = make_projection(store, "p.", 4, 0, rng, InitMode::RandomAll, Dtype::F64);
  Tensor f = random2(5, 4, rng);
  Tensor x({5, 3});
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t c = 0; c < 3; ++c) x.set(i * 3 + c, 1.5);
  Lease lease(nullptr);
  SeqV seq{constant(f), constant(x), Tensor(), Tensor()};
  ProjOut out = egnn_projection(seq, std::nullopt, p, true, lease);
  CHECK(rel_deviation(out.x.tensor(), x) < 1e-15);
}

TEST_CASE("egnn projection matches the hand-rolled loop oracle") {
  ParamStore store;
  Rng rng(45);
  ProjectionParams p = make_projection(store, "p.", 4, 0, rng, InitMode::RandomAll, Dtype::F64);
  SirenNet net = make_siren(store, "s.", 3, rng, InitMode::RandomAll, Dtype::F64);
  Tensor f = random2(5, 4, rng);
  Tensor x = random2(5, 3, rng);
  Lease lease(nullptr);
  SeqV seq{constant(f), constant(x), Tensor(), Tensor()};
  Value omega = siren_weights(5, net, lease, Dtype::F64);
  GlobalTokens globals = compute_global_tokens(seq.f, seq.x, omega);
  ProjOut got = egnn_projection(seq, globals, p, true, lease);
  Tensor om = omega.tensor();
  LoopProjOut want = egnn_loop_oracle(f, x, p, &om);
  CHECK(rel_deviation(got.f.tensor(), want.f) < 1e-9);
  CHECK(rel_deviation(got.x.tensor(), want.x) < 1e-9);

  // without global tokens
  ProjOut local_only = egnn_projection(seq, std::nullopt, p, true, lease);
  LoopProjOut want_local = egnn_loop_oracle(f, x, p, nullptr);
  CHECK(rel_deviation(local_only.f.tensor(), want_local.f) < 1e-9);
  CHECK(rel_deviation(local_only.x.tensor(), want_local.x) < 1e-9);
}

TEST_CASE("egnn projection rejects an empty neighborhood") {
  ParamStore store;
  Rng rng(46);
  ProjectionParams p = make_projection(store, "p.", 4, 0, rng, InitMode::Default, Dtype::F64);
  Tensor f = random2(1, 4, rng);
  Tensor x = random2(1, 3, rng);
  Lease lease(nullptr);
  SeqV seq{constant(f), constant(x), Tensor(), Tensor()};
  CHECK_THROWS_AS(egnn_projection(seq, std::nullopt, p, true, lease), Error);
  // with local context disabled a single token is fine
  ProjOut out = egnn_projection(seq, std::nullopt, p, false, lease);
  CHECK(out.x.tensor().same_shape(x));
}

TEST_CASE("adjacency-list projection agrees with the chain fast path") {
  ParamStore store;
  Rng rng(47);
  ProjectionParams p = make_projection(store, "p.", 4, 0, rng, InitMode::RandomAll, Dtype::F64);
  Tensor f = random2(6, 4, rng);
  Tensor x = random2(6, 3, rng);
  Lease lease(nullptr);
  SeqV seq{constant(f), constant(x), Tensor(), Tensor()};
  std::vector<std::pair<int64_t, int64_t>> chain;
  for (int64_t i = 0; i < 6; ++i) {
    if (i > 0) chain.emplace_back(i, i - 1);
    if (i < 5) chain.emplace_back(i, i + 1);
  }
  ProjOut a = egnn_projection(seq, std::nullopt, p, true, lease);
  ProjOut b = egnn_projection_adjacency(seq, std::nullopt, p, chain, lease);
  CHECK(rel_deviation(a.f.tensor(), b.f.tensor()) < 1e-12);
  CHECK(rel_deviation(a.x.tensor(), b.x.tensor()) < 1e-12);

  // spatial neighborhoods: top-k within radius on a random 5-token graph
  auto edges = knn_radius_edges(x, 2, 10.0);
  CHECK_FALSE(edges.empty());
  ProjOut c = egnn_projection_adjacency(seq, std::nullopt, p, edges, lease);
  CHECK(c.f.tensor().all_finite());
}

TEST_CASE("identity-initialized projections broadcast the input") {
  ParamStore store;
  Rng rng(48);
  int64_t d = 4;
  ProjectionParams pq = make_projection(store, "q.", d, 0, rng, InitMode::Default, Dtype::F64);
  // make phi_f the identity on f and drop messages
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      pq.phi_f.w_self->set(i * d + j, i == j ? 1.0 : 0.0);
      pq.phi_f.w_msg->set(i * d + j, 0.0);
    }
  for (int64_t i = 0; i < d; ++i) pq.phi_f.b->set(i, 0.0);
  Tensor f = random2(5, d, rng);
  Tensor x = random2(5, 3, rng);
  Lease lease(nullptr);
  SeqV seq{constant(f), constant(x), Tensor(), Tensor()};
  QKVBundle bundle = qkv_project(seq, std::nullopt, pq, pq, pq, true, lease);
  CHECK(rel_deviation(bundle.q_inv.tensor(), f) < 1e-14);
  CHECK(rel_deviation(bundle.k_inv.tensor(), f) < 1e-14);
  CHECK(rel_deviation(bundle.v_inv.tensor(), f) < 1e-14);
  CHECK(rel_deviation(bundle.q_eqv.tensor(), x) < 1e-14);  // phi_x starts at zero
  CHECK(bundle.k_eqv.tensor().same_shape(x));
}

TEST_CASE("kv normalization") {
  Tensor v = Tensor::from({1, 3}, {3, 4, 0});
  Value nv = normalize_rows(constant(v));
  CHECK(nv.tensor().at(0) == doctest::Approx(0.6).epsilon(1e-8));
  CHECK(nv.tensor().at(1) == doctest::Approx(0.8).epsilon(1e-8));
  CHECK(nv.tensor().at(2) == 0.0);

  Tensor zero({2, 3});
  Value nz = normalize_rows(constant(zero));
  for (int64_t i = 0; i < nz.tensor().numel(); ++i) CHECK(nz.tensor().at(i) == 0.0);

  Rng rng(49);
  Tensor f = random2(6, 4, rng);
  Tensor x = random2(6, 3, rng);
  QKVBundle bundle{constant(f), constant(f), constant(f), constant(x), constant(x), constant(x)};
  QKVBundle normed = kv_normalize(bundle);
  for (int64_t i = 0; i < 6; ++i) {
    double nk = 0, nv2 = 0, ne = 0;
    for (int64_t c = 0; c < 4; ++c) {
      nk += normed.k_inv.tensor().at(i * 4 + c) * normed.k_inv.tensor().at(i * 4 + c);
      nv2 += normed.v_inv.tensor().at(i * 4 + c) * normed.v_inv.tensor().at(i * 4 + c);
    }
    for (int64_t c = 0; c < 3; ++c)
      ne += normed.k_eqv.tensor().at(i * 3 + c) * normed.k_eqv.tensor().at(i * 3 + c);
    CHECK(std::abs(std::sqrt(nk) - 1.0) < 1e-9);
    CHECK(std::abs(std::sqrt(nv2) - 1.0) < 1e-9);
    CHECK(std::abs(std::sqrt(ne) - 1.0) < 1e-9);
  }
  // queries pass through untouched
  CHECK(rel_deviation(normed.q_inv.tensor(), f) == 0.0);
}

TEST_CASE("selective gate") {
  ParamStore store;
  Rng rng(50);
  BlockConfig cfg;
  cfg.global_tokens = 4;
  HyenaBlockParams block = make_block(store, "b.", 4, 0, cfg, rng, InitMode::Default, Dtype::F64);
  Tensor f = random2(6, 4, rng);
  Tensor x = random2(6, 3, rng);
  Lease lease(nullptr);
  SeqV seq{constant(f), constant(x), Tensor(), Tensor()};

  // zero head -> sigmoid(0) = 0.5 everywhere
  Value m = selective_gate(seq, std::nullopt, block, GatingMode::QK, true, seq.f, lease);
  for (int64_t i = 0; i < m.tensor().numel(); ++i)
    CHECK(m.tensor().at(i) == doctest::Approx(0.5).epsilon(1e-12));

  Value ones = selective_gate(seq, std::nullopt, block, GatingMode::None, true, seq.f, lease);
  for (int64_t i = 0; i < ones.tensor().numel(); ++i) CHECK(ones.tensor().at(i) == 1.0);

  CHECK_THROWS_AS(parse_gating("sideways"), Error);

  // strictly inside (0,1) for a random head, and invariant under rotation
  for (int64_t i = 0; i < block.gate.w->numel(); ++i) block.gate.w->set(i, rng.uniform(-2, 2));
  block.gate.b->set(0, rng.uniform(-1, 1));
  Value mg = selective_gate(seq, std::nullopt, block, GatingMode::K, true, seq.f, lease);
  for (int64_t i = 0; i < mg.tensor().numel(); ++i) {
    CHECK(mg.tensor().at(i) > 0.0);
    CHECK(mg.tensor().at(i) < 1.0);
  }
  Tensor r = random_rotation(rng);
  SeqV rot{constant(f), constant(rotate_rows(x, r)), Tensor(), Tensor()};
  Value mr = selective_gate(rot, std::nullopt, block, GatingMode::QK, true, rot.f, lease);
  Value m0 = selective_gate(seq, std::nullopt, block, GatingMode::QK, true, seq.f, lease);
  CHECK(rel_deviation(mr.tensor(), m0.tensor()) < 1e-10);
}

TEST_CASE("gate application and value integration") {
  Rng rng(51);
  Tensor u_inv = random2(5, 4, rng);
  Tensor u_eqv = random2(5, 3, rng);
  Tensor v_inv = random2(5, 4, rng);
  Tensor v_eqv = random2(5, 3, rng);

  Tensor zeros_m({5, 1});
  auto [yz_i, yz_e] = apply_gate_and_values(constant(u_inv), constant(u_eqv), constant(zeros_m),
                                            constant(v_inv), constant(v_eqv));
  CHECK(frobenius_norm(yz_i.tensor()) == 0.0);
  CHECK(frobenius_norm(yz_e.tensor()) == 0.0);

  // parallel equivariant value zeroes the cross product
  Tensor m = Tensor::full({5, 1}, 0.7);
  auto [yi, ye] = apply_gate_and_values(constant(u_inv), constant(u_eqv), constant(m),
                                        constant(v_inv), constant(u_eqv));
  CHECK(frobenius_norm(ye.tensor()) < 1e-14);
  CHECK(yi.tensor().all_finite());

  Tensor bad_m({4, 1});
  CHECK_THROWS_AS(apply_gate_and_values(constant(u_inv), constant(u_eqv), constant(bad_m),
                                        constant(v_inv), constant(v_eqv)),
                  Error);
}

TEST_CASE("centering round trip") {
  Rng rng(52);
  Tensor x = random2(7, 3, rng);
  auto [xc, mu] = center(constant(x));
  Value back = uncenter(xc, mu);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(back.tensor().at(i) == x.at(i));
  Value mu2 = mean_axis(xc, 0);
  for (int64_t c = 0; c < 3; ++c) CHECK(std::abs(mu2.tensor().at(c)) < 1e-12);

  Tensor single = random2(1, 3, rng);
  auto [sc, smu] = center(constant(single));
  for (int64_t c = 0; c < 3; ++c) CHECK(sc.tensor().at(c) == 0.0);
}

TEST_CASE("hyena block is SE(3) equivariant") {
  ParamStore store;
  Rng rng(53);
  BlockConfig cfg;
  cfg.global_tokens = 4;
  HyenaBlockParams params = make_block(store, "b.", 5, 0, cfg, rng, InitMode::RandomAll, Dtype::F64);
  Tensor f = random2(10, 5, rng);
  Tensor x = random2(10, 3, rng);
  Lease lease(nullptr);
  SeqV seq{constant(f), constant(x), Tensor(), Tensor()};
  SeqV out = hyena_block_forward(params, seq, cfg, lease);

  Tensor r = random_rotation(rng);
  double t[3] = {1.3, -0.4, 2.2};
  Tensor xr = rotate_rows(x, r);
  for (int64_t i = 0; i < 10; ++i)
    for (int64_t c = 0; c < 3; ++c) xr.set(i * 3 + c, xr.at(i * 3 + c) + t[c]);
  SeqV moved{constant(f), constant(xr), Tensor(), Tensor()};
  SeqV out_moved = hyena_block_forward(params, moved, cfg, lease);

  Tensor expect = rotate_rows(out.x.tensor(), r);
  for (int64_t i = 0; i < 10; ++i)
    for (int64_t c = 0; c < 3; ++c) expect.set(i * 3 + c, expect.at(i * 3 + c) + t[c]);
  CHECK(rel_deviation(out_moved.x.tensor(), expect) < 1e-8);
  CHECK(rel_deviation(out_moved.f.tensor(), out.f.tensor()) < 1e-10);
}

TEST_CASE("with global context off the block stacks two projections") {
  ParamStore store;
  Rng rng(54);
  BlockConfig cfg;
  cfg.local_context = true;
  cfg.global_context = false;
  cfg.gating = GatingMode::None;
  cfg.kv_norm = false;
  cfg.centering = false;
  HyenaBlockParams params = make_block(store, "b.", 4, 0, cfg, rng, InitMode::RandomAll, Dtype::F64);
  Tensor f = random2(8, 4, rng);
  Tensor x = random2(8, 3, rng);
  Lease lease(nullptr);
  SeqV seq{constant(f), constant(x), Tensor(), Tensor()};
  SeqV got = hyena_block_forward(params, seq, cfg, lease);

  // explicit composition: V projection, invariant residual, output projection
  ProjOut v = egnn_projection(seq, std::nullopt, params.proj_v, true, lease);
  SeqV mid{add(v.f, seq.f), v.x, Tensor(), Tensor()};
  ProjOut o = egnn_projection(mid, std::nullopt, params.proj_out, true, lease);
  CHECK(rel_deviation(got.f.tensor(), o.f.tensor()) < 1e-14);
  CHECK(rel_deviation(got.x.tensor(), o.x.tensor()) < 1e-14);
}

TEST_CASE("one-block forward/backward passes a gradient check") {
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden = 6;
  cfg.depth = 1;
  cfg.block.global_tokens = 3;
  GHyenaModel model = build_model(cfg, 55, InitMode::RandomAll);
  for (auto& e : model.params.entries())
    for (int64_t i = 0; i < e.value->numel(); ++i) e.value->set(i, e.value->at(i) * 2.0);
  Rng rng(56);
  Tensor x = random2(9, 3, rng);
  Tensor f = random2(9, 5, rng);
  Tensor target = random2(1, 3, rng).reshaped({3});
  auto loss_fn = [&](Lease& lease) {
    Value pred = model_forward_pool(model, x, f, lease);
    Value diff = sub(pred, constant(target));
    return scale(sum_all(mul(diff, diff)), 1.0 / 3.0);
  };
  CHECK(finite_diff_check(loss_fn, model.params, 1e-6) < 1e-4);
}

TEST_CASE("every toggle combination runs on a 16-token sequence") {
  Rng rng(57);
  Tensor f = random2(16, 16, rng);
  Tensor x = random2(16, 3, rng);
  int ran = 0;
  for (int local = 0; local < 2; ++local)
    for (int global = 0; global < 2; ++global)
      for (int gating = 0; gating < 3; ++gating)
        for (int kvn = 0; kvn < 2; ++kvn)
          for (int geo = 0; geo < 2; ++geo) {
            ModelConfig cfg;
            cfg.input_dim = 16;
            cfg.hidden = 8;
            cfg.depth = 1;
            cfg.block.local_context = local == 1;
            cfg.block.global_context = global == 1;
            cfg.block.gating = gating == 0 ? GatingMode::QK : gating == 1 ? GatingMode::K : GatingMode::None;
            cfg.block.kv_norm = kvn == 1;
            cfg.block.geometric_conv = geo == 1;
            cfg.block.global_tokens = 4;
            GHyenaModel model = build_model(cfg, 57 + ran, InitMode::RandomAll);
            Lease lease(nullptr);
            GeometricSequence seq{f, x, Tensor(), Tensor()};
            SeqV out = model_forward_seq(model, to_values(seq), lease);
            CHECK(out.x.tensor().all_finite());
            CHECK(out.f.tensor().all_finite());
            ++ran;
          }
  CHECK(ran == 48);
}

TEST_CASE("kv normalization bounds output growth") {
  StabilityResult res = kv_norm_stability(58);
  CHECK(res.exponent_norm_on <= 1.1);
  CHECK(res.exponent_norm_off >= 2.5);
  CHECK(res.pass);
}

TEST_CASE("edge attributes feed the local messages") {
  ParamStore store;
  Rng rng(59);
  ProjectionParams p = make_projection(store, "p.", 4, 2, rng, InitMode::RandomAll, Dtype::F64);
  REQUIRE(p.phi_l.w_edge != nullptr);
  Tensor f = random2(5, 4, rng);
  Tensor x = random2(5, 3, rng);
  Tensor ed = random2(4, 2, rng);
  Tensor eu = random2(4, 2, rng);
  Lease lease(nullptr);
  SeqV with{constant(f), constant(x), ed, eu};
  SeqV without{constant(f), constant(x), Tensor(), Tensor()};
  ProjOut a = egnn_projection(with, std::nullopt, p, true, lease);
  ProjOut b = egnn_projection(without, std::nullopt, p, true, lease);
  // absent attributes behave as zeros, so the two disagree when ed != 0
  CHECK(rel_deviation(a.f.tensor(), b.f.tensor()) > 1e-6);
  Tensor zed({4, 2});
  SeqV zeroed{constant(f), constant(x), zed, zed};
  ProjOut c = egnn_projection(zeroed, std::nullopt, p, true, lease);
  CHECK(rel_deviation(c.f.tensor(), b.f.tensor()) < 1e-14);
}

}  // TEST_SUITE
