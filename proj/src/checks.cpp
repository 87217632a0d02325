#include "ghyena/checks.hpp"

#include <cmath>
#include <sstream>

#include "ghyena/fft.hpp"
#include "ghyena/geometry.hpp"
#include "ghyena/gradcheck.hpp"
#include "ghyena/train.hpp"

namespace ghyena {

int count_failures(const std::vector<CheckResult>& results) {
  int n = 0;
  for (const auto& r : results)
    if (!r.pass) ++n;
  return n;
}

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

CheckResult rel_check(const std::string& name, double err, double tol) {
  std::ostringstream os;
  os << "rel err " << err << " (tol " << tol << ")";
  return {name, err < tol, os.str()};
}

GeometricSequence random_sequence(int64_t n, int64_t d, Rng& rng) {
  GeometricSequence seq;
  seq.f = random_tensor({n, d}, rng);
  seq.x = random_tensor({n, 3}, rng);
  return seq;
}

GeometricSequence transform_sequence(const GeometricSequence& seq, const Tensor& r, const double t[3]) {
  GeometricSequence out = seq;
  out.x = rotate_rows(seq.x, r);
  for (int64_t i = 0; i < out.x.dim(0); ++i)
    for (int64_t c = 0; c < 3; ++c) out.x.set(i * 3 + c, out.x.at(i * 3 + c) + t[c]);
  return out;
}

}  // namespace

// ---- oracle suite ------------------------------------------------------------

std::vector<CheckResult> oracle_suite(const LeviCivitaPlan& plan) {
  std::vector<CheckResult> out;
  const int64_t lengths[] = {1, 2, 3, 5, 8, 16, 64, 257};
  const double tol = 1e-10;
  Rng rng(20240414);
  for (int64_t n : lengths) {
    {
      Tensor q = random_tensor({n, 5}, rng);
      Tensor k = random_tensor({n, 5}, rng);
      double err = rel_deviation(scalar_long_conv(q, k), scalar_long_conv_naive(q, k));
      out.push_back(rel_check("oracle/scalar_conv/N=" + format_int(n), err, tol));
    }
    {
      Tensor q = random_tensor({n, 3}, rng);
      Tensor k = random_tensor({n, 3}, rng);
      double err = rel_deviation(vector_long_conv(q, k, plan), vector_long_conv_naive(q, k));
      out.push_back(rel_check("oracle/vector_conv/N=" + format_int(n), err, tol));
    }
    {
      Tensor a1 = random_tensor({n, 1}, rng);
      Tensor a2 = random_tensor({n, 1}, rng);
      Tensor r1 = random_tensor({n, 3}, rng);
      Tensor r2 = random_tensor({n, 3}, rng);
      GeometricConvWeights lw{rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
                              rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
      GeometricConvOut fast = geometric_long_conv(a1, r1, a2, r2, lw);
      GeometricConvOut slow = geometric_long_conv_naive(a1, r1, a2, r2, lw);
      double err = std::max(rel_deviation(fast.alpha3, slow.alpha3), rel_deviation(fast.r3, slow.r3));
      out.push_back(rel_check("oracle/geometric_conv/N=" + format_int(n), err, tol));
    }
    {
      std::vector<double> sig(static_cast<size_t>(n));
      for (auto& v : sig) v = rng.uniform(-1, 1);
      auto spec = rfft(sig);
      auto back = irfft(spec, n);
      double num = 0, den = 0;
      for (int64_t i = 0; i < n; ++i) {
        double d = back[static_cast<size_t>(i)] - sig[static_cast<size_t>(i)];
        num += d * d;
        den += sig[static_cast<size_t>(i)] * sig[static_cast<size_t>(i)];
      }
      double err = std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
      out.push_back(rel_check("oracle/rfft_roundtrip/N=" + format_int(n), err, 1e-12));
    }
  }
  return out;
}

// ---- equivariance suite --------------------------------------------------------

namespace {

struct EquivFixture {
  GHyenaModel model;
  GeometricSequence seq;
};

EquivFixture make_fixture(uint64_t seed, bool centering, BlockKind kind = BlockKind::Hyena) {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = 10;
  cfg.depth = 2;
  cfg.kind = kind;
  cfg.block.global_tokens = 4;
  cfg.block.centering = centering;
  EquivFixture fix{build_model(cfg, seed, InitMode::RandomAll), {}};
  Rng rng(seed + 1);
  fix.seq = random_sequence(12, 6, rng);
  return fix;
}

}  // namespace

std::vector<CheckResult> equivariance_suite(uint64_t seed, int group_elements) {
  std::vector<CheckResult> out;
  Rng rng(seed);
  const double tol_kernel = 1e-10;
  const double tol_block = 1e-8;

  double err_vec = 0, err_geo_a = 0, err_geo_r = 0;
  for (int e = 0; e < group_elements; ++e) {
    Tensor r = random_rotation(rng);
    Tensor q = random_tensor({16, 3}, rng);
    Tensor k = random_tensor({16, 3}, rng);
    Tensor lhs = vector_long_conv(rotate_rows(q, r), rotate_rows(k, r));
    Tensor rhs = rotate_rows(vector_long_conv(q, k), r);
    err_vec = std::max(err_vec, rel_deviation(lhs, rhs));

    Tensor a1 = random_tensor({16, 1}, rng);
    Tensor a2 = random_tensor({16, 1}, rng);
    GeometricConvWeights lw{0.7, 1.3, 0.9, 1.1, 0.8};
    GeometricConvOut base = geometric_long_conv(a1, q, a2, k, lw);
    GeometricConvOut rot = geometric_long_conv(a1, rotate_rows(q, r), a2, rotate_rows(k, r), lw);
    err_geo_a = std::max(err_geo_a, rel_deviation(rot.alpha3, base.alpha3));
    err_geo_r = std::max(err_geo_r, rel_deviation(rot.r3, rotate_rows(base.r3, r)));
  }
  out.push_back(rel_check("equivariance/vector_conv_rotation", err_vec, tol_kernel));
  out.push_back(rel_check("equivariance/geometric_conv_alpha_invariance", err_geo_a, tol_kernel));
  out.push_back(rel_check("equivariance/geometric_conv_r_equivariance", err_geo_r, tol_kernel));

  // layer-level checks on a shared fixture
  EquivFixture fix = make_fixture(seed, true);
  const auto& block = fix.model.blocks[0];
  int64_t n = fix.seq.n();
  Tensor f_embed;
  {
    Lease lease(nullptr);
    SeqV in = to_values(fix.seq);
    Value f = add(matmul(in.f, lease(fix.model.embed_w)), lease(fix.model.embed_b));
    f_embed = f.tensor();
  }

  auto project = [&](const GeometricSequence& s) {
    Lease lease(nullptr);
    SeqV in{constant(s.f), constant(s.x), Tensor(), Tensor()};
    Value omega = siren_weights(n, block.siren, lease, Dtype::F64);
    GlobalTokens globals = compute_global_tokens(in.f, in.x, omega);
    ProjOut p = egnn_projection(in, globals, block.proj_q, true, lease);
    return std::pair<Tensor, Tensor>(p.f.tensor(), p.x.tensor());
  };

  double err_glob = 0, err_proj_x = 0, err_proj_f = 0, err_gate = 0, err_gav = 0, err_kvn = 0;
  for (int e = 0; e < group_elements; ++e) {
    Tensor r = random_rotation(rng);
    double t[3] = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    GeometricSequence seq{f_embed, fix.seq.x, Tensor(), Tensor()};
    GeometricSequence moved = transform_sequence(seq, r, t);

    {
      Lease lease(nullptr);
      Value omega = siren_weights(n, block.siren, lease, Dtype::F64);
      GlobalTokens g0 = compute_global_tokens(constant(seq.f), constant(seq.x), omega);
      GlobalTokens g1 = compute_global_tokens(constant(moved.f), constant(moved.x), omega);
      Tensor expect = rotate_rows(g0.g.tensor(), r);
      for (int64_t j = 0; j < expect.dim(0); ++j)
        for (int64_t c = 0; c < 3; ++c) expect.set(j * 3 + c, expect.at(j * 3 + c) + t[c]);
      err_glob = std::max(err_glob, rel_deviation(g1.g.tensor(), expect));
      err_glob = std::max(err_glob, rel_deviation(g1.h.tensor(), g0.h.tensor()));
    }
    {
      auto [f0, x0] = project(seq);
      auto [f1, x1] = project(moved);
      Tensor expect = rotate_rows(x0, r);
      for (int64_t i = 0; i < expect.dim(0); ++i)
        for (int64_t c = 0; c < 3; ++c) expect.set(i * 3 + c, expect.at(i * 3 + c) + t[c]);
      err_proj_x = std::max(err_proj_x, rel_deviation(x1, expect));
      err_proj_f = std::max(err_proj_f, rel_deviation(f1, f0));
    }
    {
      // gate invariance and gated-value equivariance under rotation
      Lease lease(nullptr);
      SeqV in{constant(seq.f), constant(seq.x), Tensor(), Tensor()};
      SeqV inr{constant(moved.f), constant(rotate_rows(seq.x, r)), Tensor(), Tensor()};
      Value omega = siren_weights(n, block.siren, lease, Dtype::F64);
      GlobalTokens g0 = compute_global_tokens(in.f, in.x, omega);
      GlobalTokens g1 = compute_global_tokens(inr.f, inr.x, omega);
      Value m0 = selective_gate(in, g0, block, GatingMode::QK, true, in.f, lease);
      Value m1 = selective_gate(inr, g1, block, GatingMode::QK, true, inr.f, lease);
      err_gate = std::max(err_gate, rel_deviation(m1.tensor(), m0.tensor()));

      Tensor u_inv = random_tensor({n, 10}, rng);
      Tensor u_eqv = random_tensor({n, 3}, rng);
      Tensor v_inv = random_tensor({n, 10}, rng);
      Tensor v_eqv = random_tensor({n, 3}, rng);
      auto [y0i, y0e] = apply_gate_and_values(constant(u_inv), constant(u_eqv), m0, constant(v_inv), constant(v_eqv));
      auto [y1i, y1e] = apply_gate_and_values(constant(u_inv), constant(rotate_rows(u_eqv, r)), m0,
                                              constant(v_inv), constant(rotate_rows(v_eqv, r)));
      err_gav = std::max(err_gav, rel_deviation(y1i.tensor(), y0i.tensor()));
      err_gav = std::max(err_gav, rel_deviation(y1e.tensor(), rotate_rows(y0e.tensor(), r)));

      Value nv = normalize_rows(constant(v_eqv));
      Value nvr = normalize_rows(constant(rotate_rows(v_eqv, r)));
      err_kvn = std::max(err_kvn, rel_deviation(nvr.tensor(), rotate_rows(nv.tensor(), r)));
    }
  }
  out.push_back(rel_check("equivariance/global_tokens_se3", err_glob, 1e-10));
  out.push_back(rel_check("equivariance/egnn_projection_x_se3", err_proj_x, 1e-8));
  out.push_back(rel_check("equivariance/egnn_projection_f_invariance", err_proj_f, 1e-10));
  out.push_back(rel_check("equivariance/selective_gate_invariance", err_gate, 1e-10));
  out.push_back(rel_check("equivariance/apply_gate_and_values", err_gav, 1e-10));
  out.push_back(rel_check("equivariance/kv_normalize_rotation", err_kvn, 1e-10));

  // attention layers
  double err_dot = 0, err_cross = 0;
  for (int e = 0; e < group_elements; ++e) {
    Tensor r = random_rotation(rng);
    Tensor q = random_tensor({9, 3}, rng);
    Tensor k = random_tensor({9, 3}, rng);
    Tensor v = random_tensor({9, 3}, rng);
    {
      Value u0 = dot_product_vector_attention(constant(q), constant(k), constant(v));
      Value u1 = dot_product_vector_attention(constant(rotate_rows(q, r)), constant(rotate_rows(k, r)),
                                              constant(rotate_rows(v, r)));
      err_dot = std::max(err_dot, rel_deviation(u1.tensor(), rotate_rows(u0.tensor(), r)));
    }
    {
      Tensor u0 = cross_product_vector_attention(q, k, v);
      Tensor u1 = cross_product_vector_attention(rotate_rows(q, r), rotate_rows(k, r), rotate_rows(v, r));
      err_cross = std::max(err_cross, rel_deviation(u1, rotate_rows(u0, r)));
    }
  }
  out.push_back(rel_check("equivariance/dot_attention_rotation", err_dot, 1e-10));
  out.push_back(rel_check("equivariance/cross_attention_rotation", err_cross, 1e-10));

  // blocks and model, SE(3) with centering and SO(3) without
  auto run_model = [](const GHyenaModel& model, const GeometricSequence& seq) {
    Lease lease(nullptr);
    SeqV o = model_forward_seq(model, to_values(seq), lease);
    return std::pair<Tensor, Tensor>(o.f.tensor(), o.x.tensor());
  };

  for (int variant = 0; variant < 3; ++variant) {
    bool centering = variant != 1;
    BlockKind kind = variant == 2 ? BlockKind::GTransformer : BlockKind::Hyena;
    EquivFixture f2 = make_fixture(seed + 7 + variant, centering, kind);
    double err_x = 0, err_f = 0;
    for (int e = 0; e < group_elements; ++e) {
      Tensor r = random_rotation(rng);
      double t[3] = {0, 0, 0};
      if (centering)
        for (double& c : t) c = rng.uniform(-3, 3);
      GeometricSequence moved = transform_sequence(f2.seq, r, t);
      auto [fa, xa] = run_model(f2.model, f2.seq);
      auto [fb, xb] = run_model(f2.model, moved);
      Tensor expect = rotate_rows(xa, r);
      for (int64_t i = 0; i < expect.dim(0); ++i)
        for (int64_t c = 0; c < 3; ++c) expect.set(i * 3 + c, expect.at(i * 3 + c) + t[c]);
      err_x = std::max(err_x, rel_deviation(xb, expect));
      err_f = std::max(err_f, rel_deviation(fb, fa));
    }
    std::string label = variant == 0   ? "equivariance/model_hyena_se3"
                        : variant == 1 ? "equivariance/model_hyena_so3_no_centering"
                                       : "equivariance/model_gtransformer_se3";
    out.push_back(rel_check(label + "_x", err_x, tol_block));
    out.push_back(rel_check(label + "_f_invariance", err_f, 1e-10));
  }
  return out;
}

// ---- gradient suite ------------------------------------------------------------

namespace {

double primitive_gradcheck(Op op, uint64_t seed) {
  Rng rng(seed);
  ParamStore store;
  std::vector<Value> inputs;
  OpAttrs attrs;
  auto leaf = [&](const std::string& name, std::vector<int64_t> shape, double lo, double hi, Lease& lease) {
    Param p = store.find(name);
    if (!p) {
      p = store.create(name, shape);
      for (int64_t i = 0; i < p->numel(); ++i) p->set(i, rng.uniform(lo, hi));
    }
    return lease(p);
  };

  auto build = [&](Lease& lease) -> Value {
    std::vector<Value> in;
    switch (op) {
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
        in = {leaf("a", {4, 3}, -1, 1, lease), leaf("b", {3}, -1, 1, lease)};
        break;
      case Op::MatMul:
        in = {leaf("a", {3, 4}, -1, 1, lease), leaf("b", {4, 2}, -1, 1, lease)};
        break;
      case Op::Scale:
        attrs.scalar = 1.7;
        in = {leaf("a", {4, 3}, -1, 1, lease)};
        break;
      case Op::SumAll:
      case Op::MeanAll:
      case Op::Transpose:
      case Op::Sigmoid:
      case Op::Silu:
      case Op::Sine:
      case Op::Softplus:
        in = {leaf("a", {4, 3}, -1, 1, lease)};
        break;
      case Op::SumAxis:
      case Op::MeanAxis:
        attrs.axis = static_cast<int>(seed % 2);
        in = {leaf("a", {4, 3}, -1, 1, lease)};
        break;
      case Op::Concat:
        attrs.axis = static_cast<int>(seed % 2);
        in = {leaf("a", {3, 2}, -1, 1, lease), leaf("b", {3, 2}, -1, 1, lease),
              leaf("c", {3, 2}, -1, 1, lease)};
        break;
      case Op::Slice:
        attrs.axis = static_cast<int>(seed % 2);
        attrs.start = 1;
        attrs.len = 2;
        in = {leaf("a", {4, 4}, -1, 1, lease)};
        break;
      case Op::Sqrt:
      case Op::Log1p:
      case Op::Recip:
        in = {leaf("a", {4, 3}, 0.5, 2.0, lease)};
        break;
      case Op::L2Norm:
        in = {leaf("a", {4, 3}, 0.5, 2.0, lease)};
        break;
      case Op::Dot:
      case Op::Cross:
        in = {leaf("a", {5, 3}, -1, 1, lease), leaf("b", {5, 3}, -1, 1, lease)};
        break;
      case Op::Softmax:
        attrs.axis = 1;
        in = {leaf("a", {4, 5}, -2, 2, lease)};
        break;
      case Op::ScalarConv:
        in = {leaf("a", {6, 2}, -1, 1, lease), leaf("b", {6, 2}, -1, 1, lease)};
        break;
      case Op::VectorConv:
        in = {leaf("a", {6, 3}, -1, 1, lease), leaf("b", {6, 3}, -1, 1, lease)};
        break;
      default:
        fail_invalid("primitive_gradcheck: unsupported op");
    }
    Value out = apply_op(op, in, attrs);
    // random projection to a scalar makes the gradient generic
    Tensor w(out.tensor().shape());
    Rng wr(seed ^ 0x9e3779b97f4a7c15ULL);
    for (int64_t i = 0; i < w.numel(); ++i) w.set(i, wr.uniform(-1, 1));
    return sum_all(mul(out, constant(std::move(w))));
  };

  return finite_diff_check(build, store, 1e-6);
}

}  // namespace

std::vector<CheckResult> gradcheck_suite(uint64_t seed) {
  std::vector<CheckResult> out;
  const Op ops[] = {Op::Add,     Op::Sub,      Op::Mul,     Op::MatMul,   Op::Scale,   Op::SumAll,
                    Op::MeanAll, Op::SumAxis,  Op::MeanAxis, Op::Concat,  Op::Slice,   Op::Transpose,
                    Op::Sigmoid, Op::Silu,     Op::Sine,    Op::Sqrt,     Op::L2Norm,  Op::Dot,
                    Op::Cross,   Op::Softmax,  Op::Log1p,   Op::Softplus, Op::Recip,   Op::ScalarConv,
                    Op::VectorConv};
  for (Op op : ops) {
    double worst = 0;
    for (int s = 0; s < 20; ++s) worst = std::max(worst, primitive_gradcheck(op, seed + s));
    out.push_back(rel_check(std::string("gradcheck/") + op_name(op), worst, 1e-5));
  }

  // end-to-end: 2-block model MSE vs finite differences. Weights are doubled
  // after the random init so every parameter couples to the loss well above
  // the eps=1e-6 central-difference noise floor.
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = 8;
  cfg.depth = 2;
  cfg.block.global_tokens = 4;
  GHyenaModel model = build_model(cfg, seed + 101, InitMode::RandomAll);
  for (auto& e : model.params.entries())
    for (int64_t i = 0; i < e.value->numel(); ++i) e.value->set(i, e.value->at(i) * 2.0);
  Rng rng(seed + 202);
  Tensor x = random_tensor({16, 3}, rng);
  Tensor f = random_tensor({16, 6}, rng);
  Tensor target = random_tensor({3}, rng);
  auto loss_fn = [&](Lease& lease) {
    Value pred = model_forward_pool(model, x, f, lease);
    Value diff = sub(pred, constant(target));
    return scale(sum_all(mul(diff, diff)), 1.0 / 3.0);
  };
  double err = finite_diff_check(loss_fn, model.params, 1e-6);
  out.push_back(rel_check("gradcheck/model_end_to_end", err, 1e-4));
  return out;
}

// ---- ablation + stability -------------------------------------------------------

StabilityResult kv_norm_stability(uint64_t seed) {
  const double scales[] = {1.0, 10.0, 100.0, 1000.0};
  double exps[2] = {0, 0};
  for (int variant = 0; variant < 2; ++variant) {
    ModelConfig cfg;
    cfg.input_dim = 6;
    cfg.hidden = 8;
    cfg.depth = 1;
    cfg.block.global_tokens = 4;
    cfg.block.centering = false;
    cfg.block.kv_norm = variant == 0;
    GHyenaModel model = build_model(cfg, seed, InitMode::Default);
    Rng rng(seed + 5);
    Tensor x0 = random_tensor({16, 3}, rng);
    Tensor f0 = random_tensor({16, 6}, rng);
    std::vector<std::pair<double, double>> pts;
    for (double s : scales) {
      Tensor xs = x0;
      for (int64_t i = 0; i < xs.numel(); ++i) xs.set(i, xs.at(i) * s);
      Lease lease(nullptr);
      GeometricSequence seq{f0, xs, Tensor(), Tensor()};
      SeqV o = model_forward_seq(model, to_values(seq), lease);
      if (!o.x.tensor().all_finite()) fail_numeric("stability probe produced non-finite output");
      pts.emplace_back(std::log(s == 1.0 ? 1.0 : s), std::log(frobenius_norm(o.x.tensor())));
    }
    // least squares slope
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [lx, ly] : pts) {
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    double m = static_cast<double>(pts.size());
    exps[variant] = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  StabilityResult res;
  res.exponent_norm_on = exps[0];
  res.exponent_norm_off = exps[1];
  res.pass = exps[0] <= 1.1 && exps[1] >= 2.5;
  return res;
}

std::vector<CheckResult> ablation_suite(uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);
  GeometricSequence seq = random_sequence(16, 16, rng);

  // every toggle combination forward-executes on a random 16-token sequence
  int combos = 0, failures = 0;
  std::string first_error;
  for (int local = 0; local < 2; ++local)
    for (int global = 0; global < 2; ++global)
      for (int gating = 0; gating < 3; ++gating)
        for (int kvn = 0; kvn < 2; ++kvn)
          for (int geo = 0; geo < 2; ++geo) {
            ModelConfig cfg;
            cfg.input_dim = 16;
            cfg.hidden = 12;
            cfg.depth = 1;
            cfg.block.local_context = local == 1;
            cfg.block.global_context = global == 1;
            cfg.block.gating = gating == 0 ? GatingMode::QK : gating == 1 ? GatingMode::K : GatingMode::None;
            cfg.block.kv_norm = kvn == 1;
            cfg.block.geometric_conv = geo == 1;
            cfg.block.global_tokens = 4;
            ++combos;
            try {
              GHyenaModel model = build_model(cfg, seed + combos, InitMode::RandomAll);
              Lease lease(nullptr);
              SeqV o = model_forward_seq(model, to_values(seq), lease);
              if (!o.x.tensor().all_finite() || !o.f.tensor().all_finite())
                throw Error(ErrCode::Numeric, "non-finite output");
            } catch (const Error& e) {
              ++failures;
              if (first_error.empty()) first_error = e.what();
            }
          }
  out.push_back({"ablation/toggle_matrix", failures == 0,
                 format_int(combos) + " combinations, " + format_int(failures) + " failures" +
                     (first_error.empty() ? "" : " (" + first_error + ")")});

  // published component rows: a short training budget each
  struct Row {
    const char* name;
    bool local, global;
    GatingMode gating;
    bool kvn, geo;
  };
  const Row rows[] = {
      {"local+global+QK+kv+geo", true, true, GatingMode::QK, true, true},
      {"local+global+K+kv+geo", true, true, GatingMode::K, true, true},
      {"local+global+nogate+kv+geo", true, true, GatingMode::None, true, true},
      {"global-only+QK+kv+geo", false, true, GatingMode::QK, true, true},
      {"local-only+QK+kv+geo", true, false, GatingMode::QK, true, true},
      {"local+global+QK+nokv+geo", true, true, GatingMode::QK, false, true},
      {"local+global+QK+kv+separate", true, true, GatingMode::QK, true, false},
  };
  for (const Row& row : rows) {
    ModelConfig cfg;
    cfg.input_dim = 16;
    cfg.hidden = 12;
    cfg.depth = 2;
    cfg.block.local_context = row.local;
    cfg.block.global_context = row.global;
    cfg.block.gating = row.gating;
    cfg.block.kv_norm = row.kvn;
    cfg.block.geometric_conv = row.geo;
    cfg.block.global_tokens = 4;
    TrainConfig tc;
    tc.epochs = 3;
    tc.warmup = 1;
    tc.batch = 8;
    tc.train_size = 48;
    tc.val_size = 16;
    tc.test_size = 32;
    tc.vocab = 3;
    tc.seq_len = 16;
    tc.seed = seed;
    std::string detail;
    bool pass = true;
    try {
      GHyenaModel model = build_model(cfg, seed + 31, InitMode::Default);
      train(model, tc, {});
      Dataset test = gen_dataset(tc.test_size, tc.vocab, tc.seq_len, Rng::derive(tc.seed, 0x7e57).next());
      detail = "test mse " + format_double(evaluate(model, test));
    } catch (const Error& e) {
      if (!row.kvn) {
        detail = std::string("diverged (") + e.what() + "), matches the kv-norm instability";
      } else {
        pass = false;
        detail = e.what();
      }
    }
    out.push_back({std::string("ablation/") + row.name, pass, detail});
  }

  StabilityResult stab = kv_norm_stability(seed + 404);
  out.push_back({"ablation/kv_norm_stability",
                 stab.pass,
                 "growth exponent on=" + format_double(stab.exponent_norm_on) +
                     " (<=1.1), off=" + format_double(stab.exponent_norm_off) + " (>=2.5)"});
  return out;
}

}  // namespace ghyena
