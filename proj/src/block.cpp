#include "ghyena/block.hpp"

#include <algorithm>
#include <cmath>

namespace ghyena {

void GeometricSequence::validate() const {
  if (x.rank() != 2 || x.dim(1) != 3) fail_invalid("sequence: x must be (N,3), got " + x.shape_str());
  if (f.rank() != 2 || f.dim(0) != x.dim(0)) fail_invalid("sequence: f must be (N,d), got " + f.shape_str());
  if (n() < 1 || d() < 1) fail_invalid("sequence: N >= 1 and d >= 1 required");
  if (!x.all_finite() || !f.all_finite()) fail_numeric("sequence: non-finite input");
  if (!edges_down.empty() && (edges_down.rank() != 2 || edges_down.dim(0) != n() - 1))
    fail_invalid("sequence: edges_down must be (N-1,e)");
  if (!edges_up.empty() && (edges_up.rank() != 2 || edges_up.dim(0) != n() - 1))
    fail_invalid("sequence: edges_up must be (N-1,e)");
}

GatingMode parse_gating(const std::string& s) {
  if (s == "qk" || s == "QK") return GatingMode::QK;
  if (s == "k" || s == "K") return GatingMode::K;
  if (s == "none") return GatingMode::None;
  fail_invalid("unknown gating mode '" + s + "' (expected qk|k|none)");
}

const char* gating_name(GatingMode m) {
  switch (m) {
    case GatingMode::QK: return "qk";
    case GatingMode::K: return "k";
    case GatingMode::None: return "none";
  }
  return "?";
}

// ---- parameter construction --------------------------------------------------

namespace {

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
}

Param make_weight(ParamStore& store, const std::string& name, std::vector<int64_t> shape, Rng& rng,
                  double bound, Dtype dt) {
  Param p = store.create(name, std::move(shape), dt);
  fill_uniform(*p, rng, -bound, bound);
  return p;
}

Param make_zero(ParamStore& store, const std::string& name, std::vector<int64_t> shape, Dtype dt) {
  return store.create(name, std::move(shape), dt);
}

}  // namespace

ProjectionParams make_projection(ParamStore& store, const std::string& prefix, int64_t d, int64_t edge_dim,
                                 Rng& rng, InitMode mode, Dtype dt) {
  ProjectionParams p;
  double bl = 1.0 / std::sqrt(static_cast<double>(2 * d + 1 + edge_dim));
  p.phi_l.w_self = make_weight(store, prefix + "phi_l.w_self", {d, d}, rng, bl, dt);
  p.phi_l.w_nb = make_weight(store, prefix + "phi_l.w_nb", {d, d}, rng, bl, dt);
  p.phi_l.w_dist = make_weight(store, prefix + "phi_l.w_dist", {1, d}, rng, bl, dt);
  if (edge_dim > 0) p.phi_l.w_edge = make_weight(store, prefix + "phi_l.w_edge", {edge_dim, d}, rng, bl, dt);
  p.phi_l.b = make_zero(store, prefix + "phi_l.b", {d}, dt);

  double bg = 1.0 / std::sqrt(static_cast<double>(2 * d + 1));
  p.phi_g.w_self = make_weight(store, prefix + "phi_g.w_self", {d, d}, rng, bg, dt);
  p.phi_g.w_glob = make_weight(store, prefix + "phi_g.w_glob", {d, d}, rng, bg, dt);
  p.phi_g.w_dist = make_weight(store, prefix + "phi_g.w_dist", {1, d}, rng, bg, dt);
  p.phi_g.b = make_zero(store, prefix + "phi_g.b", {d}, dt);

  // The coordinate net starts at zero so fresh blocks leave coordinates
  // untouched; this also keeps the kv-norm scaling bound linear at init.
  double bx = 1.0 / std::sqrt(static_cast<double>(d));
  if (mode == InitMode::RandomAll) {
    p.phi_x.w = make_weight(store, prefix + "phi_x.w", {d, 1}, rng, bx, dt);
    p.phi_x.b = make_weight(store, prefix + "phi_x.b", {1}, rng, 0.5, dt);
  } else {
    p.phi_x.w = make_zero(store, prefix + "phi_x.w", {d, 1}, dt);
    p.phi_x.b = make_zero(store, prefix + "phi_x.b", {1}, dt);
  }

  double bf = 1.0 / std::sqrt(static_cast<double>(2 * d));
  p.phi_f.w_self = make_weight(store, prefix + "phi_f.w_self", {d, d}, rng, bf, dt);
  p.phi_f.w_msg = make_weight(store, prefix + "phi_f.w_msg", {d, d}, rng, bf, dt);
  p.phi_f.b = make_zero(store, prefix + "phi_f.b", {d}, dt);
  return p;
}

SirenNet make_siren(ParamStore& store, const std::string& prefix, int64_t g, Rng& rng, InitMode mode, Dtype dt) {
  SirenNet net;
  int64_t w = SirenNet::kWidth;
  double hidden_bound = std::sqrt(6.0 / static_cast<double>(w)) / SirenNet::kFreq;
  net.w1 = make_weight(store, prefix + "w1", {1, w}, rng, 1.0, dt);
  net.b1 = make_zero(store, prefix + "b1", {w}, dt);
  net.w2 = make_weight(store, prefix + "w2", {w, w}, rng, hidden_bound, dt);
  net.b2 = make_zero(store, prefix + "b2", {w}, dt);
  net.w3 = make_weight(store, prefix + "w3", {w, g}, rng, hidden_bound, dt);
  // softplus(b3) = 1 at init, so aggregation starts near a uniform average
  net.b3 = store.create(prefix + "b3", {g}, dt);
  double b3v = std::log(std::exp(1.0) - 1.0);
  for (int64_t i = 0; i < g; ++i) net.b3->set(i, b3v);
  if (mode == InitMode::RandomAll) {
    fill_uniform(*net.b1, rng, -0.5, 0.5);
    fill_uniform(*net.b2, rng, -0.5, 0.5);
  }
  return net;
}

HyenaBlockParams make_block(ParamStore& store, const std::string& prefix, int64_t d, int64_t edge_dim,
                            const BlockConfig& cfg, Rng& rng, InitMode mode, Dtype dt) {
  HyenaBlockParams p;
  p.proj_q = make_projection(store, prefix + "proj_q.", d, edge_dim, rng, mode, dt);
  p.proj_k = make_projection(store, prefix + "proj_k.", d, edge_dim, rng, mode, dt);
  p.proj_v = make_projection(store, prefix + "proj_v.", d, edge_dim, rng, mode, dt);
  p.proj_gate = make_projection(store, prefix + "proj_gate.", d, edge_dim, rng, mode, dt);
  p.proj_out = make_projection(store, prefix + "proj_out.", d, edge_dim, rng, mode, dt);
  double bd = 1.0 / std::sqrt(static_cast<double>(d));
  if (mode == InitMode::RandomAll) {
    p.gate.w = make_weight(store, prefix + "gate.w", {d, 1}, rng, bd, dt);
    p.gate.b = make_weight(store, prefix + "gate.b", {1}, rng, 0.5, dt);
  } else {
    p.gate.w = make_zero(store, prefix + "gate.w", {d, 1}, dt);
    p.gate.b = make_zero(store, prefix + "gate.b", {1}, dt);
  }
  p.siren = make_siren(store, prefix + "siren.", cfg.global_tokens, rng, mode, dt);
  auto lam = [&](const char* name) {
    Param q = store.create(prefix + name, {}, dt);
    q->set(0, mode == InitMode::RandomAll ? rng.uniform(0.5, 1.5) : 1.0);
    return q;
  };
  p.lambda1 = lam("conv.lambda1");
  p.lambda2 = lam("conv.lambda2");
  p.lambda3 = lam("conv.lambda3");
  p.lambda4 = lam("conv.lambda4");
  p.lambda5 = lam("conv.lambda5");
  p.w_scalarize = make_weight(store, prefix + "conv.w", {d, 1}, rng, bd, dt);
  p.chan_expand = make_weight(store, prefix + "conv.chan_expand", {1, d}, rng, bd, dt);
  return p;
}

// ---- graph helpers -----------------------------------------------------------

SeqV to_values(const GeometricSequence& seq) {
  seq.validate();
  return {constant(seq.f), constant(seq.x), seq.edges_down, seq.edges_up};
}

GeometricSequence to_sequence(const SeqV& seq) {
  return {seq.f.tensor(), seq.x.tensor(), seq.edges_down, seq.edges_up};
}

Value expand_cols(const Value& col, int64_t k) {
  if (col.tensor().rank() != 2 || col.tensor().dim(1) != 1)
    fail_invalid("expand_cols: (N,1) column required, got " + col.tensor().shape_str());
  if (k == 1) return col;
  return matmul(col, constant(Tensor::full({1, k}, 1.0, col.tensor().dtype())));
}

Value siren_weights(int64_t n, const SirenNet& net, Lease& lease, Dtype dt) {
  if (n < 1) fail_invalid("siren_weights: n >= 1 required");
  Tensor pos({n, 1}, dt);
  double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (int64_t i = 0; i < n; ++i) pos.set(i, static_cast<double>(i) / denom);
  Value t = constant(std::move(pos));
  Value h1 = sine(scale(add(matmul(t, lease(net.w1)), lease(net.b1)), SirenNet::kFreq));
  Value h2 = sine(scale(add(matmul(h1, lease(net.w2)), lease(net.b2)), SirenNet::kFreq));
  return softplus(add(matmul(h2, lease(net.w3)), lease(net.b3)));
}

GlobalTokens compute_global_tokens(const Value& f, const Value& x, const Value& omega) {
  const Tensor& w = omega.tensor();
  if (w.rank() != 2 || w.dim(0) != x.tensor().dim(0))
    fail_invalid("global_tokens: omega must be (N,G), got " + w.shape_str());
  Value c = reshape(sum_axis(omega, 0), {w.dim(1), 1});  // (G,1)
  for (int64_t j = 0; j < c.tensor().numel(); ++j)
    if (c.tensor().at(j) <= 0) fail_numeric("global_tokens: nonpositive normalizer C_j");
  Value cinv = recip(c);
  Value wt = transpose(omega);  // (G,N)
  Value g = mul(matmul(wt, x), expand_cols(cinv, 3));
  Value h = mul(matmul(wt, f), expand_cols(cinv, f.tensor().dim(1)));
  return {g, h, omega, c};
}

namespace {

Value pad_top(const Value& m, int64_t d, Dtype dt) {
  return concat(constant(Tensor({1, d}, dt)), m, 0);
}

Value pad_bottom(const Value& m, int64_t d, Dtype dt) {
  return concat(m, constant(Tensor({1, d}, dt)), 0);
}

// Global messages: m_i^glob = sum_j silu(W_s f_i + W_g h_j + w_d log1p(|x_i - g_j|) + b).
Value global_messages(const Value& f, const Value& x, const GlobalTokens& globals,
                      const PhiGlobal& phi, Lease& lease) {
  int64_t d = f.tensor().dim(1);
  int64_t g_count = globals.g.tensor().dim(0);
  Value base = matmul(f, lease(phi.w_self));
  Value wg = lease(phi.w_glob);
  Value wd = lease(phi.w_dist);
  Value b = lease(phi.b);
  Value acc;
  for (int64_t j = 0; j < g_count; ++j) {
    Value gj = reshape(slice(globals.g, 0, j, 1), {3});
    Value hj = slice(globals.h, 0, j, 1);  // (1,d)
    Value dist = l2norm(sub(x, gj));       // (N,1)
    Value pre = add(add(add(base, reshape(matmul(hj, wg), {d})), matmul(log1p(dist), wd)), b);
    Value msg = silu(pre);
    acc = j == 0 ? msg : add(acc, msg);
  }
  return acc;
}

}  // namespace

ProjOut egnn_projection(const SeqV& seq, const std::optional<GlobalTokens>& globals,
                        const ProjectionParams& params, bool local_context, Lease& lease) {
  const Tensor& ft = seq.f.tensor();
  const Tensor& xt = seq.x.tensor();
  int64_t n = xt.dim(0);
  int64_t d = ft.dim(1);
  Dtype dt = ft.dtype();

  Value msum;
  bool have_messages = false;
  Value x_out = seq.x;

  if (local_context) {
    if (n < 2) fail_invariant("egnn_projection: empty chain neighborhood with local context enabled (N=1)");
    Value a = matmul(seq.f, lease(params.phi_l.w_self));
    Value bn = matmul(seq.f, lease(params.phi_l.w_nb));
    Value diff = sub(slice(seq.x, 0, 1, n - 1), slice(seq.x, 0, 0, n - 1));  // D_r = x_{r+1} - x_r
    Value dist = l2norm(diff);
    Value dterm = matmul(dist, lease(params.phi_l.w_dist));
    Value bias = lease(params.phi_l.b);
    // m_down: edge (r+1 <- r); m_up: edge (r <- r+1)
    Value pre_down = add(add(add(slice(a, 0, 1, n - 1), slice(bn, 0, 0, n - 1)), dterm), bias);
    Value pre_up = add(add(add(slice(a, 0, 0, n - 1), slice(bn, 0, 1, n - 1)), dterm), bias);
    if (params.phi_l.w_edge) {
      Value we = lease(params.phi_l.w_edge);
      if (!seq.edges_down.empty()) pre_down = add(pre_down, matmul(constant(seq.edges_down), we));
      if (!seq.edges_up.empty()) pre_up = add(pre_up, matmul(constant(seq.edges_up), we));
    }
    Value m_down = silu(pre_down);
    Value m_up = silu(pre_up);
    msum = add(pad_top(m_down, d, dt), pad_bottom(m_up, d, dt));
    have_messages = true;

    Value wx = lease(params.phi_x.w);
    Value bx = lease(params.phi_x.b);
    Value s_down = add(matmul(m_down, wx), bx);  // (N-1,1)
    Value s_up = add(matmul(m_up, wx), bx);
    Value term_down = mul(expand_cols(s_down, 3), diff);
    Value term_up = mul(expand_cols(s_up, 3), diff);
    Value sumterm = sub(pad_top(term_down, 3, dt), pad_bottom(term_up, 3, dt));
    Tensor invcnt({n, 3}, dt);
    for (int64_t i = 0; i < n; ++i) {
      double cnt = (i == 0 || i == n - 1) ? 1.0 : 2.0;
      if (n == 1) cnt = 1.0;
      for (int64_t c = 0; c < 3; ++c) invcnt.set(i * 3 + c, 1.0 / cnt);
    }
    x_out = add(seq.x, mul(sumterm, constant(std::move(invcnt))));
  }

  if (globals.has_value()) {
    Value mg = global_messages(seq.f, seq.x, *globals, params.phi_g, lease);
    msum = have_messages ? add(msum, mg) : mg;
    have_messages = true;
  }

  if (!have_messages) msum = constant(Tensor({n, d}, dt));

  Value f_out = add(add(matmul(seq.f, lease(params.phi_f.w_self)), matmul(msum, lease(params.phi_f.w_msg))),
                    lease(params.phi_f.b));
  return {f_out, x_out};
}

std::vector<std::pair<int64_t, int64_t>> knn_radius_edges(const Tensor& x, int64_t k, double r) {
  if (x.rank() != 2 || x.dim(1) != 3) fail_invalid("knn_radius_edges: x must be (N,3)");
  int64_t n = x.dim(0);
  std::vector<std::pair<int64_t, int64_t>> edges;
  for (int64_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, int64_t>> cand;
    for (int64_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0;
      for (int64_t c = 0; c < 3; ++c) {
        double dv = x.at(i * 3 + c) - x.at(j * 3 + c);
        d2 += dv * dv;
      }
      double dist = std::sqrt(d2);
      if (dist <= r) cand.emplace_back(dist, j);
    }
    std::sort(cand.begin(), cand.end());
    int64_t take = std::min<int64_t>(k, static_cast<int64_t>(cand.size()));
    for (int64_t t = 0; t < take; ++t) edges.emplace_back(i, cand[static_cast<size_t>(t)].second);
  }
  return edges;
}

namespace {

// Fold a row list into <=4-way concats.
Value concat_rows(std::vector<Value> parts) {
  while (parts.size() > 1) {
    std::vector<Value> next;
    for (size_t i = 0; i < parts.size(); i += 4) {
      size_t m = std::min<size_t>(4, parts.size() - i);
      if (m == 1) {
        next.push_back(parts[i]);
      } else {
        next.push_back(concat(std::span<const Value>(parts.data() + i, m), 0));
      }
    }
    parts = std::move(next);
  }
  return parts[0];
}

Value gather_rows(const Value& t, const std::vector<int64_t>& rows) {
  std::vector<Value> parts;
  parts.reserve(rows.size());
  for (int64_t r : rows) parts.push_back(slice(t, 0, r, 1));
  return concat_rows(std::move(parts));
}

}  // namespace

ProjOut egnn_projection_adjacency(const SeqV& seq, const std::optional<GlobalTokens>& globals,
                                  const ProjectionParams& params,
                                  const std::vector<std::pair<int64_t, int64_t>>& edges, Lease& lease) {
  int64_t n = seq.x.tensor().dim(0);
  if (edges.empty()) fail_invariant("egnn_projection: empty neighborhood with local context enabled");

  std::vector<int64_t> src, dst;
  std::vector<std::vector<int64_t>> incoming(static_cast<size_t>(n));
  for (size_t e = 0; e < edges.size(); ++e) {
    auto [i, j] = edges[e];
    if (i < 0 || i >= n || j < 0 || j >= n || i == j) fail_invalid("egnn_projection: bad edge");
    dst.push_back(i);
    src.push_back(j);
    incoming[static_cast<size_t>(i)].push_back(static_cast<int64_t>(e));
  }
  for (int64_t i = 0; i < n; ++i)
    if (incoming[static_cast<size_t>(i)].empty())
      fail_invariant("egnn_projection: node " + std::to_string(i) + " has an empty neighborhood");

  Value fi = gather_rows(seq.f, dst);
  Value fj = gather_rows(seq.f, src);
  Value xi = gather_rows(seq.x, dst);
  Value xj = gather_rows(seq.x, src);
  Value diff = sub(xi, xj);
  Value dist = l2norm(diff);
  Value pre = add(add(add(matmul(fi, lease(params.phi_l.w_self)), matmul(fj, lease(params.phi_l.w_nb))),
                      matmul(dist, lease(params.phi_l.w_dist))),
                  lease(params.phi_l.b));
  Value msg = silu(pre);  // (E,d)
  Value s = add(matmul(msg, lease(params.phi_x.w)), lease(params.phi_x.b));
  Value upd = mul(expand_cols(s, 3), diff);  // (E,3)

  // scatter messages / coordinate updates back to nodes
  std::vector<Value> mrows, xrows;
  for (int64_t i = 0; i < n; ++i) {
    const auto& inc = incoming[static_cast<size_t>(i)];
    Value macc = slice(msg, 0, inc[0], 1);
    Value xacc = slice(upd, 0, inc[0], 1);
    for (size_t t = 1; t < inc.size(); ++t) {
      macc = add(macc, slice(msg, 0, inc[t], 1));
      xacc = add(xacc, slice(upd, 0, inc[t], 1));
    }
    mrows.push_back(macc);
    xrows.push_back(scale(xacc, 1.0 / static_cast<double>(inc.size())));
  }
  Value m_loc = concat_rows(std::move(mrows));
  Value x_upd = concat_rows(std::move(xrows));

  Value msum = m_loc;
  if (globals.has_value()) msum = add(msum, global_messages(seq.f, seq.x, *globals, params.phi_g, lease));

  Value x_out = add(seq.x, x_upd);
  Value f_out = add(add(matmul(seq.f, lease(params.phi_f.w_self)), matmul(msum, lease(params.phi_f.w_msg))),
                    lease(params.phi_f.b));
  return {f_out, x_out};
}

QKVBundle qkv_project(const SeqV& seq, const std::optional<GlobalTokens>& globals,
                      const ProjectionParams& pq, const ProjectionParams& pk, const ProjectionParams& pv,
                      bool local_context, Lease& lease) {
  ProjOut q = egnn_projection(seq, globals, pq, local_context, lease);
  ProjOut k = egnn_projection(seq, globals, pk, local_context, lease);
  ProjOut v = egnn_projection(seq, globals, pv, local_context, lease);
  return {q.f, k.f, v.f, q.x, k.x, v.x};
}

Value normalize_rows(const Value& v) {
  Value inv = recip_guarded(l2norm(v), 1e-8);
  return mul(v, expand_cols(inv, v.tensor().dim(1)));
}

QKVBundle kv_normalize(const QKVBundle& bundle) {
  QKVBundle out = bundle;
  out.k_inv = normalize_rows(bundle.k_inv);
  out.v_inv = normalize_rows(bundle.v_inv);
  out.k_eqv = normalize_rows(bundle.k_eqv);
  out.v_eqv = normalize_rows(bundle.v_eqv);
  return out;
}

Value selective_gate(const SeqV& seq, const std::optional<GlobalTokens>& globals,
                     const HyenaBlockParams& params, GatingMode mode, bool local_context,
                     const Value& k_inv, Lease& lease) {
  int64_t n = seq.x.tensor().dim(0);
  Dtype dt = seq.x.tensor().dtype();
  switch (mode) {
    case GatingMode::None: return constant(Tensor::full({n, 1}, 1.0, dt));
    case GatingMode::QK: {
      ProjOut g = egnn_projection(seq, globals, params.proj_gate, local_context, lease);
      return sigmoid(add(matmul(g.f, lease(params.gate.w)), lease(params.gate.b)));
    }
    case GatingMode::K:
      return sigmoid(add(matmul(k_inv, lease(params.gate.w)), lease(params.gate.b)));
  }
  fail_invalid("selective_gate: unknown mode");
}

std::pair<Value, Value> apply_gate_and_values(const Value& u_inv, const Value& u_eqv, const Value& m,
                                              const Value& v_inv, const Value& v_eqv) {
  if (m.tensor().rank() != 2 || m.tensor().dim(1) != 1 || m.tensor().dim(0) != u_inv.tensor().dim(0))
    fail_invalid("apply_gate: gate must be (N,1), got " + m.tensor().shape_str());
  Value y_inv = mul(mul(expand_cols(m, u_inv.tensor().dim(1)), u_inv), v_inv);
  Value y_eqv = cross(mul(expand_cols(m, 3), u_eqv), v_eqv);
  return {y_inv, y_eqv};
}

std::pair<Value, Value> center(const Value& x) {
  Value centroid = reshape(mean_axis(x, 0), {3});
  return {sub(x, centroid), centroid};
}

Value uncenter(const Value& x, const Value& centroid) { return add(x, centroid); }

SeqV hyena_block_forward(const HyenaBlockParams& params, const SeqV& seq, const BlockConfig& cfg,
                         Lease& lease) {
  const Tensor& xt = seq.x.tensor();
  int64_t n = xt.dim(0);
  Dtype dt = xt.dtype();

  Value x_in = seq.x;
  Value f_in = seq.f;
  Value centroid;
  Value xc = x_in;
  if (cfg.centering) std::tie(xc, centroid) = center(x_in);
  SeqV work{f_in, xc, seq.edges_down, seq.edges_up};

  Value omega;
  std::optional<GlobalTokens> globals;
  if (cfg.global_context) {
    omega = siren_weights(n, params.siren, lease, dt);
    globals = compute_global_tokens(work.f, work.x, omega);
  }

  QKVBundle qkv = qkv_project(work, globals, params.proj_q, params.proj_k, params.proj_v,
                              cfg.local_context, lease);
  Value keys_raw = qkv.k_inv;
  if (cfg.kv_norm) qkv = kv_normalize(qkv);

  Value u_inv, u_eqv;
  if (cfg.global_context) {
    if (cfg.geometric_conv) {
      Value w = lease(params.w_scalarize);
      Value aq = scalarize(qkv.q_inv, w);
      Value ak = scalarize(qkv.k_inv, w);
      GeometricConvParams gp{lease(params.lambda1), lease(params.lambda2), lease(params.lambda3),
                             lease(params.lambda4), lease(params.lambda5), w};
      GeometricConvValues gout = geometric_conv(aq, qkv.q_eqv, ak, qkv.k_eqv, gp);
      u_inv = add(scalar_conv(qkv.q_inv, qkv.k_inv), matmul(gout.alpha3, lease(params.chan_expand)));
      u_eqv = gout.r3;
    } else {
      u_inv = scalar_conv(qkv.q_inv, qkv.k_inv);
      u_eqv = vector_conv(qkv.q_eqv, qkv.k_eqv);
    }
    double s = cfg.conv_scale > 0 ? cfg.conv_scale : 1.0 / static_cast<double>(n);
    u_inv = scale(u_inv, s);
    u_eqv = scale(u_eqv, s);
  } else {
    u_inv = qkv.v_inv;
    u_eqv = qkv.v_eqv;
  }

  Value m = selective_gate(work, globals, params, cfg.gating, cfg.local_context, keys_raw, lease);

  Value y_inv, y_eqv;
  if (cfg.global_context) {
    std::tie(y_inv, y_eqv) = apply_gate_and_values(u_inv, u_eqv, m, qkv.v_inv, qkv.v_eqv);
  } else {
    y_inv = mul(expand_cols(m, u_inv.tensor().dim(1)), u_inv);
    y_eqv = mul(expand_cols(m, 3), u_eqv);
  }

  Value f_mid = cfg.invariant_residual ? add(y_inv, f_in) : y_inv;
  SeqV post{f_mid, y_eqv, seq.edges_down, seq.edges_up};
  std::optional<GlobalTokens> globals_out;
  if (cfg.global_context) globals_out = compute_global_tokens(post.f, post.x, omega);
  ProjOut out = egnn_projection(post, globals_out, params.proj_out, cfg.local_context, lease);

  Value x_out = cfg.centering ? uncenter(out.x, centroid) : out.x;
  return {out.f, x_out, seq.edges_down, seq.edges_up};
}

}  // namespace ghyena
