#include "ghyena/model.hpp"

#include <cmath>

#include "ghyena/checkpoint.hpp"

namespace ghyena {

KvMap ModelConfig::to_kv() const {
  KvMap kv;
  kv["input_dim"] = format_int(input_dim);
  kv["hidden"] = format_int(hidden);
  kv["depth"] = format_int(depth);
  kv["edge_dim"] = format_int(edge_dim);
  kv["readout"] = readout == Readout::PoolEqvVector ? "pool" : "per_token";
  kv["kind"] = kind == BlockKind::Hyena ? "hyena" : "gtransformer";
  kv["dtype"] = dtype_name(dtype);
  kv["local_context"] = block.local_context ? "1" : "0";
  kv["global_context"] = block.global_context ? "1" : "0";
  kv["gating"] = gating_name(block.gating);
  kv["kv_norm"] = block.kv_norm ? "1" : "0";
  kv["geometric_conv"] = block.geometric_conv ? "1" : "0";
  kv["global_tokens"] = format_int(block.global_tokens);
  kv["conv_scale"] = format_double(block.conv_scale);
  kv["centering"] = block.centering ? "1" : "0";
  kv["invariant_residual"] = block.invariant_residual ? "1" : "0";
  return kv;
}

ModelConfig ModelConfig::from_kv(const KvMap& kv) {
  ModelConfig cfg;
  cfg.input_dim = kv_get_int(kv, "input_dim", cfg.input_dim);
  cfg.hidden = kv_get_int(kv, "hidden", cfg.hidden);
  cfg.depth = kv_get_int(kv, "depth", cfg.depth);
  cfg.edge_dim = kv_get_int(kv, "edge_dim", cfg.edge_dim);
  std::string readout = kv_get(kv, "readout", "pool");
  if (readout == "pool")
    cfg.readout = Readout::PoolEqvVector;
  else if (readout == "per_token")
    cfg.readout = Readout::PerToken;
  else
    fail_invalid("model config: unknown readout '" + readout + "'");
  std::string kind = kv_get(kv, "kind", "hyena");
  if (kind == "hyena")
    cfg.kind = BlockKind::Hyena;
  else if (kind == "gtransformer")
    cfg.kind = BlockKind::GTransformer;
  else
    fail_invalid("model config: unknown kind '" + kind + "'");
  std::string dt = kv_get(kv, "dtype", "f64");
  if (dt == "f64")
    cfg.dtype = Dtype::F64;
  else if (dt == "f32")
    cfg.dtype = Dtype::F32;
  else
    fail_invalid("model config: unknown dtype '" + dt + "'");
  cfg.block.local_context = kv_get_bool(kv, "local_context", cfg.block.local_context);
  cfg.block.global_context = kv_get_bool(kv, "global_context", cfg.block.global_context);
  cfg.block.gating = parse_gating(kv_get(kv, "gating", "qk"));
  cfg.block.kv_norm = kv_get_bool(kv, "kv_norm", cfg.block.kv_norm);
  cfg.block.geometric_conv = kv_get_bool(kv, "geometric_conv", cfg.block.geometric_conv);
  cfg.block.global_tokens = kv_get_int(kv, "global_tokens", cfg.block.global_tokens);
  cfg.block.conv_scale = kv_get_double(kv, "conv_scale", cfg.block.conv_scale);
  cfg.block.centering = kv_get_bool(kv, "centering", cfg.block.centering);
  cfg.block.invariant_residual = kv_get_bool(kv, "invariant_residual", cfg.block.invariant_residual);
  if (cfg.hidden < 1 || cfg.depth < 0 || cfg.input_dim < 1 || cfg.block.global_tokens < 1)
    fail_invalid("model config: dimensions out of range");
  return cfg;
}

GHyenaModel build_model(const ModelConfig& cfg, uint64_t seed, InitMode mode) {
  GHyenaModel model;
  model.cfg = cfg;
  Rng rng(seed);
  double be = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
  model.embed_w = model.params.create("embed.w", {cfg.input_dim, cfg.hidden}, cfg.dtype);
  for (int64_t i = 0; i < model.embed_w->numel(); ++i) model.embed_w->set(i, rng.uniform(-be, be));
  model.embed_b = model.params.create("embed.b", {cfg.hidden}, cfg.dtype);
  for (int64_t b = 0; b < cfg.depth; ++b) {
    model.blocks.push_back(make_block(model.params, "block" + std::to_string(b) + ".", cfg.hidden,
                                      cfg.edge_dim, cfg.block, rng, mode, cfg.dtype));
  }
  return model;
}

// ---- attention ---------------------------------------------------------------

Value dot_product_vector_attention(const Value& q, const Value& k, const Value& v) {
  const Tensor& tq = q.tensor();
  if (tq.rank() != 2 || !tq.same_shape(k.tensor()) || !tq.same_shape(v.tensor()))
    fail_invalid("dot_product_vector_attention: matching (N,3) inputs required");
  int64_t n = tq.dim(0);
  Value c = matmul(q, transpose(k));
  Value s = softmax(scale(c, 1.0 / std::sqrt(static_cast<double>(n))), 1);
  return matmul(s, v);
}

AttentionMatrices dot_product_attention_matrices(const Tensor& q, const Tensor& k) {
  Value ct = matmul(constant(q), transpose(constant(k)));
  Value st = softmax(scale(ct, 1.0 / std::sqrt(static_cast<double>(q.dim(0)))), 1);
  return {ct.tensor(), st.tensor()};
}

Tensor cross_product_vector_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || q.dim(1) != 3 || !q.same_shape(k) || !q.same_shape(v))
    fail_invalid("cross_product_vector_attention: matching (N,3) inputs required");
  int64_t n = q.dim(0);
  double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  Tensor out({n, 3}, q.dtype());
  std::vector<double> cr(static_cast<size_t>(n) * 3);
  std::vector<double> eta(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double qi[3] = {q.at(i * 3), q.at(i * 3 + 1), q.at(i * 3 + 2)};
    // row i of the cross-product tensor and its norms
    double mx = -1e300;
    for (int64_t j = 0; j < n; ++j) {
      double kj[3] = {k.at(j * 3), k.at(j * 3 + 1), k.at(j * 3 + 2)};
      double c0 = qi[1] * kj[2] - qi[2] * kj[1];
      double c1 = qi[2] * kj[0] - qi[0] * kj[2];
      double c2 = qi[0] * kj[1] - qi[1] * kj[0];
      cr[static_cast<size_t>(j) * 3] = c0;
      cr[static_cast<size_t>(j) * 3 + 1] = c1;
      cr[static_cast<size_t>(j) * 3 + 2] = c2;
      double e = std::sqrt(c0 * c0 + c1 * c1 + c2 * c2) * inv_sqrt_n;
      eta[static_cast<size_t>(j)] = e;
      mx = std::max(mx, e);
    }
    double denom = 0;
    for (int64_t j = 0; j < n; ++j) {
      eta[static_cast<size_t>(j)] = std::exp(eta[static_cast<size_t>(j)] - mx);
      denom += eta[static_cast<size_t>(j)];
    }
    double u[3] = {0, 0, 0};
    for (int64_t j = 0; j < n; ++j) {
      double w = eta[static_cast<size_t>(j)] / denom;
      double s0 = w * cr[static_cast<size_t>(j) * 3];
      double s1 = w * cr[static_cast<size_t>(j) * 3 + 1];
      double s2 = w * cr[static_cast<size_t>(j) * 3 + 2];
      double vj[3] = {v.at(j * 3), v.at(j * 3 + 1), v.at(j * 3 + 2)};
      u[0] += s1 * vj[2] - s2 * vj[1];
      u[1] += s2 * vj[0] - s0 * vj[2];
      u[2] += s0 * vj[1] - s1 * vj[0];
    }
    for (int64_t c2 = 0; c2 < 3; ++c2) out.set(i * 3 + c2, u[c2] / static_cast<double>(n));
  }
  return out;
}

// ---- G-Transformer block ------------------------------------------------------

SeqV gtransformer_block_forward(const HyenaBlockParams& params, const SeqV& seq, const BlockConfig& cfg,
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
    double temp = 1.0 / std::sqrt(static_cast<double>(n));
    Value c_inv = matmul(qkv.q_inv, transpose(qkv.k_inv));
    Value s_inv = softmax(scale(c_inv, temp), 1);
    u_inv = matmul(s_inv, qkv.v_inv);
    u_eqv = dot_product_vector_attention(qkv.q_eqv, qkv.k_eqv, qkv.v_eqv);
  } else {
    u_inv = qkv.v_inv;
    u_eqv = qkv.v_eqv;
  }

  Value m = selective_gate(work, globals, params, cfg.gating, cfg.local_context, keys_raw, lease);
  Value y_inv = mul(expand_cols(m, u_inv.tensor().dim(1)), u_inv);
  Value y_eqv = mul(expand_cols(m, 3), u_eqv);

  Value f_mid = cfg.invariant_residual ? add(y_inv, f_in) : y_inv;
  SeqV post{f_mid, y_eqv, seq.edges_down, seq.edges_up};
  std::optional<GlobalTokens> globals_out;
  if (cfg.global_context) globals_out = compute_global_tokens(post.f, post.x, omega);
  ProjOut out = egnn_projection(post, globals_out, params.proj_out, cfg.local_context, lease);

  Value x_out = cfg.centering ? uncenter(out.x, centroid) : out.x;
  return {out.f, x_out, seq.edges_down, seq.edges_up};
}

// ---- model --------------------------------------------------------------------

Value pool_eqv_vector(const Value& x) {
  if (x.tensor().rank() != 2 || x.tensor().dim(1) != 3)
    fail_invalid("pool_eqv_vector: (N,3) input required, got " + x.tensor().shape_str());
  return reshape(mean_axis(x, 0), {3});
}

SeqV model_forward_seq(const GHyenaModel& model, const SeqV& in, Lease& lease) {
  Value f = add(matmul(in.f, lease(model.embed_w)), lease(model.embed_b));
  SeqV cur{f, in.x, in.edges_down, in.edges_up};
  for (const auto& block : model.blocks) {
    cur = model.cfg.kind == BlockKind::Hyena ? hyena_block_forward(block, cur, model.cfg.block, lease)
                                             : gtransformer_block_forward(block, cur, model.cfg.block, lease);
  }
  return cur;
}

Value model_forward_pool(const GHyenaModel& model, const Tensor& x, const Tensor& f, Lease& lease) {
  GeometricSequence seq{f, x, Tensor(), Tensor()};
  SeqV out = model_forward_seq(model, to_values(seq), lease);
  return pool_eqv_vector(out.x);
}

void save_model(const GHyenaModel& model, const std::string& path) {
  KvMap config = model.cfg.to_kv();
  config["trained_epochs"] = format_int(model.trained_epochs);
  save_checkpoint(path, model.params, config);
}

GHyenaModel load_model(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  ModelConfig cfg = ModelConfig::from_kv(ck.config);
  GHyenaModel model = build_model(cfg, /*seed=*/0, InitMode::Default);
  model.trained_epochs = kv_get_int(ck.config, "trained_epochs", 0);
  for (const auto& [name, tensor] : ck.tensors) {
    if (name.rfind("opt.", 0) == 0) continue;  // optimizer state handled by the trainer
    Param p = model.params.find(name);
    if (!p) fail_io("checkpoint: unknown parameter '" + name + "'");
    if (p->shape() != tensor.shape())
      fail_io("checkpoint: shape mismatch for '" + name + "': " + p->shape_str() + " vs " + tensor.shape_str());
    for (int64_t i = 0; i < tensor.numel(); ++i) p->set(i, tensor.at(i));
  }
  return model;
}

}  // namespace ghyena
