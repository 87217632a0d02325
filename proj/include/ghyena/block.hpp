#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ghyena/longconv.hpp"
#include "ghyena/params.hpp"
#include "ghyena/rng.hpp"
#include "ghyena/tensor.hpp"

namespace ghyena {

// N tokens of (invariant d-vector, equivariant 3-vector) pairs with optional
// chain edge attributes. edges_down row r carries e_{(r+1),r}, edges_up row r
// carries e_{r,(r+1)}; empty tensors mean "no edge features".
struct GeometricSequence {
  Tensor f;  // (N,d)
  Tensor x;  // (N,3)
  Tensor edges_down;
  Tensor edges_up;

  int64_t n() const { return x.rank() > 0 ? x.dim(0) : 0; }
  int64_t d() const { return f.rank() > 1 ? f.dim(1) : 0; }
  void validate() const;
};

enum class GatingMode { QK, K, None };
GatingMode parse_gating(const std::string& s);
const char* gating_name(GatingMode m);

struct BlockConfig {
  bool local_context = true;
  bool global_context = true;  // long-conv aggregation + global context tokens
  GatingMode gating = GatingMode::QK;
  bool kv_norm = true;
  bool geometric_conv = true;  // vs separate scalar+vector convolutions
  int64_t global_tokens = 8;   // G
  double conv_scale = 0.0;     // 0 selects 1/N
  bool centering = true;
  bool invariant_residual = true;
};

// ---- parameter bundles ------------------------------------------------------

struct PhiLocal {
  Param w_self, w_nb, w_dist, w_edge, b;  // w_edge null when edge_dim == 0
};
struct PhiGlobal {
  Param w_self, w_glob, w_dist, b;
};
struct PhiCoord {
  Param w, b;
};
struct PhiFeature {
  Param w_self, w_msg, b;
};

struct ProjectionParams {
  PhiLocal phi_l;
  PhiGlobal phi_g;
  PhiCoord phi_x;
  PhiFeature phi_f;
};

// 1 -> 32 -> 32 -> G, sine activations with frequency scale 30, softplus
// output so the aggregation weights stay strictly positive.
struct SirenNet {
  static constexpr int64_t kWidth = 32;
  static constexpr double kFreq = 30.0;
  Param w1, b1, w2, b2, w3, b3;
};

struct GateHead {
  Param w, b;
};

struct HyenaBlockParams {
  ProjectionParams proj_q, proj_k, proj_v, proj_gate, proj_out;
  GateHead gate;
  SirenNet siren;
  Param lambda1, lambda2, lambda3, lambda4, lambda5;  // rank-0
  Param w_scalarize;                                  // (d,1)
  Param chan_expand;                                  // (1,d), lifts alpha3 back to d channels
};

enum class InitMode { Default, RandomAll };

ProjectionParams make_projection(ParamStore& store, const std::string& prefix, int64_t d, int64_t edge_dim,
                                 Rng& rng, InitMode mode, Dtype dt);
SirenNet make_siren(ParamStore& store, const std::string& prefix, int64_t g, Rng& rng, InitMode mode, Dtype dt);
HyenaBlockParams make_block(ParamStore& store, const std::string& prefix, int64_t d, int64_t edge_dim,
                            const BlockConfig& cfg, Rng& rng, InitMode mode, Dtype dt);

// ---- forward graph pieces ---------------------------------------------------

struct SeqV {
  Value f;  // (N,d)
  Value x;  // (N,3)
  Tensor edges_down, edges_up;  // constants
};

SeqV to_values(const GeometricSequence& seq);
GeometricSequence to_sequence(const SeqV& seq);

struct GlobalTokens {
  Value g;      // (G,3)
  Value h;      // (G,d)
  Value omega;  // (N,G)
  Value c;      // (G,1) normalizers
};

// Position-conditioned aggregation weights, row i = softplus(SIREN(i/(n-1))).
Value siren_weights(int64_t n, const SirenNet& net, Lease& lease, Dtype dt);

GlobalTokens compute_global_tokens(const Value& f, const Value& x, const Value& omega);

struct ProjOut {
  Value f;
  Value x;
};

// One-layer EGNN projection over the chain neighborhood, with optional
// global-token messages.
ProjOut egnn_projection(const SeqV& seq, const std::optional<GlobalTokens>& globals,
                        const ProjectionParams& params, bool local_context, Lease& lease);

// Variant over an explicit directed edge list (i receives from j). Used for
// spatial neighborhoods; O(E) graph nodes, intended for small graphs.
ProjOut egnn_projection_adjacency(const SeqV& seq, const std::optional<GlobalTokens>& globals,
                                  const ProjectionParams& params,
                                  const std::vector<std::pair<int64_t, int64_t>>& edges, Lease& lease);

// Top-k neighbors within radius r (chain-independent, by distance).
std::vector<std::pair<int64_t, int64_t>> knn_radius_edges(const Tensor& x, int64_t k, double r);

struct QKVBundle {
  Value q_inv, k_inv, v_inv;  // (N,d)
  Value q_eqv, k_eqv, v_eqv;  // (N,3)
};

QKVBundle qkv_project(const SeqV& seq, const std::optional<GlobalTokens>& globals,
                      const ProjectionParams& pq, const ProjectionParams& pk, const ProjectionParams& pv,
                      bool local_context, Lease& lease);

// Unit L2 norm per token for keys and values, denominator guarded by +1e-8.
QKVBundle kv_normalize(const QKVBundle& bundle);
Value normalize_rows(const Value& v);

Value selective_gate(const SeqV& seq, const std::optional<GlobalTokens>& globals,
                     const HyenaBlockParams& params, GatingMode mode, bool local_context,
                     const Value& k_inv, Lease& lease);

std::pair<Value, Value> apply_gate_and_values(const Value& u_inv, const Value& u_eqv, const Value& m,
                                              const Value& v_inv, const Value& v_eqv);

std::pair<Value, Value> center(const Value& x);  // (centered, centroid(3))
Value uncenter(const Value& x, const Value& centroid);

SeqV hyena_block_forward(const HyenaBlockParams& params, const SeqV& seq, const BlockConfig& cfg,
                         Lease& lease);

// Broadcast a (N,1) column across k columns.
Value expand_cols(const Value& col, int64_t k);

}  // namespace ghyena
