#pragma once

#include <string>
#include <vector>

#include "ghyena/block.hpp"
#include "ghyena/kv.hpp"

namespace ghyena {

enum class Readout { PoolEqvVector, PerToken };
enum class BlockKind { Hyena, GTransformer };

struct ModelConfig {
  int64_t input_dim = 16;  // invariant feature width fed to the embedding
  int64_t hidden = 80;
  int64_t depth = 2;
  int64_t edge_dim = 0;
  Readout readout = Readout::PoolEqvVector;
  BlockKind kind = BlockKind::Hyena;
  Dtype dtype = Dtype::F64;
  BlockConfig block;

  KvMap to_kv() const;
  static ModelConfig from_kv(const KvMap& kv);
};

struct GHyenaModel {
  ModelConfig cfg;
  ParamStore params;
  Param embed_w;  // (input_dim, hidden)
  Param embed_b;  // (hidden)
  std::vector<HyenaBlockParams> blocks;
  int64_t trained_epochs = 0;

  int64_t param_count() const { return params.total_elements(); }
};

GHyenaModel build_model(const ModelConfig& cfg, uint64_t seed, InitMode mode = InitMode::Default);

// ---- attention (G-Transformer global context) -------------------------------

// C_ij = q_i . k_j ; S = rowwise softmax(C / sqrt(N)) ; u_i = sum_j S_ij v_j.
Value dot_product_vector_attention(const Value& q, const Value& k, const Value& v);

struct AttentionMatrices {
  Tensor c;  // (N,N) invariant dot products
  Tensor s;  // (N,N) row-stochastic attention
};
AttentionMatrices dot_product_attention_matrices(const Tensor& q, const Tensor& k);

// C_ij = q_i x k_j ; S = softmax(|C|/sqrt(N)) (.) C ; u_i = 1/N sum_j S_ij x v_j.
Tensor cross_product_vector_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Same pipeline as hyena_block_forward with the long convolution replaced by
// softmax attention on both streams.
SeqV gtransformer_block_forward(const HyenaBlockParams& params, const SeqV& seq, const BlockConfig& cfg,
                                Lease& lease);

// ---- model forward -----------------------------------------------------------

Value pool_eqv_vector(const Value& x);  // mean over tokens -> (3)

SeqV model_forward_seq(const GHyenaModel& model, const SeqV& in, Lease& lease);
// Readout::PoolEqvVector prediction for raw inputs.
Value model_forward_pool(const GHyenaModel& model, const Tensor& x, const Tensor& f, Lease& lease);

// Checkpoint round trip ("GHK1" blob + text manifest carrying the config).
void save_model(const GHyenaModel& model, const std::string& path);
GHyenaModel load_model(const std::string& path);

}  // namespace ghyena
