#pragma once

#include <array>
#include <string>
#include <vector>

#include "ghyena/model.hpp"
#include "ghyena/rng.hpp"
#include "ghyena/tensor.hpp"

namespace ghyena {

// Key/value bigram dictionary for geometric associative recall. Directions
// are unit-sampled from an isotropic normal; magnitudes uniform in [1, V].
struct AssocRecallVocab {
  std::vector<std::array<double, 3>> keys;
  std::vector<std::array<double, 3>> values;
  int64_t size() const { return static_cast<int64_t>(keys.size()); }
};

struct AssocRecallInstance {
  Tensor tokens;  // (n,3); bigram stream, dangling key, then the query
  Tensor target;  // (3)
  int64_t query_index = -1;  // vocab entry the query copies
};

using Dataset = std::vector<AssocRecallInstance>;

AssocRecallVocab gen_vocab(int64_t v, Rng& rng);

// n even, n >= 4: slots 1..n-1 hold the truncated bigram stream (the last of
// them is a dangling key), slot n is a query key whose complete bigram
// appears in the prefix; target is that key's value.
AssocRecallInstance gen_sequence(const AssocRecallVocab& vocab, int64_t n, Rng& rng);

// Sinusoidal positional features, pe[i,2c] = sin(i / 10000^(2c/dim)).
Tensor positional_encoding(int64_t n, int64_t dim = 16);

// Vocabulary regenerated per instance from (seed, index)-derived streams;
// honors GHYENA_THREADS for generation fan-out.
Dataset gen_dataset(int64_t count, int64_t vocab, int64_t seq_len, uint64_t seed);

// "GAR1" file format round trip; positional encodings are recomputed on load.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

AssocRecallInstance rotate_instance(const AssocRecallInstance& inst, const Tensor& r);

// Mean over instances of |prediction - target|^2 / 3 (per-component MSE).
double evaluate(const GHyenaModel& model, const Dataset& data);
double mean_predictor_mse(const Dataset& data);

int worker_thread_count();

}  // namespace ghyena
