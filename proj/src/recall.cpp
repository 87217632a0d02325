#include "ghyena/recall.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include "ghyena/geometry.hpp"

namespace ghyena {

AssocRecallVocab gen_vocab(int64_t v, Rng& rng) {
  if (v < 1) fail_invalid("gen_vocab: vocabulary size >= 1 required");
  AssocRecallVocab vocab;
  vocab.keys.resize(static_cast<size_t>(v));
  vocab.values.resize(static_cast<size_t>(v));
  auto sample = [&](std::array<double, 3>& out) {
    double norm2 = 0;
    do {
      norm2 = 0;
      for (double& c : out) {
        c = rng.normal();
        norm2 += c * c;
      }
    } while (norm2 < 1e-24);
    double mag = rng.uniform(1.0, static_cast<double>(v));
    double s = mag / std::sqrt(norm2);
    for (double& c : out) c *= s;
  };
  for (int64_t i = 0; i < v; ++i) {
    sample(vocab.keys[static_cast<size_t>(i)]);
    sample(vocab.values[static_cast<size_t>(i)]);
  }
  return vocab;
}

AssocRecallInstance gen_sequence(const AssocRecallVocab& vocab, int64_t n, Rng& rng) {
  if (n < 4 || n % 2 != 0) fail_invalid("gen_sequence: even length >= 4 required");
  int64_t v = vocab.size();
  int64_t m = n / 2;  // bigram slots; the last one only contributes its key
  std::vector<int64_t> picks(static_cast<size_t>(m));
  for (auto& p : picks) p = static_cast<int64_t>(rng.below(static_cast<uint64_t>(v)));
  // query must name a bigram that appears complete in the prefix
  int64_t query = 0;
  for (;;) {
    query = static_cast<int64_t>(rng.below(static_cast<uint64_t>(v)));
    bool present = false;
    for (int64_t i = 0; i + 1 < m; ++i)
      if (picks[static_cast<size_t>(i)] == query) present = true;
    if (present) break;
  }

  AssocRecallInstance inst;
  inst.tokens = Tensor({n, 3});
  auto put = [&](int64_t row, const std::array<double, 3>& vec) {
    for (int64_t c = 0; c < 3; ++c) inst.tokens.set(row * 3 + c, vec[static_cast<size_t>(c)]);
  };
  for (int64_t i = 0; i < m - 1; ++i) {
    put(2 * i, vocab.keys[static_cast<size_t>(picks[static_cast<size_t>(i)])]);
    put(2 * i + 1, vocab.values[static_cast<size_t>(picks[static_cast<size_t>(i)])]);
  }
  put(n - 2, vocab.keys[static_cast<size_t>(picks[static_cast<size_t>(m - 1)])]);  // dangling key
  put(n - 1, vocab.keys[static_cast<size_t>(query)]);
  inst.target = Tensor({3});
  for (int64_t c = 0; c < 3; ++c) inst.target.set(c, vocab.values[static_cast<size_t>(query)][static_cast<size_t>(c)]);
  inst.query_index = query;
  return inst;
}

Tensor positional_encoding(int64_t n, int64_t dim) {
  if (dim <= 0 || dim % 2 != 0) fail_invalid("positional_encoding: even dimension required");
  Tensor pe({n, dim});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < dim / 2; ++c) {
      double freq = std::pow(10000.0, -2.0 * static_cast<double>(c) / static_cast<double>(dim));
      double a = static_cast<double>(i) * freq;
      pe.set(i * dim + 2 * c, std::sin(a));
      pe.set(i * dim + 2 * c + 1, std::cos(a));
    }
  return pe;
}

int worker_thread_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const char* env = std::getenv("GHYENA_THREADS");
  if (env != nullptr) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v < 1024) hw = std::min<unsigned>(hw, static_cast<unsigned>(v));
  }
  return static_cast<int>(hw);
}

Dataset gen_dataset(int64_t count, int64_t vocab, int64_t seq_len, uint64_t seed) {
  if (count < 1) fail_invalid("gen_dataset: count >= 1 required");
  Dataset data(static_cast<size_t>(count));
  auto fill = [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      Rng rng = Rng::derive(seed, static_cast<uint64_t>(i));
      AssocRecallVocab voc = gen_vocab(vocab, rng);
      data[static_cast<size_t>(i)] = gen_sequence(voc, seq_len, rng);
    }
  };
  int threads = worker_thread_count();
  if (threads <= 1 || count < 64) {
    fill(0, count);
  } else {
    int64_t nt = std::min<int64_t>(threads, count);
    std::vector<std::thread> pool;
    int64_t chunk = (count + nt - 1) / nt;
    for (int64_t t = 0; t < nt; ++t) {
      int64_t b = t * chunk;
      int64_t e = std::min(count, b + chunk);
      if (b >= e) break;
      pool.emplace_back(fill, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return data;
}

namespace {
constexpr char kGarMagic[4] = {'G', 'A', 'R', '1'};
constexpr uint32_t kGarVersion = 1;
}  // namespace

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_io("cannot write dataset: " + path);
  out.write(kGarMagic, 4);
  uint32_t version = kGarVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  uint32_t count = static_cast<uint32_t>(data.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& inst : data) {
    uint32_t n = static_cast<uint32_t>(inst.tokens.dim(0));
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (int64_t i = 0; i < inst.tokens.numel(); ++i) {
      double v = inst.tokens.at(i);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
    for (int64_t i = 0; i < 3; ++i) {
      double v = inst.target.at(i);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
  if (!out) fail_io("dataset write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open dataset: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kGarMagic, 4) != 0) fail_io("dataset: bad magic in " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (!in || version != kGarVersion) fail_io("dataset: unsupported version");
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  Dataset data;
  data.reserve(count);
  for (uint32_t k = 0; k < count; ++k) {
    uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    if (!in || n < 1) fail_io("dataset: truncated instance header");
    AssocRecallInstance inst;
    inst.tokens = Tensor({static_cast<int64_t>(n), 3});
    for (int64_t i = 0; i < inst.tokens.numel(); ++i) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), 8);
      inst.tokens.set(i, v);
    }
    inst.target = Tensor({3});
    for (int64_t i = 0; i < 3; ++i) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), 8);
      inst.target.set(i, v);
    }
    if (!in) fail_io("dataset: truncated payload");
    data.push_back(std::move(inst));
  }
  return data;
}

AssocRecallInstance rotate_instance(const AssocRecallInstance& inst, const Tensor& r) {
  if (!is_rotation(r, 1e-8)) fail_invalid("rotate_instance: R is not a rotation (orthonormal, det +1)");
  AssocRecallInstance out;
  out.tokens = rotate_rows(inst.tokens, r);
  out.target = rotate_rows(inst.target, r);
  out.query_index = inst.query_index;
  return out;
}

double evaluate(const GHyenaModel& model, const Dataset& data) {
  if (data.empty()) fail_invalid("evaluate: empty dataset");
  double acc = 0;
  for (const auto& inst : data) {
    Lease lease(nullptr);
    Tensor pos = positional_encoding(inst.tokens.dim(0), model.cfg.input_dim);
    Value pred = model_forward_pool(model, inst.tokens.cast(model.cfg.dtype), pos.cast(model.cfg.dtype), lease);
    double se = 0;
    for (int64_t c = 0; c < 3; ++c) {
      double d = pred.tensor().at(c) - inst.target.at(c);
      se += d * d;
    }
    acc += se / 3.0;
  }
  return acc / static_cast<double>(data.size());
}

double mean_predictor_mse(const Dataset& data) {
  if (data.empty()) fail_invalid("mean_predictor_mse: empty dataset");
  double mu[3] = {0, 0, 0};
  for (const auto& inst : data)
    for (int64_t c = 0; c < 3; ++c) mu[c] += inst.target.at(c);
  for (double& c : mu) c /= static_cast<double>(data.size());
  double acc = 0;
  for (const auto& inst : data) {
    double se = 0;
    for (int64_t c = 0; c < 3; ++c) {
      double d = inst.target.at(c) - mu[c];
      se += d * d;
    }
    acc += se / 3.0;
  }
  return acc / static_cast<double>(data.size());
}

}  // namespace ghyena
