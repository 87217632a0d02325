#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ghyena/geometry.hpp"
#include "ghyena/recall.hpp"
#include "ghyena/rng.hpp"

using namespace ghyena;

namespace {

double vec_norm(const Tensor& t, int64_t row) {
  double acc = 0;
  for (int64_t c = 0; c < 3; ++c) acc += t.at(row * 3 + c) * t.at(row * 3 + c);
  return std::sqrt(acc);
}

bool rows_equal(const Tensor& t, int64_t row, const std::array<double, 3>& v) {
  for (int64_t c = 0; c < 3; ++c)
    if (t.at(row * 3 + c) != v[static_cast<size_t>(c)]) return false;
  return true;
}

}  // namespace

TEST_SUITE("recall") {

TEST_CASE("vocabulary magnitudes cover [1, V]") {
  Rng rng(81);
  AssocRecallVocab v1 = gen_vocab(1, rng);
  CHECK(v1.size() == 1);
  CHECK(std::abs(std::sqrt(v1.keys[0][0] * v1.keys[0][0] + v1.keys[0][1] * v1.keys[0][1] +
                           v1.keys[0][2] * v1.keys[0][2]) -
                 1.0) < 1e-12);

  AssocRecallVocab v5 = gen_vocab(5, rng);
  for (int64_t i = 0; i < 5; ++i) {
    for (const auto& entry : {v5.keys[static_cast<size_t>(i)], v5.values[static_cast<size_t>(i)]}) {
      double norm = std::sqrt(entry[0] * entry[0] + entry[1] * entry[1] + entry[2] * entry[2]);
      CHECK(norm >= 1.0 - 1e-12);
      CHECK(norm <= 5.0 + 1e-12);
    }
  }
  CHECK_THROWS_AS(gen_vocab(0, rng), Error);
}

TEST_CASE("key directions are isotropic") {
  Rng rng(82);
  double mean[3] = {0, 0, 0};
  const int samples = 10000;
  for (int s = 0; s < samples; ++s) {
    AssocRecallVocab v = gen_vocab(1, rng);
    double norm = std::sqrt(v.keys[0][0] * v.keys[0][0] + v.keys[0][1] * v.keys[0][1] +
                            v.keys[0][2] * v.keys[0][2]);
    for (int c = 0; c < 3; ++c) mean[c] += v.keys[0][static_cast<size_t>(c)] / norm / samples;
  }
  double drift = std::sqrt(mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]);
  CHECK(drift < 0.05);
}

TEST_CASE("minimal sequence layout for a single bigram") {
  Rng rng(83);
  AssocRecallVocab vocab = gen_vocab(1, rng);
  AssocRecallInstance inst = gen_sequence(vocab, 4, rng);
  REQUIRE(inst.tokens.dim(0) == 4);
  // bigram stream (key, value), dangling key, then the query (also the key)
  CHECK(rows_equal(inst.tokens, 0, vocab.keys[0]));
  CHECK(rows_equal(inst.tokens, 1, vocab.values[0]));
  CHECK(rows_equal(inst.tokens, 2, vocab.keys[0]));
  CHECK(rows_equal(inst.tokens, 3, vocab.keys[0]));
  for (int64_t c = 0; c < 3; ++c) CHECK(inst.target.at(c) == vocab.values[0][static_cast<size_t>(c)]);

  CHECK_THROWS_AS(gen_sequence(vocab, 2, rng), Error);
  CHECK_THROWS_AS(gen_sequence(vocab, 5, rng), Error);
}

TEST_CASE("generated instances satisfy the recall constraint") {
  Rng rng(84);
  for (int rep = 0; rep < 1000; ++rep) {
    AssocRecallVocab vocab = gen_vocab(4, rng);
    AssocRecallInstance inst = gen_sequence(vocab, 12, rng);
    int64_t n = inst.tokens.dim(0);
    REQUIRE(n == 12);
    // query matches a vocab key
    REQUIRE(inst.query_index >= 0);
    CHECK(rows_equal(inst.tokens, n - 1, vocab.keys[static_cast<size_t>(inst.query_index)]));
    // the query bigram occurs complete among the preceding tokens
    bool found = false;
    for (int64_t i = 0; i + 1 < n - 1; i += 2) {
      if (rows_equal(inst.tokens, i, vocab.keys[static_cast<size_t>(inst.query_index)]) &&
          rows_equal(inst.tokens, i + 1, vocab.values[static_cast<size_t>(inst.query_index)])) {
        found = true;
        break;
      }
    }
    CHECK(found);
    // prefix is a valid bigram stream
    for (int64_t i = 0; i + 1 < n - 1; i += 2) {
      bool is_bigram = false;
      for (int64_t k = 0; k < vocab.size(); ++k)
        if (rows_equal(inst.tokens, i, vocab.keys[static_cast<size_t>(k)]) &&
            rows_equal(inst.tokens, i + 1, vocab.values[static_cast<size_t>(k)]))
          is_bigram = true;
      CHECK(is_bigram);
    }
  }
}

TEST_CASE("positional encoding") {
  Tensor pe = positional_encoding(8, 16);
  // position 0 alternates sin(0)=0, cos(0)=1
  for (int64_t c = 0; c < 16; c += 2) {
    CHECK(pe.at(c) == 0.0);
    CHECK(pe.at(c + 1) == 1.0);
  }
  for (int64_t i = 0; i < pe.numel(); ++i) {
    CHECK(pe.at(i) >= -1.0);
    CHECK(pe.at(i) <= 1.0);
  }
  CHECK_THROWS_AS(positional_encoding(4, 15), Error);

  // distinct positions get distinct encodings
  Tensor big = positional_encoding(10000, 16);
  std::set<std::string> rows;
  for (int64_t i = 0; i < 10000; ++i) {
    std::string key(reinterpret_cast<const char*>(big.data<double>().data() + i * 16), 16 * sizeof(double));
    rows.insert(key);
  }
  CHECK(rows.size() == 10000);
}

TEST_CASE("instance rotation") {
  Rng rng(85);
  AssocRecallVocab vocab = gen_vocab(3, rng);
  AssocRecallInstance inst = gen_sequence(vocab, 8, rng);

  Tensor eye({3, 3});
  for (int64_t i = 0; i < 3; ++i) eye.set(i * 3 + i, 1.0);
  AssocRecallInstance same = rotate_instance(inst, eye);
  for (int64_t i = 0; i < inst.tokens.numel(); ++i) CHECK(same.tokens.at(i) == inst.tokens.at(i));

  Tensor r1 = random_rotation(rng);
  Tensor r2 = random_rotation(rng);
  AssocRecallInstance two_step = rotate_instance(rotate_instance(inst, r1), r2);
  // R2 R1 composed
  Tensor r21({3, 3});
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (int64_t k = 0; k < 3; ++k) acc += r2.at(i * 3 + k) * r1.at(k * 3 + j);
      r21.set(i * 3 + j, acc);
    }
  AssocRecallInstance direct = rotate_instance(inst, r21);
  CHECK(rel_deviation(two_step.tokens, direct.tokens) < 1e-12);

  for (int64_t i = 0; i < inst.tokens.dim(0); ++i)
    CHECK(vec_norm(two_step.tokens, i) == doctest::Approx(vec_norm(inst.tokens, i)).epsilon(1e-12));

  Tensor sheared({3, 3});
  for (int64_t i = 0; i < 3; ++i) sheared.set(i * 3 + i, 1.0);
  sheared.set(1, 0.5);
  CHECK_THROWS_AS(rotate_instance(inst, sheared), Error);
}

TEST_CASE("dataset generation is deterministic and round-trips through GAR1") {
  Dataset a = gen_dataset(20, 3, 16, 99);
  Dataset b = gen_dataset(20, 3, 16, 99);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    for (int64_t k = 0; k < a[i].tokens.numel(); ++k) CHECK(a[i].tokens.at(k) == b[i].tokens.at(k));
    for (int64_t k = 0; k < 3; ++k) CHECK(a[i].target.at(k) == b[i].target.at(k));
  }

  std::string path = (std::filesystem::temp_directory_path() / "ghyena_gar_test.gar").string();
  save_dataset(a, path);
  Dataset c = load_dataset(path);
  REQUIRE(c.size() == a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(c[i].tokens.dim(0) == a[i].tokens.dim(0));
    for (int64_t k = 0; k < a[i].tokens.numel(); ++k) CHECK(c[i].tokens.at(k) == a[i].tokens.at(k));
    for (int64_t k = 0; k < 3; ++k) CHECK(c[i].target.at(k) == a[i].target.at(k));
  }
  // identical seed, identical bytes
  std::string path2 = (std::filesystem::temp_directory_path() / "ghyena_gar_test2.gar").string();
  save_dataset(b, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);

  CHECK_THROWS_AS(load_dataset("/nonexistent/nowhere.gar"), Error);
}

TEST_CASE("evaluation conventions") {
  // an oracle dataset where pooling the tokens reproduces the target exactly
  ModelConfig cfg;
  cfg.input_dim = 16;
  cfg.hidden = 3;
  cfg.depth = 0;
  GHyenaModel model = build_model(cfg, 86);
  // identity-ish embed is irrelevant at depth 0; prediction = mean of tokens
  Dataset oracle;
  {
    AssocRecallInstance inst;
    inst.tokens = Tensor({4, 3});
    for (int64_t i = 0; i < 4; ++i) {
      inst.tokens.set(i * 3, 0.2);
      inst.tokens.set(i * 3 + 1, -0.4);
      inst.tokens.set(i * 3 + 2, 0.8);
    }
    inst.target = Tensor::from({3}, {0.2, -0.4, 0.8});
    oracle.push_back(inst);
  }
  CHECK(evaluate(model, oracle) < 1e-24);

  // zero prediction against unit-norm targets gives 1/3 per component
  Dataset unit;
  {
    AssocRecallInstance inst;
    inst.tokens = Tensor({2, 3});
    inst.tokens.set(0, 1.0);   // e_x
    inst.tokens.set(3, -1.0);  // -e_x, mean is zero
    inst.target = Tensor::from({3}, {0, 0, 1});
    unit.push_back(inst);
  }
  CHECK(evaluate(model, unit) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // mean-predictor baseline: closed form over a two-target dataset
  Dataset pair;
  for (double sign : {-1.0, 1.0}) {
    AssocRecallInstance inst;
    inst.tokens = Tensor({2, 3});
    inst.target = Tensor::from({3}, {sign, 0, 0});
    pair.push_back(inst);
  }
  // mean target 0; each instance contributes 1/3
  CHECK(mean_predictor_mse(pair) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("rotating a dataset leaves an equivariant model's MSE unchanged") {
  ModelConfig cfg;
  cfg.input_dim = 16;
  cfg.hidden = 8;
  cfg.depth = 2;
  cfg.block.global_tokens = 4;
  GHyenaModel model = build_model(cfg, 87, InitMode::RandomAll);
  Dataset data = gen_dataset(12, 3, 16, 88);
  double base = evaluate(model, data);
  Rng rng(89);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor r = random_rotation(rng);
    Dataset rotated;
    for (const auto& inst : data) rotated.push_back(rotate_instance(inst, r));
    CHECK(std::abs(evaluate(model, rotated) - base) < 1e-5);
  }
}

}  // TEST_SUITE
