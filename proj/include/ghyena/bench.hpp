#pragma once

#include <string>
#include <vector>

#include "ghyena/tensor.hpp"

namespace ghyena {

struct BenchRecord {
  std::string op;
  int64_t n = 0;
  int trial = 0;
  int64_t elapsed_ns = -1;  // -1 encodes OOM
  uint64_t peak_bytes = 0;

  bool oom() const { return elapsed_ns < 0; }
};

struct BenchOptions {
  Dtype dtype = Dtype::F32;    // benchmark path runs 32-bit unless asked otherwise
  int64_t hidden = 80;
  int64_t global_tokens = 8;
  uint64_t seed = 42;
  uint64_t alloc_budget = 0;   // bytes; 0 disables the simulated-OOM budget
};

extern const char* const kBenchOps[6];
bool bench_op_known(const std::string& op);

// One warmup run, then `trials` timed runs on fresh random data; monotonic
// clock, tensor-allocator high-water mark reset per trial.
std::vector<BenchRecord> bench_op(const std::string& op, int64_t n, int trials, const BenchOptions& opts);

// Least-squares slope of log(elapsed) vs log(n).
double fit_loglog_exponent(const std::vector<std::pair<double, double>>& points);

std::string bench_csv_header();
std::string bench_csv_row(const BenchRecord& rec);
BenchRecord parse_bench_csv_row(const std::string& line);

}  // namespace ghyena
