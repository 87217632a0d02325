#include <doctest.h>

#include <cmath>

#include "ghyena/bench.hpp"
#include "ghyena/checks.hpp"

using namespace ghyena;

TEST_SUITE("bench_checks") {

TEST_CASE("bench produces one record per trial with positive timings") {
  BenchOptions opts;
  opts.hidden = 8;
  auto records = bench_op("vector-conv", 256, 3, opts);
  REQUIRE(records.size() == 3);
  for (const auto& r : records) {
    CHECK(r.op == "vector-conv");
    CHECK(r.n == 256);
    CHECK(r.elapsed_ns > 0);
    CHECK_FALSE(r.oom());
  }
  CHECK_THROWS_AS(bench_op("frobnicate", 64, 1, opts), Error);
}

TEST_CASE("simulated allocation budget yields OOM rows and continues") {
  BenchOptions opts;
  opts.hidden = 8;
  opts.alloc_budget = 1024;  // far below what the run needs
  auto records = bench_op("ghyena-block", 512, 2, opts);
  REQUIRE(records.size() == 2);
  for (const auto& r : records) CHECK(r.oom());
  // budget is restored afterwards
  opts.alloc_budget = 0;
  auto ok = bench_op("vector-conv", 128, 1, opts);
  CHECK_FALSE(ok[0].oom());
}

TEST_CASE("csv rows round trip losslessly") {
  BenchRecord rec;
  rec.op = "vector-conv";
  rec.n = 4096;
  rec.trial = 2;
  rec.elapsed_ns = 123456789;
  rec.peak_bytes = 987654321;
  BenchRecord back = parse_bench_csv_row(bench_csv_row(rec));
  CHECK(back.op == rec.op);
  CHECK(back.n == rec.n);
  CHECK(back.trial == rec.trial);
  CHECK(back.elapsed_ns == rec.elapsed_ns);
  CHECK(back.peak_bytes == rec.peak_bytes);

  BenchRecord oom = rec;
  oom.elapsed_ns = -1;
  std::string row = bench_csv_row(oom);
  CHECK(row.find("OOM") != std::string::npos);
  BenchRecord oom_back = parse_bench_csv_row(row);
  CHECK(oom_back.oom());
  CHECK(bench_csv_header() == "op,n,trial,elapsed_ns,peak_bytes");
}

TEST_CASE("log-log fit recovers a quadratic exponent") {
  std::vector<std::pair<double, double>> pts;
  for (double n : {256.0, 512.0, 1024.0, 2048.0}) pts.emplace_back(n, 3.5 * n * n);
  CHECK(fit_loglog_exponent(pts) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("oracle suite passes and the mutation test catches a sign flip") {
  auto clean = oracle_suite();
  CHECK(count_failures(clean) == 0);

  LeviCivitaPlan corrupted = LeviCivitaPlan::standard();
  corrupted.entries[3].sign = -corrupted.entries[3].sign;
  auto broken = oracle_suite(corrupted);
  CHECK(count_failures(broken) > 0);
}

TEST_CASE("naive path scales worse than the FFT path") {
  BenchOptions opts;
  std::vector<std::pair<double, double>> naive_pts, fft_pts;
  for (int64_t n : {256, 512, 1024}) {
    auto rec = bench_op("vector-conv-naive", n, 3, opts);
    int64_t best = rec[0].elapsed_ns;
    for (const auto& r : rec) best = std::min(best, r.elapsed_ns);
    naive_pts.emplace_back(static_cast<double>(n), static_cast<double>(best));
  }
  for (int64_t n : {16384, 32768, 65536}) {
    auto rec = bench_op("vector-conv", n, 3, opts);
    int64_t best = rec[0].elapsed_ns;
    for (const auto& r : rec) best = std::min(best, r.elapsed_ns);
    fft_pts.emplace_back(static_cast<double>(n), static_cast<double>(best));
  }
  double naive_exp = fit_loglog_exponent(naive_pts);
  double fft_exp = fit_loglog_exponent(fft_pts);
  MESSAGE("naive exponent ", naive_exp, ", fft exponent ", fft_exp);
  CHECK(naive_exp > fft_exp);
}

}  // TEST_SUITE
