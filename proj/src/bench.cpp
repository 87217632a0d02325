#include "ghyena/bench.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>

#include "ghyena/alloc.hpp"
#include "ghyena/kv.hpp"
#include "ghyena/model.hpp"
#include "ghyena/rng.hpp"

namespace ghyena {

const char* const kBenchOps[6] = {"scalar-conv",    "vector-conv", "vector-conv-naive",
                                  "geometric-conv", "ghyena-block", "gtrans-block"};

bool bench_op_known(const std::string& op) {
  for (const char* name : kBenchOps)
    if (op == name) return true;
  return false;
}

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, Dtype dt) {
  Tensor t(std::move(shape), dt);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-1.0, 1.0));
  return t;
}

struct Runner {
  std::function<void()> run;
};

Runner make_runner(const std::string& op, int64_t n, const BenchOptions& opts) {
  Rng rng(opts.seed);
  Dtype dt = opts.dtype;
  if (op == "scalar-conv") {
    auto q = std::make_shared<Tensor>(random_tensor({n, opts.hidden}, rng, dt));
    auto k = std::make_shared<Tensor>(random_tensor({n, opts.hidden}, rng, dt));
    return {[q, k] { scalar_long_conv(*q, *k); }};
  }
  if (op == "vector-conv") {
    auto q = std::make_shared<Tensor>(random_tensor({n, 3}, rng, dt));
    auto k = std::make_shared<Tensor>(random_tensor({n, 3}, rng, dt));
    return {[q, k] { vector_long_conv(*q, *k); }};
  }
  if (op == "vector-conv-naive") {
    auto q = std::make_shared<Tensor>(random_tensor({n, 3}, rng, dt));
    auto k = std::make_shared<Tensor>(random_tensor({n, 3}, rng, dt));
    return {[q, k] { vector_long_conv_naive(*q, *k); }};
  }
  if (op == "geometric-conv") {
    auto a1 = std::make_shared<Tensor>(random_tensor({n, 1}, rng, dt));
    auto a2 = std::make_shared<Tensor>(random_tensor({n, 1}, rng, dt));
    auto r1 = std::make_shared<Tensor>(random_tensor({n, 3}, rng, dt));
    auto r2 = std::make_shared<Tensor>(random_tensor({n, 3}, rng, dt));
    return {[a1, a2, r1, r2] {
      geometric_long_conv(*a1, *r1, *a2, *r2, GeometricConvWeights{1.0, 0.8, 1.2, 0.9, 1.1});
    }};
  }
  if (op == "ghyena-block" || op == "gtrans-block") {
    ModelConfig cfg;
    cfg.input_dim = opts.hidden;
    cfg.hidden = opts.hidden;
    cfg.depth = 1;
    cfg.dtype = dt;
    cfg.kind = op == "ghyena-block" ? BlockKind::Hyena : BlockKind::GTransformer;
    cfg.block.global_tokens = opts.global_tokens;
    auto model = std::make_shared<GHyenaModel>(build_model(cfg, opts.seed, InitMode::RandomAll));
    auto x = std::make_shared<Tensor>(random_tensor({n, 3}, rng, dt));
    auto f = std::make_shared<Tensor>(random_tensor({n, opts.hidden}, rng, dt));
    return {[model, x, f] {
      Lease lease(nullptr);
      model_forward_pool(*model, *x, *f, lease);
    }};
  }
  fail_invalid("bench: unknown op '" + op + "'");
}

}  // namespace

std::vector<BenchRecord> bench_op(const std::string& op, int64_t n, int trials, const BenchOptions& opts) {
  if (trials < 1) fail_invalid("bench: trials >= 1 required");
  std::vector<BenchRecord> records;
  set_alloc_budget(opts.alloc_budget);
  try {
    Runner runner = make_runner(op, n, opts);
    // warmup, excluded from records
    try {
      runner.run();
    } catch (const Error& e) {
      if (e.code() != ErrCode::OutOfBudget) throw;
    }
    for (int t = 0; t < trials; ++t) {
      BenchRecord rec;
      rec.op = op;
      rec.n = n;
      rec.trial = t;
      reset_alloc_peak();
      auto t0 = std::chrono::steady_clock::now();
      try {
        runner.run();
        auto t1 = std::chrono::steady_clock::now();
        rec.elapsed_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
        if (rec.elapsed_ns < 1) rec.elapsed_ns = 1;
      } catch (const Error& e) {
        if (e.code() != ErrCode::OutOfBudget) {
          set_alloc_budget(0);
          throw;
        }
        rec.elapsed_ns = -1;
      }
      rec.peak_bytes = alloc_stats().peak_bytes;
      records.push_back(rec);
    }
  } catch (const Error& e) {
    if (e.code() != ErrCode::OutOfBudget) {
      set_alloc_budget(0);
      throw;
    }
    // setup itself blew the budget: report OOM rows
    for (int t = static_cast<int>(records.size()); t < trials; ++t) {
      BenchRecord rec;
      rec.op = op;
      rec.n = n;
      rec.trial = t;
      rec.elapsed_ns = -1;
      rec.peak_bytes = alloc_stats().peak_bytes;
      records.push_back(rec);
    }
  }
  set_alloc_budget(0);
  return records;
}

double fit_loglog_exponent(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) fail_invalid("fit_loglog_exponent: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : points) {
    double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double m = static_cast<double>(points.size());
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

std::string bench_csv_header() { return "op,n,trial,elapsed_ns,peak_bytes"; }

std::string bench_csv_row(const BenchRecord& rec) {
  std::string out = rec.op;
  out += ',';
  out += format_int(rec.n);
  out += ',';
  out += format_int(rec.trial);
  out += ',';
  out += rec.oom() ? "OOM" : format_int(rec.elapsed_ns);
  out += ',';
  out += format_int(static_cast<int64_t>(rec.peak_bytes));
  return out;
}

BenchRecord parse_bench_csv_row(const std::string& line) {
  BenchRecord rec;
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  if (fields.size() != 5) fail_io("bench csv: expected 5 fields, got '" + line + "'");
  rec.op = fields[0];
  auto to_int = [&](const std::string& s) {
    int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail_io("bench csv: bad integer '" + s + "'");
    return v;
  };
  rec.n = to_int(fields[1]);
  rec.trial = static_cast<int>(to_int(fields[2]));
  rec.elapsed_ns = fields[3] == "OOM" ? -1 : to_int(fields[3]);
  rec.peak_bytes = static_cast<uint64_t>(to_int(fields[4]));
  return rec;
}

}  // namespace ghyena
