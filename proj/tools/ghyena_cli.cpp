// Command-line front end; talks to the library exclusively through the C API.

#include <charconv>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ghyena.h"

namespace {

int status_to_exit(ghy_status s) {
  switch (s) {
    case GHY_OK: return 0;
    case GHY_ERR_INVARIANT: return 1;
    case GHY_ERR_IO: return 2;
    case GHY_ERR_INVALID_ARGUMENT: return 2;
    case GHY_ERR_NUMERIC: return 3;
    case GHY_ERR_OUT_OF_BUDGET: return 3;
  }
  return 2;
}

[[noreturn]] void die(ghy_status s, const std::string& context) {
  std::fprintf(stderr, "error: %s: %s (%s)\n", context.c_str(), ghy_last_error(), ghy_status_name(s));
  std::exit(status_to_exit(s));
}

void check(ghy_status s, const std::string& context) {
  if (s != GHY_OK) die(s, context);
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string fmt_int(int64_t v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void require_writable_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::string probe = dir + "/.ghyena_write_probe";
  {
    std::ofstream out(probe, std::ios::trunc);
    if (!out) {
      std::fprintf(stderr, "error: output path not writable: %s\n", dir.c_str());
      std::exit(2);
    }
  }
  std::filesystem::remove(probe, ec);
}

void require_writable_file(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::app);
  if (!out) {
    std::fprintf(stderr, "error: output path not writable: %s\n", path.c_str());
    std::exit(2);
  }
}

// config file merged with command-line key=value overrides; flags win
std::string merge_config(const std::string& config_file, const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> kv;
  auto absorb = [&](const std::string& line) {
    std::string s = line;
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return;
    size_t e = s.find_last_not_of(" \t\r\n");
    s = s.substr(b, e - b + 1);
    if (s.empty() || s[0] == '#') return;
    size_t eq = s.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: expected key=value, got '%s'\n", s.c_str());
      std::exit(2);
    }
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  };
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) {
      std::fprintf(stderr, "error: cannot open config file %s\n", config_file.c_str());
      std::exit(2);
    }
    std::string line;
    while (std::getline(in, line)) absorb(line);
  }
  for (const auto& o : overrides) absorb(o);
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

const char* kModelKeys[] = {"input_dim",      "hidden",        "depth",      "edge_dim",
                            "readout",        "kind",          "dtype",      "local_context",
                            "global_context", "gating",        "kv_norm",    "geometric_conv",
                            "global_tokens",  "conv_scale",    "centering",  "invariant_residual"};
const char* kTrainKeys[] = {"epochs",     "batch",    "lr",        "warmup", "weight_decay",
                            "train_size", "val_size", "test_size", "seed",   "vocab",
                            "seq_len"};

std::pair<std::string, std::string> split_model_train(const std::string& merged) {
  std::string model, train;
  std::string cur;
  auto route = [&](const std::string& line) {
    if (line.empty()) return;
    std::string key = line.substr(0, line.find('='));
    for (const char* k : kModelKeys)
      if (key == k) {
        model += line;
        model += '\n';
        return;
      }
    for (const char* k : kTrainKeys)
      if (key == k) {
        train += line;
        train += '\n';
        return;
      }
    std::fprintf(stderr, "error: unknown config key '%s'\n", key.c_str());
    std::exit(2);
  };
  for (char c : merged) {
    if (c == '\n') {
      route(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  route(cur);
  return {model, train};
}

struct CsvSink {
  std::FILE* f = nullptr;
  explicit CsvSink(const std::string& path) {
    f = std::fopen(path.c_str(), "w");
    if (f == nullptr) {
      std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
      std::exit(2);
    }
  }
  ~CsvSink() {
    if (f) std::fclose(f);
  }
  void line(const std::string& s) {
    std::fputs(s.c_str(), f);
    std::fputc('\n', f);
    std::fflush(f);
  }
};

int cmd_gen_data(const std::string& out_dir, int64_t vocab, int64_t seq_len, int64_t train_n,
                 int64_t val_n, int64_t test_n, uint64_t seed) {
  require_writable_dir(out_dir);
  struct Split {
    const char* name;
    int64_t count;
    uint64_t stream;
  } splits[] = {{"train", train_n, 1}, {"val", val_n, 2}, {"test", test_n, 3}};
  for (const auto& s : splits) {
    if (s.count <= 0) continue;
    ghy_dataset* data = nullptr;
    check(ghy_dataset_generate(s.count, vocab, seq_len, seed ^ (s.stream * 0x9e3779b97f4a7c15ULL), &data),
          "generate " + std::string(s.name));
    std::string path = out_dir + "/" + s.name + ".gar";
    ghy_status st = ghy_dataset_save(data, path.c_str());
    ghy_dataset_free(data);
    check(st, "save " + path);
    std::printf("wrote %s (%s sequences, vocab %s, length %s)\n", path.c_str(), fmt_int(s.count).c_str(),
                fmt_int(vocab).c_str(), fmt_int(seq_len).c_str());
  }
  return 0;
}

struct TrainCsvCtx {
  CsvSink* sink;
};

void epoch_cb(int64_t epoch, double lr, double train_mse, double val_mse, void* user) {
  auto* ctx = static_cast<TrainCsvCtx*>(user);
  std::string row = fmt_int(epoch) + "," + fmt_double(lr) + "," + fmt_double(train_mse) + "," +
                    fmt_double(val_mse);
  ctx->sink->line(row);
  std::printf("epoch %s lr %s train_mse %s val_mse %s\n", fmt_int(epoch).c_str(), fmt_double(lr).c_str(),
              fmt_double(train_mse).c_str(), fmt_double(val_mse).c_str());
  std::fflush(stdout);
}

int cmd_train(const std::string& data_dir, const std::string& out_ckpt, const std::string& metrics_csv,
              const std::string& config_file, const std::vector<std::string>& sets,
              const std::string& resume, uint64_t model_seed, bool train_from_file) {
  require_writable_file(out_ckpt);
  require_writable_file(metrics_csv);
  auto [model_cfg, train_cfg] = split_model_train(merge_config(config_file, sets));

  ghy_model* model = nullptr;
  if (!resume.empty()) {
    check(ghy_model_load(resume.c_str(), &model), "load checkpoint " + resume);
    std::printf("resumed from %s at epoch %s\n", resume.c_str(),
                fmt_int(ghy_model_trained_epochs(model)).c_str());
  } else {
    check(ghy_model_create(model_cfg.c_str(), model_seed, &model), "create model");
  }
  std::printf("model parameters: %s\n", fmt_int(ghy_model_param_count(model)).c_str());

  ghy_dataset* train_data = nullptr;
  ghy_dataset* val_data = nullptr;
  if (train_from_file) {
    std::string path = data_dir + "/train.gar";
    check(ghy_dataset_load(path.c_str(), &train_data), "load " + path);
  }
  if (!data_dir.empty()) {
    std::string path = data_dir + "/val.gar";
    if (std::filesystem::exists(path)) check(ghy_dataset_load(path.c_str(), &val_data), "load " + path);
  }

  CsvSink sink(metrics_csv);
  sink.line("epoch,lr,train_mse,val_mse");
  TrainCsvCtx ctx{&sink};
  ghy_status st = ghy_train(model, train_cfg.c_str(), train_data, val_data, out_ckpt.c_str(), epoch_cb, &ctx);
  if (st != GHY_OK) {
    std::fprintf(stderr, "error: training failed: %s (%s); last-good checkpoint kept at %s\n",
                 ghy_last_error(), ghy_status_name(st), out_ckpt.c_str());
    ghy_dataset_free(train_data);
    ghy_dataset_free(val_data);
    ghy_model_free(model);
    return status_to_exit(st);
  }
  std::printf("checkpoint written to %s\n", out_ckpt.c_str());
  ghy_dataset_free(train_data);
  ghy_dataset_free(val_data);
  ghy_model_free(model);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path) {
  ghy_model* model = nullptr;
  check(ghy_model_load(checkpoint.c_str(), &model), "load checkpoint " + checkpoint);
  ghy_dataset* data = nullptr;
  check(ghy_dataset_load(data_path.c_str(), &data), "load dataset " + data_path);
  double mse = 0;
  check(ghy_model_evaluate(model, data, &mse), "evaluate");
  double baseline = ghy_dataset_mean_predictor_mse(data);
  std::printf("instances: %s\n", fmt_int(ghy_dataset_count(data)).c_str());
  std::printf("test_mse: %s\n", fmt_double(mse).c_str());
  std::printf("mean_predictor_mse: %s\n", fmt_double(baseline).c_str());
  std::printf("ratio: %s\n", fmt_double(mse / baseline).c_str());
  ghy_dataset_free(data);
  ghy_model_free(model);
  return 0;
}

int cmd_bench(const std::vector<std::string>& ops, const std::vector<int64_t>& lengths, int trials,
              const std::string& csv_path, const std::string& dtype, int64_t hidden, uint64_t seed,
              uint64_t alloc_budget) {
  require_writable_file(csv_path);
  CsvSink sink(csv_path);
  sink.line("op,n,trial,elapsed_ns,peak_bytes");
  std::string options = "dtype=" + dtype + "\nhidden=" + fmt_int(hidden) + "\nseed=" + fmt_int(static_cast<int64_t>(seed)) +
                        "\nalloc_budget=" + fmt_int(static_cast<int64_t>(alloc_budget));
  std::vector<ghy_bench_record> records(static_cast<size_t>(trials));
  for (const auto& op : ops) {
    for (int64_t n : lengths) {
      check(ghy_bench_op(op.c_str(), n, trials, options.c_str(), records.data()), "bench " + op);
      for (int t = 0; t < trials; ++t) {
        const auto& r = records[static_cast<size_t>(t)];
        std::string elapsed = r.elapsed_ns < 0 ? "OOM" : fmt_int(r.elapsed_ns);
        std::string row = op + "," + fmt_int(r.n) + "," + fmt_int(r.trial) + "," + elapsed + "," +
                          fmt_int(static_cast<int64_t>(r.peak_bytes));
        sink.line(row);
        std::printf("%s\n", row.c_str());
      }
    }
  }
  return 0;
}

struct CheckCtx {
  int printed = 0;
};

void check_cb(const char* name, int pass, const char* detail, void* user) {
  auto* ctx = static_cast<CheckCtx*>(user);
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name, detail);
  ++ctx->printed;
}

int cmd_check(const std::string& suite, uint64_t seed) {
  CheckCtx ctx;
  int32_t failures = 0;
  check(ghy_check_run(suite.c_str(), seed, check_cb, &ctx, &failures), "check " + suite);
  std::printf("%s: %d checks, %d failures\n", suite.c_str(), ctx.printed, failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric Hyena: equivariant long-convolution models, training, checks and benchmarks"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate associative-recall datasets (GAR1 files)");
  std::string gen_out = "data";
  int64_t gen_vocab = 3, gen_len = 128, gen_train = 2600, gen_val = 200, gen_test = 200;
  uint64_t gen_seed = 7;
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen->add_option("--vocab", gen_vocab, "Vocabulary size")->capture_default_str();
  gen->add_option("--seq-len", gen_len, "Sequence length (even, >= 4)")->capture_default_str();
  gen->add_option("--train", gen_train, "Training sequences")->capture_default_str();
  gen->add_option("--val", gen_val, "Validation sequences")->capture_default_str();
  gen->add_option("--test", gen_test, "Test sequences")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Base RNG seed")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model on geometric associative recall");
  std::string tr_data, tr_out = "model.ghk", tr_csv = "metrics.csv", tr_config, tr_resume;
  std::vector<std::string> tr_sets;
  uint64_t tr_model_seed = 1;
  bool tr_from_file = false;
  tr->add_option("--data", tr_data, "Dataset directory (val.gar used when present)");
  tr->add_option("--out", tr_out, "Checkpoint output path")->capture_default_str();
  tr->add_option("--metrics", tr_csv, "Per-epoch metrics CSV")->capture_default_str();
  tr->add_option("--config", tr_config, "key=value config file (model + training keys)");
  tr->add_option("--set", tr_sets, "key=value override (repeatable, wins over --config)");
  tr->add_option("--resume", tr_resume, "Resume from an existing checkpoint");
  tr->add_option("--model-seed", tr_model_seed, "Model init seed")->capture_default_str();
  tr->add_flag("--train-from-file", tr_from_file,
               "Iterate {data}/train.gar instead of streaming fresh sequences");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a GAR1 dataset");
  std::string ev_ckpt, ev_data;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--data", ev_data, "Dataset file")->required();

  // bench
  auto* be = app.add_subcommand("bench", "Runtime/peak-memory scaling benchmark (CSV output)");
  std::vector<std::string> be_ops = {"scalar-conv", "vector-conv", "geometric-conv", "ghyena-block"};
  std::vector<int64_t> be_lengths = {1024, 4096, 16384};
  int be_trials = 3;
  std::string be_csv = "bench.csv", be_dtype = "f32";
  int64_t be_hidden = 80;
  uint64_t be_seed = 42, be_budget = 0;
  be->add_option("--ops", be_ops,
                 "Ops: scalar-conv vector-conv vector-conv-naive geometric-conv ghyena-block gtrans-block")
      ->capture_default_str();
  be->add_option("--lengths", be_lengths, "Sequence lengths")->capture_default_str();
  be->add_option("--trials", be_trials, "Timed runs per (op, N) after one warmup")->capture_default_str();
  be->add_option("--csv", be_csv, "CSV output path")->capture_default_str();
  be->add_option("--dtype", be_dtype, "f32 or f64")->capture_default_str();
  be->add_option("--hidden", be_hidden, "Hidden width for block benchmarks")->capture_default_str();
  be->add_option("--seed", be_seed, "Input RNG seed")->capture_default_str();
  be->add_option("--alloc-budget", be_budget, "Tensor-allocation budget in bytes (0 = unlimited); over-budget runs record OOM")
      ->capture_default_str();

  // check
  auto* ch = app.add_subcommand("check", "Run an invariant suite");
  std::string ch_suite;
  uint64_t ch_seed = 7;
  ch->add_option("--suite", ch_suite, "equivariance | oracle | gradcheck | ablation")->required();
  ch->add_option("--seed", ch_seed, "Suite seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed())
    return cmd_gen_data(gen_out, gen_vocab, gen_len, gen_train, gen_val, gen_test, gen_seed);
  if (tr->parsed())
    return cmd_train(tr_data, tr_out, tr_csv, tr_config, tr_sets, tr_resume, tr_model_seed, tr_from_file);
  if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data);
  if (be->parsed())
    return cmd_bench(be_ops, be_lengths, be_trials, be_csv, be_dtype, be_hidden, be_seed, be_budget);
  if (ch->parsed()) return cmd_check(ch_suite, ch_seed);
  return 2;
}
