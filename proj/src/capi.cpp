#include "ghyena.h"

#include <cstring>
#include <string>

#include "ghyena/checks.hpp"
#include "ghyena/bench.hpp"
#include "ghyena/train.hpp"

namespace {

thread_local std::string t_last_error;

ghy_status to_status(ghyena::ErrCode code) {
  switch (code) {
    case ghyena::ErrCode::Invariant: return GHY_ERR_INVARIANT;
    case ghyena::ErrCode::Io: return GHY_ERR_IO;
    case ghyena::ErrCode::Numeric: return GHY_ERR_NUMERIC;
    case ghyena::ErrCode::InvalidArgument: return GHY_ERR_INVALID_ARGUMENT;
    case ghyena::ErrCode::OutOfBudget: return GHY_ERR_OUT_OF_BUDGET;
  }
  return GHY_ERR_INVALID_ARGUMENT;
}

template <class F>
ghy_status guarded(F&& f) {
  try {
    t_last_error.clear();
    f();
    return GHY_OK;
  } catch (const ghyena::Error& e) {
    t_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return GHY_ERR_INVALID_ARGUMENT;
  }
}

ghyena::Tensor wrap(const double* data, std::vector<int64_t> shape) {
  ghyena::Tensor t(std::move(shape));
  auto dst = t.data<double>();
  std::memcpy(dst.data(), data, dst.size() * sizeof(double));
  return t;
}

void unwrap(const ghyena::Tensor& t, double* out) {
  auto src = t.data<double>();
  std::memcpy(out, src.data(), src.size() * sizeof(double));
}

}  // namespace

struct ghy_dataset {
  ghyena::Dataset data;
};

struct ghy_model {
  ghyena::GHyenaModel model;
};

extern "C" {

const char* ghy_status_name(ghy_status status) {
  switch (status) {
    case GHY_OK: return "ok";
    case GHY_ERR_INVARIANT: return "invariant-failure";
    case GHY_ERR_IO: return "io-error";
    case GHY_ERR_NUMERIC: return "numeric-failure";
    case GHY_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case GHY_ERR_OUT_OF_BUDGET: return "out-of-budget";
  }
  return "unknown";
}

const char* ghy_last_error(void) { return t_last_error.c_str(); }

const char* ghy_version(void) { return "0.1.0"; }

ghy_status ghy_scalar_conv(const double* q, const double* k, double* out, int64_t n, int64_t d) {
  return guarded([&] {
    if (q == nullptr || k == nullptr || out == nullptr) ghyena::fail_invalid("null pointer argument");
    unwrap(ghyena::scalar_long_conv(wrap(q, {n, d}), wrap(k, {n, d})), out);
  });
}

ghy_status ghy_vector_conv(const double* q, const double* k, double* out, int64_t n) {
  return guarded([&] {
    if (q == nullptr || k == nullptr || out == nullptr) ghyena::fail_invalid("null pointer argument");
    unwrap(ghyena::vector_long_conv(wrap(q, {n, 3}), wrap(k, {n, 3})), out);
  });
}

ghy_status ghy_vector_conv_naive(const double* q, const double* k, double* out, int64_t n) {
  return guarded([&] {
    if (q == nullptr || k == nullptr || out == nullptr) ghyena::fail_invalid("null pointer argument");
    unwrap(ghyena::vector_long_conv_naive(wrap(q, {n, 3}), wrap(k, {n, 3})), out);
  });
}

ghy_status ghy_geometric_conv(const double* a1, const double* r1, const double* a2, const double* r2,
                              const double* lambda, double* a3, double* r3, int64_t n) {
  return guarded([&] {
    if (!a1 || !r1 || !a2 || !r2 || !lambda || !a3 || !r3) ghyena::fail_invalid("null pointer argument");
    ghyena::GeometricConvWeights lw{lambda[0], lambda[1], lambda[2], lambda[3], lambda[4]};
    auto out = ghyena::geometric_long_conv(wrap(a1, {n, 1}), wrap(r1, {n, 3}), wrap(a2, {n, 1}),
                                           wrap(r2, {n, 3}), lw);
    unwrap(out.alpha3, a3);
    unwrap(out.r3, r3);
  });
}

ghy_status ghy_dataset_generate(int64_t count, int64_t vocab, int64_t seq_len, uint64_t seed,
                                ghy_dataset** out) {
  return guarded([&] {
    if (out == nullptr) ghyena::fail_invalid("null output pointer");
    auto* handle = new ghy_dataset{ghyena::gen_dataset(count, vocab, seq_len, seed)};
    *out = handle;
  });
}

ghy_status ghy_dataset_save(const ghy_dataset* data, const char* path) {
  return guarded([&] {
    if (data == nullptr || path == nullptr) ghyena::fail_invalid("null argument");
    ghyena::save_dataset(data->data, path);
  });
}

ghy_status ghy_dataset_load(const char* path, ghy_dataset** out) {
  return guarded([&] {
    if (path == nullptr || out == nullptr) ghyena::fail_invalid("null argument");
    *out = new ghy_dataset{ghyena::load_dataset(path)};
  });
}

int64_t ghy_dataset_count(const ghy_dataset* data) {
  return data == nullptr ? 0 : static_cast<int64_t>(data->data.size());
}

ghy_status ghy_dataset_instance(const ghy_dataset* data, int64_t index, int64_t* n_out,
                                const double** tokens_out, const double** target_out) {
  return guarded([&] {
    if (!data || !n_out || !tokens_out || !target_out) ghyena::fail_invalid("null argument");
    if (index < 0 || index >= static_cast<int64_t>(data->data.size()))
      ghyena::fail_invalid("dataset index out of range");
    const auto& inst = data->data[static_cast<size_t>(index)];
    *n_out = inst.tokens.dim(0);
    *tokens_out = inst.tokens.data<double>().data();
    *target_out = inst.target.data<double>().data();
  });
}

double ghy_dataset_mean_predictor_mse(const ghy_dataset* data) {
  if (data == nullptr || data->data.empty()) return -1.0;
  return ghyena::mean_predictor_mse(data->data);
}

void ghy_dataset_free(ghy_dataset* data) { delete data; }

ghy_status ghy_model_create(const char* config, uint64_t seed, ghy_model** out) {
  return guarded([&] {
    if (out == nullptr) ghyena::fail_invalid("null output pointer");
    ghyena::KvMap kv = ghyena::parse_kv(config == nullptr ? "" : config);
    ghyena::ModelConfig cfg = ghyena::ModelConfig::from_kv(kv);
    *out = new ghy_model{ghyena::build_model(cfg, seed)};
  });
}

ghy_status ghy_model_save(const ghy_model* model, const char* path) {
  return guarded([&] {
    if (model == nullptr || path == nullptr) ghyena::fail_invalid("null argument");
    ghyena::save_model(model->model, path);
  });
}

ghy_status ghy_model_load(const char* path, ghy_model** out) {
  return guarded([&] {
    if (path == nullptr || out == nullptr) ghyena::fail_invalid("null argument");
    *out = new ghy_model{ghyena::load_model(path)};
  });
}

int64_t ghy_model_param_count(const ghy_model* model) {
  return model == nullptr ? 0 : model->model.param_count();
}

int64_t ghy_model_trained_epochs(const ghy_model* model) {
  return model == nullptr ? 0 : model->model.trained_epochs;
}

ghy_status ghy_model_predict(const ghy_model* model, const double* tokens, int64_t n, double* out_vec) {
  return guarded([&] {
    if (!model || !tokens || !out_vec) ghyena::fail_invalid("null argument");
    ghyena::Tensor x = wrap(tokens, {n, 3});
    ghyena::Tensor pos = ghyena::positional_encoding(n, model->model.cfg.input_dim);
    ghyena::Lease lease(nullptr);
    ghyena::Value pred = ghyena::model_forward_pool(model->model, x.cast(model->model.cfg.dtype),
                                                    pos.cast(model->model.cfg.dtype), lease);
    for (int64_t c = 0; c < 3; ++c) out_vec[c] = pred.tensor().at(c);
  });
}

ghy_status ghy_model_evaluate(const ghy_model* model, const ghy_dataset* data, double* mse_out) {
  return guarded([&] {
    if (!model || !data || !mse_out) ghyena::fail_invalid("null argument");
    *mse_out = ghyena::evaluate(model->model, data->data);
  });
}

void ghy_model_free(ghy_model* model) { delete model; }

ghy_status ghy_train(ghy_model* model, const char* train_config, const ghy_dataset* train_data,
                     const ghy_dataset* val_data, const char* checkpoint_path, ghy_epoch_callback cb,
                     void* user) {
  return guarded([&] {
    if (model == nullptr) ghyena::fail_invalid("null model");
    ghyena::TrainConfig cfg = ghyena::TrainConfig::from_kv(ghyena::parse_kv(train_config ? train_config : ""));
    ghyena::TrainOptions opts;
    if (train_data != nullptr) opts.train_data = &train_data->data;
    if (val_data != nullptr) opts.val_data = &val_data->data;
    if (checkpoint_path != nullptr) opts.checkpoint_path = checkpoint_path;
    if (cb != nullptr) {
      opts.on_epoch = [cb, user](const ghyena::EpochMetrics& m) {
        cb(m.epoch, m.lr, m.train_mse, m.val_mse, user);
      };
    }
    ghyena::train(model->model, cfg, opts);
  });
}

ghy_status ghy_bench_op(const char* op, int64_t n, int32_t trials, const char* options,
                        ghy_bench_record* records) {
  return guarded([&] {
    if (op == nullptr || records == nullptr) ghyena::fail_invalid("null argument");
    if (!ghyena::bench_op_known(op)) ghyena::fail_invalid("unknown bench op '" + std::string(op) + "'");
    ghyena::KvMap kv = ghyena::parse_kv(options == nullptr ? "" : options);
    ghyena::BenchOptions bo;
    std::string dtype = ghyena::kv_get(kv, "dtype", "f32");
    if (dtype == "f64")
      bo.dtype = ghyena::Dtype::F64;
    else if (dtype == "f32")
      bo.dtype = ghyena::Dtype::F32;
    else
      ghyena::fail_invalid("bench: unknown dtype '" + dtype + "'");
    bo.hidden = ghyena::kv_get_int(kv, "hidden", bo.hidden);
    bo.global_tokens = ghyena::kv_get_int(kv, "global_tokens", bo.global_tokens);
    bo.seed = static_cast<uint64_t>(ghyena::kv_get_int(kv, "seed", static_cast<int64_t>(bo.seed)));
    bo.alloc_budget = static_cast<uint64_t>(ghyena::kv_get_int(kv, "alloc_budget", 0));
    auto recs = ghyena::bench_op(op, n, trials, bo);
    for (size_t i = 0; i < recs.size() && i < static_cast<size_t>(trials); ++i) {
      records[i].n = recs[i].n;
      records[i].trial = recs[i].trial;
      records[i].elapsed_ns = recs[i].elapsed_ns;
      records[i].peak_bytes = recs[i].peak_bytes;
    }
  });
}

ghy_status ghy_check_run(const char* suite, uint64_t seed, ghy_report_callback cb, void* user,
                         int32_t* failures) {
  return guarded([&] {
    if (suite == nullptr) ghyena::fail_invalid("null suite name");
    std::vector<ghyena::CheckResult> results;
    std::string name(suite);
    if (name == "oracle")
      results = ghyena::oracle_suite();
    else if (name == "equivariance")
      results = ghyena::equivariance_suite(seed);
    else if (name == "gradcheck")
      results = ghyena::gradcheck_suite(seed);
    else if (name == "ablation")
      results = ghyena::ablation_suite(seed);
    else
      ghyena::fail_invalid("unknown check suite '" + name + "' (expected equivariance|oracle|gradcheck|ablation)");
    int fails = ghyena::count_failures(results);
    if (cb != nullptr)
      for (const auto& r : results) cb(r.name.c_str(), r.pass ? 1 : 0, r.detail.c_str(), user);
    if (failures != nullptr) *failures = fails;
  });
}

}  // extern "C"
