/* C interface to the geometric-hyena library: opaque handles, thread-local
 * error strings, status codes. All array arguments are dense row-major
 * doubles unless noted. */

#ifndef GHYENA_H
#define GHYENA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ghy_status {
  GHY_OK = 0,
  GHY_ERR_INVARIANT = 1,
  GHY_ERR_IO = 2,
  GHY_ERR_NUMERIC = 3,
  GHY_ERR_INVALID_ARGUMENT = 4,
  GHY_ERR_OUT_OF_BUDGET = 5
} ghy_status;

const char* ghy_status_name(ghy_status status);

/* Message for the most recent failure on this thread; empty string if none. */
const char* ghy_last_error(void);

const char* ghy_version(void);

/* ---- convolution kernels ------------------------------------------------ */

/* q,k,out: n*d row-major; channelwise circular convolution. */
ghy_status ghy_scalar_conv(const double* q, const double* k, double* out, int64_t n, int64_t d);
/* q,k,out: n*3; circular cross-product convolution (FFT path). */
ghy_status ghy_vector_conv(const double* q, const double* k, double* out, int64_t n);
/* Brute-force O(n^2) reference. */
ghy_status ghy_vector_conv_naive(const double* q, const double* k, double* out, int64_t n);
/* a1,a2: n; r1,r2,r3: n*3; a3: n; lambda: 5 interaction weights. */
ghy_status ghy_geometric_conv(const double* a1, const double* r1, const double* a2, const double* r2,
                              const double* lambda, double* a3, double* r3, int64_t n);

/* ---- datasets (geometric associative recall) ----------------------------- */

typedef struct ghy_dataset ghy_dataset;

ghy_status ghy_dataset_generate(int64_t count, int64_t vocab, int64_t seq_len, uint64_t seed,
                                ghy_dataset** out);
ghy_status ghy_dataset_save(const ghy_dataset* data, const char* path);
ghy_status ghy_dataset_load(const char* path, ghy_dataset** out);
int64_t ghy_dataset_count(const ghy_dataset* data);
/* Borrowing accessors; pointers stay valid while the dataset lives. */
ghy_status ghy_dataset_instance(const ghy_dataset* data, int64_t index, int64_t* n_out,
                                const double** tokens_out, const double** target_out);
double ghy_dataset_mean_predictor_mse(const ghy_dataset* data);
void ghy_dataset_free(ghy_dataset* data);

/* ---- models --------------------------------------------------------------- */

typedef struct ghy_model ghy_model;

/* config: flat key=value text (newline or ';' separated); unknown keys are
 * rejected by the CLI but ignored here. Keys and defaults are documented in
 * the project README. */
ghy_status ghy_model_create(const char* config, uint64_t seed, ghy_model** out);
ghy_status ghy_model_save(const ghy_model* model, const char* path);
ghy_status ghy_model_load(const char* path, ghy_model** out);
int64_t ghy_model_param_count(const ghy_model* model);
int64_t ghy_model_trained_epochs(const ghy_model* model);
/* tokens: n*3; prediction written to out_vec[3]. */
ghy_status ghy_model_predict(const ghy_model* model, const double* tokens, int64_t n, double* out_vec);
ghy_status ghy_model_evaluate(const ghy_model* model, const ghy_dataset* data, double* mse_out);
void ghy_model_free(ghy_model* model);

/* ---- training --------------------------------------------------------------- */

typedef void (*ghy_epoch_callback)(int64_t epoch, double lr, double train_mse, double val_mse,
                                   void* user);

/* train_config: key=value text (epochs, batch, lr, warmup, weight_decay,
 * train_size, val_size, test_size, seed, vocab, seq_len). Training sequences
 * stream on the fly unless train_data is non-NULL. checkpoint_path may be
 * NULL; when set, the checkpoint is refreshed after every epoch. */
ghy_status ghy_train(ghy_model* model, const char* train_config, const ghy_dataset* train_data,
                     const ghy_dataset* val_data, const char* checkpoint_path, ghy_epoch_callback cb,
                     void* user);

/* ---- benchmarks ---------------------------------------------------------------- */

typedef struct ghy_bench_record {
  int64_t n;
  int32_t trial;
  int64_t elapsed_ns; /* -1 encodes OOM */
  uint64_t peak_bytes;
} ghy_bench_record;

/* op: scalar-conv | vector-conv | vector-conv-naive | geometric-conv |
 * ghyena-block | gtrans-block. options: key=value text (dtype=f32|f64,
 * hidden, global_tokens, seed, alloc_budget). records must hold `trials`. */
ghy_status ghy_bench_op(const char* op, int64_t n, int32_t trials, const char* options,
                        ghy_bench_record* records);

/* ---- check suites ---------------------------------------------------------------- */

typedef void (*ghy_report_callback)(const char* name, int pass, const char* detail, void* user);

/* suite: equivariance | oracle | gradcheck | ablation. *failures receives the
 * number of failed checks. */
ghy_status ghy_check_run(const char* suite, uint64_t seed, ghy_report_callback cb, void* user,
                         int32_t* failures);

#ifdef __cplusplus
}
#endif

#endif /* GHYENA_H */
