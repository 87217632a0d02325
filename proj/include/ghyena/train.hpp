#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ghyena/model.hpp"
#include "ghyena/recall.hpp"

namespace ghyena {

struct TrainConfig {
  int64_t epochs = 400;
  int64_t batch = 8;
  double lr = 0.001;
  int64_t warmup = 10;
  double weight_decay = 1e-5;
  int64_t train_size = 2600;
  int64_t val_size = 200;
  int64_t test_size = 200;
  uint64_t seed = 7;
  int64_t vocab = 3;
  int64_t seq_len = 128;

  KvMap to_kv() const;
  static TrainConfig from_kv(const KvMap& kv);
};

// Linear warmup then cosine decay to ~0 at the final epoch.
double cosine_lr(int64_t epoch, const TrainConfig& cfg);

// Bias-corrected Adam (beta1=0.9, beta2=0.999, eps=1e-8) with decoupled
// weight decay applied as theta -= lr*wd*theta before the update.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t t = 0;

  static AdamState init(const ParamStore& store);
};

void adam_step(ParamStore& params, AdamState& state, double lr, double weight_decay);

struct EpochMetrics {
  int64_t epoch;
  double lr;
  double train_mse;
  double val_mse;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainOptions {
  const Dataset* train_data = nullptr;  // fixed data; nullptr streams fresh sequences per batch
  const Dataset* val_data = nullptr;    // nullptr generates the held-out set from the seed
  std::string checkpoint_path;          // saved after every epoch when non-empty
  EpochCallback on_epoch;
};

// Returns per-epoch metrics (starting at model.trained_epochs when resuming).
// Throws Error(Numeric) with epoch/batch/param-norm context on non-finite loss.
std::vector<EpochMetrics> train(GHyenaModel& model, const TrainConfig& cfg, const TrainOptions& opts = {});

// Loads optimizer state saved next to a checkpoint, if present.
AdamState load_adam_state(const std::string& checkpoint_path, const ParamStore& store);

}  // namespace ghyena
