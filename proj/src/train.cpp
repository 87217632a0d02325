#include "ghyena/train.hpp"

#include <cmath>
#include <limits>

#include "ghyena/checkpoint.hpp"

namespace ghyena {

namespace {
// stream tags for deriving independent rng streams from one seed
constexpr uint64_t kValStream = 0x76a1;
constexpr uint64_t kTrainStream = 0x7421;
}  // namespace

KvMap TrainConfig::to_kv() const {
  KvMap kv;
  kv["epochs"] = format_int(epochs);
  kv["batch"] = format_int(batch);
  kv["lr"] = format_double(lr);
  kv["warmup"] = format_int(warmup);
  kv["weight_decay"] = format_double(weight_decay);
  kv["train_size"] = format_int(train_size);
  kv["val_size"] = format_int(val_size);
  kv["test_size"] = format_int(test_size);
  kv["seed"] = format_int(static_cast<int64_t>(seed));
  kv["vocab"] = format_int(vocab);
  kv["seq_len"] = format_int(seq_len);
  return kv;
}

TrainConfig TrainConfig::from_kv(const KvMap& kv) {
  TrainConfig cfg;
  cfg.epochs = kv_get_int(kv, "epochs", cfg.epochs);
  cfg.batch = kv_get_int(kv, "batch", cfg.batch);
  cfg.lr = kv_get_double(kv, "lr", cfg.lr);
  cfg.warmup = kv_get_int(kv, "warmup", cfg.warmup);
  cfg.weight_decay = kv_get_double(kv, "weight_decay", cfg.weight_decay);
  cfg.train_size = kv_get_int(kv, "train_size", cfg.train_size);
  cfg.val_size = kv_get_int(kv, "val_size", cfg.val_size);
  cfg.test_size = kv_get_int(kv, "test_size", cfg.test_size);
  cfg.seed = static_cast<uint64_t>(kv_get_int(kv, "seed", static_cast<int64_t>(cfg.seed)));
  cfg.vocab = kv_get_int(kv, "vocab", cfg.vocab);
  cfg.seq_len = kv_get_int(kv, "seq_len", cfg.seq_len);
  if (cfg.warmup >= cfg.epochs) fail_invalid("train config: warmup < epochs required");
  if (cfg.batch < 1 || cfg.train_size < 1 || cfg.epochs < 1)
    fail_invalid("train config: sizes >= 1 required");
  return cfg;
}

double cosine_lr(int64_t epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) fail_invalid("cosine_lr: epoch out of range");
  if (epoch < cfg.warmup)
    return cfg.lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup);
  double span = static_cast<double>(std::max<int64_t>(cfg.epochs - cfg.warmup, 1));
  double phase = 3.141592653589793238462643 * static_cast<double>(epoch - cfg.warmup) / span;
  return cfg.lr * 0.5 * (1.0 + std::cos(phase));
}

AdamState AdamState::init(const ParamStore& store) {
  AdamState s;
  for (const auto& e : store.entries()) {
    s.m.emplace_back(e.value->shape(), e.value->dtype());
    s.v.emplace_back(e.value->shape(), e.value->dtype());
  }
  s.t = 0;
  return s;
}

void adam_step(ParamStore& params, AdamState& state, double lr, double weight_decay) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (state.m.size() != params.entries().size()) fail_invalid("adam_step: state/param mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t p = 0; p < params.entries().size(); ++p) {
    auto& entry = params.entries()[p];
    Tensor& theta = *entry.value;
    const Tensor& g = entry.grad;
    if (g.numel() != theta.numel()) fail_invalid("adam_step: missing gradient for " + entry.name);
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (int64_t i = 0; i < theta.numel(); ++i) {
      double th = theta.at(i);
      if (weight_decay != 0.0) th -= lr * weight_decay * th;
      double gi = g.at(i);
      double mi = beta1 * m.at(i) + (1.0 - beta1) * gi;
      double vi = beta2 * v.at(i) + (1.0 - beta2) * gi * gi;
      m.set(i, mi);
      v.set(i, vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      theta.set(i, th - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

namespace {

Value instance_loss(const GHyenaModel& model, const AssocRecallInstance& inst, Lease& lease) {
  Tensor pos = positional_encoding(inst.tokens.dim(0), model.cfg.input_dim);
  Value pred = model_forward_pool(model, inst.tokens.cast(model.cfg.dtype), pos.cast(model.cfg.dtype), lease);
  Value diff = sub(pred, constant(inst.target.cast(model.cfg.dtype)));
  return scale(sum_all(mul(diff, diff)), 1.0 / 3.0);
}

void save_training_state(const GHyenaModel& model, const AdamState& opt, const std::string& path) {
  ParamStore snap;
  for (const auto& e : model.params.entries()) {
    Param p = snap.create(e.name, e.value->shape(), e.value->dtype());
    for (int64_t i = 0; i < e.value->numel(); ++i) p->set(i, e.value->at(i));
  }
  for (size_t i = 0; i < opt.m.size(); ++i) {
    const auto& name = model.params.entries()[i].name;
    Param pm = snap.create("opt.m." + name, opt.m[i].shape(), opt.m[i].dtype());
    Param pv = snap.create("opt.v." + name, opt.v[i].shape(), opt.v[i].dtype());
    for (int64_t k = 0; k < opt.m[i].numel(); ++k) {
      pm->set(k, opt.m[i].at(k));
      pv->set(k, opt.v[i].at(k));
    }
  }
  KvMap config = model.cfg.to_kv();
  config["trained_epochs"] = format_int(model.trained_epochs);
  config["opt_t"] = format_int(opt.t);
  save_checkpoint(path, snap, config);
}

}  // namespace

AdamState load_adam_state(const std::string& checkpoint_path, const ParamStore& store) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  AdamState s = AdamState::init(store);
  s.t = kv_get_int(ck.config, "opt_t", 0);
  for (size_t i = 0; i < store.entries().size(); ++i) {
    const auto& name = store.entries()[i].name;
    for (const auto& [tname, tensor] : ck.tensors) {
      if (tname == "opt.m." + name)
        for (int64_t k = 0; k < tensor.numel(); ++k) s.m[i].set(k, tensor.at(k));
      else if (tname == "opt.v." + name)
        for (int64_t k = 0; k < tensor.numel(); ++k) s.v[i].set(k, tensor.at(k));
    }
  }
  return s;
}

std::vector<EpochMetrics> train(GHyenaModel& model, const TrainConfig& cfg, const TrainOptions& opts) {
  Dataset val_local;
  const Dataset* val = opts.val_data;
  if (val == nullptr && cfg.val_size > 0) {
    val_local = gen_dataset(cfg.val_size, cfg.vocab, cfg.seq_len, Rng::derive(cfg.seed, kValStream).next());
    val = &val_local;
  }

  AdamState opt = AdamState::init(model.params);
  if (!opts.checkpoint_path.empty() && model.trained_epochs > 0) {
    // resuming: pick up optimizer state if the checkpoint carries it
    opt = load_adam_state(opts.checkpoint_path, model.params);
  }

  std::vector<EpochMetrics> history;
  int64_t start_epoch = model.trained_epochs;
  if (start_epoch >= cfg.epochs) return history;

  for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    double lr = cosine_lr(epoch, cfg);
    double loss_sum = 0;
    int64_t batches = 0;
    for (int64_t base = 0; base < cfg.train_size; base += cfg.batch) {
      int64_t bsz = std::min(cfg.batch, cfg.train_size - base);
      Tape tape;
      Lease lease(&tape);
      Value loss;
      for (int64_t b = 0; b < bsz; ++b) {
        AssocRecallInstance fresh;
        const AssocRecallInstance* inst;
        if (opts.train_data != nullptr) {
          inst = &(*opts.train_data)[static_cast<size_t>((base + b) % static_cast<int64_t>(opts.train_data->size()))];
        } else {
          uint64_t idx = static_cast<uint64_t>(epoch) * static_cast<uint64_t>(cfg.train_size) +
                         static_cast<uint64_t>(base + b);
          Rng rng = Rng::derive(cfg.seed ^ kTrainStream, idx);
          AssocRecallVocab voc = gen_vocab(cfg.vocab, rng);
          fresh = gen_sequence(voc, cfg.seq_len, rng);
          inst = &fresh;
        }
        Value li = instance_loss(model, *inst, lease);
        loss = b == 0 ? li : add(loss, li);
      }
      loss = scale(loss, 1.0 / static_cast<double>(bsz));
      double lval = loss.scalar_value();
      if (!std::isfinite(lval))
        fail_numeric("train: non-finite loss at epoch " + format_int(epoch) + " batch " +
                     format_int(batches) + " (param norm " + format_double(model.params.param_norm()) + ")");
      model.params.zero_grads();
      tape.backward(loss);
      lease.accumulate_grads(model.params);
      if (!model.params.grads_finite())
        fail_numeric("train: non-finite gradient at epoch " + format_int(epoch) + " batch " +
                     format_int(batches) + " (param norm " + format_double(model.params.param_norm()) + ")");
      adam_step(model.params, opt, lr, cfg.weight_decay);
      loss_sum += lval;
      ++batches;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_mse = loss_sum / static_cast<double>(batches);
    m.val_mse = val != nullptr ? evaluate(model, *val) : std::numeric_limits<double>::quiet_NaN();
    history.push_back(m);
    model.trained_epochs = epoch + 1;
    if (!opts.checkpoint_path.empty()) save_training_state(model, opt, opts.checkpoint_path);
    if (opts.on_epoch) opts.on_epoch(m);
  }
  return history;
}

}  // namespace ghyena
