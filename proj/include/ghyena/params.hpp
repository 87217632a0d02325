#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ghyena/tape.hpp"
#include "ghyena/tensor.hpp"

namespace ghyena {

using Param = std::shared_ptr<Tensor>;

// Named parameter tensors with stable iteration order and per-parameter
// gradient accumulators.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Param value;
    Tensor grad;  // empty until first accumulation
  };

  Param create(const std::string& name, std::vector<int64_t> shape, Dtype dt = Dtype::F64);
  Param find(const std::string& name) const;

  size_t size() const { return entries_.size(); }
  int64_t total_elements() const;
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void add_grad(const Param& p, const Tensor& g);
  Tensor* grad_of(const Param& p);
  void zero_grads();
  bool grads_finite() const;
  double param_norm() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> by_name_;
  std::unordered_map<const Tensor*, size_t> by_ptr_;
};

// Hands out one tape leaf per parameter per forward pass; with a null tape it
// produces plain constants (inference mode).
class Lease {
 public:
  explicit Lease(Tape* tape) : tape_(tape) {}

  Value operator()(const Param& p);
  Tape* tape() const { return tape_; }

  // After Tape::backward, push every leased gradient into the store.
  void accumulate_grads(ParamStore& store);

 private:
  Tape* tape_;
  std::vector<std::pair<Param, Value>> leased_;
  std::unordered_map<const Tensor*, size_t> index_;
};

}  // namespace ghyena
