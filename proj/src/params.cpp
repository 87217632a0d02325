#include "ghyena/params.hpp"

#include <cmath>

namespace ghyena {

Param ParamStore::create(const std::string& name, std::vector<int64_t> shape, Dtype dt) {
  if (by_name_.count(name)) fail_invalid("param store: duplicate name " + name);
  auto p = std::make_shared<Tensor>(std::move(shape), dt);
  by_name_[name] = entries_.size();
  by_ptr_[p.get()] = entries_.size();
  entries_.push_back({name, p, Tensor()});
  return p;
}

Param ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : entries_[it->second].value;
}

int64_t ParamStore::total_elements() const {
  int64_t total = 0;
  for (const auto& e : entries_) total += e.value->numel();
  return total;
}

void ParamStore::add_grad(const Param& p, const Tensor& g) {
  auto it = by_ptr_.find(p.get());
  if (it == by_ptr_.end()) fail_invalid("param store: unknown parameter");
  Entry& e = entries_[it->second];
  if (e.grad.shape() != e.value->shape()) e.grad = Tensor(e.value->shape(), e.value->dtype());
  if (!e.grad.same_shape(g)) fail_invalid("param store: gradient shape mismatch for " + e.name);
  for (int64_t i = 0; i < g.numel(); ++i) e.grad.set(i, e.grad.at(i) + g.at(i));
}

Tensor* ParamStore::grad_of(const Param& p) {
  auto it = by_ptr_.find(p.get());
  if (it == by_ptr_.end()) return nullptr;
  Entry& e = entries_[it->second];
  if (e.grad.shape() != e.value->shape()) e.grad = Tensor(e.value->shape(), e.value->dtype());
  return &e.grad;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad = Tensor(e.value->shape(), e.value->dtype());
}

bool ParamStore::grads_finite() const {
  for (const auto& e : entries_)
    if (e.grad.numel() > 0 && !e.grad.all_finite()) return false;
  return true;
}

double ParamStore::param_norm() const {
  double acc = 0;
  for (const auto& e : entries_)
    for (int64_t i = 0; i < e.value->numel(); ++i) {
      double v = e.value->at(i);
      acc += v * v;
    }
  return std::sqrt(acc);
}

Value Lease::operator()(const Param& p) {
  if (tape_ == nullptr) return constant(std::shared_ptr<const Tensor>(p));
  auto it = index_.find(p.get());
  if (it != index_.end()) return leased_[it->second].second;
  Value v = tape_->leaf(p);
  index_[p.get()] = leased_.size();
  leased_.emplace_back(p, v);
  return v;
}

void Lease::accumulate_grads(ParamStore& store) {
  if (tape_ == nullptr) return;
  for (auto& [param, value] : leased_) {
    if (tape_->has_grad(value)) store.add_grad(param, tape_->grad(value));
  }
}

}  // namespace ghyena
