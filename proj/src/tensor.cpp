#include "ghyena/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace ghyena {

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape, Dtype dt) : shape_(std::move(shape)), dtype_(dt) {
  numel_ = 1;
  for (int64_t d : shape_) {
    if (d < 0) fail_invalid("tensor: negative extent in shape " + shape_to_string(shape_));
    numel_ *= d;
  }
  buf_ = CountedBuffer(static_cast<size_t>(numel_) * dtype_size(dt));
  std::memset(buf_.data(), 0, buf_.size());
}

Tensor Tensor::full(std::vector<int64_t> shape, double v, Dtype dt) {
  Tensor t(std::move(shape), dt);
  if (dt == Dtype::F64) {
    for (auto& e : t.data<double>()) e = v;
  } else {
    for (auto& e : t.data<float>()) e = static_cast<float>(v);
  }
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::initializer_list<double> values, Dtype dt) {
  Tensor t(std::move(shape), dt);
  if (static_cast<int64_t>(values.size()) != t.numel())
    fail_invalid("tensor: initializer size does not match shape " + t.shape_str());
  int64_t i = 0;
  for (double v : values) t.set(i++, v);
  return t;
}

double Tensor::at(int64_t i) const {
  return dtype_ == Dtype::F64 ? data<double>()[static_cast<size_t>(i)]
                              : static_cast<double>(data<float>()[static_cast<size_t>(i)]);
}

void Tensor::set(int64_t i, double v) {
  if (dtype_ == Dtype::F64)
    data<double>()[static_cast<size_t>(i)] = v;
  else
    data<float>()[static_cast<size_t>(i)] = static_cast<float>(v);
}

bool Tensor::all_finite() const {
  if (dtype_ == Dtype::F64) {
    for (double v : data<double>())
      if (!std::isfinite(v)) return false;
  } else {
    for (float v : data<float>())
      if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor Tensor::cast(Dtype dt) const {
  if (dt == dtype_) return *this;
  Tensor out(shape_, dt);
  for (int64_t i = 0; i < numel_; ++i) out.set(i, at(i));
  return out;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  Tensor out(std::move(shape), dtype_);
  if (out.numel() != numel_)
    fail_invalid("reshape: element count mismatch " + shape_str() + " -> " + out.shape_str());
  std::memcpy(out.buf_.data(), buf_.data(), buf_.size());
  return out;
}

}  // namespace ghyena
