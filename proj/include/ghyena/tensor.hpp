#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ghyena/alloc.hpp"
#include "ghyena/error.hpp"

namespace ghyena {

enum class Dtype : uint8_t { F64, F32 };

inline size_t dtype_size(Dtype dt) { return dt == Dtype::F64 ? 8 : 4; }
inline const char* dtype_name(Dtype dt) { return dt == Dtype::F64 ? "f64" : "f32"; }

// Dense row-major numeric array. 64-bit is the default element type; 32-bit
// tensors exist for the benchmark path. All values in one computation must
// share a dtype.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape, Dtype dt = Dtype::F64);

  static Tensor zeros(std::vector<int64_t> shape, Dtype dt = Dtype::F64) { return Tensor(std::move(shape), dt); }
  static Tensor full(std::vector<int64_t> shape, double v, Dtype dt = Dtype::F64);
  static Tensor from(std::vector<int64_t> shape, std::initializer_list<double> values, Dtype dt = Dtype::F64);
  static Tensor scalar(double v, Dtype dt = Dtype::F64) { return full({}, v, dt); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return numel_; }
  Dtype dtype() const { return dtype_; }
  bool empty() const { return numel_ == 0 && shape_.empty() && buf_.size() == 0; }

  template <class T>
  std::span<T> data() {
    return {static_cast<T*>(buf_.data()), static_cast<size_t>(numel_)};
  }
  template <class T>
  std::span<const T> data() const {
    return {static_cast<const T*>(buf_.data()), static_cast<size_t>(numel_)};
  }

  // Dtype-agnostic element access (flat index); convenient in tests and I/O.
  double at(int64_t i) const;
  void set(int64_t i, double v);

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

  Tensor cast(Dtype dt) const;
  // Reinterpret with a new shape of equal element count.
  Tensor reshaped(std::vector<int64_t> shape) const;

 private:
  std::vector<int64_t> shape_;
  int64_t numel_ = 0;
  Dtype dtype_ = Dtype::F64;
  CountedBuffer buf_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);

}  // namespace ghyena
