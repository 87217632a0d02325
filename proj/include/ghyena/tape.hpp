#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "ghyena/tensor.hpp"

namespace ghyena {

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  MatMul,
  Scale,      // multiply by compile-time constant
  SumAll,
  MeanAll,
  SumAxis,
  MeanAxis,
  Concat,
  Slice,
  Transpose,
  Sigmoid,
  Silu,
  Sine,
  Sqrt,
  L2Norm,     // reduce last axis, keepdim
  Dot,        // rowwise dot over last axis, keepdim
  Cross,      // last axis == 3
  Softmax,
  Log1p,
  Softplus,
  Recip,
  Reshape,
  ScalarConv,  // circular convolution per channel column
  VectorConv,  // circular cross-product convolution, (N,3)
};

const char* op_name(Op op);

struct OpAttrs {
  int axis = -1;
  int64_t start = 0;
  int64_t len = 0;
  double scalar = 0.0;
};

class Tape;

// Handle to a tensor in a computation. Recorded values (tape != nullptr)
// participate in backward; constants do not.
struct Value {
  std::shared_ptr<const Tensor> t;
  Tape* tape = nullptr;
  int32_t id = -1;

  const Tensor& tensor() const { return *t; }
  const std::vector<int64_t>& shape() const { return t->shape(); }
  bool recorded() const { return tape != nullptr; }
  double scalar_value() const;
};

Value constant(Tensor t);
Value constant(std::shared_ptr<const Tensor> t);

class Tape {
 public:
  static constexpr int kMaxIn = 4;

  struct Node {
    Op op = Op::Leaf;
    OpAttrs attrs;
    std::array<int32_t, kMaxIn> in{-1, -1, -1, -1};
    std::array<std::shared_ptr<const Tensor>, kMaxIn> in_t{};
    std::shared_ptr<const Tensor> out;
    std::shared_ptr<const Tensor> saved;  // op-specific extra forward state
    Tensor grad;                           // allocated during backward
    bool has_grad = false;
  };

  // Registers a differentiable leaf (parameter or input requiring grad).
  Value leaf(std::shared_ptr<const Tensor> t);

  Value record(Op op, const OpAttrs& attrs, Tensor out, std::span<const Value* const> inputs,
               std::shared_ptr<const Tensor> saved = nullptr);

  // Reverse pass from a scalar loss produced on this tape. Each node is
  // visited exactly once, in reverse construction (topological) order.
  void backward(const Value& loss);

  bool has_grad(const Value& v) const;
  // Gradient of the last backward() w.r.t. v; zeros if v is unreachable.
  Tensor grad(const Value& v) const;

  size_t size() const { return nodes_.size(); }
  uint64_t backward_visits() const { return visits_; }
  void reset();

 private:
  void accumulate(int32_t id, const Tensor& g);
  std::vector<Node> nodes_;
  uint64_t visits_ = 0;
};

// ---- primitive ops ---------------------------------------------------------

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value matmul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value sum_all(const Value& a);
Value mean_all(const Value& a);
Value sum_axis(const Value& a, int axis);   // keepdim
Value mean_axis(const Value& a, int axis);  // keepdim
Value concat(std::span<const Value> parts, int axis);
Value concat(const Value& a, const Value& b, int axis);
Value slice(const Value& a, int axis, int64_t start, int64_t len);
Value transpose(const Value& a);
Value sigmoid(const Value& a);
Value silu(const Value& a);
Value sine(const Value& a);
Value sqrt(const Value& a);
Value l2norm(const Value& a);  // last axis, keepdim, eps-guarded gradient
Value dot(const Value& a, const Value& b);  // rowwise over last axis, keepdim
Value cross(const Value& a, const Value& b);
Value softmax(const Value& a, int axis);
Value log1p(const Value& a);
Value softplus(const Value& a);
Value recip(const Value& a);
// 1 / max(x, floor); zero gradient in the clamped region. Backs the
// epsilon-guarded normalizations.
Value recip_guarded(const Value& a, double floor);
Value reshape(const Value& a, std::vector<int64_t> shape);

// FFT-backed circular convolutions recorded as single tape nodes (defined in
// longconv.cpp; declared here so the op enum stays closed).
Value scalar_conv(const Value& q, const Value& k);
Value vector_conv(const Value& q, const Value& k);

// Dispatch by op id; exists so generic property tests can drive every
// primitive through one entry point.
Value apply_op(Op op, std::span<const Value> inputs, const OpAttrs& attrs);

}  // namespace ghyena
