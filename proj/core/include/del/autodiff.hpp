#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "del/tensor.hpp"

namespace del {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const std::vector<std::int64_t>& shape() const { return value().shape(); }
  std::int64_t size() const { return value().size(); }
};

namespace detail {

enum class Op {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kScale,     // x * c0
  kShift,     // x + c0
  kExp,       // exp(clamp(x, -700, 700))
  kSigmoid,
  kReciprocal,
  kVMin,
  kVMax,
  kDiffLast,  // y[..., n] = x[..., n+1] - x[..., n]
  kSumLast,
  kSliceLast,  // x[..., i0:i1]
  kReshape,
  kPermute,
  kContract,
  kSumAll,
  kMeanAll,
  kSoftmaxXent,
};

struct Node {
  Op op;
  Tensor value;
  Tensor grad;  // allocated on first accumulation during backward
  bool has_grad = false;
  bool requires_grad = false;
  int a = -1;
  int b = -1;
  double c0 = 0.0;
  std::int64_t i0 = 0, i1 = 0;
  std::vector<int> perm;
  ContractSpec spec;
  Tensor aux;  // SoftmaxXent: cached softmax probabilities
  std::vector<int> labels;
};

}  // namespace detail

/// Reverse-mode differentiation tape. Records one forward computation and
/// plays it backwards on demand. A tape is rebuilt for every forward pass
/// (the micro-network layer makes the graph input-dependent) and is confined
/// to a single thread.
///
/// Every produced value is checked for NaN/Inf on creation and exp inputs
/// are clamped to [-700, 700], so overflow surfaces as an exception at the
/// op that caused it rather than as a propagated NaN.
///
/// Binary elementwise ops accept equal shapes or a single-element operand
/// against any shape; nothing else broadcasts.
class Tape {
 public:
  /// Differentiable input (parameter). The tensor is copied by reference;
  /// do not mutate it while the tape is alive.
  Var leaf(const Tensor& v);
  /// Non-differentiable input (data, grids, masks).
  Var constant(const Tensor& v);
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var shift(Var a, double c);
  Var exp(Var a);
  Var sigmoid(Var a);
  Var reciprocal(Var a);
  Var vmin(Var a, Var b);
  Var vmax(Var a, Var b);
  Var diff_last(Var a);
  Var sum_last(Var a);
  Var slice_last(Var a, std::int64_t lo, std::int64_t hi);
  Var reshape(Var a, std::vector<std::int64_t> shape);
  Var permute(Var a, std::vector<int> perm);
  Var contract(Var a, Var b, const ContractSpec& spec);
  Var matmul(Var a, Var b) { return contract(a, b, ContractSpec::matmul()); }
  Var outer(Var a, Var b) { return contract(a, b, ContractSpec::outer()); }
  Var sum_all(Var a);
  Var mean_all(Var a);
  /// Mean over the batch of -log softmax(logits)[label]. logits: [batch, nclasses].
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);

  /// Reverse pass from a scalar root. Gradients accumulate additively over
  /// every path; leaves not reachable from the root keep a zero gradient.
  void backward(Var root);

  /// Gradient of the last backward() w.r.t. node v (zeros if untouched).
  Tensor grad(Var v) const;

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend struct Var;
  Var push(detail::Node n, const char* context);
  detail::Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  void accumulate(int id, const Tensor& g, double scale = 1.0);

  std::vector<detail::Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator-(Var a) { return a.tape->neg(a); }

}  // namespace del
