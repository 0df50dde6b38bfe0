#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "del/common.hpp"

namespace del {

/// Dense row-major tensor of doubles. Copies are shallow (storage is
/// shared); library code never mutates a tensor after it has been handed
/// out, so sharing is safe across threads.
///
/// A rank-0 tensor is a scalar with one element.
class Tensor {
 public:
  Tensor() : Tensor(std::vector<std::int64_t>{}) {}

  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::int64_t> shape, double v);
  static Tensor ones(std::vector<std::int64_t> shape) { return full(std::move(shape), 1.0); }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return size_; }
  bool is_scalar() const { return size_ == 1; }

  double* data() { return storage_->data(); }
  const double* data() const { return storage_->data(); }
  std::span<const double> values() const { return {storage_->data(), static_cast<std::size_t>(size_)}; }

  double item() const;

  double& operator[](std::int64_t flat) { return (*storage_)[static_cast<std::size_t>(flat)]; }
  double operator[](std::int64_t flat) const { return (*storage_)[static_cast<std::size_t>(flat)]; }

  /// Multi-index access, bounds-checked. at(i, j, ...) with rank() indices.
  template <class... Ix>
  double at(Ix... idx) const {
    const std::int64_t ix[] = {static_cast<std::int64_t>(idx)...};
    return (*storage_)[static_cast<std::size_t>(flat_index({ix, sizeof...(Ix)}))];
  }
  template <class... Ix>
  double& at(Ix... idx) {
    const std::int64_t ix[] = {static_cast<std::int64_t>(idx)...};
    return (*storage_)[static_cast<std::size_t>(flat_index({ix, sizeof...(Ix)}))];
  }

  /// Same storage, new shape (element count must match).
  Tensor reshaped(std::vector<std::int64_t> shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  /// Throws TensorError if any element is NaN or infinite.
  void check_finite(const char* context) const;

 private:
  std::int64_t flat_index(std::span<const std::int64_t> idx) const;

  std::vector<std::int64_t> shape_;
  std::int64_t size_ = 0;
  std::shared_ptr<std::vector<double>> storage_;
};

/// Index-pairing for a generalized two-operand contraction.
/// `sum` axes are contracted away; `shared` axes are matched pairwise and
/// appear once in the output (batched-einsum style).
/// Output axis order: shared pairs (in listed order), then the remaining
/// axes of `a` (in order), then the remaining axes of `b` (in order).
struct ContractSpec {
  struct AxisPair {
    int a;
    int b;
  };
  std::vector<AxisPair> sum;
  std::vector<AxisPair> shared;

  static ContractSpec matvec() { return {{{1, 0}}, {}}; }
  static ContractSpec matmul() { return {{{1, 0}}, {}}; }
  static ContractSpec outer() { return {{}, {}}; }
};

/// Plain (non-recorded) kernels shared by the autodiff layer and by code
/// that works on fixed values.

Tensor permute_copy(const Tensor& t, std::span<const int> perm);
Tensor contract_plain(const Tensor& a, const Tensor& b, const ContractSpec& spec);

/// Index of the largest value in each row of a 2-d tensor; ties resolve to
/// the lowest index.
std::vector<int> argmax_rows(const Tensor& m);

namespace detail {

/// Canonical lowering of a contraction to one batched matrix product.
struct ContractPlan {
  std::vector<int> perm_a, perm_b;       // operand axis -> [shared, free, sum] order
  std::vector<std::int64_t> batch_dims;  // shared extents
  std::int64_t batch = 1, m = 1, k = 1, n = 1;
  std::vector<std::int64_t> out_shape;
  std::vector<std::int64_t> a_perm_shape, b_perm_shape;
};

ContractPlan plan_contract(const Tensor& a, const Tensor& b, const ContractSpec& spec);

// C[M,N] += A[M,K] * B[K,N]; accumulation over k is ascending for every
// output element, so results are bit-reproducible.
void matmul_nn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n);
// C[M,K] += A[M,N] * B[K,N]^T
void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t n, std::int64_t k);
// C[K,N] += A[M,K]^T * B[M,N]
void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n);

std::vector<int> inverse_perm(std::span<const int> perm);

}  // namespace detail

}  // namespace del
