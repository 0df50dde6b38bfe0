#include "del/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace del {

namespace {

std::int64_t checked_size(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d <= 0) throw TensorError("tensor extents must be positive, got " + std::to_string(d));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), size_(checked_size(shape_)),
      storage_(std::make_shared<std::vector<double>>(static_cast<std::size_t>(size_), 0.0)) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), size_(checked_size(shape_)),
      storage_(std::make_shared<std::vector<double>>(std::move(values))) {
  if (static_cast<std::int64_t>(storage_->size()) != size_) {
    throw TensorError("shape " + shape_str() + " expects " + std::to_string(size_) +
                      " values, got " + std::to_string(storage_->size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.storage_->begin(), t.storage_->end(), v);
  return t;
}

double Tensor::item() const {
  if (size_ != 1) throw TensorError("item() on tensor of shape " + shape_str());
  return (*storage_)[0];
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  Tensor out;
  out.shape_ = std::move(shape);
  out.size_ = checked_size(out.shape_);
  if (out.size_ != size_) {
    throw TensorError("reshape " + shape_str() + " -> " + out.shape_str() +
                      " changes element count");
  }
  out.storage_ = storage_;
  return out;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ',';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

void Tensor::check_finite(const char* context) const {
  const double* p = data();
  for (std::int64_t i = 0; i < size_; ++i) {
    if (!std::isfinite(p[i])) {
      throw TensorError(std::string("non-finite value in ") + context + " at flat index " +
                        std::to_string(i));
    }
  }
}

std::int64_t Tensor::flat_index(std::span<const std::int64_t> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw TensorError("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                      std::to_string(rank()));
  }
  std::int64_t flat = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= shape_[i]) {
      throw TensorError("index " + std::to_string(idx[i]) + " out of range for axis " +
                        std::to_string(i) + " of " + shape_str());
    }
    flat = flat * shape_[i] + idx[i];
  }
  return flat;
}

Tensor permute_copy(const Tensor& t, std::span<const int> perm) {
  const int r = t.rank();
  if (static_cast<int>(perm.size()) != r) throw TensorError("permutation rank mismatch");
  std::vector<std::int64_t> out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = t.dim(perm[static_cast<std::size_t>(i)]);
  Tensor out(out_shape);
  if (r == 0) {
    out[0] = t[0];
    return out;
  }

  // in_stride[j] = stride in the input of output axis j
  std::vector<std::int64_t> strides(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    strides[static_cast<std::size_t>(i)] = strides[static_cast<std::size_t>(i + 1)] * t.dim(i + 1);
  std::vector<std::int64_t> in_stride(static_cast<std::size_t>(r));
  for (int j = 0; j < r; ++j) in_stride[static_cast<std::size_t>(j)] = strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];

  const double* src = t.data();
  double* dst = out.data();
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t src_off = 0;
  const std::int64_t total = t.size();
  for (std::int64_t flat = 0;;) {
    dst[flat] = src[src_off];
    if (++flat == total) break;
    int axis = r - 1;
    while (true) {
      src_off += in_stride[static_cast<std::size_t>(axis)];
      if (++idx[static_cast<std::size_t>(axis)] < out_shape[static_cast<std::size_t>(axis)]) break;
      src_off -= in_stride[static_cast<std::size_t>(axis)] * out_shape[static_cast<std::size_t>(axis)];
      idx[static_cast<std::size_t>(axis)] = 0;
      --axis;
    }
  }
  return out;
}

namespace detail {

std::vector<int> inverse_perm(std::span<const int> perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

ContractPlan plan_contract(const Tensor& a, const Tensor& b, const ContractSpec& spec) {
  const int ra = a.rank(), rb = b.rank();
  std::vector<char> used_a(static_cast<std::size_t>(ra), 0), used_b(static_cast<std::size_t>(rb), 0);
  auto claim = [](std::vector<char>& used, int axis, int rank, const char* what) {
    if (axis < 0 || axis >= rank)
      throw TensorError(std::string("contract: ") + what + " axis " + std::to_string(axis) +
                        " out of range");
    if (used[static_cast<std::size_t>(axis)])
      throw TensorError(std::string("contract: axis ") + std::to_string(axis) + " used twice");
    used[static_cast<std::size_t>(axis)] = 1;
  };

  ContractPlan plan;
  for (const auto& p : spec.shared) {
    claim(used_a, p.a, ra, "shared");
    claim(used_b, p.b, rb, "shared");
    if (a.dim(p.a) != b.dim(p.b)) {
      throw TensorError("contract: shared extent mismatch " + std::to_string(a.dim(p.a)) +
                        " vs " + std::to_string(b.dim(p.b)) + " (a " + a.shape_str() + ", b " +
                        b.shape_str() + ")");
    }
    plan.batch_dims.push_back(a.dim(p.a));
    plan.batch *= a.dim(p.a);
  }
  for (const auto& p : spec.sum) {
    claim(used_a, p.a, ra, "sum");
    claim(used_b, p.b, rb, "sum");
    if (a.dim(p.a) != b.dim(p.b)) {
      throw TensorError("contract: summed extent mismatch " + std::to_string(a.dim(p.a)) +
                        " vs " + std::to_string(b.dim(p.b)) + " (a " + a.shape_str() + ", b " +
                        b.shape_str() + ")");
    }
    plan.k *= a.dim(p.a);
  }

  for (const auto& p : spec.shared) plan.perm_a.push_back(p.a);
  std::vector<std::int64_t> a_free, b_free;
  for (int i = 0; i < ra; ++i)
    if (!used_a[static_cast<std::size_t>(i)]) {
      plan.perm_a.push_back(i);
      a_free.push_back(a.dim(i));
      plan.m *= a.dim(i);
    }
  for (const auto& p : spec.sum) plan.perm_a.push_back(p.a);

  for (const auto& p : spec.shared) plan.perm_b.push_back(p.b);
  for (const auto& p : spec.sum) plan.perm_b.push_back(p.b);
  for (int i = 0; i < rb; ++i)
    if (!used_b[static_cast<std::size_t>(i)]) {
      plan.perm_b.push_back(i);
      b_free.push_back(b.dim(i));
      plan.n *= b.dim(i);
    }

  plan.out_shape = plan.batch_dims;
  plan.out_shape.insert(plan.out_shape.end(), a_free.begin(), a_free.end());
  plan.out_shape.insert(plan.out_shape.end(), b_free.begin(), b_free.end());

  for (int ax : plan.perm_a) plan.a_perm_shape.push_back(a.dim(ax));
  for (int ax : plan.perm_b) plan.b_perm_shape.push_back(b.dim(ax));
  return plan;
}

void matmul_nn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t n, std::int64_t k) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      double acc = 0.0;
      for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[kk] += acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      double* crow = c + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace detail

std::vector<int> argmax_rows(const Tensor& m) {
  if (m.rank() != 2) throw TensorError("argmax_rows expects a rank-2 tensor, got " + m.shape_str());
  const std::int64_t rows = m.dim(0), cols = m.dim(1);
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* row = m.data() + i * cols;
    int best = 0;
    for (std::int64_t j = 1; j < cols; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Tensor contract_plain(const Tensor& a, const Tensor& b, const ContractSpec& spec) {
  const auto plan = detail::plan_contract(a, b, spec);
  const Tensor a2 = permute_copy(a, plan.perm_a);
  const Tensor b2 = permute_copy(b, plan.perm_b);
  Tensor out(plan.out_shape.empty() ? std::vector<std::int64_t>{} : plan.out_shape);
  const std::int64_t mk = plan.m * plan.k, kn = plan.k * plan.n, mn = plan.m * plan.n;
  for (std::int64_t t = 0; t < plan.batch; ++t) {
    detail::matmul_nn(a2.data() + t * mk, b2.data() + t * kn, out.data() + t * mn, plan.m,
                      plan.k, plan.n);
  }
  return out;
}

}  // namespace del
