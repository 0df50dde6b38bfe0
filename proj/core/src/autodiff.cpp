#include "del/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace del {

namespace {

using detail::Node;
using detail::Op;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_binary_shapes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b) || a.is_scalar() || b.is_scalar()) return;
  throw TensorError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                    " are neither equal nor scalar-vs-tensor");
}

const Tensor& wide(const Tensor& a, const Tensor& b) { return a.is_scalar() ? b : a; }

}  // namespace

Var Tape::push(Node n, const char* context) {
  n.value.check_finite(context);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Tensor& v) {
  Node n;
  n.op = Op::kLeaf;
  n.value = v;
  n.requires_grad = true;
  return push(std::move(n), "leaf");
}

Var Tape::constant(const Tensor& v) {
  Node n;
  n.op = Op::kConstant;
  n.value = v;
  return push(std::move(n), "constant");
}

Var Tape::add(Var a, Var b) {
  const Tensor &va = value(a.id), &vb = value(b.id);
  check_binary_shapes(va, vb, "add");
  Tensor out(wide(va, vb).shape());
  const bool sa = va.is_scalar(), sb = vb.is_scalar();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[sa ? 0 : i] + vb[sb ? 0 : i];
  Node n;
  n.op = Op::kAdd;
  n.value = std::move(out);
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  return push(std::move(n), "add");
}

Var Tape::sub(Var a, Var b) {
  const Tensor &va = value(a.id), &vb = value(b.id);
  check_binary_shapes(va, vb, "sub");
  Tensor out(wide(va, vb).shape());
  const bool sa = va.is_scalar(), sb = vb.is_scalar();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[sa ? 0 : i] - vb[sb ? 0 : i];
  Node n;
  n.op = Op::kSub;
  n.value = std::move(out);
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  return push(std::move(n), "sub");
}

Var Tape::mul(Var a, Var b) {
  const Tensor &va = value(a.id), &vb = value(b.id);
  check_binary_shapes(va, vb, "mul");
  Tensor out(wide(va, vb).shape());
  const bool sa = va.is_scalar(), sb = vb.is_scalar();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[sa ? 0 : i] * vb[sb ? 0 : i];
  Node n;
  n.op = Op::kMul;
  n.value = std::move(out);
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  return push(std::move(n), "mul");
}

Var Tape::neg(Var a) {
  const Tensor& va = value(a.id);
  Tensor out(va.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = -va[i];
  Node n;
  n.op = Op::kNeg;
  n.value = std::move(out);
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "neg");
}

Var Tape::scale(Var a, double c) {
  const Tensor& va = value(a.id);
  Tensor out(va.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[i] * c;
  Node n;
  n.op = Op::kScale;
  n.value = std::move(out);
  n.a = a.id;
  n.c0 = c;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "scale");
}

Var Tape::shift(Var a, double c) {
  const Tensor& va = value(a.id);
  Tensor out(va.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = va[i] + c;
  Node n;
  n.op = Op::kShift;
  n.value = std::move(out);
  n.a = a.id;
  n.c0 = c;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "shift");
}

Var Tape::exp(Var a) {
  const Tensor& va = value(a.id);
  Tensor out(va.shape());
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = std::exp(std::clamp(va[i], -700.0, 700.0));
  Node n;
  n.op = Op::kExp;
  n.value = std::move(out);
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "exp");
}

Var Tape::sigmoid(Var a) {
  const Tensor& va = value(a.id);
  Tensor out(va.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(va[i]);
  Node n;
  n.op = Op::kSigmoid;
  n.value = std::move(out);
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "sigmoid");
}

Var Tape::reciprocal(Var a) {
  const Tensor& va = value(a.id);
  Tensor out(va.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / va[i];
  Node n;
  n.op = Op::kReciprocal;
  n.value = std::move(out);
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "reciprocal");
}

Var Tape::vmin(Var a, Var b) {
  const Tensor &va = value(a.id), &vb = value(b.id);
  check_binary_shapes(va, vb, "vmin");
  Tensor out(wide(va, vb).shape());
  const bool sa = va.is_scalar(), sb = vb.is_scalar();
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = std::min(va[sa ? 0 : i], vb[sb ? 0 : i]);
  Node n;
  n.op = Op::kVMin;
  n.value = std::move(out);
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  return push(std::move(n), "vmin");
}

Var Tape::vmax(Var a, Var b) {
  const Tensor &va = value(a.id), &vb = value(b.id);
  check_binary_shapes(va, vb, "vmax");
  Tensor out(wide(va, vb).shape());
  const bool sa = va.is_scalar(), sb = vb.is_scalar();
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = std::max(va[sa ? 0 : i], vb[sb ? 0 : i]);
  Node n;
  n.op = Op::kVMax;
  n.value = std::move(out);
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  return push(std::move(n), "vmax");
}

Var Tape::diff_last(Var a) {
  const Tensor& va = value(a.id);
  if (va.rank() < 1 || va.dim(va.rank() - 1) < 2)
    throw TensorError("diff_last needs a trailing axis of extent >= 2, got " + va.shape_str());
  const std::int64_t g = va.dim(va.rank() - 1);
  std::vector<std::int64_t> shape = va.shape();
  shape.back() = g - 1;
  Tensor out(shape);
  const std::int64_t rows = va.size() / g;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = va.data() + r * g;
    double* dst = out.data() + r * (g - 1);
    for (std::int64_t j = 0; j + 1 < g; ++j) dst[j] = src[j + 1] - src[j];
  }
  Node n;
  n.op = Op::kDiffLast;
  n.value = std::move(out);
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "diff_last");
}

Var Tape::sum_last(Var a) {
  const Tensor& va = value(a.id);
  if (va.rank() < 1) throw TensorError("sum_last needs rank >= 1");
  const std::int64_t g = va.dim(va.rank() - 1);
  std::vector<std::int64_t> shape(va.shape().begin(), va.shape().end() - 1);
  Tensor out(shape);
  const std::int64_t rows = va.size() / g;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = va.data() + r * g;
    double acc = 0.0;
    for (std::int64_t j = 0; j < g; ++j) acc += src[j];
    out[r] = acc;
  }
  Node n;
  n.op = Op::kSumLast;
  n.value = std::move(out);
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "sum_last");
}

Var Tape::slice_last(Var a, std::int64_t lo, std::int64_t hi) {
  const Tensor& va = value(a.id);
  if (va.rank() < 1) throw TensorError("slice_last needs rank >= 1");
  const std::int64_t g = va.dim(va.rank() - 1);
  if (lo < 0 || hi > g || lo >= hi)
    throw TensorError("slice_last bounds [" + std::to_string(lo) + "," + std::to_string(hi) +
                      ") invalid for axis extent " + std::to_string(g));
  std::vector<std::int64_t> shape = va.shape();
  shape.back() = hi - lo;
  Tensor out(shape);
  const std::int64_t rows = va.size() / g, w = hi - lo;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = va.data() + r * g + lo;
    double* dst = out.data() + r * w;
    std::copy(src, src + w, dst);
  }
  Node n;
  n.op = Op::kSliceLast;
  n.value = std::move(out);
  n.a = a.id;
  n.i0 = lo;
  n.i1 = hi;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "slice_last");
}

Var Tape::reshape(Var a, std::vector<std::int64_t> shape) {
  Node n;
  n.op = Op::kReshape;
  n.value = value(a.id).reshaped(std::move(shape));
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "reshape");
}

Var Tape::permute(Var a, std::vector<int> perm) {
  Node n;
  n.op = Op::kPermute;
  n.value = permute_copy(value(a.id), perm);
  n.a = a.id;
  n.perm = std::move(perm);
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "permute");
}

Var Tape::contract(Var a, Var b, const ContractSpec& spec) {
  Node n;
  n.op = Op::kContract;
  n.value = contract_plain(value(a.id), value(b.id), spec);
  n.a = a.id;
  n.b = b.id;
  n.spec = spec;
  n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  return push(std::move(n), "contract");
}

Var Tape::sum_all(Var a) {
  const Tensor& va = value(a.id);
  double acc = 0.0;
  for (std::int64_t i = 0; i < va.size(); ++i) acc += va[i];
  Node n;
  n.op = Op::kSumAll;
  n.value = Tensor::scalar(acc);
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "sum_all");
}

Var Tape::mean_all(Var a) {
  const Tensor& va = value(a.id);
  double acc = 0.0;
  for (std::int64_t i = 0; i < va.size(); ++i) acc += va[i];
  Node n;
  n.op = Op::kMeanAll;
  n.value = Tensor::scalar(acc / static_cast<double>(va.size()));
  n.a = a.id;
  n.requires_grad = node(a.id).requires_grad;
  return push(std::move(n), "mean_all");
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& vl = value(logits.id);
  if (vl.rank() != 2)
    throw TensorError("softmax_cross_entropy expects [batch, classes], got " + vl.shape_str());
  const std::int64_t batch = vl.dim(0), classes = vl.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != batch)
    throw TensorError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                      " labels for batch of " + std::to_string(batch));
  Tensor probs(vl.shape());
  double loss = 0.0;
  for (std::int64_t i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes)
      throw TensorError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(classes) + ")");
    const double* row = vl.data() + i * classes;
    double* prow = probs.data() + i * classes;
    double mx = row[0];
    for (std::int64_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < classes; ++j) {
      prow[j] = std::exp(row[j] - mx);
      z += prow[j];
    }
    for (std::int64_t j = 0; j < classes; ++j) prow[j] /= z;
    loss -= row[y] - mx - std::log(z);
  }
  Node n;
  n.op = Op::kSoftmaxXent;
  n.value = Tensor::scalar(loss / static_cast<double>(batch));
  n.a = logits.id;
  n.aux = std::move(probs);
  n.labels.assign(labels.begin(), labels.end());
  n.requires_grad = node(logits.id).requires_grad;
  return push(std::move(n), "softmax_cross_entropy");
}

void Tape::accumulate(int id, const Tensor& g, double s) {
  Node& n = node(id);
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  if (n.value.is_scalar()) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < g.size(); ++i) acc += g[i];
    n.grad[0] += s * acc;
    return;
  }
  if (!n.grad.same_shape(g))
    throw TensorError("gradient shape " + g.shape_str() + " does not match value shape " +
                      n.grad.shape_str());
  for (std::int64_t i = 0; i < g.size(); ++i) n.grad[i] += s * g[i];
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.has_grad ? n.grad : Tensor::zeros(n.value.shape());
}

void Tape::backward(Var root) {
  if (!value(root.id).is_scalar())
    throw TensorError("backward root must be scalar, got shape " + value(root.id).shape_str());
  for (auto& n : nodes_) n.has_grad = false;
  accumulate(root.id, Tensor::scalar(1.0));

  for (int id = root.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.has_grad || !n.requires_grad) continue;
    const Tensor& g = n.grad;
    const bool need_a = n.a >= 0 && node(n.a).requires_grad;
    const bool need_b = n.b >= 0 && node(n.b).requires_grad;

    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;

      case Op::kAdd: {
        if (need_a) accumulate(n.a, g);
        if (need_b) accumulate(n.b, g);
        break;
      }
      case Op::kSub: {
        if (need_a) accumulate(n.a, g);
        if (need_b) accumulate(n.b, g, -1.0);
        break;
      }
      case Op::kMul: {
        const Tensor &va = value(n.a), &vb = value(n.b);
        const bool sa = va.is_scalar(), sb = vb.is_scalar();
        if (need_a) {
          Tensor ga(g.shape());
          for (std::int64_t i = 0; i < g.size(); ++i) ga[i] = g[i] * vb[sb ? 0 : i];
          accumulate(n.a, ga);
        }
        if (need_b) {
          Tensor gb(g.shape());
          for (std::int64_t i = 0; i < g.size(); ++i) gb[i] = g[i] * va[sa ? 0 : i];
          accumulate(n.b, gb);
        }
        break;
      }
      case Op::kNeg:
        accumulate(n.a, g, -1.0);
        break;
      case Op::kScale:
        accumulate(n.a, g, n.c0);
        break;
      case Op::kShift:
        accumulate(n.a, g);
        break;
      case Op::kExp: {
        Tensor ga(g.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] = g[i] * n.value[i];
        accumulate(n.a, ga);
        break;
      }
      case Op::kSigmoid: {
        Tensor ga(g.shape());
        for (std::int64_t i = 0; i < g.size(); ++i)
          ga[i] = g[i] * n.value[i] * (1.0 - n.value[i]);
        accumulate(n.a, ga);
        break;
      }
      case Op::kReciprocal: {
        Tensor ga(g.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] = -g[i] * n.value[i] * n.value[i];
        accumulate(n.a, ga);
        break;
      }
      case Op::kVMin:
      case Op::kVMax: {
        // Ties get zero from both sides (interior one-sided derivative).
        const Tensor &va = value(n.a), &vb = value(n.b);
        const bool sa = va.is_scalar(), sb = vb.is_scalar();
        const bool take_min = n.op == Op::kVMin;
        if (need_a) {
          Tensor ga(g.shape());
          for (std::int64_t i = 0; i < g.size(); ++i) {
            const double x = va[sa ? 0 : i], y = vb[sb ? 0 : i];
            ga[i] = (take_min ? x < y : x > y) ? g[i] : 0.0;
          }
          accumulate(n.a, ga);
        }
        if (need_b) {
          Tensor gb(g.shape());
          for (std::int64_t i = 0; i < g.size(); ++i) {
            const double x = va[sa ? 0 : i], y = vb[sb ? 0 : i];
            gb[i] = (take_min ? y < x : y > x) ? g[i] : 0.0;
          }
          accumulate(n.b, gb);
        }
        break;
      }
      case Op::kDiffLast: {
        const Tensor& va = value(n.a);
        const std::int64_t gcells = va.dim(va.rank() - 1);
        Tensor ga(va.shape());
        const std::int64_t rows = va.size() / gcells;
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* gy = g.data() + r * (gcells - 1);
          double* gx = ga.data() + r * gcells;
          for (std::int64_t j = 0; j < gcells; ++j) {
            double acc = 0.0;
            if (j >= 1) acc += gy[j - 1];
            if (j <= gcells - 2) acc -= gy[j];
            gx[j] = acc;
          }
        }
        accumulate(n.a, ga);
        break;
      }
      case Op::kSumLast: {
        const Tensor& va = value(n.a);
        const std::int64_t w = va.dim(va.rank() - 1);
        Tensor ga(va.shape());
        const std::int64_t rows = va.size() / w;
        for (std::int64_t r = 0; r < rows; ++r) {
          double* gx = ga.data() + r * w;
          for (std::int64_t j = 0; j < w; ++j) gx[j] = g[r];
        }
        accumulate(n.a, ga);
        break;
      }
      case Op::kSliceLast: {
        const Tensor& va = value(n.a);
        const std::int64_t w0 = va.dim(va.rank() - 1), w = n.i1 - n.i0;
        Tensor ga(va.shape());
        const std::int64_t rows = va.size() / w0;
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* gy = g.data() + r * w;
          double* gx = ga.data() + r * w0 + n.i0;
          for (std::int64_t j = 0; j < w; ++j) gx[j] = gy[j];
        }
        accumulate(n.a, ga);
        break;
      }
      case Op::kReshape:
        accumulate(n.a, g.reshaped(value(n.a).shape()));
        break;
      case Op::kPermute: {
        const auto inv = detail::inverse_perm(n.perm);
        accumulate(n.a, permute_copy(g, inv));
        break;
      }
      case Op::kContract: {
        const Tensor &va = value(n.a), &vb = value(n.b);
        const auto plan = detail::plan_contract(va, vb, n.spec);
        const Tensor a2 = permute_copy(va, plan.perm_a);
        const Tensor b2 = permute_copy(vb, plan.perm_b);
        const std::int64_t mk = plan.m * plan.k, kn = plan.k * plan.n, mn = plan.m * plan.n;
        if (need_a) {
          Tensor da2(plan.a_perm_shape);
          for (std::int64_t t = 0; t < plan.batch; ++t)
            detail::matmul_nt(g.data() + t * mn, b2.data() + t * kn, da2.data() + t * mk,
                              plan.m, plan.n, plan.k);
          accumulate(n.a, permute_copy(da2, detail::inverse_perm(plan.perm_a)));
        }
        if (need_b) {
          Tensor db2(plan.b_perm_shape);
          for (std::int64_t t = 0; t < plan.batch; ++t)
            detail::matmul_tn(a2.data() + t * mk, g.data() + t * mn, db2.data() + t * kn,
                              plan.m, plan.k, plan.n);
          accumulate(n.b, permute_copy(db2, detail::inverse_perm(plan.perm_b)));
        }
        break;
      }
      case Op::kSumAll: {
        const Tensor& va = value(n.a);
        Tensor ga = Tensor::full(va.shape(), g[0]);
        accumulate(n.a, ga);
        break;
      }
      case Op::kMeanAll: {
        const Tensor& va = value(n.a);
        Tensor ga = Tensor::full(va.shape(), g[0] / static_cast<double>(va.size()));
        accumulate(n.a, ga);
        break;
      }
      case Op::kSoftmaxXent: {
        const Tensor& probs = n.aux;
        const std::int64_t batch = probs.dim(0), classes = probs.dim(1);
        Tensor ga(probs.shape());
        const double s = g[0] / static_cast<double>(batch);
        for (std::int64_t i = 0; i < batch; ++i) {
          const double* prow = probs.data() + i * classes;
          double* grow = ga.data() + i * classes;
          const int y = n.labels[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < classes; ++j)
            grow[j] = s * (prow[j] - (j == y ? 1.0 : 0.0));
        }
        accumulate(n.a, ga);
        break;
      }
    }
  }
}

}  // namespace del
