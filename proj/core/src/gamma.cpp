#include "del/gamma.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace del {

namespace {

void require_positive_cells(std::int64_t n_cells) {
  if (n_cells < 1)
    throw ParamError("number of cells must be >= 1, got " + std::to_string(n_cells));
}

void apply_perturbation(Tensor& entries) {
  const double eps = gamma_debug_perturbation();
  if (eps != 0.0) entries[0] += eps;
}

/// Tensor of shape prefix + [row.size()] with `row` repeated along every
/// leading index.
Tensor tile_rows(const std::vector<std::int64_t>& prefix, const std::vector<double>& row) {
  std::vector<std::int64_t> shape = prefix;
  shape.push_back(static_cast<std::int64_t>(row.size()));
  Tensor out(shape);
  const std::int64_t w = static_cast<std::int64_t>(row.size());
  for (std::int64_t r = 0; r < out.size() / w; ++r)
    std::copy(row.begin(), row.end(), out.data() + r * w);
  return out;
}

std::vector<double> cell_boundaries(std::int64_t n_cells) {
  std::vector<double> g(static_cast<std::size_t>(n_cells + 1));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i);
  return g;
}

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double fa, double fm, double fb, double whole, double tol,
                        int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(a, m, fa, flm, fm);
  const double right = simpson(m, b, fm, frm, fb);
  const double err = (left + right - whole) / 15.0;
  if (std::abs(err) <= tol) return left + right + err;
  if (depth <= 0)
    throw QuadratureError("adaptive Simpson hit max depth on [" + std::to_string(a) + ", " +
                              std::to_string(b) + "]",
                          std::abs(err));
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double gamma_debug_perturbation() {
  static const double eps = [] {
    const char* v = std::getenv("DEL_SELFCHECK_PERTURB");
    return v ? std::strtod(v, nullptr) : 0.0;
  }();
  return eps;
}

GammaOperator build_gamma_1d(std::span<const Density> densities, std::int64_t n_cells) {
  require_positive_cells(n_cells);
  if (densities.empty()) throw ParamError("build_gamma_1d needs at least one density");
  const std::int64_t b = static_cast<std::int64_t>(densities.size());
  Tensor entries({b, n_cells});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t n = 0; n < n_cells; ++n)
      entries[i * n_cells + n] = interval_mass(densities[static_cast<std::size_t>(i)],
                                               static_cast<double>(n),
                                               static_cast<double>(n + 1));
  apply_perturbation(entries);
  return {2, std::move(entries), Provenance::kParametric};
}

GammaOperator build_gamma_2d_separable(std::span<const Density> f, std::span<const Density> g,
                                       std::int64_t b, std::int64_t n_cells) {
  require_positive_cells(n_cells);
  const auto need = static_cast<std::size_t>(b * b);
  if (f.size() != need || g.size() != need)
    throw ParamError("build_gamma_2d_separable needs b*b densities per axis, got " +
                     std::to_string(f.size()) + " and " + std::to_string(g.size()) +
                     " for b = " + std::to_string(b));
  const GammaOperator gt = build_gamma_1d(f, n_cells);
  const GammaOperator gu = build_gamma_1d(g, n_cells);
  Tensor entries({b, b, n_cells, n_cells});
  for (std::int64_t unit = 0; unit < b * b; ++unit) {
    const double* rt = gt.entries.data() + unit * n_cells;
    const double* ru = gu.entries.data() + unit * n_cells;
    double* dst = entries.data() + unit * n_cells * n_cells;
    for (std::int64_t m = 0; m < n_cells; ++m)
      for (std::int64_t n = 0; n < n_cells; ++n) dst[m * n_cells + n] = ru[m] * rt[n];
  }
  return {4, std::move(entries), Provenance::kParametric};
}

GammaOperator build_gamma_numeric(const std::function<double(double)>& pdf,
                                  std::int64_t n_cells, double tolerance, int max_depth) {
  require_positive_cells(n_cells);
  Tensor entries({1, n_cells});
  for (std::int64_t n = 0; n < n_cells; ++n) {
    const double a = static_cast<double>(n), b = static_cast<double>(n + 1);
    const double m = 0.5 * (a + b);
    const double fa = pdf(a), fm = pdf(m), fb = pdf(b);
    const double whole = simpson(a, b, fa, fm, fb);
    entries[n] = adaptive_simpson(pdf, a, b, fa, fm, fb, whole, tolerance, max_depth);
  }
  return {2, std::move(entries), Provenance::kFixed};
}

GammaOperator conv_gamma(std::int64_t n, std::int64_t k, std::int64_t s, std::int64_t l) {
  if (n < 1 || k < 1 || s < 1 || l < 1)
    throw ParamError("conv_gamma arguments must be positive");
  if ((l - 1) * s + k > n)
    throw ParamError("kernel overruns input: (l-1)S + K = " +
                     std::to_string((l - 1) * s + k) + " > N = " + std::to_string(n));
  Tensor entries({k, n});
  for (std::int64_t i = 0; i < k; ++i) entries[i * n + (l - 1) * s + i] = 1.0;
  apply_perturbation(entries);
  return {2, std::move(entries), Provenance::kFixed};
}

GammaOperator adaptive_conv_gamma(std::int64_t n, std::int64_t k, std::int64_t s,
                                  std::int64_t l, double p, bool normalize) {
  if (n < 1 || k < 1 || s < 1 || l < 1)
    throw ParamError("adaptive_conv_gamma arguments must be positive");
  if (!(p > 0.0))
    throw ParamError("kernel amplitude must be positive, got " + std::to_string(p));
  const double a = static_cast<double>((l - 1) * s);
  Tensor entries({k, n});
  for (std::int64_t i = 0; i < k; ++i) {
    const double lo = a + p * static_cast<double>(i) / static_cast<double>(k);
    const double hi = a + p * static_cast<double>(i + 1) / static_cast<double>(k);
    for (std::int64_t c = 0; c < n; ++c) {
      const double overlap =
          std::min(static_cast<double>(c + 1), hi) - std::max(static_cast<double>(c), lo);
      entries[i * n + c] = std::max(0.0, overlap) * (normalize ? static_cast<double>(k) / p : 1.0);
    }
  }
  apply_perturbation(entries);
  return {2, std::move(entries), Provenance::kParametric};
}

Tensor interval_overlap_mask(std::span<const Interval> intervals, std::int64_t n_cells) {
  require_positive_cells(n_cells);
  const std::int64_t b = static_cast<std::int64_t>(intervals.size());
  if (b == 0) throw ParamError("interval_overlap_mask needs at least one interval");
  Tensor m({b, n_cells});
  for (std::int64_t i = 0; i < b; ++i) {
    const Interval& j = intervals[static_cast<std::size_t>(i)];
    if (!(j.hi > j.lo))
      throw ParamError("zero-measure pooling interval [" + std::to_string(j.lo) + ", " +
                       std::to_string(j.hi) + "]");
    for (std::int64_t c = 0; c < n_cells; ++c)
      m[i * n_cells + c] = std::max(
          0.0, std::min(j.hi, static_cast<double>(c + 1)) - std::max(j.lo, static_cast<double>(c)));
  }
  return m;
}

GammaOperator adaptive_pool_gamma(const Tensor& x, double beta,
                                  std::span<const Interval> intervals, std::int64_t n_cells) {
  require_positive_cells(n_cells);
  if (x.rank() != 1 || x.dim(0) != n_cells)
    throw TensorError("adaptive_pool_gamma input must be [" + std::to_string(n_cells) +
                      "], got " + x.shape_str());
  const Tensor m = interval_overlap_mask(intervals, n_cells);
  const std::int64_t b = m.dim(0);
  Tensor entries({b, n_cells});
  for (std::int64_t i = 0; i < b; ++i) {
    const double* mr = m.data() + i * n_cells;
    double* row = entries.data() + i * n_cells;
    double peak = -HUGE_VAL;
    for (std::int64_t c = 0; c < n_cells; ++c)
      if (mr[c] > 0.0) peak = std::max(peak, beta * x[c]);
    if (peak == -HUGE_VAL)
      throw ParamError("pooling interval " + std::to_string(i) +
                       " does not overlap the input domain");
    double den = 0.0;
    for (std::int64_t c = 0; c < n_cells; ++c) {
      row[c] = mr[c] * std::exp(beta * x[c] - peak);
      den += row[c];
    }
    for (std::int64_t c = 0; c < n_cells; ++c) row[c] /= den;
  }
  apply_perturbation(entries);
  return {2, std::move(entries), Provenance::kInputDependent};
}

Var logistic_gamma_rows(Tape& tape, Var alpha, Var beta, const SquashSpec& mu_spec,
                        const SquashSpec& s_spec, std::int64_t n_cells) {
  require_positive_cells(n_cells);
  if (!alpha.value().same_shape(beta.value()))
    throw TensorError("alpha shape " + alpha.value().shape_str() + " vs beta shape " +
                      beta.value().shape_str());
  const Var mu = tape.shift(tape.scale(tape.sigmoid(tape.scale(alpha, mu_spec.p)), mu_spec.n),
                            mu_spec.q);
  const Var s = tape.shift(tape.scale(tape.sigmoid(tape.scale(beta, s_spec.p)), s_spec.n),
                           s_spec.q);
  const Var ones_g = tape.constant(Tensor::ones({n_cells + 1}));
  const Var mu_g = tape.outer(mu, ones_g);
  const Var sinv_g = tape.outer(tape.reciprocal(s), ones_g);
  const Var grid = tape.constant(tile_rows(alpha.shape(), cell_boundaries(n_cells)));
  const Var z = tape.mul(tape.sub(grid, mu_g), sinv_g);
  return tape.diff_last(tape.sigmoid(z));
}

Var adaptive_conv_gamma(Tape& tape, std::int64_t n, std::int64_t k, std::int64_t s,
                        std::int64_t l, Var p, bool normalize) {
  if (n < 1 || k < 1 || s < 1 || l < 1)
    throw ParamError("adaptive_conv_gamma arguments must be positive");
  if (!p.value().is_scalar())
    throw TensorError("kernel amplitude must be scalar, got " + p.value().shape_str());
  if (!(p.value()[0] > 0.0))
    throw ParamError("kernel amplitude must be positive, got " + std::to_string(p.value()[0]));
  const double a = static_cast<double>((l - 1) * s);

  std::vector<double> lo_coef(static_cast<std::size_t>(k)), hi_coef(lo_coef);
  for (std::int64_t i = 0; i < k; ++i) {
    lo_coef[static_cast<std::size_t>(i)] = static_cast<double>(i) / static_cast<double>(k);
    hi_coef[static_cast<std::size_t>(i)] = static_cast<double>(i + 1) / static_cast<double>(k);
  }
  const Var lo = tape.shift(tape.outer(p, tape.constant(Tensor({k}, std::move(lo_coef)))), a);
  const Var hi = tape.shift(tape.outer(p, tape.constant(Tensor({k}, std::move(hi_coef)))), a);

  const Var ones_n = tape.constant(Tensor::ones({n}));
  std::vector<double> cell_lo(static_cast<std::size_t>(n));
  for (std::int64_t c = 0; c < n; ++c) cell_lo[static_cast<std::size_t>(c)] = static_cast<double>(c);
  const Var cells_lo = tape.constant(tile_rows({k}, cell_lo));
  for (auto& v : cell_lo) v += 1.0;
  const Var cells_hi = tape.constant(tile_rows({k}, cell_lo));

  const Var lower = tape.vmax(tape.outer(lo, ones_n), cells_lo);
  const Var upper = tape.vmin(tape.outer(hi, ones_n), cells_hi);
  Var gamma = tape.vmax(tape.sub(upper, lower), tape.constant_scalar(0.0));
  if (normalize)
    gamma = tape.mul(gamma, tape.scale(tape.reciprocal(p), static_cast<double>(k)));
  return gamma;
}

namespace {

Var pool_rows_from_mask(Tape& tape, Var mask, Var x, Var beta, std::int64_t b,
                        std::int64_t n_cells) {
  const Var weights = tape.exp(tape.mul(x, beta));
  const Var weights_b = tape.mul(mask, tape.outer(tape.constant(Tensor::ones({b})), weights));
  const Var den = tape.sum_last(weights_b);
  const Var den_inv = tape.outer(tape.reciprocal(den), tape.constant(Tensor::ones({n_cells})));
  return tape.mul(weights_b, den_inv);
}

}  // namespace

Var adaptive_pool_gamma(Tape& tape, Var x, Var beta, std::span<const Interval> intervals,
                        std::int64_t n_cells) {
  require_positive_cells(n_cells);
  if (x.value().rank() != 1 || x.value().dim(0) != n_cells)
    throw TensorError("adaptive_pool_gamma input must be [" + std::to_string(n_cells) +
                      "], got " + x.value().shape_str());
  const Tensor m = interval_overlap_mask(intervals, n_cells);
  return pool_rows_from_mask(tape, tape.constant(m), x, beta, m.dim(0), n_cells);
}

Var adaptive_pool_gamma(Tape& tape, Var x, Var beta, Var lo, Var hi, std::int64_t n_cells) {
  require_positive_cells(n_cells);
  if (!lo.value().same_shape(hi.value()) || lo.value().rank() != 1)
    throw TensorError("interval endpoints must be equal-length vectors, got " +
                      lo.value().shape_str() + " and " + hi.value().shape_str());
  const std::int64_t b = lo.value().dim(0);
  for (std::int64_t i = 0; i < b; ++i)
    if (!(hi.value()[i] > lo.value()[i]))
      throw ParamError("zero-measure pooling interval [" + std::to_string(lo.value()[i]) +
                       ", " + std::to_string(hi.value()[i]) + "]");

  const Var ones_n = tape.constant(Tensor::ones({n_cells}));
  std::vector<double> cell_lo(static_cast<std::size_t>(n_cells));
  for (std::int64_t c = 0; c < n_cells; ++c)
    cell_lo[static_cast<std::size_t>(c)] = static_cast<double>(c);
  const Var cells_lo = tape.constant(tile_rows({b}, cell_lo));
  for (auto& v : cell_lo) v += 1.0;
  const Var cells_hi = tape.constant(tile_rows({b}, cell_lo));

  const Var lower = tape.vmax(tape.outer(lo, ones_n), cells_lo);
  const Var upper = tape.vmin(tape.outer(hi, ones_n), cells_hi);
  const Var mask = tape.vmax(tape.sub(upper, lower), tape.constant_scalar(0.0));
  return pool_rows_from_mask(tape, mask, x, beta, b, n_cells);
}

}  // namespace del
