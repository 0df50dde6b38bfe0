#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "del/autodiff.hpp"
#include "del/densities.hpp"
#include "del/tensor.hpp"

namespace del {

enum class Provenance {
  kFixed,           // entries are constants (recovery constructions)
  kParametric,      // entries depend on learnable parameters
  kInputDependent,  // entries depend on the input signal too
};

/// The receptive-field operator. order 2: entries [B, N] mapping an N-vector
/// to B outputs. order 4: entries [B, B, N, N] mapping an NxN image to a BxB
/// grid, entry [i, j, m, n] weighting pixel (row m, column n).
struct GammaOperator {
  int order;
  Tensor entries;
  Provenance provenance;
};

/// Gamma_in = mass of density i on the unit cell [n, n+1), n = 0..n_cells-1.
GammaOperator build_gamma_1d(std::span<const Density> densities, std::int64_t n_cells);

/// Separable 2-d build: entries[i,j,m,n] = mass(g[i*b+j], cell m) * mass(f[i*b+j], cell n).
/// f densities act on the t axis (columns, index n), g densities on the u
/// axis (rows, index m). Both grids are b*b, listed row-major.
GammaOperator build_gamma_2d_separable(std::span<const Density> f, std::span<const Density> g,
                                       std::int64_t b, std::int64_t n_cells);

/// Quadrature oracle: integrates an arbitrary pointwise pdf over each unit
/// cell with adaptive Simpson bisection (absolute tolerance per entry,
/// default 1e-9, max depth 40). Returns a [1, n_cells] operator. Throws
/// QuadratureError carrying the achieved tolerance when bisection bottoms
/// out. Not differentiable; for testing closed forms only.
GammaOperator build_gamma_numeric(const std::function<double(double)>& pdf,
                                  std::int64_t n_cells, double tolerance = 1e-9,
                                  int max_depth = 40);

/// Strided-convolution recovery: [K, N] with row i selecting cell (l-1)S+i
/// (1-indexed neuron l). Throws ParamError when the kernel overruns the
/// input, i.e. (l-1)S + K > N.
GammaOperator conv_gamma(std::int64_t n, std::int64_t k, std::int64_t s, std::int64_t l);

/// Adaptive convolution with kernel amplitude p > 0:
/// Gamma_in = max(0, min(n, a + i p/K) - max(n-1, a + (i-1) p/K)), a = (l-1)S.
/// Rows are unnormalized (each sums to p/K while the stretched kernel stays
/// inside [0, N]); normalize=true divides rows by p/K.
GammaOperator adaptive_conv_gamma(std::int64_t n, std::int64_t k, std::int64_t s,
                                  std::int64_t l, double p, bool normalize = false);

struct Interval {
  double lo;
  double hi;
};

/// Overlap lengths m[i, n] = |cell n intersect intervals[i]|.
/// Throws ParamError on a zero-measure interval.
Tensor interval_overlap_mask(std::span<const Interval> intervals, std::int64_t n_cells);

/// Temperature pooling over intervals: Gamma_in = m_in e^{beta x_n} / sum_r
/// m_ir e^{beta x_r} with m_in the overlap of cell n with J_i. beta = 0
/// averages, beta -> +/-inf selects max/min over the interval. Every row
/// sums to 1. Throws ParamError on a zero-measure interval.
GammaOperator adaptive_pool_gamma(const Tensor& x, double beta,
                                  std::span<const Interval> intervals, std::int64_t n_cells);

/// Differentiable builders (tape-recorded forms of the constructions above).

/// Logistic CDF-difference rows. alpha and beta share a shape [..., R]; the
/// result appends a cell axis: [..., R, n_cells]. Location and scale come
/// from squashing the logits with mu_spec / s_spec.
Var logistic_gamma_rows(Tape& tape, Var alpha, Var beta, const SquashSpec& mu_spec,
                        const SquashSpec& s_spec, std::int64_t n_cells);

/// adaptive_conv_gamma with a learnable scalar amplitude p.
Var adaptive_conv_gamma(Tape& tape, std::int64_t n, std::int64_t k, std::int64_t s,
                        std::int64_t l, Var p, bool normalize = false);

/// adaptive_pool_gamma with learnable temperature (and optionally input).
/// x: [n_cells], beta: scalar.
Var adaptive_pool_gamma(Tape& tape, Var x, Var beta, std::span<const Interval> intervals,
                        std::int64_t n_cells);

/// Same with learnable interval endpoints lo/hi: [B] each.
Var adaptive_pool_gamma(Tape& tape, Var x, Var beta, Var lo, Var hi, std::int64_t n_cells);

/// Fault-injection hook for the verify battery: when the environment
/// variable DEL_SELFCHECK_PERTURB is set to a number, every built Gamma has
/// that value added to its first entry. Returns 0 when unset.
double gamma_debug_perturbation();

}  // namespace del
