#include "del/selfcheck.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <utility>

#include "del/autodiff.hpp"
#include "del/checkpoint.hpp"
#include "del/common.hpp"
#include "del/data.hpp"
#include "del/densities.hpp"
#include "del/gamma.hpp"
#include "del/layers.hpp"
#include "del/render.hpp"
#include "del/rng.hpp"
#include "del/tensor.hpp"
#include "del/train.hpp"

namespace del {
namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

CheckResult result(std::string name, bool passed, std::string detail) {
  return {std::move(name), passed, std::move(detail)};
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// L2 relative error of an analytic gradient against its finite-difference
/// estimate; zero-against-zero passes.
double vec_rel_err(const Tensor& analytic, const Tensor& fd) {
  double nd = 0.0, nf = 0.0, na = 0.0;
  for (std::int64_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - fd[i];
    nd += d * d;
    nf += fd[i] * fd[i];
    na += analytic[i] * analytic[i];
  }
  if (std::sqrt(nf) < 1e-10 && std::sqrt(na) < 1e-10) return 0.0;
  return std::sqrt(nd) / std::max(std::sqrt(nf), 1e-12);
}

template <class LossFn>
Tensor fd_grad(Tensor& param, const LossFn& loss, double step = 1e-4) {
  Tensor g(param.shape());
  for (std::int64_t i = 0; i < param.size(); ++i) {
    const double orig = param[i];
    param[i] = orig + step;
    const double up = loss();
    param[i] = orig - step;
    const double down = loss();
    param[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

Tensor random_uniform(Rng& rng, std::vector<std::int64_t> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor random_normal(Rng& rng, std::vector<std::int64_t> shape, double mean, double stddev) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(mean, stddev);
  return t;
}

double logistic_pdf(double t, double mu, double s) {
  const double c = std::cosh((t - mu) / (2.0 * s));
  return 1.0 / (4.0 * s * c * c);
}

std::vector<std::uint8_t> file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<CheckResult> check_squash_values() {
  std::vector<CheckResult> out;
  const double frozen = squash(0.0, SquashSpec{0.0, 1.0, 28.0});
  out.push_back(result("squash: zero-gain spec freezes at q + N/2", frozen == 15.0,
                       "squash(0; p=0, q=1, N=28) = " + fmt(frozen)));
  const double scale_at_init = squash(-3.0, SquashSpec::appendix_s(28));
  out.push_back(result("squash: scale squash is live and pixel-scale at the init mean",
                       scale_at_init > 1.0 && scale_at_init < 2.0,
                       "squash(-3; scale spec, N=28) = " + fmt(scale_at_init)));
  const double centered = squash(0.0, SquashSpec::appendix_mu(28));
  out.push_back(result("squash: zero logit centers the location", centered == 14.0,
                       "squash(0; p=4, q=0, N=28) = " + fmt(centered)));
  const double main_mid = squash(0.0, SquashSpec::main_text(28));
  out.push_back(result("squash: unit-gain form centers too", main_mid == 14.0,
                       "squash(0; p=1, q=0, N=28) = " + fmt(main_mid)));

  bool inside = true;
  const SquashSpec mu = SquashSpec::appendix_mu(28);
  for (const double z : {-40.0, -3.0, 0.0, 3.0, 40.0}) {
    const double v = squash(z, mu);
    inside = inside && v >= mu.q && v <= mu.q + mu.n;
  }
  out.push_back(result("squash: output bounded by [q, q+N]", inside, ""));
  return out;
}

std::vector<CheckResult> check_recovery() {
  std::vector<CheckResult> out;

  {
    const std::int64_t n = 12;
    std::vector<Density> cells;
    for (std::int64_t i = 0; i < n; ++i)
      cells.emplace_back(PiecewiseConstantDensity(static_cast<double>(i),
                                                  static_cast<double>(i + 1)));
    const GammaOperator gamma = build_gamma_1d(cells, n);
    double worst = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        worst = std::max(worst, std::abs(gamma.entries.at(i, j) - (i == j ? 1.0 : 0.0)));
    out.push_back(result("recovery: unit-cell densities rebuild the identity", worst == 0.0,
                         "max deviation " + fmt(worst)));
  }

  {
    const std::int64_t n = 12, k = 3, s = 2;
    Tensor x({n});
    for (std::int64_t i = 0; i < n; ++i) x[i] = 0.5 + static_cast<double>(i);
    bool exact = true;
    for (std::int64_t l = 1; (l - 1) * s + k <= n; ++l) {
      const GammaOperator gamma = conv_gamma(n, k, s, l);
      for (std::int64_t i = 0; i < k; ++i) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < n; ++j) acc += gamma.entries.at(i, j) * x[j];
        exact = exact && acc == x[(l - 1) * s + i];
      }
    }
    out.push_back(result("recovery: fixed windows copy their cells exactly", exact, ""));
  }

  {
    const std::int64_t n = 12, k = 3, s = 2;
    double worst = 0.0;
    for (std::int64_t l = 1; (l - 1) * s + k <= n; ++l) {
      const Tensor fixed = conv_gamma(n, k, s, l).entries;
      const Tensor stretched =
          adaptive_conv_gamma(n, k, s, l, static_cast<double>(k)).entries;
      worst = std::max(worst, max_abs_diff(fixed, stretched));
    }
    out.push_back(result("recovery: amplitude p=K reproduces the fixed window", worst == 0.0,
                         "max entry difference " + fmt(worst)));
  }

  {
    const std::int64_t n = 12, k = 4, s = 3, l = 2;
    const double p = 2.6;
    const Tensor raw = adaptive_conv_gamma(n, k, s, l, p, false).entries;
    const Tensor unit = adaptive_conv_gamma(n, k, s, l, p, true).entries;
    double worst_raw = 0.0, worst_unit = 0.0;
    for (std::int64_t i = 0; i < k; ++i) {
      double sum_raw = 0.0, sum_unit = 0.0;
      for (std::int64_t j = 0; j < n; ++j) {
        sum_raw += raw.at(i, j);
        sum_unit += unit.at(i, j);
      }
      worst_raw = std::max(worst_raw, std::abs(sum_raw - p / static_cast<double>(k)));
      worst_unit = std::max(worst_unit, std::abs(sum_unit - 1.0));
    }
    out.push_back(result("recovery: window rows sum to p/K, or 1 when normalized",
                         worst_raw < 1e-12 && worst_unit < 1e-12,
                         "row-sum errors " + fmt(worst_raw) + " / " + fmt(worst_unit)));
  }

  return out;
}

std::vector<CheckResult> check_pooling_limits() {
  std::vector<CheckResult> out;
  const std::int64_t n = 8;
  const Tensor x({n}, {0.0, 1.5, 0.5, 3.0, 2.0, 4.5, 1.0, 2.5});
  const std::vector<Interval> intervals = {{0.0, 4.0}, {4.0, 8.0}};

  const auto pooled = [&](double beta) {
    const Tensor gamma = adaptive_pool_gamma(x, beta, intervals, n).entries;
    Tensor y({2});
    for (std::int64_t i = 0; i < 2; ++i)
      for (std::int64_t j = 0; j < n; ++j) y[i] += gamma.at(i, j) * x[j];
    return y;
  };

  {
    const Tensor y = pooled(0.0);
    const double e0 = std::abs(y[0] - (0.0 + 1.5 + 0.5 + 3.0) / 4.0);
    const double e1 = std::abs(y[1] - (2.0 + 4.5 + 1.0 + 2.5) / 4.0);
    out.push_back(result("pooling: zero temperature averages each interval",
                         e0 < 1e-12 && e1 < 1e-12, "deviations " + fmt(e0) + ", " + fmt(e1)));
  }
  {
    const Tensor y = pooled(50.0);
    const double e = std::max(std::abs(y[0] - 3.0), std::abs(y[1] - 4.5));
    out.push_back(
        result("pooling: temperature +50 reaches the interval max", e < 1e-6, fmt(e)));
  }
  {
    const Tensor y = pooled(-50.0);
    const double e = std::max(std::abs(y[0] - 0.0), std::abs(y[1] - 1.0));
    out.push_back(
        result("pooling: temperature -50 reaches the interval min", e < 1e-6, fmt(e)));
  }
  return out;
}

std::vector<CheckResult> check_builder_equivalence(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);

  {
    const std::int64_t rows = 7, n = 16;
    const SquashSpec mu_spec = SquashSpec::appendix_mu(static_cast<double>(n));
    const SquashSpec s_spec = SquashSpec::appendix_s(static_cast<double>(n));
    const Tensor alpha = random_normal(rng, {rows}, 0.0, 0.4);
    const Tensor beta = random_normal(rng, {rows}, -3.0, 0.3);

    Tape tape;
    const Tensor taped =
        logistic_gamma_rows(tape, tape.leaf(alpha), tape.leaf(beta), mu_spec, s_spec, n)
            .value();

    std::vector<Density> densities;
    for (std::int64_t r = 0; r < rows; ++r)
      densities.emplace_back(
          LogisticDensity(squash(alpha[r], mu_spec), squash(beta[r], s_spec)));
    const Tensor plain = build_gamma_1d(densities, n).entries;

    const double worst = max_abs_diff(taped, plain);
    out.push_back(result("equivalence: taped logistic rows match the density builder",
                         worst < 1e-12, "max |diff| " + fmt(worst)));
  }

  {
    const std::int64_t n = 13, k = 4, s = 3, l = 2;
    double worst = 0.0;
    for (const bool normalize : {false, true}) {
      const double p = rng.uniform(0.3, 2.0 * static_cast<double>(k));
      Tape tape;
      const Tensor taped =
          adaptive_conv_gamma(tape, n, k, s, l, tape.leaf(Tensor::scalar(p)), normalize)
              .value();
      const Tensor plain = adaptive_conv_gamma(n, k, s, l, p, normalize).entries;
      worst = std::max(worst, max_abs_diff(taped, plain));
    }
    out.push_back(result("equivalence: taped stretched windows match the plain builder",
                         worst < 1e-12, "max |diff| " + fmt(worst)));
  }

  {
    const std::int64_t n = 9;
    const std::vector<Interval> intervals = {{0.0, 3.0}, {3.0, 7.5}, {7.5, 9.0}};
    const Tensor x = random_uniform(rng, {n}, 0.0, 1.0);
    const double beta = 0.8;
    Tape tape;
    const Tensor taped =
        adaptive_pool_gamma(tape, tape.leaf(x), tape.leaf(Tensor::scalar(beta)), intervals, n)
            .value();
    const Tensor plain = adaptive_pool_gamma(x, beta, intervals, n).entries;
    const double worst = max_abs_diff(taped, plain);
    out.push_back(result("equivalence: taped interval pooling matches the plain builder",
                         worst < 1e-12, "max |diff| " + fmt(worst)));
  }

  {
    const std::int64_t n = 9;
    const std::vector<Interval> intervals = {{0.0, 3.0}, {3.0, 7.5}, {7.5, 9.0}};
    const Tensor lo({3}, {0.0, 3.0, 7.5});
    const Tensor hi({3}, {3.0, 7.5, 9.0});
    const Tensor x = random_uniform(rng, {n}, 0.0, 1.0);
    const double beta = -0.6;
    Tape tape;
    const Tensor taped = adaptive_pool_gamma(tape, tape.leaf(x),
                                             tape.leaf(Tensor::scalar(beta)), tape.leaf(lo),
                                             tape.leaf(hi), n)
                             .value();
    const Tensor plain = adaptive_pool_gamma(x, beta, intervals, n).entries;
    const double worst = max_abs_diff(taped, plain);
    out.push_back(result("equivalence: learnable-endpoint pooling matches fixed intervals",
                         worst < 1e-12, "max |diff| " + fmt(worst)));
  }

  return out;
}

std::vector<CheckResult> check_oracle_equivalence(int grids, std::uint64_t seed) {
  Rng rng(seed);
  double worst_rows = 0.0, worst_grid = 0.0;
  std::int64_t entries = 0;

  for (int g = 0; g < grids; ++g) {
    const std::int64_t b = 1 + static_cast<std::int64_t>(rng.below(8));
    const std::int64_t n = 4 + static_cast<std::int64_t>(rng.below(29));
    const SquashSpec mu_spec = SquashSpec::appendix_mu(static_cast<double>(n));
    const SquashSpec s_spec = SquashSpec::appendix_s(static_cast<double>(n));

    const std::int64_t units = b * b;
    std::vector<Density> f, gdens;
    for (std::int64_t i = 0; i < units; ++i) {
      f.emplace_back(LogisticDensity(squash(rng.normal(0.0, 0.4), mu_spec),
                                     squash(rng.normal(-3.0, 0.3), s_spec)));
      gdens.emplace_back(LogisticDensity(squash(rng.normal(0.0, 0.4), mu_spec),
                                         squash(rng.normal(-3.0, 0.3), s_spec)));
    }

    // Quadrature rows per density, then their outer products against the
    // closed-form separable build.
    const auto numeric_rows = [&](const std::vector<Density>& ds) {
      Tensor rows({units, n});
      for (std::int64_t i = 0; i < units; ++i) {
        const auto& d = std::get<LogisticDensity>(ds[static_cast<std::size_t>(i)]);
        const GammaOperator row = build_gamma_numeric(
            [&](double t) { return logistic_pdf(t, d.mu, d.s); }, n);
        for (std::int64_t j = 0; j < n; ++j) rows.at(i, j) = row.entries.at(0, j);
      }
      return rows;
    };
    const Tensor ft = numeric_rows(f);
    const Tensor gu = numeric_rows(gdens);

    const Tensor closed_f = build_gamma_1d(f, n).entries;
    worst_rows = std::max(worst_rows, max_abs_diff(closed_f, ft));
    const Tensor closed_g = build_gamma_1d(gdens, n).entries;
    worst_rows = std::max(worst_rows, max_abs_diff(closed_g, gu));

    const Tensor grid = build_gamma_2d_separable(f, gdens, b, n).entries;
    double worst = 0.0;
    for (std::int64_t q = 0; q < units; ++q)
      for (std::int64_t m = 0; m < n; ++m)
        for (std::int64_t j = 0; j < n; ++j)
          worst = std::max(worst, std::abs(grid[(q * n + m) * n + j] -
                                           gu.at(q, m) * ft.at(q, j)));
    worst_grid = std::max(worst_grid, worst);
    entries += units * n * n;
  }

  std::vector<CheckResult> out;
  out.push_back(result("oracle: closed-form interval masses match quadrature",
                       worst_rows < 1e-6,
                       std::to_string(grids) + " grids, max |diff| " + fmt(worst_rows)));
  out.push_back(result("oracle: separable grid equals the product of axis rows",
                       worst_grid < 1e-6,
                       std::to_string(entries) + " entries, max |diff| " + fmt(worst_grid)));
  return out;
}

std::vector<CheckResult> check_gradients(int configs_per_layer, std::uint64_t seed) {
  Rng rng(seed);
  struct Worst {
    double err = 0.0;
    int configs = 0;
  };
  Worst el_alpha, el_beta, mnn_w, mnn_bias, mnn_inner, mnn_outer, pool_beta, conv_amp;

  const auto track = [](Worst& w, double err) {
    w.err = std::max(w.err, err);
    w.configs += 1;
  };

  // Alternate squash forms so both location gains are exercised.
  for (int cfg = 0; cfg < configs_per_layer; ++cfg) {
    const std::int64_t b = 2 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t n = 6 + static_cast<std::int64_t>(rng.below(7));
    const std::int64_t c = cfg % 2 == 0 ? 1 : 2;
    const std::int64_t batch = 2;
    const bool unit_gain = cfg % 2 == 1;
    const SquashSpec mu_spec = unit_gain ? SquashSpec::main_text(static_cast<double>(n))
                                         : SquashSpec::appendix_mu(static_cast<double>(n));
    const SquashSpec s_spec = unit_gain ? SquashSpec::main_text(static_cast<double>(n))
                                        : SquashSpec::appendix_s(static_cast<double>(n));
    const std::vector<std::int64_t> logit_shape =
        c == 1 ? std::vector<std::int64_t>{b, b, 2} : std::vector<std::int64_t>{c, b, b, 2};

    Tensor alpha = random_normal(rng, logit_shape, 0.0, 0.4);
    Tensor beta = random_normal(rng, logit_shape, -3.0, 0.3);
    const Tensor x = random_uniform(rng, {batch, c, n, n}, 0.0, 1.0);
    const Tensor w = random_normal(rng, {batch, c, b, b}, 0.0, 1.0);

    const auto loss = [&]() {
      Tape tape;
      const Var out = logistic_el_forward(tape, tape.leaf(alpha), tape.leaf(beta),
                                          tape.constant(x), mu_spec, s_spec);
      return tape.sum_all(tape.mul(out, tape.constant(w))).value().item();
    };

    Tape tape;
    const Var va = tape.leaf(alpha), vb = tape.leaf(beta);
    const Var out =
        logistic_el_forward(tape, va, vb, tape.constant(x), mu_spec, s_spec);
    tape.backward(tape.sum_all(tape.mul(out, tape.constant(w))));
    track(el_alpha, vec_rel_err(tape.grad(va), fd_grad(alpha, loss)));
    track(el_beta, vec_rel_err(tape.grad(vb), fd_grad(beta, loss)));
  }

  for (int cfg = 0; cfg < configs_per_layer; ++cfg) {
    const std::int64_t b = 3, b0 = 2, n = 8, c = 1, batch = 2;
    const std::int64_t u = b * b, f0 = c * b0 * b0;
    const bool unit_gain = cfg % 2 == 1;
    const SquashSpec mu_spec = unit_gain ? SquashSpec::main_text(static_cast<double>(n))
                                         : SquashSpec::appendix_mu(static_cast<double>(n));
    const SquashSpec s_spec = unit_gain ? SquashSpec::main_text(static_cast<double>(n))
                                        : SquashSpec::appendix_s(static_cast<double>(n));

    Tensor inner_alpha = random_normal(rng, {b0, b0, 2}, 0.0, 0.4);
    Tensor inner_beta = random_normal(rng, {b0, b0, 2}, -3.0, 0.3);
    Tensor w = random_uniform(rng, {f0, 2 * u}, -0.5, 0.5);
    Tensor bias = random_uniform(rng, {2 * u}, -0.5, 0.5);
    Tensor outer_beta = random_normal(rng, {b, b, 2}, -3.0, 0.3);
    const Tensor x = random_uniform(rng, {batch, c, n, n}, 0.0, 1.0);
    const Tensor wts = random_normal(rng, {batch, c, b, b}, 0.0, 1.0);

    const auto loss = [&]() {
      Tape tape;
      const Var out = micro_net_forward(tape, tape.leaf(inner_alpha), tape.leaf(inner_beta),
                                        tape.leaf(w), tape.leaf(bias), tape.leaf(outer_beta),
                                        tape.constant(x), mu_spec, s_spec);
      return tape.sum_all(tape.mul(out, tape.constant(wts))).value().item();
    };

    Tape tape;
    const Var via = tape.leaf(inner_alpha), vib = tape.leaf(inner_beta);
    const Var vw = tape.leaf(w), vbias = tape.leaf(bias), vob = tape.leaf(outer_beta);
    const Var out = micro_net_forward(tape, via, vib, vw, vbias, vob, tape.constant(x),
                                      mu_spec, s_spec);
    tape.backward(tape.sum_all(tape.mul(out, tape.constant(wts))));
    track(mnn_w, vec_rel_err(tape.grad(vw), fd_grad(w, loss)));
    track(mnn_bias, vec_rel_err(tape.grad(vbias), fd_grad(bias, loss)));
    track(mnn_inner, vec_rel_err(tape.grad(via), fd_grad(inner_alpha, loss)));
    track(mnn_outer, vec_rel_err(tape.grad(vob), fd_grad(outer_beta, loss)));
  }

  for (int cfg = 0; cfg < configs_per_layer; ++cfg) {
    const std::int64_t n = 8 + static_cast<std::int64_t>(rng.below(5));
    const std::vector<Interval> intervals = {{0.0, static_cast<double>(n) / 3.0},
                                             {static_cast<double>(n) / 3.0,
                                              2.0 * static_cast<double>(n) / 3.0},
                                             {2.0 * static_cast<double>(n) / 3.0,
                                              static_cast<double>(n)}};
    const Tensor x = random_uniform(rng, {n}, 0.0, 2.0);
    Tensor beta = Tensor::scalar(rng.uniform(-1.5, 1.5));
    const Tensor w = random_normal(rng, {3}, 0.0, 1.0);

    const auto loss = [&]() {
      Tape tape;
      const Var out = adaptive_pool_forward(tape, tape.constant(x), tape.leaf(beta),
                                            intervals, n);
      return tape.sum_all(tape.mul(out, tape.constant(w))).value().item();
    };

    Tape tape;
    const Var vbeta = tape.leaf(beta);
    const Var out = adaptive_pool_forward(tape, tape.constant(x), vbeta, intervals, n);
    tape.backward(tape.sum_all(tape.mul(out, tape.constant(w))));
    track(pool_beta, vec_rel_err(tape.grad(vbeta), fd_grad(beta, loss)));
  }

  for (int cfg = 0; cfg < configs_per_layer; ++cfg) {
    const std::int64_t n = 12, k = 3, s = 3;
    const std::int64_t l = 1 + static_cast<std::int64_t>(rng.below(2));
    const double lo = 0.25, hi = 2.0 * static_cast<double>(k);
    const double a = static_cast<double>((l - 1) * s);

    // Stay away from the window-edge ties where the entries have kinks:
    // every moving boundary a + j p/K must clear the integer grid.
    Tensor lambda;
    for (int attempt = 0;; ++attempt) {
      lambda = Tensor::scalar(rng.normal(0.0, 1.0));
      const double p = lo + (hi - lo) / (1.0 + std::exp(-lambda.item()));
      bool safe = true;
      for (std::int64_t j = 1; j <= k; ++j) {
        const double edge = a + static_cast<double>(j) * p / static_cast<double>(k);
        safe = safe && std::abs(edge - std::round(edge)) > 1e-3;
      }
      if (safe) break;
      if (attempt > 100) throw ParamError("could not sample a kink-free amplitude");
    }
    const Tensor x = random_uniform(rng, {n}, 0.0, 1.0);
    const Tensor w = random_normal(rng, {k}, 0.0, 1.0);

    const auto loss = [&]() {
      Tape tape;
      const Var p = bounded_amplitude(tape, tape.leaf(lambda), lo, hi);
      const Var out = adaptive_conv_forward(tape, n, k, s, l, p, tape.constant(x));
      return tape.sum_all(tape.mul(out, tape.constant(w))).value().item();
    };

    Tape tape;
    const Var vlambda = tape.leaf(lambda);
    const Var p = bounded_amplitude(tape, vlambda, lo, hi);
    const Var out = adaptive_conv_forward(tape, n, k, s, l, p, tape.constant(x));
    tape.backward(tape.sum_all(tape.mul(out, tape.constant(w))));
    track(conv_amp, vec_rel_err(tape.grad(vlambda), fd_grad(lambda, loss)));
  }

  const auto report = [](const char* name, const Worst& w) {
    return result(std::string("gradients: ") + name, w.err < 1e-5,
                  std::to_string(w.configs) + " configs, max rel err " + fmt(w.err));
  };
  return {report("embedding location logits", el_alpha),
          report("embedding scale logits", el_beta),
          report("micro-net linear map", mnn_w),
          report("micro-net bias", mnn_bias),
          report("micro-net inner logits", mnn_inner),
          report("micro-net outer scale logits", mnn_outer),
          report("pooling temperature", pool_beta),
          report("window amplitude", conv_amp)};
}

std::vector<CheckResult> check_param_counts() {
  struct Row {
    ModelKind kind;
    std::int64_t n, c, b, b0, expected;
  };
  const std::vector<Row> rows = {
      {ModelKind::kFc0, 28, 1, 0, 0, 7850},
      {ModelKind::kFc50, 28, 1, 0, 0, 39760},
      {ModelKind::kLogisticEl, 28, 1, 3, 0, 136},
      {ModelKind::kLogisticEl, 28, 1, 5, 0, 360},
      {ModelKind::kLogisticEl, 28, 1, 8, 0, 906},
      {ModelKind::kLogisticEl, 28, 1, 15, 0, 3160},
      {ModelKind::kLogisticElMnn, 28, 1, 6, 3, 1198},
      {ModelKind::kLogisticElMnn, 28, 1, 8, 4, 3018},
      {ModelKind::kLogisticElMnn, 28, 1, 10, 5, 6510},
      {ModelKind::kFc0, 32, 3, 0, 0, 30730},
      {ModelKind::kFc50, 32, 3, 0, 0, 154160},
      {ModelKind::kLogisticEl, 32, 3, 3, 0, 388},
      {ModelKind::kLogisticEl, 32, 3, 5, 0, 1060},
      {ModelKind::kLogisticEl, 32, 3, 8, 0, 2698},
      {ModelKind::kLogisticEl, 32, 3, 15, 0, 9460},
      {ModelKind::kLogisticElMnn, 32, 3, 6, 3, 7462},
      {ModelKind::kLogisticElMnn, 32, 3, 8, 4, 21322},
      {ModelKind::kLogisticElMnn, 32, 3, 10, 5, 49510},
  };

  bool ok = true;
  std::string mismatches;
  for (const Row& row : rows) {
    const Model model(preset(row.kind, row.n, row.c, row.b, row.b0));
    const std::int64_t got = model.param_count();
    if (got != row.expected) {
      ok = false;
      mismatches += " " + model_kind_name(row.kind) + "[n=" + std::to_string(row.n) +
                    ",B=" + std::to_string(row.b) + "]: " + std::to_string(got) + " != " +
                    std::to_string(row.expected);
    }
  }
  return {result("parameter counts: all published rows",
                 ok, ok ? std::to_string(rows.size()) + " rows" : mismatches)};
}

std::vector<CheckResult> check_determinism() {
  const fs::path dir =
      fs::temp_directory_path() / ("del-selfcheck-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);

  const std::int64_t n = 8, count = 32;
  Rng rng(99);
  Dataset train;
  train.images = random_uniform(rng, {count, 1, n, n}, 0.0, 1.0);
  for (std::int64_t i = 0; i < count; ++i)
    train.labels.push_back(static_cast<int>(rng.below(10)));
  Dataset test = train;
  test.split = Split::kTest;

  ModelConfig cfg = preset(ModelKind::kLogisticEl, n, 1, 3, 0);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.seed = 5;

  const auto run = [&](const fs::path& sub) {
    fs::create_directories(sub);
    Model model(cfg);
    init_params(model, tc.seed);
    const RunRecord rec = fit(model, train, test, tc);
    write_runrecords_jsonl(sub / "runrecord.jsonl", {rec});
    write_summary_json(sub / "summary.json", {rec});
    save_checkpoint(sub / "model.ckpt", model, tc.seed);
    write_pgm(sub / "field.pgm", receptive_field_image(model));
  };
  run(dir / "a");
  run(dir / "b");

  std::vector<CheckResult> out;
  const auto compare = [&](const char* what, const char* file) {
    const bool same = file_bytes(dir / "a" / file) == file_bytes(dir / "b" / file);
    out.push_back(result(std::string("determinism: identical ") + what, same,
                         same ? "" : std::string(file) + " differs between reruns"));
  };
  compare("run records", "runrecord.jsonl");
  compare("summaries", "summary.json");
  compare("checkpoints", "model.ckpt");
  compare("rendered fields", "field.pgm");

  fs::remove_all(dir);
  return out;
}

std::vector<CheckResult> run_selfchecks() {
  std::vector<CheckResult> all;
  const auto take = [&all](std::vector<CheckResult> batch) {
    for (auto& r : batch) all.push_back(std::move(r));
  };
  take(check_squash_values());
  take(check_recovery());
  take(check_pooling_limits());
  take(check_builder_equivalence(11));
  take(check_oracle_equivalence(20, 22));
  take(check_gradients(3, 33));
  take(check_param_counts());
  take(check_determinism());
  return all;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return true;
}

}  // namespace del
