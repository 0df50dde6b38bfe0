#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "del/autodiff.hpp"
#include "del/densities.hpp"
#include "del/gamma.hpp"
#include "del/rng.hpp"
#include "del/tensor.hpp"
#include "support/gradcheck.hpp"

using del::adaptive_conv_gamma;
using del::adaptive_pool_gamma;
using del::build_gamma_1d;
using del::build_gamma_2d_separable;
using del::build_gamma_numeric;
using del::conv_gamma;
using del::Density;
using del::GammaOperator;
using del::Interval;
using del::interval_overlap_mask;
using del::logistic_cdf;
using del::LogisticDensity;
using del::ParamError;
using del::PiecewiseConstantDensity;
using del::Provenance;
using del::QuadratureError;
using del::Tape;
using del::Tensor;
using del::TensorError;
using del::Var;

namespace {

std::vector<Density> unit_cells(std::int64_t count) {
  std::vector<Density> out;
  for (std::int64_t i = 0; i < count; ++i)
    out.emplace_back(PiecewiseConstantDensity(static_cast<double>(i),
                                              static_cast<double>(i + 1)));
  return out;
}

}  // namespace

TEST(BuildGamma1d, UnitCellIndicatorsGiveIdentity) {
  const std::vector<Density> cells = unit_cells(3);
  const GammaOperator g = build_gamma_1d(cells, 3);
  EXPECT_EQ(g.order, 2);
  ASSERT_EQ(g.entries.dim(0), 3);
  ASSERT_EQ(g.entries.dim(1), 3);
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < 3; ++n) EXPECT_EQ(g.entries.at(i, n), i == n ? 1.0 : 0.0);
}

TEST(BuildGamma1d, EntriesAreCdfDifferences) {
  const std::vector<Density> d{LogisticDensity(14.0, 15.0)};
  const GammaOperator g = build_gamma_1d(d, 28);
  double row_sum = 0.0;
  for (int n = 0; n < 28; ++n) {
    const double want = logistic_cdf(n + 1.0, 14.0, 15.0) - logistic_cdf(n + 0.0, 14.0, 15.0);
    EXPECT_NEAR(g.entries.at(0, n), want, 1e-15);
    row_sum += g.entries.at(0, n);
  }
  // CDF differences telescope to F(N) - F(0).
  EXPECT_NEAR(row_sum, logistic_cdf(28.0, 14.0, 15.0) - logistic_cdf(0.0, 14.0, 15.0), 1e-12);
}

TEST(BuildGamma1d, SingleCellKnownMass) {
  const std::vector<Density> d{LogisticDensity(0.5, 0.25)};
  const GammaOperator g = build_gamma_1d(d, 1);
  EXPECT_NEAR(g.entries.at(0, 0), 0.761594, 1e-6);
}

TEST(BuildGamma1d, EntriesNonNegative) {
  const std::vector<Density> d{LogisticDensity(5.0, 2.0), LogisticDensity(-3.0, 0.5),
                               PiecewiseConstantDensity(1.5, 6.25)};
  const GammaOperator g = build_gamma_1d(d, 12);
  for (std::int64_t i = 0; i < g.entries.size(); ++i) EXPECT_GE(g.entries[i], 0.0);
}

TEST(BuildGamma1d, Validation) {
  EXPECT_THROW(build_gamma_1d(std::vector<Density>{}, 3), ParamError);
  EXPECT_THROW(build_gamma_1d(unit_cells(2), 0), ParamError);
}

TEST(BuildGamma2d, FactorsIntoAxisProducts) {
  const std::int64_t b = 2, n = 5;
  std::vector<Density> f, g;
  del::Rng rng(3);
  for (std::int64_t i = 0; i < b * b; ++i) {
    f.emplace_back(LogisticDensity(rng.uniform(0.0, 5.0), rng.uniform(0.3, 2.0)));
    g.emplace_back(LogisticDensity(rng.uniform(0.0, 5.0), rng.uniform(0.3, 2.0)));
  }
  const GammaOperator g2 = build_gamma_2d_separable(f, g, b, n);
  EXPECT_EQ(g2.order, 4);
  const GammaOperator gf = build_gamma_1d(f, n);
  const GammaOperator gg = build_gamma_1d(g, n);
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < b; ++j)
      for (std::int64_t m = 0; m < n; ++m)
        for (std::int64_t nn = 0; nn < n; ++nn)
          EXPECT_DOUBLE_EQ(g2.entries.at(i, j, m, nn),
                           gg.entries.at(i * b + j, m) * gf.entries.at(i * b + j, nn));
}

TEST(BuildGamma2d, OneHotCellSelectsOnePixel) {
  // One unit with both axis densities on cell 1: picks x[1][1].
  const std::vector<Density> f{PiecewiseConstantDensity(1.0, 2.0)};
  const std::vector<Density> g{PiecewiseConstantDensity(1.0, 2.0)};
  const GammaOperator g2 = build_gamma_2d_separable(f, g, 1, 3);
  for (std::int64_t m = 0; m < 3; ++m)
    for (std::int64_t n = 0; n < 3; ++n)
      EXPECT_EQ(g2.entries.at(0, 0, m, n), (m == 1 && n == 1) ? 1.0 : 0.0);
}

TEST(BuildGamma2d, RejectsWrongGridSize) {
  EXPECT_THROW(build_gamma_2d_separable(unit_cells(3), unit_cells(3), 2, 4), ParamError);
  EXPECT_THROW(build_gamma_2d_separable(unit_cells(4), unit_cells(3), 2, 4), ParamError);
}

TEST(ConvGamma, RowsSelectStridedCells) {
  const GammaOperator l1 = conv_gamma(4, 2, 2, 1);
  ASSERT_EQ(l1.entries.dim(0), 2);
  ASSERT_EQ(l1.entries.dim(1), 4);
  EXPECT_EQ(l1.provenance, Provenance::kFixed);
  for (int i = 0; i < 2; ++i)
    for (int n = 0; n < 4; ++n) EXPECT_EQ(l1.entries.at(i, n), n == i ? 1.0 : 0.0);
  const GammaOperator l2 = conv_gamma(4, 2, 2, 2);
  for (int i = 0; i < 2; ++i)
    for (int n = 0; n < 4; ++n) EXPECT_EQ(l2.entries.at(i, n), n == 2 + i ? 1.0 : 0.0);
}

TEST(ConvGamma, EachRowHasExactlyOneActiveCell) {
  const GammaOperator g = conv_gamma(12, 3, 2, 4);
  for (int i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (int n = 0; n < 12; ++n) {
      EXPECT_TRUE(g.entries.at(i, n) == 0.0 || g.entries.at(i, n) == 1.0);
      sum += g.entries.at(i, n);
    }
    EXPECT_EQ(sum, 1.0);
  }
}

TEST(ConvGamma, RejectsKernelOverrun) {
  EXPECT_THROW(conv_gamma(4, 2, 2, 3), ParamError);
  EXPECT_THROW(conv_gamma(4, 5, 1, 1), ParamError);
}

TEST(AdaptiveConvGamma, FullAmplitudeRecoversPlainConvolution) {
  for (std::int64_t l = 1; l <= 5; ++l) {
    const GammaOperator plain = conv_gamma(12, 3, 2, l);
    const GammaOperator adaptive = adaptive_conv_gamma(12, 3, 2, l, 3.0);
    for (std::int64_t i = 0; i < plain.entries.size(); ++i)
      EXPECT_EQ(adaptive.entries[i], plain.entries[i]);
  }
}

TEST(AdaptiveConvGamma, HalfAmplitudeSplitsFirstCell) {
  // K=2, S=1, l=1, p=1: kernel intervals [0, 0.5] and [0.5, 1].
  const GammaOperator g = adaptive_conv_gamma(4, 2, 1, 1, 1.0);
  EXPECT_DOUBLE_EQ(g.entries.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g.entries.at(1, 0), 0.5);
  for (int i = 0; i < 2; ++i)
    for (int n = 1; n < 4; ++n) EXPECT_DOUBLE_EQ(g.entries.at(i, n), 0.0);
}

TEST(AdaptiveConvGamma, RowSumsEqualAmplitudeOverK) {
  for (double p : {0.4, 1.0, 2.3, 3.0, 5.5}) {
    const GammaOperator g = adaptive_conv_gamma(16, 3, 2, 2, p);
    for (int i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (int n = 0; n < 16; ++n) sum += g.entries.at(i, n);
      EXPECT_NEAR(sum, p / 3.0, 1e-12);
    }
    const GammaOperator norm = adaptive_conv_gamma(16, 3, 2, 2, p, true);
    for (int i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (int n = 0; n < 16; ++n) sum += norm.entries.at(i, n);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(AdaptiveConvGamma, RejectsNonPositiveAmplitude) {
  EXPECT_THROW(adaptive_conv_gamma(8, 2, 1, 1, 0.0), ParamError);
  EXPECT_THROW(adaptive_conv_gamma(8, 2, 1, 1, -1.0), ParamError);
}

TEST(IntervalOverlapMask, FractionalOverlaps) {
  const std::vector<Interval> intervals{{0.5, 2.5}, {2.0, 4.0}};
  const Tensor m = interval_overlap_mask(intervals, 4);
  ASSERT_EQ(m.dim(0), 2);
  ASSERT_EQ(m.dim(1), 4);
  EXPECT_DOUBLE_EQ(m.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m.at(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.at(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(m.at(0, 3), 0.0);
  EXPECT_DOUBLE_EQ(m.at(1, 2), 1.0);
  EXPECT_DOUBLE_EQ(m.at(1, 3), 1.0);
}

TEST(IntervalOverlapMask, RejectsZeroMeasureInterval) {
  const std::vector<Interval> bad{{1.0, 1.0}};
  EXPECT_THROW(interval_overlap_mask(bad, 4), ParamError);
}

TEST(AdaptivePoolGamma, ZeroTemperatureAverages) {
  const Tensor x({2}, {0.0, 1.0});
  const std::vector<Interval> j{{0.0, 2.0}};
  const GammaOperator g = adaptive_pool_gamma(x, 0.0, j, 2);
  EXPECT_EQ(g.provenance, Provenance::kInputDependent);
  EXPECT_DOUBLE_EQ(g.entries.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g.entries.at(0, 1), 0.5);
}

TEST(AdaptivePoolGamma, LogThreeTemperatureWeights) {
  const Tensor x({2}, {0.0, 1.0});
  const std::vector<Interval> j{{0.0, 2.0}};
  const GammaOperator g = adaptive_pool_gamma(x, std::log(3.0), j, 2);
  EXPECT_NEAR(g.entries.at(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(g.entries.at(0, 1), 0.75, 1e-12);
}

TEST(AdaptivePoolGamma, LargeTemperatureSelectsMax) {
  const Tensor x({2}, {1.0, 3.0});
  const std::vector<Interval> j{{0.0, 2.0}};
  const GammaOperator g = adaptive_pool_gamma(x, 50.0, j, 2);
  double pooled = 0.0;
  for (int n = 0; n < 2; ++n) pooled += g.entries.at(0, n) * x[n];
  EXPECT_NEAR(pooled, 3.0, 1e-8);
  const GammaOperator gmin = adaptive_pool_gamma(x, -50.0, j, 2);
  pooled = 0.0;
  for (int n = 0; n < 2; ++n) pooled += gmin.entries.at(0, n) * x[n];
  EXPECT_NEAR(pooled, 1.0, 1e-8);
}

TEST(AdaptivePoolGamma, RowsAreProbabilityVectors) {
  del::Rng rng(7);
  Tensor x({8});
  for (std::int64_t i = 0; i < 8; ++i) x[i] = rng.uniform(-2.0, 2.0);
  const std::vector<Interval> j{{0.0, 3.5}, {2.5, 8.0}};
  for (double beta : {-10.0, -1.0, 0.0, 2.0, 25.0}) {
    const GammaOperator g = adaptive_pool_gamma(x, beta, j, 8);
    for (int i = 0; i < 2; ++i) {
      double sum = 0.0;
      for (int n = 0; n < 8; ++n) {
        EXPECT_GE(g.entries.at(i, n), 0.0);
        sum += g.entries.at(i, n);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(AdaptivePoolGamma, OutputMonotoneInTemperature) {
  const Tensor x({4}, {0.5, 2.0, -1.0, 1.25});
  const std::vector<Interval> j{{0.0, 4.0}};
  double prev = -1e300;
  for (double beta : {0.0, 5.0, 10.0, 50.0}) {
    const GammaOperator g = adaptive_pool_gamma(x, beta, j, 4);
    double pooled = 0.0;
    for (int n = 0; n < 4; ++n) pooled += g.entries.at(0, n) * x[n];
    EXPECT_GE(pooled, prev);
    EXPECT_LE(pooled, 2.0 + 1e-12);
    prev = pooled;
  }
  prev = 1e300;
  for (double beta : {0.0, -5.0, -10.0, -50.0}) {
    const GammaOperator g = adaptive_pool_gamma(x, beta, j, 4);
    double pooled = 0.0;
    for (int n = 0; n < 4; ++n) pooled += g.entries.at(0, n) * x[n];
    EXPECT_LE(pooled, prev);
    EXPECT_GE(pooled, -1.0 - 1e-12);
    prev = pooled;
  }
}

TEST(AdaptivePoolGamma, RejectsZeroMeasureInterval) {
  const Tensor x({4});
  const std::vector<Interval> bad{{2.0, 2.0}};
  EXPECT_THROW(adaptive_pool_gamma(x, 0.0, bad, 4), ParamError);
}

TEST(BuildGammaNumeric, CompactBumpLandsInTheMiddleCell) {
  // Raised cosine supported on [1, 2], total mass 1/2, zero elsewhere. The
  // C1 joins at the cell boundaries keep the bisection convergent.
  const auto pdf = [](double t) {
    if (t < 1.0 || t > 2.0) return 0.0;
    return (1.0 - std::cos(2.0 * std::numbers::pi * (t - 1.0))) / 2.0;
  };
  const GammaOperator g = build_gamma_numeric(pdf, 3, 1e-10);
  EXPECT_NEAR(g.entries.at(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(g.entries.at(0, 1), 0.5, 1e-9);
  EXPECT_NEAR(g.entries.at(0, 2), 0.0, 1e-12);
}

TEST(BuildGammaNumeric, MatchesLogisticClosedForm) {
  const auto pdf = [](double t) {
    const double sech = 1.0 / std::cosh((t - 0.5) / (2.0 * 0.25));
    return sech * sech / (4.0 * 0.25);
  };
  const GammaOperator g = build_gamma_numeric(pdf, 1, 1e-10);
  const double want = logistic_cdf(1.0, 0.5, 0.25) - logistic_cdf(0.0, 0.5, 0.25);
  EXPECT_NEAR(g.entries.at(0, 0), want, 1e-8);
}

TEST(BuildGammaNumeric, TriangularHandIntegral) {
  // pdf(t) = t/2 on [0, 2]: cell masses 1/4 and 3/4.
  const auto pdf = [](double t) { return (t >= 0.0 && t <= 2.0) ? t / 2.0 : 0.0; };
  const GammaOperator g = build_gamma_numeric(pdf, 2, 1e-10);
  EXPECT_NEAR(g.entries.at(0, 0), 0.25, 1e-9);
  EXPECT_NEAR(g.entries.at(0, 1), 0.75, 1e-9);
}

TEST(BuildGammaNumeric, ReportsAchievedToleranceOnFailure) {
  const auto wild = [](double t) { return 1.0 + std::sin(40.0 * t); };
  try {
    build_gamma_numeric(wild, 2, 1e-15, 3);
    FAIL() << "expected QuadratureError";
  } catch (const QuadratureError& e) {
    EXPECT_GT(e.achieved_tolerance, 1e-15);
  }
}

TEST(TapedBuilders, LogisticRowsMatchPlainBuilder) {
  del::Rng rng(5);
  const std::int64_t r = 4, n = 9;
  Tensor alpha({r}), beta({r});
  for (std::int64_t i = 0; i < r; ++i) {
    alpha[i] = rng.normal(0.0, 0.4);
    beta[i] = rng.normal(-3.0, 0.3);
  }
  const del::SquashSpec mu = del::SquashSpec::appendix_mu(static_cast<double>(n));
  const del::SquashSpec s = del::SquashSpec::appendix_s(static_cast<double>(n));
  Tape tape;
  const Var rows = del::logistic_gamma_rows(tape, tape.leaf(alpha), tape.leaf(beta), mu, s, n);
  std::vector<Density> densities;
  for (std::int64_t i = 0; i < r; ++i)
    densities.emplace_back(LogisticDensity(del::squash(alpha[i], mu), del::squash(beta[i], s)));
  const GammaOperator plain = build_gamma_1d(densities, n);
  for (std::int64_t i = 0; i < plain.entries.size(); ++i)
    EXPECT_NEAR(rows.value()[i], plain.entries[i], 1e-12);
}

TEST(TapedBuilders, AdaptiveConvMatchesPlainBuilder) {
  for (const bool normalize : {false, true}) {
    Tape tape;
    const Var p = tape.leaf(Tensor::scalar(1.7));
    const Var rows = adaptive_conv_gamma(tape, 12, 3, 2, 2, p, normalize);
    const GammaOperator plain = adaptive_conv_gamma(12, 3, 2, 2, 1.7, normalize);
    for (std::int64_t i = 0; i < plain.entries.size(); ++i)
      EXPECT_NEAR(rows.value()[i], plain.entries[i], 1e-12);
  }
}

TEST(TapedBuilders, AdaptivePoolMatchesPlainBuilder) {
  Tensor x({6}, {0.2, -0.5, 1.0, 0.7, -1.2, 0.4});
  const std::vector<Interval> j{{0.0, 2.5}, {2.5, 6.0}};
  Tape tape;
  const Var rows = adaptive_pool_gamma(tape, tape.leaf(x), tape.leaf(Tensor::scalar(0.8)), j, 6);
  const GammaOperator plain = adaptive_pool_gamma(x, 0.8, j, 6);
  for (std::int64_t i = 0; i < plain.entries.size(); ++i)
    EXPECT_NEAR(rows.value()[i], plain.entries[i], 1e-12);
}

TEST(TapedBuilders, PoolTemperatureGradient) {
  // Loss is the pooled value itself, so the rows' unit-sum normalization
  // cannot mask a wrong derivative the way a constant weight vector would.
  Tensor x({5}, {0.3, 1.4, -0.6, 0.9, 0.1});
  const std::vector<Interval> j{{1.5, 4.0}};
  const auto loss = [&](Tape& t, Var b) {
    const Var rows = adaptive_pool_gamma(t, t.constant(x), b, j, 5);
    return t.sum_all(t.mul(rows, t.constant(x.reshaped({1, 5}))));
  };

  // At beta = 0 the derivative of the pooled value has a closed form: the
  // mass-weighted covariance sum_n m_n x_n (x_n - xbar) / sum_n m_n, with
  // m_n the overlap of cell n and the interval (here 0, 0.5, 1, 1, 0).
  const std::vector<double> mass{0.0, 0.5, 1.0, 1.0, 0.0};
  double total = 0.0, mean = 0.0;
  for (std::size_t n = 0; n < mass.size(); ++n) {
    total += mass[n];
    mean += mass[n] * x[static_cast<std::int64_t>(n)];
  }
  mean /= total;
  double covariance = 0.0;
  for (std::size_t n = 0; n < mass.size(); ++n) {
    const double v = x[static_cast<std::int64_t>(n)];
    covariance += mass[n] * v * (v - mean);
  }
  covariance /= total;
  Tape tape0;
  const Var at_zero = tape0.leaf(Tensor::scalar(0.0));
  tape0.backward(loss(tape0, at_zero));
  EXPECT_NEAR(tape0.grad(at_zero).item(), covariance, 1e-9);

  Tensor beta = Tensor::scalar(0.6);
  Tape tape;
  const Var leaf = tape.leaf(beta);
  tape.backward(loss(tape, leaf));
  const Tensor analytic = tape.grad(leaf);
  const Tensor fd = testsupport::fd_gradient(beta, [&] {
    Tape t2;
    return loss(t2, t2.leaf(beta)).value().item();
  });
  EXPECT_LT(testsupport::gradient_relative_error(analytic, fd), 1e-5);
}

TEST(TapedBuilders, ConvAmplitudeGradientAwayFromKinks) {
  // p = 1.3 with K=2, S=1, l=1: kernel edges at 0.65 and 1.3, both far from
  // integers, so the rows are locally linear in p.
  Tensor p = Tensor::scalar(1.3);
  const auto loss = [&](Tape& t, Var v) {
    const Var rows = adaptive_conv_gamma(t, 8, 2, 1, 1, v);
    return t.sum_all(t.mul(rows, t.constant(Tensor::full({2, 8}, 0.9))));
  };
  Tape tape;
  const Var leaf = tape.leaf(p);
  tape.backward(loss(tape, leaf));
  const Tensor analytic = tape.grad(leaf);
  const Tensor fd = testsupport::fd_gradient(p, [&] {
    Tape t2;
    return loss(t2, t2.leaf(p)).value().item();
  });
  EXPECT_LT(testsupport::gradient_relative_error(analytic, fd), 1e-5);
}

TEST(TapedBuilders, PoolWithLearnableEndpointsMatchesFixedIntervals) {
  Tensor x({6}, {0.1, 0.9, -0.4, 1.3, 0.6, -0.2});
  const std::vector<Interval> j{{0.5, 3.0}, {3.0, 5.5}};
  Tensor lo({2}, {0.5, 3.0});
  Tensor hi({2}, {3.0, 5.5});
  Tape tape;
  const Var fixed = adaptive_pool_gamma(tape, tape.constant(x), tape.leaf(Tensor::scalar(1.1)),
                                        j, 6);
  const Var learned = adaptive_pool_gamma(tape, tape.constant(x),
                                          tape.leaf(Tensor::scalar(1.1)), tape.leaf(lo),
                                          tape.leaf(hi), 6);
  for (std::int64_t i = 0; i < fixed.value().size(); ++i)
    EXPECT_NEAR(learned.value()[i], fixed.value()[i], 1e-12);
}
