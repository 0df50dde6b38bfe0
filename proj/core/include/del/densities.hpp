#pragma once

#include <variant>

#include "del/common.hpp"

namespace del {

/// F(t; mu, s) = 1 / (1 + e^{-(t-mu)/s}). Throws ParamError if s <= 0.
double logistic_cdf(double t, double mu, double s);

/// Logistic distribution located at mu with scale s (s > 0). Immutable.
struct LogisticDensity {
  LogisticDensity(double mu, double s);

  double cdf(double t) const { return logistic_cdf(t, mu, s); }

  double mu;
  double s;
};

/// Constant on [a, b], zero outside. When normalized the plateau height is
/// 1/(b-a) so the total mass is 1; otherwise the height is 1 and the density
/// is a plain indicator with total mass b-a.
struct PiecewiseConstantDensity {
  PiecewiseConstantDensity(double a, double b, bool normalized = true);

  double height() const { return normalized ? 1.0 / (b - a) : 1.0; }

  double a;
  double b;
  bool normalized;
};

using Density = std::variant<LogisticDensity, PiecewiseConstantDensity>;

/// Mass of the density on [a, b]: CDF difference for the logistic,
/// overlap-length times height for the piecewise-constant family.
/// Requires a <= b.
double interval_mass(const Density& d, double a, double b);

/// Bounded reparameterization squash(z) = q + n / (1 + e^{-p z}), keeping a
/// location or scale inside (q, q + n) for the input domain [0, n].
struct SquashSpec {
  double p;  // logit gain; p = 0 freezes the output at q + n/2
  double q;  // lower bound offset
  double n;  // input-domain extent

  /// Location squash used for the reported results: gain 4, range (0, n).
  static SquashSpec appendix_mu(double n) { return {4.0, 0.0, n}; }
  /// Scale squash used for the reported results: s(z) = n * sigmoid(z).
  /// A zero gain here would freeze s at 1 + n/2, wash every density out to
  /// near-uniform, and leave the scale logits without a gradient; the live
  /// form is what the scale-logit init N(-3, 0.3) presupposes (s near 1.3
  /// pixels at the init mean for n = 28).
  static SquashSpec appendix_s(double n) { return {1.0, 0.0, n}; }
  /// Unit gain, no offset.
  static SquashSpec main_text(double n) { return {1.0, 0.0, n}; }
};

double squash(double z, const SquashSpec& spec);

}  // namespace del
