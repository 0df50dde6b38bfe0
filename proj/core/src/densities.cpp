#include "del/densities.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace del {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double logistic_cdf(double t, double mu, double s) {
  if (!(s > 0.0)) throw ParamError("logistic scale must be positive, got " + std::to_string(s));
  return sigmoid((t - mu) / s);
}

LogisticDensity::LogisticDensity(double mu, double s) : mu(mu), s(s) {
  if (!(s > 0.0)) throw ParamError("logistic scale must be positive, got " + std::to_string(s));
}

PiecewiseConstantDensity::PiecewiseConstantDensity(double a, double b, bool normalized)
    : a(a), b(b), normalized(normalized) {
  if (!(a < b))
    throw ParamError("piecewise-constant interval needs a < b, got [" + std::to_string(a) +
                     ", " + std::to_string(b) + "]");
}

double interval_mass(const Density& d, double a, double b) {
  if (a > b)
    throw ParamError("interval_mass needs a <= b, got [" + std::to_string(a) + ", " +
                     std::to_string(b) + "]");
  if (const auto* l = std::get_if<LogisticDensity>(&d)) return l->cdf(b) - l->cdf(a);
  const auto& pc = std::get<PiecewiseConstantDensity>(d);
  const double overlap = std::max(0.0, std::min(pc.b, b) - std::max(pc.a, a));
  return overlap * pc.height();
}

double squash(double z, const SquashSpec& spec) { return spec.q + spec.n * sigmoid(spec.p * z); }

}  // namespace del
