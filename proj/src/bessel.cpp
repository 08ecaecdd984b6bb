#include "ideq/bessel.hpp"

#include "ideq/grid.hpp"

#include <cmath>
#include <numbers>

namespace ideq {
namespace {

struct SeriesPair {
  double i0;
  double i1;
};

// I0(t) = sum q^k / (k!)^2,  I1(t) = (t/2) sum q^k / (k! (k+1)!),  q = t^2/4.
SeriesPair power_series(double t) {
  const double q = 0.25 * t * t;
  double term0 = 1.0;
  double term1 = 1.0;
  double s0 = 1.0;
  double s1 = 1.0;
  for (int k = 1; k < 200; ++k) {
    term0 *= q / (static_cast<double>(k) * k);
    term1 *= q / (static_cast<double>(k) * (k + 1));
    s0 += term0;
    s1 += term1;
    if (term0 < 1e-18 * s0 && term1 < 1e-18 * s1) break;
  }
  return {s0, 0.5 * t * s1};
}

// sqrt(2 pi t) e^{-t} I_nu(t) ~ sum_k (-1)^k prod_{j=1..k} (4nu^2 - (2j-1)^2) / (k! (8t)^k).
// Summation stops at the smallest term, where the truncation error of the
// divergent series is ~e^{-2t}.
double scaled_asymptotic(int nu, double t) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 400; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (k * 8.0 * t);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

void check_argument(double t, const char* where) {
  if (!(t >= 0.0)) {
    throw DomainError(std::string(where) + ": argument must be >= 0");
  }
}

}  // namespace

double bessel_ratio(double t) {
  check_argument(t, "bessel_ratio");
  if (t == 0.0) return 0.0;
  if (std::isinf(t)) return 1.0;
  if (t < kBesselSeriesCutoff) {
    const auto s = power_series(t);
    return s.i1 / s.i0;
  }
  return scaled_asymptotic(1, t) / scaled_asymptotic(0, t);
}

double log_bessel_i0(double t) {
  check_argument(t, "log_bessel_i0");
  if (t < kBesselSeriesCutoff) {
    return std::log(power_series(t).i0);
  }
  return t - 0.5 * std::log(2.0 * std::numbers::pi * t) + std::log(scaled_asymptotic(0, t));
}

}  // namespace ideq
