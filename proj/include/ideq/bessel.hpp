#pragma once

namespace ideq {

// B(t) = I1(t) / I0(t) for t >= 0, accurate to ~1e-13 relative and free of
// overflow for any finite t. Throws DomainError for negative or NaN input.
double bessel_ratio(double t);

// log I0(t) for t >= 0 without forming I0 (which overflows past t ~ 713).
double log_bessel_i0(double t);

// Below this argument both functions sum the power series; above it they use
// the exponentially scaled large-argument expansion.
inline constexpr double kBesselSeriesCutoff = 15.0;

}  // namespace ideq
