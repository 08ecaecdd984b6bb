#include "ideq/fidelity.hpp"

#include "ideq/bessel.hpp"
#include "ideq/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ideq {

Image DataFidelity::prox(const Image&, const Measurement&, double) const {
  throw UnsupportedOperation(name() + ": data fidelity has no closed-form prox");
}

ProxSensitivity DataFidelity::prox_sensitivity(const Image&, const Measurement&, double,
                                               const Image&) const {
  throw UnsupportedOperation(name() + ": data fidelity has no closed-form prox");
}

namespace {

void check_binary(const Mask& mask, const char* where) {
  if (mask.size() == 0 || !((mask == 0.0) || (mask == 1.0)).all()) {
    throw DomainError(std::string(where) + ": mask entries must be 0 or 1");
  }
}

void check_sigma(double sigma, bool strictly_positive, const char* where) {
  if (!(sigma >= 0.0) || (strictly_positive && sigma == 0.0) || !std::isfinite(sigma)) {
    throw DomainError(std::string(where) + ": invalid noise level");
  }
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("prox: tau must be positive");
}

template <typename T>
const T& measurement_as(const Measurement& y, const char* where) {
  const T* p = std::get_if<T>(&y);
  if (p == nullptr) throw ShapeMismatch(std::string(where) + ": wrong measurement kind");
  return *p;
}

}  // namespace

// ---------------------------------------------------------------- MRI

MaskedFourierModel::MaskedFourierModel(Mask mask, double noise_level)
    : mask_(std::move(mask)), sigma_(noise_level) {
  check_binary(mask_, "MaskedFourierModel");
  check_sigma(sigma_, false, "MaskedFourierModel");
  const Eigen::Index rows = mask_.rows();
  const Eigen::Index cols = mask_.cols();
  mask_avg_.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      mask_avg_(r, c) = 0.5 * (mask_(r, c) + mask_(conjugate_index(r, rows), conjugate_index(c, cols)));
    }
  }
}

const ComplexGrid& MaskedFourierModel::kspace(const Measurement& y, const Image& x) const {
  const auto& k = measurement_as<ComplexGrid>(y, "mri");
  require_same_shape(x, mask_, "mri: image vs mask");
  require_same_shape(k, mask_, "mri: data vs mask");
  return k;
}

ComplexGrid MaskedFourierModel::symmetrized_data(const ComplexGrid& y) const {
  const Eigen::Index rows = y.rows();
  const Eigen::Index cols = y.cols();
  ComplexGrid out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Eigen::Index rc = conjugate_index(r, rows);
      const Eigen::Index cc = conjugate_index(c, cols);
      out(r, c) = 0.5 * (mask_(r, c) * y(r, c) + mask_(rc, cc) * std::conj(y(rc, cc)));
    }
  }
  return out;
}

Measurement MaskedFourierModel::simulate(const Image& x_true, SeededRng& rng) const {
  require_same_shape(x_true, mask_, "mri::simulate");
  ComplexGrid k = dft2(x_true);
  if (sigma_ > 0.0) {
    // Complex circular noise with per-component variance sigma^2.
    const Image re = rng.gaussian_image(k.rows(), k.cols(), sigma_);
    const Image im = rng.gaussian_image(k.rows(), k.cols(), sigma_);
    k.real() += re;
    k.imag() += im;
  }
  return ComplexGrid(k * mask_.cast<std::complex<double>>());
}

double MaskedFourierModel::value(const Image& x, const Measurement& y) const {
  const auto& k = kspace(y, x);
  const ComplexGrid residual = dft2(x) * mask_.cast<std::complex<double>>() - k;
  return 0.5 * residual.abs2().sum();
}

Image MaskedFourierModel::gradient(const Image& x, const Measurement& y) const {
  const auto& k = kspace(y, x);
  const ComplexGrid masked = (dft2(x) - k) * mask_.cast<std::complex<double>>();
  return idft2(masked).real();
}

Image MaskedFourierModel::prox(const Image& x, const Measurement& y, double tau) const {
  check_tau(tau);
  const auto& k = kspace(y, x);
  const ComplexGrid num = tau * symmetrized_data(k) + dft2(x);
  const ComplexGrid den = (tau * mask_avg_ + 1.0).cast<std::complex<double>>();
  return idft2(num / den).real();
}

ProxSensitivity MaskedFourierModel::prox_sensitivity(const Image& x, const Measurement& y,
                                                     double tau, const Image& cotangent) const {
  check_tau(tau);
  const auto& k = kspace(y, x);
  require_same_shape(cotangent, x, "mri::prox_sensitivity");
  const ComplexGrid den = (tau * mask_avg_ + 1.0).cast<std::complex<double>>();
  // The input Jacobian F^H diag(1/den) F is self-adjoint on real images.
  ProxSensitivity out;
  out.input_adjoint = idft2(dft2(cotangent) / den).real();
  const ComplexGrid sym = symmetrized_data(k);
  const ComplexGrid p_hat = (tau * sym + dft2(x)) / den;
  const ComplexGrid dp_hat = (sym - mask_avg_.cast<std::complex<double>>() * p_hat) / den;
  out.tau_derivative = inner(idft2(dp_hat).real(), cotangent);
  return out;
}

Image MaskedFourierModel::initial_guess(const Measurement& y) const {
  const auto& k = measurement_as<ComplexGrid>(y, "mri");
  return idft2(k).real();
}

// ---------------------------------------------------------------- inpainting

InpaintingModel::InpaintingModel(Mask mask, double noise_level)
    : mask_(std::move(mask)), sigma_(noise_level) {
  check_binary(mask_, "InpaintingModel");
  check_sigma(sigma_, false, "InpaintingModel");
}

const Image& InpaintingModel::pixels(const Measurement& y, const Image& x) const {
  const auto& p = measurement_as<Image>(y, "inpainting");
  require_same_shape(x, mask_, "inpainting: image vs mask");
  require_same_shape(p, mask_, "inpainting: data vs mask");
  return p;
}

Measurement InpaintingModel::simulate(const Image& x_true, SeededRng& rng) const {
  require_same_shape(x_true, mask_, "inpainting::simulate");
  Image y = x_true;
  if (sigma_ > 0.0) y += rng.gaussian_image(y.rows(), y.cols(), sigma_);
  return Image(mask_ * y);
}

double InpaintingModel::value(const Image& x, const Measurement& y) const {
  const auto& p = pixels(y, x);
  return 0.5 * (mask_ * x - p).square().sum();
}

Image InpaintingModel::gradient(const Image& x, const Measurement& y) const {
  const auto& p = pixels(y, x);
  return mask_ * (mask_ * x - p);
}

Image InpaintingModel::prox(const Image& x, const Measurement& y, double tau) const {
  check_tau(tau);
  const auto& p = pixels(y, x);
  return (tau * mask_ * p + x) / (tau * mask_ + 1.0);
}

ProxSensitivity InpaintingModel::prox_sensitivity(const Image& x, const Measurement& y, double tau,
                                                  const Image& cotangent) const {
  check_tau(tau);
  const auto& p = pixels(y, x);
  require_same_shape(cotangent, x, "inpainting::prox_sensitivity");
  const Image den = tau * mask_ + 1.0;
  const Image out = (tau * mask_ * p + x) / den;
  ProxSensitivity s;
  s.input_adjoint = cotangent / den;
  s.tau_derivative = inner(mask_ * (p - out) / den, cotangent);
  return s;
}

Image InpaintingModel::initial_guess(const Measurement& y) const {
  return measurement_as<Image>(y, "inpainting");
}

// ---------------------------------------------------------------- Rician

RicianModel::RicianModel(double noise_level) : sigma_(noise_level) {
  check_sigma(sigma_, true, "RicianModel");
}

const Image& RicianModel::magnitudes(const Measurement& y, const Image& x) const {
  const auto& m = measurement_as<Image>(y, "rician");
  require_same_shape(x, m, "rician");
  return m;
}

Measurement RicianModel::simulate(const Image& x_true, SeededRng& rng) const {
  const Image n_real = rng.gaussian_image(x_true.rows(), x_true.cols(), sigma_);
  const Image n_imag = rng.gaussian_image(x_true.rows(), x_true.cols(), sigma_);
  return Image(((x_true + n_real).square() + n_imag.square()).sqrt());
}

double RicianModel::value(const Image& x, const Measurement& y) const {
  const auto& m = magnitudes(y, x);
  const double inv_var = 1.0 / (sigma_ * sigma_);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double t = std::abs(x(i) * m(i) * inv_var);
    total += 0.5 * x(i) * x(i) * inv_var - log_bessel_i0(t);
  }
  return total;
}

Image RicianModel::gradient(const Image& x, const Measurement& y) const {
  const auto& m = magnitudes(y, x);
  const double inv_var = 1.0 / (sigma_ * sigma_);
  Image g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double t = x(i) * m(i) * inv_var;
    const double ratio = std::copysign(bessel_ratio(std::abs(t)), t);
    g(i) = x(i) * inv_var - m(i) * inv_var * ratio;
  }
  return g;
}

Image RicianModel::initial_guess(const Measurement& y) const { return measurement_as<Image>(y, "rician"); }

// ---------------------------------------------------------------- masks

namespace {

Mask random_pixel_mask(const RandomPixelMask& spec, Eigen::Index rows, Eigen::Index cols,
                       SeededRng& rng) {
  const double p = spec.keep_probability;
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("generate_mask: keep probability must be in (0,1]");
  Mask m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform() < p ? 1.0 : 0.0;
  }
  return m;
}

Mask cartesian_mask(const CartesianLineMask& spec, Eigen::Index rows, Eigen::Index cols) {
  if (!(spec.acceleration >= 1.0) || !std::isfinite(spec.acceleration)) {
    throw DomainError("generate_mask: acceleration must be >= 1");
  }
  const long width = static_cast<long>(cols);
  long band = spec.center_band > 0 ? spec.center_band : std::max<long>(4, width / 32);
  band = std::min(band, width);
  const long total = std::clamp<long>(std::lround(width / spec.acceleration), band, width);

  // Columns ordered by signed frequency -W/2 .. W/2-1.
  std::vector<long> by_frequency;
  for (long f = -width / 2; f < width - width / 2; ++f) by_frequency.push_back(f);
  const long band_lo = -band / 2;
  const long band_hi = band_lo + band;  // exclusive
  std::vector<long> kept;
  std::vector<long> remaining;
  for (long f : by_frequency) {
    (f >= band_lo && f < band_hi ? kept : remaining).push_back(f);
  }
  const long extra = total - band;
  const long n_rem = static_cast<long>(remaining.size());
  for (long i = 0; i < extra; ++i) {
    kept.push_back(remaining[static_cast<std::size_t>(((2 * i + 1) * n_rem) / (2 * extra))]);
  }
  Mask m = Mask::Zero(rows, cols);
  for (long f : kept) {
    m.col(((f % width) + width) % width).setOnes();
  }
  return m;
}

}  // namespace

Mask generate_mask(const MaskSpec& spec, Eigen::Index rows, Eigen::Index cols, SeededRng& rng) {
  if (rows < 1 || cols < 1) throw ShapeMismatch("generate_mask: empty shape");
  if (const auto* pixel = std::get_if<RandomPixelMask>(&spec)) {
    return random_pixel_mask(*pixel, rows, cols, rng);
  }
  return cartesian_mask(std::get<CartesianLineMask>(spec), rows, cols);
}

}  // namespace ideq
