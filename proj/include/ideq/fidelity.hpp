#pragma once

#include "ideq/grid.hpp"
#include "ideq/rng.hpp"

#include <memory>
#include <optional>
#include <string>
#include <variant>

namespace ideq {

// Real grid for inpainting / Rician, k-space grid for MRI.
using Measurement = std::variant<Image, ComplexGrid>;

// Sensitivity of prox_{tau f}(v) used by the training backward pass:
// input_adjoint = (d prox / d v)^T w, tau_derivative = <d prox / d tau, w>.
struct ProxSensitivity {
  Image input_adjoint;
  double tau_derivative = 0.0;
};

// Data-consistency term f(x, y) of the composite objective f + lambda g.
class DataFidelity {
 public:
  virtual ~DataFidelity() = default;

  virtual std::string name() const = 0;
  virtual double noise_level() const = 0;

  // Smoothness certificates; nullopt means "unknown".
  virtual std::optional<double> lipschitz_grad() const = 0;
  virtual std::optional<double> lipschitz_hessian() const = 0;
  virtual bool convex() const = 0;
  virtual bool has_closed_prox() const { return false; }

  virtual Measurement simulate(const Image& x_true, SeededRng& rng) const = 0;
  virtual double value(const Image& x, const Measurement& y) const = 0;
  virtual Image gradient(const Image& x, const Measurement& y) const = 0;

  // argmin_u f(u, y) + |u - x|^2 / (2 tau). Throws UnsupportedOperation
  // when no closed form exists.
  virtual Image prox(const Image& x, const Measurement& y, double tau) const;
  virtual ProxSensitivity prox_sensitivity(const Image& x, const Measurement& y, double tau,
                                           const Image& cotangent) const;

  // Starting iterate derived from the measurement (zero-filled / raw data).
  virtual Image initial_guess(const Measurement& y) const = 0;
};

// y = M F x + n with unitary F, binary k-space mask M and real (zero-phase) x.
// Because x is real, the exact prox and gradient act on the Hermitian
// symmetrization of the masked data; for a mask with M(k) == M(-k) this is the
// usual componentwise formula (tau F^-1 y + x) / (tau M + 1) in k-space.
class MaskedFourierModel final : public DataFidelity {
 public:
  MaskedFourierModel(Mask mask, double noise_level);

  std::string name() const override { return "mri"; }
  double noise_level() const override { return sigma_; }
  std::optional<double> lipschitz_grad() const override { return 1.0; }
  std::optional<double> lipschitz_hessian() const override { return 0.0; }
  bool convex() const override { return true; }
  bool has_closed_prox() const override { return true; }

  Measurement simulate(const Image& x_true, SeededRng& rng) const override;
  double value(const Image& x, const Measurement& y) const override;
  Image gradient(const Image& x, const Measurement& y) const override;
  Image prox(const Image& x, const Measurement& y, double tau) const override;
  ProxSensitivity prox_sensitivity(const Image& x, const Measurement& y, double tau,
                                   const Image& cotangent) const override;
  Image initial_guess(const Measurement& y) const override;

  const Mask& mask() const { return mask_; }

 private:
  const ComplexGrid& kspace(const Measurement& y, const Image& x) const;
  // (M(k) y(k) + M(-k) conj(y(-k))) / 2
  ComplexGrid symmetrized_data(const ComplexGrid& y) const;

  Mask mask_;
  Mask mask_avg_;  // (M(k) + M(-k)) / 2
  double sigma_;
};

// y = M x + n with a binary pixel mask.
class InpaintingModel final : public DataFidelity {
 public:
  InpaintingModel(Mask mask, double noise_level);

  std::string name() const override { return "inpainting"; }
  double noise_level() const override { return sigma_; }
  std::optional<double> lipschitz_grad() const override { return 1.0; }
  std::optional<double> lipschitz_hessian() const override { return 0.0; }
  bool convex() const override { return true; }
  bool has_closed_prox() const override { return true; }

  Measurement simulate(const Image& x_true, SeededRng& rng) const override;
  double value(const Image& x, const Measurement& y) const override;
  Image gradient(const Image& x, const Measurement& y) const override;
  Image prox(const Image& x, const Measurement& y, double tau) const override;
  ProxSensitivity prox_sensitivity(const Image& x, const Measurement& y, double tau,
                                   const Image& cotangent) const override;
  Image initial_guess(const Measurement& y) const override;

  const Mask& mask() const { return mask_; }

 private:
  const Image& pixels(const Measurement& y, const Image& x) const;

  Mask mask_;
  double sigma_;
};

// Rician magnitude noise, y = sqrt((x + n1)^2 + n2^2). Pixelwise negative
// log-likelihood x^2/(2 s^2) - log I0(x y / s^2) up to constants. For x < 0
// the even extension log I0(|t|) is used, so the gradient stays smooth.
class RicianModel final : public DataFidelity {
 public:
  explicit RicianModel(double noise_level);

  std::string name() const override { return "rician"; }
  double noise_level() const override { return sigma_; }
  // Finite (smooth likelihood) but data dependent; no closed-form constant.
  std::optional<double> lipschitz_grad() const override { return std::nullopt; }
  std::optional<double> lipschitz_hessian() const override { return std::nullopt; }
  bool convex() const override { return false; }

  Measurement simulate(const Image& x_true, SeededRng& rng) const override;
  double value(const Image& x, const Measurement& y) const override;
  Image gradient(const Image& x, const Measurement& y) const override;
  Image initial_guess(const Measurement& y) const override;

 private:
  const Image& magnitudes(const Measurement& y, const Image& x) const;

  double sigma_;
};

struct RandomPixelMask {
  double keep_probability = 0.5;
};

// Centered band of max(4, width/32) fully sampled low-frequency columns plus
// equispaced extra columns, round(width/R) columns in total.
struct CartesianLineMask {
  double acceleration = 8.0;
  int center_band = 0;  // 0 selects max(4, width/32)
};

using MaskSpec = std::variant<RandomPixelMask, CartesianLineMask>;

Mask generate_mask(const MaskSpec& spec, Eigen::Index rows, Eigen::Index cols, SeededRng& rng);

}  // namespace ideq
