#pragma once

#include "ideq/network.hpp"

#include <memory>
#include <string>

namespace ideq {

// Regularization potential g in F = f + lambda g.
class Regularizer {
 public:
  virtual ~Regularizer() = default;
  virtual std::string name() const = 0;
  virtual double value(const Image& x) const = 0;
  virtual Image gradient(const Image& x) const = 0;
  virtual PotentialEval evaluate(const Image& x) const { return {value(x), gradient(x)}; }
};

// Gradient-step potential g(x) = 0.5 |x - N(x)|^2 over a learned smooth net.
// The induced denoiser D = Id - grad g is an exact gradient field.
class GradStepRegularizer final : public Regularizer {
 public:
  GradStepRegularizer(SmoothPotentialNet net, double sigma);

  std::string name() const override { return "gradstep"; }
  double value(const Image& x) const override;
  Image gradient(const Image& x) const override;
  PotentialEval evaluate(const Image& x) const override;

  Image denoise(const Image& x) const { return x - gradient(x); }
  Image net_output(const Image& x) const { return net_.forward(x, sigma_); }

  // grad over (theta, sigma) of <grad g(x), u>.
  ParamContraction grad_contraction(const Image& x, const Image& u) const;

  const SmoothPotentialNet& net() const { return net_; }
  SmoothPotentialNet& net() { return net_; }
  double sigma() const { return sigma_; }
  void set_sigma(double sigma);

 private:
  SmoothPotentialNet net_;
  double sigma_;
};

// Closed-form test potentials: Tikhonov (mu/2)|x|^2 (convex) and the
// anisotropic smoothed total variation sum sqrt(d^2 + delta^2) over forward
// differences in both directions (last difference along each axis is zero).
class AnalyticRegularizer final : public Regularizer {
 public:
  enum class Kind { Tikhonov, SmoothedTv };

  static AnalyticRegularizer tikhonov(double mu);
  static AnalyticRegularizer smoothed_tv(double delta);

  std::string name() const override { return kind_ == Kind::Tikhonov ? "tikhonov" : "tv"; }
  double value(const Image& x) const override { return evaluate(x).value; }
  Image gradient(const Image& x) const override { return evaluate(x).gradient; }
  PotentialEval evaluate(const Image& x) const override;

  Kind kind() const { return kind_; }
  double parameter() const { return parameter_; }

  // Upper bound on the gradient Lipschitz constant: mu, or 8/delta for TV.
  double lipschitz_grad() const;

 private:
  AnalyticRegularizer(Kind kind, double parameter) : kind_(kind), parameter_(parameter) {}

  Kind kind_;
  double parameter_;
};

}  // namespace ideq
