#include "ideq/regularizer.hpp"

#include <cmath>

namespace ideq {

GradStepRegularizer::GradStepRegularizer(SmoothPotentialNet net, double sigma) : net_(std::move(net)) {
  set_sigma(sigma);
}

void GradStepRegularizer::set_sigma(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("GradStepRegularizer: sigma must be >= 0");
  sigma_ = sigma;
}

double GradStepRegularizer::value(const Image& x) const {
  return 0.5 * squared_norm(x - net_.forward(x, sigma_));
}

Image GradStepRegularizer::gradient(const Image& x) const { return net_.potential(x, sigma_).gradient; }

PotentialEval GradStepRegularizer::evaluate(const Image& x) const { return net_.potential(x, sigma_); }

ParamContraction GradStepRegularizer::grad_contraction(const Image& x, const Image& u) const {
  require_same_shape(x, u, "GradStepRegularizer::grad_contraction");
  return net_.potential_grad_contraction(x, sigma_, u);
}

AnalyticRegularizer AnalyticRegularizer::tikhonov(double mu) {
  if (!(mu >= 0.0)) throw DomainError("tikhonov: mu must be >= 0");
  return {Kind::Tikhonov, mu};
}

AnalyticRegularizer AnalyticRegularizer::smoothed_tv(double delta) {
  if (!(delta > 0.0)) throw DomainError("smoothed_tv: delta must be > 0");
  return {Kind::SmoothedTv, delta};
}

double AnalyticRegularizer::lipschitz_grad() const {
  return kind_ == Kind::Tikhonov ? parameter_ : 8.0 / parameter_;
}

PotentialEval AnalyticRegularizer::evaluate(const Image& x) const {
  PotentialEval out;
  if (kind_ == Kind::Tikhonov) {
    out.value = 0.5 * parameter_ * squared_norm(x);
    out.gradient = parameter_ * x;
    return out;
  }
  const double delta2 = parameter_ * parameter_;
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  Image down = Image::Zero(rows, cols);
  Image right = Image::Zero(rows, cols);
  if (rows > 1) down.topRows(rows - 1) = x.bottomRows(rows - 1) - x.topRows(rows - 1);
  if (cols > 1) right.leftCols(cols - 1) = x.rightCols(cols - 1) - x.leftCols(cols - 1);
  const Image mag_down = (down.square() + delta2).sqrt();
  const Image mag_right = (right.square() + delta2).sqrt();
  out.value = mag_down.sum() + mag_right.sum();

  // d/dx of sqrt(d^2 + delta^2) is phi = d / sqrt(d^2 + delta^2); each
  // difference adds +phi to its head pixel and -phi to its tail pixel.
  const Image phi_down = down / mag_down;
  const Image phi_right = right / mag_right;
  out.gradient = -phi_down - phi_right;
  if (rows > 1) out.gradient.bottomRows(rows - 1) += phi_down.topRows(rows - 1);
  if (cols > 1) out.gradient.rightCols(cols - 1) += phi_right.leftCols(cols - 1);
  return out;
}

}  // namespace ideq
