#pragma once

#include "ideq/grid.hpp"

#include <limits>

namespace ideq {

// Returned by psnr() when the two images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

template <typename A, typename B>
double mean_squared_error(const Eigen::ArrayBase<A>& x, const Eigen::ArrayBase<B>& ref) {
  require_same_shape(x, ref, "mean_squared_error");
  return (x - ref).square().mean();
}

// 10 log10(peak^2 / MSE); kPsnrIdentical when MSE is exactly zero.
double psnr(const Image& x, const Image& ref, double peak = 1.0);

struct SsimParams {
  int window = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean structural similarity over all fully contained Gaussian windows.
// Throws if the image is smaller than the window.
double ssim(const Image& x, const Image& ref, const SsimParams& params = {});

}  // namespace ideq
