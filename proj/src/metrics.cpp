#include "ideq/metrics.hpp"

#include <cmath>

namespace ideq {

double psnr(const Image& x, const Image& ref, double peak) {
  if (!(peak > 0.0)) {
    throw DomainError("psnr: peak must be positive");
  }
  const double mse = mean_squared_error(x, ref);
  if (mse == 0.0) {
    return kPsnrIdentical;
  }
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

Eigen::ArrayXXd gaussian_window(int size, double sigma) {
  Eigen::ArrayXXd w(size, size);
  const double c = 0.5 * (size - 1);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double di = i - c;
      const double dj = j - c;
      w(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
    }
  }
  return w / w.sum();
}

}  // namespace

double ssim(const Image& x, const Image& ref, const SsimParams& params) {
  require_same_shape(x, ref, "ssim");
  const int win = params.window;
  if (x.rows() < win || x.cols() < win) {
    throw ShapeMismatch("ssim: image smaller than the " + std::to_string(win) + "x" +
                        std::to_string(win) + " window");
  }
  const Eigen::ArrayXXd w = gaussian_window(win, params.gaussian_sigma);
  const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2);

  const Eigen::Index out_rows = x.rows() - win + 1;
  const Eigen::Index out_cols = x.cols() - win + 1;
  double total = 0.0;
  for (Eigen::Index i = 0; i < out_rows; ++i) {
    for (Eigen::Index j = 0; j < out_cols; ++j) {
      const auto px = x.block(i, j, win, win);
      const auto py = ref.block(i, j, win, win);
      const double mx = (w * px).sum();
      const double my = (w * py).sum();
      const double vx = (w * (px - mx).square()).sum();
      const double vy = (w * (py - my).square()).sum();
      const double cov = (w * ((px - mx) * (py - my))).sum();
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>(out_rows * out_cols);
}

}  // namespace ideq
