#include "ideq/fourier.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <vector>

namespace ideq {
namespace {

// Transforms every column, then every row; `inverse` selects the sign.
ComplexGrid separable_transform(const ComplexGrid& in, bool inverse) {
  if (in.rows() < 1 || in.cols() < 1) {
    throw ShapeMismatch("dft2: empty grid");
  }
  const Eigen::Index rows = in.rows();
  const Eigen::Index cols = in.cols();
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);

  ComplexGrid out(rows, cols);
  std::vector<std::complex<double>> src(static_cast<std::size_t>(rows));
  std::vector<std::complex<double>> dst;
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) src[r] = in(r, c);
    inverse ? fft.inv(dst, src) : fft.fwd(dst, src);
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = dst[r];
  }
  src.resize(static_cast<std::size_t>(cols));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) src[c] = out(r, c);
    inverse ? fft.inv(dst, src) : fft.fwd(dst, src);
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = dst[c];
  }
  out /= std::sqrt(static_cast<double>(rows * cols));
  return out;
}

}  // namespace

ComplexGrid dft2(const ComplexGrid& img) { return separable_transform(img, false); }

ComplexGrid dft2(const Image& img) { return separable_transform(img.cast<std::complex<double>>(), false); }

ComplexGrid idft2(const ComplexGrid& spectrum) { return separable_transform(spectrum, true); }

}  // namespace ideq
