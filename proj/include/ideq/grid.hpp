#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace ideq {

// Dense 2D grids. Rows index image height, columns image width. Every
// experiment uses a single channel, so a grid is one Eigen array; the
// multi-channel feature maps inside the network are vectors of these.
template <typename Scalar>
using GridT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using ComplexGridT = GridT<std::complex<Scalar>>;

using Image = GridT<double>;
using ComplexGrid = ComplexGridT<double>;
using Mask = GridT<double>;  // entries in {0, 1}
using ParamVector = Eigen::VectorXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct UnsupportedOperation : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

template <typename A, typename B>
void require_same_shape(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b,
                        const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(where) + ": shape " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

template <typename Derived>
bool all_finite(const Eigen::ArrayBase<Derived>& a) {
  return a.allFinite();
}

// Euclidean inner product and norm over all entries.
template <typename A, typename B>
typename A::Scalar inner(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b) {
  return (a * b).sum();
}

template <typename Derived>
typename Derived::Scalar norm(const Eigen::ArrayBase<Derived>& a) {
  return a.matrix().norm();
}

template <typename Derived>
typename Derived::Scalar squared_norm(const Eigen::ArrayBase<Derived>& a) {
  return a.matrix().squaredNorm();
}

}  // namespace ideq
