#pragma once

#include "ideq/grid.hpp"

namespace ideq {

// Unitary 2D DFT: both directions scale by 1/sqrt(rows*cols), so
// norm(dft2(x)) == norm(x). Frequencies are in natural (unshifted) order.
ComplexGrid dft2(const ComplexGrid& img);
ComplexGrid dft2(const Image& img);

ComplexGrid idft2(const ComplexGrid& spectrum);

// Frequency index paired with `i` under conjugation, i.e. (-i) mod n.
inline Eigen::Index conjugate_index(Eigen::Index i, Eigen::Index n) { return (n - i) % n; }

}  // namespace ideq
