#include "ideq/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace ideq {

double SeededRng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Image SeededRng::gaussian_image(Eigen::Index rows, Eigen::Index cols, double stddev) {
  Image out(rows, cols);
  // Row-major fill order so the stream layout does not depend on storage order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      out(i, j) = stddev * gaussian();
    }
  }
  return out;
}

std::string SeededRng::state() const {
  std::ostringstream os;
  os << seed_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  os << std::hexfloat << spare_ << std::defaultfloat << ' ' << engine_;
  return os.str();
}

void SeededRng::restore(const std::string& state) {
  std::istringstream is(state);
  int spare_flag = 0;
  std::string spare_text;
  is >> seed_ >> spare_flag >> spare_text >> engine_;
  if (!is) {
    throw Error("SeededRng::restore: malformed state");
  }
  has_spare_ = spare_flag != 0;
  spare_ = std::strtod(spare_text.c_str(), nullptr);
}

}  // namespace ideq
