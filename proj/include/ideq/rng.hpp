#pragma once

#include "ideq/grid.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace ideq {

// Deterministic random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; uniforms take the top 53 bits and the
// Gaussian sampler is a hand-written Box-Muller pair, so the same seed yields
// the same bits on every conforming platform (unlike std::normal_distribution).
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * n); }

  double gaussian();

  Image gaussian_image(Eigen::Index rows, Eigen::Index cols, double stddev);

  // Textual engine state (standard stream format) plus the cached spare.
  std::string state() const;
  void restore(const std::string& state);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ideq
