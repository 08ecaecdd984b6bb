#pragma once

#include "ideq/grid.hpp"
#include "ideq/rng.hpp"

#include <vector>

namespace ideq {

enum class Padding { Zero, Wrap };

// Stack of 3x3 stride-1 convolutions with SoftPlus after every layer but the
// last. `channels` lists data channels from input to output, e.g. {1, 8, 8, 1};
// with `noise_channel` the first layer also receives a constant map holding
// the denoiser strength sigma.
struct NetShape {
  std::vector<int> channels{1, 8, 8, 1};
  bool noise_channel = true;
  Padding padding = Padding::Zero;

  bool operator==(const NetShape&) const = default;
};

struct LayerLayout {
  int in_channels;
  int out_channels;
  Eigen::Index weight_offset;  // weights stored [out][in][ki][kj]
  Eigen::Index bias_offset;
};

// Gradient of <grad g(x), u> with respect to the weights and to sigma.
struct ParamContraction {
  ParamVector params;
  double sigma = 0.0;
};

struct PotentialEval {
  double value = 0.0;
  Image gradient;
};

class SmoothPotentialNet {
 public:
  static constexpr int kKernel = 3;

  // All parameters zero.
  explicit SmoothPotentialNet(NetShape shape = {});

  // Weights uniform on +-1/sqrt(fan_in), biases zero.
  static SmoothPotentialNet random(NetShape shape, SeededRng& rng);

  const NetShape& shape() const { return shape_; }
  const std::vector<LayerLayout>& layout() const { return layout_; }
  Eigen::Index num_params() const { return params_.size(); }

  const ParamVector& params() const { return params_; }
  void set_params(const ParamVector& params);

  double& weight(int layer, int out, int in, int ki, int kj);
  double weight(int layer, int out, int in, int ki, int kj) const;
  double& bias(int layer, int out);

  // N(x).
  Image forward(const Image& x, double sigma) const;

  // J_N(x)^T w, restricted to the image channel.
  Image input_vjp(const Image& x, double sigma, const Image& cotangent) const;

  // J_N(x) u.
  Image jvp(const Image& x, double sigma, const Image& direction) const;

  // g(x) = 0.5 |x - N(x)|^2 and grad g(x) = (I - J_N)^T (x - N(x)).
  PotentialEval potential(const Image& x, double sigma) const;

  // d/d(theta, sigma) of <grad g(x), u> at fixed x and u. Evaluated by
  // propagating the tangent J_N u alongside the primal pass and then
  // reverse-differentiating that combined pass.
  ParamContraction potential_grad_contraction(const Image& x, double sigma, const Image& u) const;

 private:
  struct Trace;
  Trace run(const Image& x, double sigma, const Image* direction) const;
  Image backprop_input(const Trace& t, const Image& cotangent) const;
  void check_input(const Image& x) const;

  NetShape shape_;
  std::vector<LayerLayout> layout_;
  ParamVector params_;
};

}  // namespace ideq
