#include "ideq/network.hpp"

#include <cmath>

namespace ideq {
namespace {

using Maps = std::vector<Image>;

double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// S(i, j) = img(i + di, j + dj), zero or periodic outside the grid.
Image shift(const Image& img, int di, int dj, Padding padding) {
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  if (padding == Padding::Wrap) {
    Image out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const Eigen::Index sj = ((j + dj) % cols + cols) % cols;
      for (Eigen::Index i = 0; i < rows; ++i) {
        out(i, j) = img(((i + di) % rows + rows) % rows, sj);
      }
    }
    return out;
  }
  Image out = Image::Zero(rows, cols);
  const Eigen::Index h = rows - std::abs(di);
  const Eigen::Index w = cols - std::abs(dj);
  if (h <= 0 || w <= 0) return out;
  const Eigen::Index dst_r = std::max(0, -di);
  const Eigen::Index dst_c = std::max(0, -dj);
  out.block(dst_r, dst_c, h, w) = img.block(dst_r + di, dst_c + dj, h, w);
  return out;
}

constexpr int kTaps = SmoothPotentialNet::kKernel * SmoothPotentialNet::kKernel;

inline int tap_di(int tap) { return tap / SmoothPotentialNet::kKernel - 1; }
inline int tap_dj(int tap) { return tap % SmoothPotentialNet::kKernel - 1; }

class ConvLayer {
 public:
  ConvLayer(const LayerLayout& layout, const ParamVector& params, Padding padding)
      : l_(layout), p_(params), padding_(padding) {}

  double w(int o, int c, int tap) const {
    return p_(l_.weight_offset + (static_cast<Eigen::Index>(o) * l_.in_channels + c) * kTaps + tap);
  }

  Eigen::Index w_index(int o, int c, int tap) const {
    return l_.weight_offset + (static_cast<Eigen::Index>(o) * l_.in_channels + c) * kTaps + tap;
  }

  Maps forward(const Maps& in, bool with_bias) const {
    const Eigen::Index rows = in.front().rows();
    const Eigen::Index cols = in.front().cols();
    Maps out;
    out.reserve(l_.out_channels);
    for (int o = 0; o < l_.out_channels; ++o) {
      out.emplace_back(Image::Constant(rows, cols, with_bias ? p_(l_.bias_offset + o) : 0.0));
    }
    for (int c = 0; c < l_.in_channels; ++c) {
      for (int tap = 0; tap < kTaps; ++tap) {
        const Image s = shift(in[c], tap_di(tap), tap_dj(tap), padding_);
        for (int o = 0; o < l_.out_channels; ++o) out[o] += w(o, c, tap) * s;
      }
    }
    return out;
  }

  // Adjoint of the bias-free convolution.
  Maps adjoint(const Maps& grad_out) const {
    const Eigen::Index rows = grad_out.front().rows();
    const Eigen::Index cols = grad_out.front().cols();
    Maps grad_in(l_.in_channels, Image::Zero(rows, cols));
    for (int o = 0; o < l_.out_channels; ++o) {
      for (int tap = 0; tap < kTaps; ++tap) {
        const Image s = shift(grad_out[o], -tap_di(tap), -tap_dj(tap), padding_);
        for (int c = 0; c < l_.in_channels; ++c) grad_in[c] += w(o, c, tap) * s;
      }
    }
    return grad_in;
  }

  void accumulate_weight_grad(const Maps& grad_out, const Maps& in, ParamVector& grad) const {
    for (int c = 0; c < l_.in_channels; ++c) {
      for (int tap = 0; tap < kTaps; ++tap) {
        const Image s = shift(in[c], tap_di(tap), tap_dj(tap), padding_);
        for (int o = 0; o < l_.out_channels; ++o) grad(w_index(o, c, tap)) += inner(grad_out[o], s);
      }
    }
  }

  void accumulate_bias_grad(const Maps& grad_out, ParamVector& grad) const {
    for (int o = 0; o < l_.out_channels; ++o) grad(l_.bias_offset + o) += grad_out[o].sum();
  }

 private:
  const LayerLayout& l_;
  const ParamVector& p_;
  Padding padding_;
};

Maps map_each(const Maps& in, double (*f)(double)) {
  Maps out;
  out.reserve(in.size());
  for (const auto& m : in) out.emplace_back(m.unaryExpr(f));
  return out;
}

}  // namespace

struct SmoothPotentialNet::Trace {
  std::vector<Maps> inputs;          // input maps of each layer
  std::vector<Maps> pre;             // pre-activations of each layer
  std::vector<Maps> tangent_inputs;  // filled when a direction is given
  std::vector<Maps> tangent_pre;
};

SmoothPotentialNet::SmoothPotentialNet(NetShape shape) : shape_(std::move(shape)) {
  if (shape_.channels.size() < 2 || shape_.channels.back() != 1 || shape_.channels.front() != 1) {
    throw DomainError("SmoothPotentialNet: channels must start and end with 1");
  }
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < shape_.channels.size(); ++l) {
    LayerLayout layer{};
    layer.in_channels = shape_.channels[l] + (l == 0 && shape_.noise_channel ? 1 : 0);
    layer.out_channels = shape_.channels[l + 1];
    if (layer.out_channels < 1) throw DomainError("SmoothPotentialNet: empty layer");
    layer.weight_offset = offset;
    offset += static_cast<Eigen::Index>(layer.in_channels) * layer.out_channels * kTaps;
    layer.bias_offset = offset;
    offset += layer.out_channels;
    layout_.push_back(layer);
  }
  params_ = ParamVector::Zero(offset);
}

SmoothPotentialNet SmoothPotentialNet::random(NetShape shape, SeededRng& rng) {
  SmoothPotentialNet net(std::move(shape));
  for (const auto& layer : net.layout_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_channels * kTaps));
    const Eigen::Index n = static_cast<Eigen::Index>(layer.in_channels) * layer.out_channels * kTaps;
    for (Eigen::Index i = 0; i < n; ++i) net.params_(layer.weight_offset + i) = rng.uniform(-bound, bound);
  }
  return net;
}

void SmoothPotentialNet::set_params(const ParamVector& params) {
  if (params.size() != params_.size()) {
    throw ShapeMismatch("SmoothPotentialNet::set_params: expected " + std::to_string(params_.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  params_ = params;
}

double& SmoothPotentialNet::weight(int layer, int out, int in, int ki, int kj) {
  const auto& l = layout_.at(layer);
  return params_(l.weight_offset + (static_cast<Eigen::Index>(out) * l.in_channels + in) * kTaps +
                 ki * kKernel + kj);
}

double SmoothPotentialNet::weight(int layer, int out, int in, int ki, int kj) const {
  return const_cast<SmoothPotentialNet*>(this)->weight(layer, out, in, ki, kj);
}

double& SmoothPotentialNet::bias(int layer, int out) { return params_(layout_.at(layer).bias_offset + out); }

void SmoothPotentialNet::check_input(const Image& x) const {
  if (x.size() == 0) throw ShapeMismatch("SmoothPotentialNet: empty input");
}

SmoothPotentialNet::Trace SmoothPotentialNet::run(const Image& x, double sigma, const Image* direction) const {
  check_input(x);
  Trace t;
  Maps in{x};
  Maps tin;
  if (direction != nullptr) {
    require_same_shape(*direction, x, "SmoothPotentialNet: direction");
    tin.push_back(*direction);
  }
  if (shape_.noise_channel) {
    in.emplace_back(Image::Constant(x.rows(), x.cols(), sigma));
    if (direction != nullptr) tin.emplace_back(Image::Zero(x.rows(), x.cols()));
  }
  const std::size_t n_layers = layout_.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const ConvLayer conv(layout_[l], params_, shape_.padding);
    Maps pre = conv.forward(in, true);
    Maps tpre;
    if (direction != nullptr) tpre = conv.forward(tin, false);
    Maps next;
    Maps tnext;
    if (l + 1 < n_layers) {
      next = map_each(pre, softplus);
      if (direction != nullptr) {
        for (std::size_t c = 0; c < pre.size(); ++c) tnext.emplace_back(pre[c].unaryExpr(&sigmoid) * tpre[c]);
      }
    }
    t.inputs.push_back(std::move(in));
    t.pre.push_back(std::move(pre));
    if (direction != nullptr) {
      t.tangent_inputs.push_back(std::move(tin));
      t.tangent_pre.push_back(std::move(tpre));
    }
    in = std::move(next);
    tin = std::move(tnext);
  }
  return t;
}

Image SmoothPotentialNet::forward(const Image& x, double sigma) const { return run(x, sigma, nullptr).pre.back()[0]; }

Image SmoothPotentialNet::jvp(const Image& x, double sigma, const Image& direction) const {
  return run(x, sigma, &direction).tangent_pre.back()[0];
}

Image SmoothPotentialNet::backprop_input(const Trace& t, const Image& cotangent) const {
  Maps grad{cotangent};
  for (std::size_t l = layout_.size(); l-- > 0;) {
    const ConvLayer conv(layout_[l], params_, shape_.padding);
    Maps grad_in = conv.adjoint(grad);
    if (l > 0) {
      for (std::size_t c = 0; c < grad_in.size(); ++c) grad_in[c] *= t.pre[l - 1][c].unaryExpr(&sigmoid);
    }
    grad = std::move(grad_in);
  }
  return grad[0];
}

Image SmoothPotentialNet::input_vjp(const Image& x, double sigma, const Image& cotangent) const {
  require_same_shape(cotangent, x, "SmoothPotentialNet::input_vjp");
  return backprop_input(run(x, sigma, nullptr), cotangent);
}

PotentialEval SmoothPotentialNet::potential(const Image& x, double sigma) const {
  const Trace t = run(x, sigma, nullptr);
  const Image residual = x - t.pre.back()[0];
  PotentialEval out;
  out.value = 0.5 * squared_norm(residual);
  out.gradient = residual - backprop_input(t, residual);
  return out;
}

ParamContraction SmoothPotentialNet::potential_grad_contraction(const Image& x, double sigma,
                                                                const Image& u) const {
  const Trace t = run(x, sigma, &u);
  ParamContraction out;
  out.params = ParamVector::Zero(params_.size());

  // h = <x - N, u - J u>; seed adjoints of the output and its tangent.
  const Image& n_out = t.pre.back()[0];
  const Image& ju = t.tangent_pre.back()[0];
  Maps adj{Image(ju - u)};
  Maps tadj{Image(n_out - x)};

  for (std::size_t l = layout_.size(); l-- > 0;) {
    const ConvLayer conv(layout_[l], params_, shape_.padding);
    conv.accumulate_weight_grad(adj, t.inputs[l], out.params);
    conv.accumulate_weight_grad(tadj, t.tangent_inputs[l], out.params);
    conv.accumulate_bias_grad(adj, out.params);
    Maps adj_in = conv.adjoint(adj);
    Maps tadj_in = conv.adjoint(tadj);
    if (l == 0) {
      if (shape_.noise_channel) out.sigma = adj_in.back().sum();
      break;
    }
    // in = s(a), t_in = s'(a) t_a  =>  A_a = A_in s'(a) + T_in s''(a) t_a,  T_a = T_in s'(a).
    const Maps& a = t.pre[l - 1];
    const Maps& ta = t.tangent_pre[l - 1];
    Maps next_adj;
    Maps next_tadj;
    for (std::size_t c = 0; c < a.size(); ++c) {
      const Image s1 = a[c].unaryExpr(&sigmoid);
      const Image s2 = s1 * (1.0 - s1);
      next_adj.emplace_back(adj_in[c] * s1 + tadj_in[c] * s2 * ta[c]);
      next_tadj.emplace_back(tadj_in[c] * s1);
    }
    adj = std::move(next_adj);
    tadj = std::move(next_tadj);
  }
  return out;
}

}  // namespace ideq
