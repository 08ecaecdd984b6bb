#include <doctest.h>

#include "ideq/regularizer.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace ideq;

namespace {

double softplus_ref(double a) { return std::log(1.0 + std::exp(a)); }
double sigmoid_ref(double a) { return 1.0 / (1.0 + std::exp(-a)); }

SmoothPotentialNet random_net(std::uint64_t seed, Padding padding = Padding::Zero) {
  SeededRng rng(seed);
  NetShape shape;
  shape.padding = padding;
  SmoothPotentialNet net = SmoothPotentialNet::random(shape, rng);
  // Nonzero biases so every parameter is exercised.
  ParamVector p = net.params();
  for (const auto& l : net.layout()) {
    for (int o = 0; o < l.out_channels; ++o) p(l.bias_offset + o) = rng.uniform(-0.2, 0.2);
  }
  net.set_params(p);
  return net;
}

// Single linear layer whose center tap copies the input.
SmoothPotentialNet identity_net() {
  NetShape shape;
  shape.channels = {1, 1};
  shape.noise_channel = false;
  SmoothPotentialNet net(shape);
  net.weight(0, 0, 0, 1, 1) = 1.0;
  return net;
}

Image roll(const Image& x, int di, int dj) {
  Image out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out((i + di + x.rows()) % x.rows(), (j + dj + x.cols()) % x.cols()) = x(i, j);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("net_forward examples") {
  SeededRng rng(1);
  const Image x = oracle::random_image(rng, 8, 8, -2.0, 2.0);

  SmoothPotentialNet zero;
  CHECK(zero.forward(x, 0.1).abs().maxCoeff() == 0.0);

  NetShape shape;
  shape.channels = {1, 1, 1};
  shape.noise_channel = false;
  SmoothPotentialNet sp(shape);
  sp.weight(0, 0, 0, 1, 1) = 1.0;
  sp.weight(1, 0, 0, 1, 1) = 1.0;
  const Image out = sp.forward(x, 0.0);
  CHECK(out.rows() == 8);
  CHECK(out.cols() == 8);
  CHECK((out - x.unaryExpr(&softplus_ref)).abs().maxCoeff() < 1e-14);

  const SmoothPotentialNet wrap = random_net(2, Padding::Wrap);
  const Image y = oracle::random_image(rng, 8, 6);
  CHECK((wrap.forward(roll(y, 1, 0), 0.05) - roll(wrap.forward(y, 0.05), 1, 0)).abs().maxCoeff() < 1e-13);
  CHECK((wrap.forward(roll(y, 0, -1), 0.05) - roll(wrap.forward(y, 0.05), 0, -1)).abs().maxCoeff() < 1e-13);

  const SmoothPotentialNet net = random_net(3);
  CHECK((net.forward(y, 0.05) - net.forward(y, 0.05)).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(net.forward(Image(0, 0), 0.05), ShapeMismatch);
}

TEST_CASE("parameter layout round trip") {
  const SmoothPotentialNet net = random_net(4);
  CHECK(net.num_params() == (2 * 8 * 9 + 8) + (8 * 8 * 9 + 8) + (8 * 9 + 1));
  SmoothPotentialNet copy(net.shape());
  copy.set_params(net.params());
  CHECK(copy.params() == net.params());
  for (int o = 0; o < 8; ++o) {
    for (int c = 0; c < 8; ++c) CHECK(copy.weight(1, o, c, 2, 0) == net.weight(1, o, c, 2, 0));
  }
  const auto& l1 = net.layout()[1];
  CHECK(net.weight(1, 3, 5, 2, 1) == net.params()(l1.weight_offset + (3 * 8 + 5) * 9 + 2 * 3 + 1));
  CHECK_THROWS_AS(copy.set_params(ParamVector::Zero(3)), ShapeMismatch);
}

TEST_CASE("g_value") {
  SeededRng rng(5);
  const Image x = oracle::random_image(rng, 8, 8);
  CHECK(GradStepRegularizer(identity_net(), 0.0).value(x) == 0.0);
  CHECK(GradStepRegularizer(SmoothPotentialNet{}, 0.1).value(x) == doctest::Approx(0.5 * squared_norm(x)).epsilon(1e-15));

  const GradStepRegularizer reg(random_net(6), 0.07);
  const Image n = reg.net().forward(x, 0.07);
  double want = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) want += 0.5 * (x(i) - n(i)) * (x(i) - n(i));
  CHECK(std::abs(reg.value(x) - want) < 1e-13 * want);
  CHECK(reg.value(x) >= 0.0);
}

TEST_CASE("g_grad") {
  SeededRng rng(7);
  const Image x = oracle::random_image(rng, 8, 8);
  CHECK((GradStepRegularizer(SmoothPotentialNet{}, 0.1).gradient(x) - x).abs().maxCoeff() == 0.0);
  CHECK(GradStepRegularizer(identity_net(), 0.0).gradient(x).abs().maxCoeff() == 0.0);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    const GradStepRegularizer reg(random_net(100 + seed), 0.03 + 0.01 * seed);
    SeededRng r(200 + seed);
    const Image z = oracle::random_image(r, 8, 8);
    const Image dir = oracle::random_unit_direction(r, 8, 8);
    const double fd = oracle::directional_fd([&](const Image& v) { return reg.value(v); }, z, dir);
    const double an = inner(reg.gradient(z), dir);
    CHECK(oracle::rel_diff(fd, an) < 1e-6);
    const PotentialEval both = reg.evaluate(z);
    CHECK(both.value == reg.value(z));
    CHECK((both.gradient - reg.gradient(z)).abs().maxCoeff() == 0.0);
    CHECK((reg.denoise(z) - (z - both.gradient)).abs().maxCoeff() == 0.0);
  }
  const GradStepRegularizer reg(random_net(9), 0.05);
  CHECK_THROWS_AS(reg.net().input_vjp(x, 0.05, Image::Zero(4, 4)), ShapeMismatch);
}

TEST_CASE("jvp and input_vjp are adjoint") {
  const SmoothPotentialNet net = random_net(10);
  SeededRng rng(11);
  const Image x = oracle::random_image(rng, 8, 8);
  const Image u = oracle::random_unit_direction(rng, 8, 8);
  const Image w = oracle::random_unit_direction(rng, 8, 8);
  CHECK(std::abs(inner(net.jvp(x, 0.05, u), w) - inner(u, net.input_vjp(x, 0.05, w))) < 1e-13);
}

TEST_CASE("contraction of grad g with a direction") {
  SUBCASE("u = 0 gives zero") {
    const GradStepRegularizer reg(random_net(12), 0.05);
    SeededRng rng(13);
    const Image x = oracle::random_image(rng, 8, 8);
    const ParamContraction c = reg.grad_contraction(x, Image::Zero(8, 8));
    CHECK(c.params.cwiseAbs().maxCoeff() == 0.0);
    CHECK(c.sigma == 0.0);
  }
  SUBCASE("scalar toy net against the symbolic derivative") {
    NetShape shape;
    shape.channels = {1, 1, 1};
    shape.noise_channel = false;
    for (double w : {-1.3, 0.4, 2.0}) {
      for (double xv : {-0.7, 0.25, 1.5}) {
        CAPTURE(w);
        CAPTURE(xv);
        SmoothPotentialNet net(shape);
        net.weight(0, 0, 0, 1, 1) = w;
        net.weight(1, 0, 0, 1, 1) = 1.0;
        const double u = 0.8;
        const GradStepRegularizer reg(net, 0.0);
        const ParamContraction c = reg.grad_contraction(Image::Constant(1, 1, xv), Image::Constant(1, 1, u));
        // h(w) = u (x - s(wx)) (1 - w s'(wx)).
        const double a = w * xv;
        const double s = softplus_ref(a);
        const double s1 = sigmoid_ref(a);
        const double s2 = s1 * (1.0 - s1);
        const double want = u * (-s1 * xv * (1.0 - w * s1) + (xv - s) * (-s1 - w * s2 * xv));
        const Eigen::Index idx = net.layout()[0].weight_offset + 4;
        CHECK(std::abs(c.params(idx) - want) < 1e-14);
      }
    }
  }
  SUBCASE("random nets against finite differences over parameters and sigma") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(seed);
      const SmoothPotentialNet net = random_net(300 + seed);
      const double sigma = 0.05;
      SeededRng rng(400 + seed);
      const Image x = oracle::random_image(rng, 8, 8);
      const Image u = oracle::random_unit_direction(rng, 8, 8);
      const ParamContraction c = GradStepRegularizer(net, sigma).grad_contraction(x, u);

      const auto h_at = [&](const ParamVector& p, double s) {
        SmoothPotentialNet n2 = net;
        n2.set_params(p);
        return inner(GradStepRegularizer(n2, s).gradient(x), u);
      };
      ParamVector dir = rng.gaussian_image(net.num_params(), 1, 1.0).matrix().col(0);
      dir /= dir.norm();
      const double hstep = 1e-5;
      const double fd = (h_at(net.params() + hstep * dir, sigma) - h_at(net.params() - hstep * dir, sigma)) / (2 * hstep);
      CHECK(oracle::rel_diff(fd, c.params.dot(dir)) < 1e-5);

      const double fd_sigma = (h_at(net.params(), sigma + hstep) - h_at(net.params(), sigma - hstep)) / (2 * hstep);
      CHECK(std::abs(fd_sigma - c.sigma) <= 1e-5 * std::max(1.0, std::abs(c.sigma)));
    }
  }
  SUBCASE("linear in the direction") {
    const GradStepRegularizer reg(random_net(14), 0.05);
    SeededRng rng(15);
    const Image x = oracle::random_image(rng, 8, 8);
    const Image u = oracle::random_unit_direction(rng, 8, 8);
    const Image v = oracle::random_unit_direction(rng, 8, 8);
    const double a = 1.7;
    const double b = -0.6;
    const ParamContraction cu = reg.grad_contraction(x, u);
    const ParamContraction cv = reg.grad_contraction(x, v);
    const ParamContraction cw = reg.grad_contraction(x, Image(a * u + b * v));
    CHECK((cw.params - (a * cu.params + b * cv.params)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(cw.sigma - (a * cu.sigma + b * cv.sigma)) < 1e-10);
    CHECK_THROWS_AS(reg.grad_contraction(x, Image::Zero(3, 3)), ShapeMismatch);
  }
}

TEST_CASE("grad g is conservative around a closed triangle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    const GradStepRegularizer reg(random_net(500 + seed), 0.05);
    SeededRng rng(600 + seed);
    const Image p[3] = {oracle::random_image(rng, 8, 8), oracle::random_image(rng, 8, 8),
                        oracle::random_image(rng, 8, 8)};
    // Composite Simpson rule on each edge.
    const int n = 64;
    double loop = 0.0;
    double scale = 0.0;
    for (int e = 0; e < 3; ++e) {
      const Image& a = p[e];
      const Image d = p[(e + 1) % 3] - a;
      double edge = 0.0;
      for (int k = 0; k <= n; ++k) {
        const double wk = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        edge += wk * inner(reg.gradient(a + (static_cast<double>(k) / n) * d), d);
      }
      edge /= 3.0 * n;
      loop += edge;
      scale = std::max(scale, std::abs(edge));
    }
    CHECK(std::abs(loop) <= 1e-6);
    CHECK(scale > 1e-3);
  }
}

TEST_CASE("empirical gradient Lipschitz estimate is finite and stable") {
  const GradStepRegularizer reg(random_net(700), 0.05);
  const auto estimate = [&](std::uint64_t seed) {
    SeededRng rng(seed);
    double best = 0.0;
    for (int i = 0; i < 40; ++i) {
      const Image a = oracle::random_image(rng, 8, 8);
      const Image b = a + 0.05 * oracle::random_unit_direction(rng, 8, 8);
      best = std::max(best, norm(reg.gradient(a) - reg.gradient(b)) / norm(a - b));
    }
    return best;
  };
  const double l1 = estimate(1);
  const double l2 = estimate(2);
  CHECK(std::isfinite(l1));
  CHECK(l1 > 0.0);
  CHECK(estimate(1) == l1);
  CHECK(std::max(l1, l2) / std::min(l1, l2) < 1.5);
}

TEST_CASE("analytic regularizers") {
  SeededRng rng(20);
  const Image x = oracle::random_image(rng, 8, 8, -1.0, 1.0);

  const AnalyticRegularizer tik = AnalyticRegularizer::tikhonov(1.0);
  CHECK((tik.gradient(x) - x).abs().maxCoeff() == 0.0);
  CHECK(tik.value(x) == doctest::Approx(0.5 * squared_norm(x)).epsilon(1e-15));
  CHECK(AnalyticRegularizer::tikhonov(2.5).lipschitz_grad() == 2.5);

  const double delta = 0.1;
  const AnalyticRegularizer tv = AnalyticRegularizer::smoothed_tv(delta);
  const Image flat = Image::Constant(6, 5, 0.4);
  CHECK(tv.value(flat) == doctest::Approx(delta * 30 * 2).epsilon(1e-14));
  CHECK(tv.gradient(flat).abs().maxCoeff() == 0.0);
  CHECK(tv.lipschitz_grad() == doctest::Approx(8.0 / delta));
  CHECK_THROWS_AS(AnalyticRegularizer::smoothed_tv(0.0), DomainError);
  CHECK_THROWS_AS(AnalyticRegularizer::smoothed_tv(-1.0), DomainError);

  // Direct recomputation of the TV value.
  double want = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double dv = i + 1 < x.rows() ? x(i + 1, j) - x(i, j) : 0.0;
      const double dh = j + 1 < x.cols() ? x(i, j + 1) - x(i, j) : 0.0;
      want += std::sqrt(dv * dv + delta * delta) + std::sqrt(dh * dh + delta * delta);
    }
  }
  CHECK(std::abs(tv.value(x) - want) < 1e-12 * want);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    SeededRng r(800 + seed);
    const Image z = oracle::random_image(r, 8, 8);
    const Image dir = oracle::random_unit_direction(r, 8, 8);
    for (const AnalyticRegularizer* reg : {&tik, &tv}) {
      const double fd = oracle::directional_fd([&](const Image& v) { return reg->value(v); }, z, dir);
      CHECK(oracle::rel_diff(fd, inner(reg->gradient(z), dir)) < 1e-6);
    }
  }
}
