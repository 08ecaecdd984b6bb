#include <doctest.h>

#include "ideq/training.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

using namespace ideq;

namespace {

TrainableModel random_model(std::uint64_t seed, double lambda = 0.6, double tau = 0.3, double alpha = 0.3,
                            double sigma = 0.05) {
  SeededRng rng(seed);
  SmoothPotentialNet net = SmoothPotentialNet::random(NetShape{}, rng);
  ParamVector p = net.params();
  for (const auto& l : net.layout()) {
    for (int o = 0; o < l.out_channels; ++o) p(l.bias_offset + o) = rng.uniform(-0.1, 0.1);
  }
  net.set_params(p);
  return TrainableModel{GradStepRegularizer(std::move(net), sigma), lambda, tau, alpha};
}

std::shared_ptr<DataFidelity> make_fidelity(const std::string& kind, SeededRng& rng, Eigen::Index n) {
  if (kind == "mri") return std::make_shared<MaskedFourierModel>(generate_mask(RandomPixelMask{0.5}, n, n, rng), 0.02);
  if (kind == "rician") return std::make_shared<RicianModel>(0.2);
  return std::make_shared<InpaintingModel>(generate_mask(RandomPixelMask{0.5}, n, n, rng), 0.02);
}

Sample make_sample(const std::string& kind, std::uint64_t seed, Eigen::Index n = 8) {
  SeededRng rng(seed);
  Sample s;
  s.x_true = oracle::random_image(rng, n, n, 0.1, 0.9);
  s.fidelity = make_fidelity(kind, rng, n);
  s.y = s.fidelity->simulate(s.x_true, rng);
  return s;
}

Dataset make_dataset(std::uint64_t seed, int n_train, int n_val, Eigen::Index n = 12) {
  Dataset d;
  for (int i = 0; i < n_train; ++i) d.train.push_back(make_sample("inpainting", seed + i, n));
  for (int i = 0; i < n_val; ++i) d.val.push_back(make_sample("inpainting", seed + 100 + i, n));
  return d;
}

SolverConfig train_solver(Scheme scheme = Scheme::IdeqGrad) {
  SolverConfig c;
  c.scheme = scheme;
  c.max_iter = 15;
  c.restart_budget = 100.0;
  c.tolerance = 1e-4;
  return c;
}

// l(T(x_hat)) with T built from the solver's step functions.
double loss_at(const TrainableModel& m, Scheme scheme, const Image& x_hat, const Sample& s) {
  const Image t = scheme == Scheme::IdeqProx ? redp_step(x_hat, s.y, *s.fidelity, m.reg, m.lambda, m.tau)
                                             : red_step(x_hat, s.y, *s.fidelity, m.reg, m.lambda, m.tau);
  return mse_loss(t, s.x_true);
}

double fd_along(const TrainableModel& m, Scheme scheme, const Image& x_hat, const Sample& s, const ParamVector& dir,
                double h = 1e-5) {
  TrainableModel plus = m;
  TrainableModel minus = m;
  plus.set_raw(m.raw() + h * dir, LearnFlags{});
  minus.set_raw(m.raw() - h * dir, LearnFlags{});
  return (loss_at(plus, scheme, x_hat, s) - loss_at(minus, scheme, x_hat, s)) / (2.0 * h);
}

}  // namespace

TEST_CASE("mse_loss") {
  SeededRng rng(1);
  const Image a = oracle::random_image(rng, 6, 6);
  CHECK(mse_loss(a, a) == 0.0);
  CHECK(mse_loss(Image::Constant(1, 1, 1.0), Image::Zero(1, 1)) == 1.0);
  const Image b = oracle::random_image(rng, 6, 6);
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += (a(i) - b(i)) * (a(i) - b(i));
  CHECK(std::abs(mse_loss(a, b) - s / 36.0) < 1e-12);
  CHECK_THROWS_AS(mse_loss(a, Image::Zero(2, 2)), ShapeMismatch);
}

TEST_CASE("raw parameter transforms") {
  TrainableModel m = random_model(2, 0.83, 0.1, 0.2, 0.03);
  const ParamVector r = m.raw();
  CHECK(r(m.lambda_index()) == std::log(0.83));
  TrainableModel back = random_model(3);
  back.set_raw(r, LearnFlags{});
  CHECK(back.lambda == doctest::Approx(0.83).epsilon(1e-15));
  CHECK(back.tau == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(back.alpha == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(back.reg.sigma() == doctest::Approx(0.03).epsilon(1e-15));
  CHECK(back.reg.net().params() == m.reg.net().params());

  LearnFlags only_tau{false, false, true, false, false};
  TrainableModel partial = random_model(3);
  const double lambda_before = partial.lambda;
  partial.set_raw(r, only_tau);
  CHECK(partial.lambda == lambda_before);
  CHECK(partial.tau == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("JFB gradient at an exact fixed point has no tau or alpha component") {
  // Zero net: grad g(x) = x exactly. Dyadic data make T(x_hat) = x_hat exact.
  TrainableModel m{GradStepRegularizer(SmoothPotentialNet{}, 0.05), 0.5, 0.25, 0.3};
  Image x_hat(4, 4);
  for (Eigen::Index i = 0; i < x_hat.size(); ++i) x_hat(i) = static_cast<double>(i % 7) / 8.0;
  const Image yv = x_hat + 0.5 * x_hat;
  const InpaintingModel f(Mask::Ones(4, 4), 0.0);
  const Image x_star = Image::Constant(4, 4, 0.5);
  const JfbResult j = jfb_gradient(m, Scheme::IdeqGrad, x_hat, Image(yv), f, x_star);
  CHECK((j.output - x_hat).abs().maxCoeff() == 0.0);
  CHECK(j.gradient(m.tau_index()) == 0.0);
  CHECK(j.gradient(m.alpha_index()) == 0.0);
  CHECK(j.gradient(m.lambda_index()) != 0.0);
}

TEST_CASE("JFB gradient on the scalar toy net") {
  NetShape shape;
  shape.channels = {1, 1, 1};
  shape.noise_channel = false;
  for (double w : {-0.8, 0.5, 1.7}) {
    CAPTURE(w);
    SmoothPotentialNet net(shape);
    net.weight(0, 0, 0, 1, 1) = w;
    net.weight(1, 0, 0, 1, 1) = 1.0;
    const double lambda = 0.7, tau = 0.4, x = 0.9, y = 0.6, xs = 0.75;
    TrainableModel m{GradStepRegularizer(net, 0.0), lambda, tau, 0.5};
    const InpaintingModel f(Mask::Ones(1, 1), 0.0);
    LearnFlags flags;
    flags.sigma = false;  // log(0) would be undefined
    const JfbResult j = jfb_gradient(m, Scheme::IdeqGrad, Image::Constant(1, 1, x), Image(Image::Constant(1, 1, y)), f,
                                     Image::Constant(1, 1, xs), flags);
    const double a = w * x;
    const double s = std::log1p(std::exp(a));
    const double s1 = 1.0 / (1.0 + std::exp(-a));
    const double s2 = s1 * (1.0 - s1);
    const double grad_g = (x - s) * (1.0 - w * s1);
    const double t = x - tau * ((x - y) + lambda * grad_g);
    const double dgdw = -s1 * x * (1.0 - w * s1) + (x - s) * (-s1 - w * s2 * x);
    CHECK(std::abs(j.loss - (t - xs) * (t - xs)) < 1e-15);
    CHECK(std::abs(j.gradient(net.layout()[0].weight_offset + 4) - 2.0 * (t - xs) * (-tau * lambda * dgdw)) < 1e-14);
    CHECK(std::abs(j.gradient(m.lambda_index()) - 2.0 * (t - xs) * (-tau * grad_g) * lambda) < 1e-14);
    CHECK(std::abs(j.gradient(m.tau_index()) - 2.0 * (t - xs) * (-((x - y) + lambda * grad_g)) * tau) < 1e-14);
    CHECK(j.gradient(m.sigma_index()) == 0.0);
  }
}

TEST_CASE("JFB gradient matches finite differences over every parameter group") {
  struct Case {
    std::string kind;
    Scheme scheme;
  };
  for (const Case c : {Case{"inpainting", Scheme::IdeqGrad}, Case{"mri", Scheme::IdeqGrad},
                       Case{"rician", Scheme::IdeqGrad}, Case{"inpainting", Scheme::IdeqProx},
                       Case{"mri", Scheme::IdeqProx}}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(c.kind);
      CAPTURE(to_string(c.scheme));
      CAPTURE(seed);
      const Sample s = make_sample(c.kind, 1000 + seed);
      const TrainableModel m = random_model(2000 + seed, 0.6, c.kind == "rician" ? 0.02 : 0.3);
      SeededRng rng(3000 + seed);
      const Image x_hat = oracle::random_image(rng, 8, 8, 0.0, 1.0);
      const JfbResult j = jfb_gradient(m, c.scheme, x_hat, s.y, *s.fidelity, s.x_true);

      ParamVector dir = ParamVector::Zero(m.size());
      for (Eigen::Index i = 0; i < m.num_theta(); ++i) dir(i) = rng.gaussian();
      dir /= dir.norm();
      CHECK(oracle::rel_diff(fd_along(m, c.scheme, x_hat, s, dir), j.gradient.dot(dir)) < 1e-5);
      for (Eigen::Index idx : {m.lambda_index(), m.tau_index(), m.sigma_index()}) {
        CAPTURE(idx);
        ParamVector e = ParamVector::Zero(m.size());
        e(idx) = 1.0;
        CHECK(oracle::rel_diff(fd_along(m, c.scheme, x_hat, s, e), j.gradient(idx)) < 1e-5);
      }
      ParamVector ea = ParamVector::Zero(m.size());
      ea(m.alpha_index()) = 1.0;
      CHECK(fd_along(m, c.scheme, x_hat, s, ea) == 0.0);
      CHECK(j.gradient(m.alpha_index()) == 0.0);
    }
  }
}

TEST_CASE("JFB respects learn flags and rejects unsupported schemes") {
  const Sample s = make_sample("inpainting", 5);
  const TrainableModel m = random_model(6);
  LearnFlags flags;
  flags.theta = false;
  flags.tau = false;
  const JfbResult j = jfb_gradient(m, Scheme::IdeqGrad, s.x_true, s.y, *s.fidelity, s.x_true, flags);
  CHECK(j.gradient.head(m.num_theta()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(j.gradient(m.tau_index()) == 0.0);
  CHECK(j.gradient(m.lambda_index()) != 0.0);
  CHECK_THROWS_AS(jfb_gradient(m, Scheme::Modl, s.x_true, s.y, *s.fidelity, s.x_true), ConfigError);
  const Sample r = make_sample("rician", 7);
  CHECK_THROWS_AS(jfb_gradient(m, Scheme::IdeqProx, r.x_true, r.y, *r.fidelity, r.x_true), UnsupportedOperation);
}

TEST_CASE("adam_update") {
  SeededRng rng(8);
  ParamVector p = rng.gaussian_image(7, 1, 1.0).matrix().col(0);
  const ParamVector p0 = p;

  AdamState zero(7);
  adam_update(zero, p, ParamVector::Zero(7), 0.1);
  CHECK(p == p0);
  CHECK(zero.t == 1);

  AdamState first(7);
  first.eps = 0.0;
  ParamVector g = rng.gaussian_image(7, 1, 1.0).matrix().col(0);
  adam_update(first, p, g, 0.01);
  for (Eigen::Index i = 0; i < 7; ++i) CHECK(std::abs(p(i) - (p0(i) - 0.01 * (g(i) > 0 ? 1.0 : -1.0))) < 1e-15);

  // Textbook recursion, one scalar at a time.
  ParamVector q = p0;
  AdamState st(7);
  std::vector<double> m(7, 0.0), v(7, 0.0), ref(p0.data(), p0.data() + 7);
  for (int t = 1; t <= 10; ++t) {
    const ParamVector gt = rng.gaussian_image(7, 1, 1.0).matrix().col(0);
    adam_update(st, q, gt, 1e-3);
    for (int i = 0; i < 7; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * gt(i);
      v[i] = 0.999 * v[i] + 0.001 * gt(i) * gt(i);
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (int i = 0; i < 7; ++i) CHECK(std::abs(q(i) - ref[i]) < 1e-15);
  CHECK((st.v.array() >= 0.0).all());
  AdamState wrong(3);
  CHECK_THROWS_AS(adam_update(wrong, q, q, 1e-3), ShapeMismatch);
}

TEST_CASE("gradient accumulation is order independent") {
  const Dataset d = make_dataset(40, 6, 0, 8);
  const TrainableModel m = random_model(41);
  const SolverConfig solver = train_solver();
  const EpochGradient a = epoch_gradient(d.train, m, solver, {});
  std::vector<Sample> shuffled(d.train.rbegin(), d.train.rend());
  std::swap(shuffled[1], shuffled[4]);
  const EpochGradient b = epoch_gradient(shuffled, m, solver, {});
  CHECK(a.used == 6);
  CHECK((a.gradient - b.gradient).norm() <= 1e-10 * a.gradient.norm());
  CHECK(std::abs(a.loss_sum - b.loss_sum) <= 1e-10 * a.loss_sum);
}

TEST_CASE("train_loop contracts") {
  const Dataset d = make_dataset(50, 4, 2);
  const TrainableModel init = random_model(51, 0.6, 0.3, 0.3, 0.05);
  const SolverConfig solver = train_solver();

  SUBCASE("zero learning rate keeps everything constant") {
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.max_epochs = 5;
    tc.patience = 3;
    const TrainResult r = train_loop(d, init, solver, tc);
    // Never improves on epoch 0, so patience stops it at epoch 3.
    REQUIRE(r.log.size() == 4);
    for (const auto& row : r.log) {
      CHECK(row.val_psnr == r.log[0].val_psnr);
      CHECK(row.train_loss == r.log[0].train_loss);
    }
    CHECK(r.final_model.raw() == init.raw());
    CHECK(r.best.epoch == 0);
  }
  SUBCASE("deterministic replay, patience and checkpoint round trip") {
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.max_epochs = 6;
    tc.patience = 6;
    tc.seed = 9;
    const TrainResult a = train_loop(d, init, solver, tc);
    const TrainResult b = train_loop(d, init, solver, tc);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      CHECK(a.log[i].epoch == b.log[i].epoch);
      CHECK(a.log[i].train_loss == b.log[i].train_loss);
      CHECK(a.log[i].val_psnr == b.log[i].val_psnr);
      CHECK(a.log[i].val_ssim == b.log[i].val_ssim);
      CHECK(a.log[i].diverged_count == b.log[i].diverged_count);
    }
    CHECK(a.final_model.raw() == b.final_model.raw());
    CHECK(static_cast<int>(a.log.size()) - 1 <= a.best.epoch + tc.patience);
    CHECK(std::isfinite(a.log[0].val_ssim));

    const auto path = std::filesystem::temp_directory_path() / "ideq_ckpt_test.ckpt";
    a.best.save(path);
    const Checkpoint back = Checkpoint::load(path);
    std::filesystem::remove(path);
    CHECK(back.theta == a.best.theta);
    CHECK(back.sigma == a.best.sigma);
    CHECK(back.lambda == a.best.lambda);
    CHECK(back.tau == a.best.tau);
    CHECK(back.alpha == a.best.alpha);
    CHECK(back.epoch == a.best.epoch);
    CHECK(back.rng_state == a.best.rng_state);
    CHECK(back.shape == a.best.shape);
    const double replay = validate(d.val, back.model(), solver).psnr;
    CHECK(std::memcmp(&replay, &a.best.val_psnr, sizeof(double)) == 0);
  }
  SUBCASE("early stopping honors patience") {
    TrainConfig tc;
    tc.learning_rate = 0.5;  // large enough to make validation worse
    tc.max_epochs = 40;
    tc.patience = 2;
    const TrainResult r = train_loop(d, init, solver, tc);
    CHECK(static_cast<int>(r.log.size()) - 1 <= r.best.epoch + tc.patience);
  }
  SUBCASE("divergent forward passes are skipped") {
    Dataset rd;
    for (int i = 0; i < 3; ++i) rd.train.push_back(make_sample("rician", 60 + i, 12));
    rd.val.push_back(make_sample("rician", 70, 12));
    TrainableModel bad = init;
    bad.tau = 50.0;
    SolverConfig red = train_solver(Scheme::Red);
    red.max_iter = 200;
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.patience = 2;
    tc.learn.alpha = false;
    const TrainResult r = train_loop(rd, bad, red, tc);
    CHECK(r.log.size() == 3);
    CHECK(r.log[0].diverged_count == 4);
    CHECK(std::isnan(r.log[0].train_loss));
  }
  SUBCASE("log CSV header") {
    std::ostringstream os;
    write_train_log(os, {TrainLogRow{}});
    CHECK(os.str().rfind("epoch,train_loss,val_psnr,val_ssim,diverged_count,wall_time_s\n", 0) == 0);
  }
  SUBCASE("configuration errors") {
    TrainConfig tc;
    tc.patience = 600;
    CHECK_THROWS_AS(train_loop(d, init, solver, tc), ConfigError);
    tc = TrainConfig{};
    SolverConfig modl = solver;
    modl.scheme = Scheme::Modl;
    CHECK_THROWS_AS(train_loop(d, init, modl, tc), ConfigError);
    TrainableModel one = init;
    one.alpha = 1.0;
    CHECK_THROWS_AS(train_loop(d, one, solver, tc), ConfigError);
  }
}
