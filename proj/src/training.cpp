#include "ideq/training.hpp"

#include "ideq/io.hpp"
#include "ideq/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ideq {
namespace {

double logit(double a) { return std::log(a) - std::log1p(-a); }
double logistic(double r) { return 1.0 / (1.0 + std::exp(-r)); }

bool is_prox_scheme(Scheme s) {
  switch (s) {
    case Scheme::IdeqGrad:
    case Scheme::Red:
      return false;
    case Scheme::IdeqProx:
    case Scheme::RedProx:
      return true;
    default:
      throw ConfigError("training supports ideq-grad, ideq-prox, red and red-prox, not " + to_string(s));
  }
}

// Neumaier summation, entrywise.
struct CompensatedSum {
  ParamVector sum;
  ParamVector comp;
  explicit CompensatedSum(Eigen::Index n) : sum(ParamVector::Zero(n)), comp(ParamVector::Zero(n)) {}
  void add(const ParamVector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double t = sum(i) + v(i);
      comp(i) += std::abs(sum(i)) >= std::abs(v(i)) ? (sum(i) - t) + v(i) : (v(i) - t) + sum(i);
      sum(i) = t;
    }
  }
  ParamVector result() const { return sum + comp; }
};

std::string hex(double v) {
  std::ostringstream os;
  os << std::hexfloat << v;
  return os.str();
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw IoError("checkpoint: bad number '" + s + "'");
  return v;
}

}  // namespace

double mse_loss(const Image& x, const Image& ref) { return mean_squared_error(x, ref); }

ParamVector TrainableModel::raw() const {
  ParamVector r(size());
  r.head(num_theta()) = reg.net().params();
  r(lambda_index()) = std::log(lambda);
  r(tau_index()) = std::log(tau);
  r(alpha_index()) = alpha < 1.0 ? logit(alpha) : std::numeric_limits<double>::infinity();
  r(sigma_index()) = std::log(reg.sigma());
  return r;
}

void TrainableModel::set_raw(const ParamVector& r, const LearnFlags& flags) {
  if (r.size() != size()) throw ShapeMismatch("TrainableModel::set_raw: wrong parameter count");
  // Unchanged entries keep their exact natural value (exp(log v) != v in general).
  const ParamVector cur = raw();
  const auto changed = [&](bool learn, Eigen::Index i) { return learn && r(i) != cur(i); };
  if (flags.theta) reg.net().set_params(r.head(num_theta()));
  if (changed(flags.lambda, lambda_index())) lambda = std::exp(r(lambda_index()));
  if (changed(flags.tau, tau_index())) tau = std::exp(r(tau_index()));
  if (changed(flags.alpha, alpha_index())) alpha = logistic(r(alpha_index()));
  if (changed(flags.sigma, sigma_index())) reg.set_sigma(std::exp(r(sigma_index())));
}

SolverConfig TrainableModel::configure(SolverConfig base) const {
  base.lambda = lambda;
  base.tau = tau;
  base.alpha = alpha;
  return base;
}

JfbResult jfb_gradient(const TrainableModel& model, Scheme scheme, const Image& x_hat, const Measurement& y,
                       const DataFidelity& f, const Image& x_star, const LearnFlags& flags) {
  require_same_shape(x_hat, x_star, "jfb_gradient");
  const bool prox = is_prox_scheme(scheme);
  const double lambda = model.lambda;
  const double tau = model.tau;
  const Image grad_g = model.reg.gradient(x_hat);

  JfbResult out;
  out.gradient = ParamVector::Zero(model.size());
  Image w;   // d loss / d (step input), per parameter path
  double d_tau = 0.0;
  if (prox) {
    const Image v = x_hat - tau * lambda * grad_g;
    out.output = f.prox(v, y, tau);
    const Image dl = (2.0 / static_cast<double>(x_hat.size())) * (out.output - x_star);
    const ProxSensitivity s = f.prox_sensitivity(v, y, tau, dl);
    w = s.input_adjoint;
    d_tau = s.tau_derivative - lambda * inner(grad_g, w);
  } else {
    const Image grad_f = f.gradient(x_hat, y);
    out.output = x_hat - tau * (grad_f + lambda * grad_g);
    w = (2.0 / static_cast<double>(x_hat.size())) * (out.output - x_star);
    d_tau = -inner(grad_f + lambda * grad_g, w);
  }
  out.loss = mse_loss(out.output, x_star);

  if (flags.theta || flags.sigma) {
    const ParamContraction c = model.reg.grad_contraction(x_hat, w);
    if (flags.theta) out.gradient.head(model.num_theta()) = -tau * lambda * c.params;
    if (flags.sigma) out.gradient(model.sigma_index()) = -tau * lambda * c.sigma * model.reg.sigma();
  }
  if (flags.lambda) out.gradient(model.lambda_index()) = -tau * inner(grad_g, w) * lambda;
  if (flags.tau) out.gradient(model.tau_index()) = d_tau * tau;
  // alpha: z = x_hat at (x_hat, x_hat), so its entry stays zero.

  if (!std::isfinite(out.loss) || !out.gradient.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite JFB gradient (loss " << out.loss << ", lambda " << lambda << ", tau " << tau << ", sigma "
        << model.reg.sigma() << ")";
    throw TrainingInstability(msg.str());
  }
  return out;
}

void adam_update(AdamState& state, ParamVector& params, const ParamVector& grad, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size() || grad.size() != params.size()) {
    throw ShapeMismatch("adam_update: state, parameters and gradient sizes differ");
  }
  ++state.t;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const ParamVector m_hat = state.m / c1;
  const ParamVector v_hat = state.v / c2;
  params.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + state.eps);
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (patience < 1 || patience > std::max(max_epochs, 1)) throw ConfigError("patience must lie in [1, max_epochs]");
}

Checkpoint Checkpoint::from_model(const TrainableModel& model, int epoch, double val_psnr, std::string rng_state) {
  Checkpoint c;
  c.shape = model.reg.net().shape();
  c.theta = model.reg.net().params();
  c.sigma = model.reg.sigma();
  c.lambda = model.lambda;
  c.tau = model.tau;
  c.alpha = model.alpha;
  c.epoch = epoch;
  c.val_psnr = val_psnr;
  c.rng_state = std::move(rng_state);
  return c;
}

TrainableModel Checkpoint::model() const {
  SmoothPotentialNet net(shape);
  net.set_params(theta);
  return TrainableModel{GradStepRegularizer(std::move(net), sigma), lambda, tau, alpha};
}

// Text header, one "key value" per line, then "params N" and N little-endian
// float64 values.
void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os << "IDEQCKPT 1\n";
  os << "channels";
  for (int c : shape.channels) os << ' ' << c;
  os << "\nnoise_channel " << (shape.noise_channel ? 1 : 0) << '\n';
  os << "padding " << (shape.padding == Padding::Wrap ? "wrap" : "zero") << '\n';
  os << "sigma " << hex(sigma) << "\nlambda " << hex(lambda) << "\ntau " << hex(tau) << "\nalpha " << hex(alpha)
     << '\n';
  os << "epoch " << epoch << "\nval_psnr " << hex(val_psnr) << '\n';
  os << "rng " << rng_state << '\n';
  os << "params " << theta.size() << '\n';
  for (Eigen::Index i = 0; i < theta.size(); ++i) write_le_double(os, theta(i));
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "IDEQCKPT 1") throw IoError("not a checkpoint: " + path.string());
  Checkpoint c;
  c.shape.channels.clear();
  for (;;) {
    if (!std::getline(is, line)) throw IoError("truncated checkpoint " + path.string());
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::string rest;
    std::getline(ls >> std::ws, rest);
    if (key == "channels") {
      std::istringstream cs(rest);
      for (int ch; cs >> ch;) c.shape.channels.push_back(ch);
    } else if (key == "noise_channel") {
      c.shape.noise_channel = rest == "1";
    } else if (key == "padding") {
      c.shape.padding = rest == "wrap" ? Padding::Wrap : Padding::Zero;
    } else if (key == "sigma") {
      c.sigma = parse_double(rest);
    } else if (key == "lambda") {
      c.lambda = parse_double(rest);
    } else if (key == "tau") {
      c.tau = parse_double(rest);
    } else if (key == "alpha") {
      c.alpha = parse_double(rest);
    } else if (key == "epoch") {
      c.epoch = std::stoi(rest);
    } else if (key == "val_psnr") {
      c.val_psnr = parse_double(rest);
    } else if (key == "rng") {
      c.rng_state = rest;
    } else if (key == "params") {
      const long n = std::stol(rest);
      c.theta.resize(n);
      for (long i = 0; i < n; ++i) c.theta(i) = read_le_double(is);
      break;
    } else {
      throw IoError("unknown checkpoint field '" + key + "'");
    }
  }
  return c;
}

const char* train_log_header() { return "epoch,train_loss,val_psnr,val_ssim,diverged_count,wall_time_s"; }

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << train_log_header() << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.train_loss << ',' << r.val_psnr << ',' << r.val_ssim << ',' << r.diverged_count << ','
       << r.wall_time_s << '\n';
  }
}

SolverConfig training_solver(const SolverConfig& solver) {
  SolverConfig c = solver;
  c.tolerance = 0.0;
  c.record_objective = false;
  return c;
}

EpochGradient epoch_gradient(const std::vector<Sample>& samples, const TrainableModel& model,
                             const SolverConfig& solver, const LearnFlags& flags) {
  const SolverConfig cfg = model.configure(training_solver(solver));
  CompensatedSum acc(model.size());
  EpochGradient out;
  double loss_comp = 0.0;
  for (const Sample& s : samples) {
    try {
      const SolveResult fwd = solve(s.y, *s.fidelity, model.reg, cfg, s.fidelity->initial_guess(s.y));
      const JfbResult j = jfb_gradient(model, cfg.scheme, fwd.x, s.y, *s.fidelity, s.x_true, flags);
      acc.add(j.gradient);
      // Same compensation for the scalar loss.
      const double t = out.loss_sum + j.loss;
      loss_comp += std::abs(out.loss_sum) >= std::abs(j.loss) ? (out.loss_sum - t) + j.loss : (j.loss - t) + out.loss_sum;
      out.loss_sum = t;
      ++out.used;
    } catch (const Diverged&) {
      ++out.diverged;
    } catch (const TrainingInstability&) {
      ++out.diverged;
    }
  }
  out.loss_sum += loss_comp;
  out.gradient = acc.result();
  return out;
}

Validation validate(const std::vector<Sample>& samples, const TrainableModel& model, const SolverConfig& solver) {
  const SolverConfig cfg = model.configure(training_solver(solver));
  Validation out;
  int used = 0;
  for (const Sample& s : samples) {
    try {
      const SolveResult r = solve(s.y, *s.fidelity, model.reg, cfg, s.fidelity->initial_guess(s.y));
      out.psnr += psnr(r.x, s.x_true);
      const SsimParams sp;
      out.ssim += (r.x.rows() >= sp.window && r.x.cols() >= sp.window) ? ssim(r.x, s.x_true, sp)
                                                                         : std::numeric_limits<double>::quiet_NaN();
      ++used;
    } catch (const Diverged&) {
      ++out.diverged;
    }
  }
  if (used == 0) {
    out.psnr = out.ssim = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.psnr /= used;
    out.ssim /= used;
  }
  return out;
}

TrainResult train_loop(const Dataset& data, const TrainableModel& init, const SolverConfig& solver,
                       const TrainConfig& config) {
  config.validate();
  solver.validate();
  is_prox_scheme(solver.scheme);
  if (config.learn.alpha && !(init.alpha < 1.0)) {
    throw ConfigError("learning alpha requires an initial alpha below 1");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  SeededRng rng(config.seed);

  TrainableModel model = init;
  ParamVector raw = model.raw();
  AdamState adam(model.size());

  TrainResult out{Checkpoint{}, model, {}};
  const Validation v0 = validate(data.val, model, solver);
  const EpochGradient g0 = epoch_gradient(data.train, model, solver, config.learn);
  out.log.push_back({0, g0.used > 0 ? g0.loss_sum / g0.used : std::numeric_limits<double>::quiet_NaN(), v0.psnr,
                     v0.ssim, g0.diverged + v0.diverged, elapsed()});
  out.best = Checkpoint::from_model(model, 0, v0.psnr, rng.state());
  int best_epoch = 0;
  double best_psnr = std::isnan(v0.psnr) ? -std::numeric_limits<double>::infinity() : v0.psnr;

  EpochGradient g = g0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (epoch > 1) g = epoch_gradient(data.train, model, solver, config.learn);
    if (g.used > 0) {
      adam_update(adam, raw, g.gradient, config.learning_rate);
      model.set_raw(raw, config.learn);
    }
    const Validation v = validate(data.val, model, solver);
    out.log.push_back({epoch, g.used > 0 ? g.loss_sum / g.used : std::numeric_limits<double>::quiet_NaN(), v.psnr,
                       v.ssim, g.diverged + v.diverged, elapsed()});
    if (v.psnr > best_psnr) {
      best_psnr = v.psnr;
      best_epoch = epoch;
      out.best = Checkpoint::from_model(model, epoch, v.psnr, rng.state());
    }
    if (epoch - best_epoch >= config.patience) break;
  }
  out.final_model = model;
  return out;
}

}  // namespace ideq
