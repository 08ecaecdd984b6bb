#include "ideq/solver.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace ideq {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double relative(double residual, double scale) {
  if (scale > 0.0) return residual / scale;
  return residual == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

void fill_objective(TrajectoryRecord& rec, const Image& x, const Measurement& y, const DataFidelity& f,
                    const Regularizer& g, double lambda) {
  const Objective obj = objective_and_gradnorm(x, y, f, g, lambda);
  rec.objective = obj.value;
  rec.grad_norm = obj.grad_norm;
}

void require_finite(const Image& x, long iter, const Trajectory& traj) {
  if (!all_finite(x)) {
    throw Diverged("non-finite iterate at step " + std::to_string(iter), traj);
  }
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::IdeqGrad: return "ideq-grad";
    case Scheme::IdeqProx: return "ideq-prox";
    case Scheme::Red: return "red";
    case Scheme::RedProx: return "red-prox";
    case Scheme::DeqBacktracking: return "deq-backtracking";
    case Scheme::Modl: return "modl";
    case Scheme::Varnet: return "varnet";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  for (Scheme s : {Scheme::IdeqGrad, Scheme::IdeqProx, Scheme::Red, Scheme::RedProx, Scheme::DeqBacktracking,
                   Scheme::Modl, Scheme::Varnet}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown scheme '" + name + "'");
}

std::string to_string(RestartRule r) {
  switch (r) {
    case RestartRule::Auto: return "auto";
    case RestartRule::Full: return "full";
    case RestartRule::ShiftOnly: return "shift";
  }
  return "?";
}

RestartRule parse_restart_rule(const std::string& name) {
  for (RestartRule r : {RestartRule::Auto, RestartRule::Full, RestartRule::ShiftOnly}) {
    if (to_string(r) == name) return r;
  }
  throw ConfigError("unknown restart rule '" + name + "'");
}

void SolverConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be finite and > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (!(restart_budget >= 0.0)) throw ConfigError("restart budget B must be >= 0");
  if (max_iter < 1) throw ConfigError("K must be >= 1");
  if (!(tolerance >= 0.0)) throw ConfigError("tolerance must be >= 0");
  if (max_total_iter < 0) throw ConfigError("max_total_iter must be >= 0");
}

RestartRule SolverConfig::effective_restart_rule() const {
  if (restart_rule != RestartRule::Auto) return restart_rule;
  return scheme == Scheme::IdeqProx ? RestartRule::ShiftOnly : RestartRule::Full;
}

int SolverConfig::total_iter_cap() const { return max_total_iter > 0 ? max_total_iter : 4 * max_iter; }

void IterateState::advance(const Image& x_next, const Image* z) {
  const double inc = norm(x_next - x_curr);
  increment_sq_sum += inc * inc;
  increment_norms.push_back(inc);
  if (z != nullptr) z_history.push_back(*z);
  x_prev = x_curr;
  x_curr = x_next;
  ++k_since_restart;
}

void IterateState::restart(RestartRule rule) {
  x_prev = x_curr;
  increment_sq_sum = 0.0;
  if (rule != RestartRule::ShiftOnly) {
    k_since_restart = 0;
    z_history.clear();
    increment_norms.clear();
  }
}

int Trajectory::restarts() const {
  int n = 0;
  for (const auto& r : records) n += r.restart ? 1 : 0;
  return n;
}

std::optional<long> Trajectory::iterations_to(double eps) const {
  for (const auto& r : records) {
    if (r.rel_residual < eps) return r.iter;
  }
  return std::nullopt;
}

const char* Trajectory::csv_header() { return "iter,k_local,residual,rel_residual,objective,grad_norm,restart,time_s"; }

void Trajectory::write_csv(std::ostream& os) const {
  os << csv_header() << '\n';
  os << std::setprecision(17);
  for (const auto& r : records) {
    os << r.iter << ',' << r.k_local << ',' << r.residual << ',' << r.rel_residual << ',' << r.objective << ','
       << r.grad_norm << ',' << (r.restart ? 1 : 0) << ',' << r.time_s << '\n';
  }
}

void Trajectory::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  write_csv(os);
}

Image momentum_extrapolate(const Image& x_curr, const Image& x_prev, double alpha) {
  require_same_shape(x_curr, x_prev, "momentum_extrapolate");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("momentum_extrapolate: alpha must lie in (0, 1]");
  if (alpha == 1.0) return x_curr;
  return x_curr + (1.0 - alpha) * (x_curr - x_prev);
}

Image red_step(const Image& z, const Measurement& y, const DataFidelity& f, const Regularizer& g, double lambda,
               double tau) {
  return z - tau * (f.gradient(z, y) + lambda * g.gradient(z));
}

Image redp_step(const Image& z, const Measurement& y, const DataFidelity& f, const Regularizer& g, double lambda,
                double tau) {
  if (!f.has_closed_prox()) throw UnsupportedOperation(f.name() + " fidelity has no closed-form prox");
  return f.prox(z - tau * lambda * g.gradient(z), y, tau);
}

bool restart_check(int k_since_restart, double increment_sq_sum, double restart_budget) {
  if (std::isinf(restart_budget)) return false;
  return static_cast<double>(k_since_restart) * increment_sq_sum > restart_budget * restart_budget;
}

bool restart_check(const IterateState& state, double restart_budget) {
  return restart_check(state.k_since_restart, state.increment_sq_sum, restart_budget);
}

AveragingResult averaging_select(const std::vector<Image>& z_history, const std::vector<double>& increments, int K,
                                 const Image& last) {
  const int lo = K / 2 + 1;
  const int hi = std::min({K - 2, static_cast<int>(increments.size()) - 1, static_cast<int>(z_history.size()) - 1});
  if (lo > hi) return {std::nullopt, last};
  int k0 = lo;
  for (int k = lo + 1; k <= hi; ++k) {
    if (increments[k] < increments[k0]) k0 = k;
  }
  Image sum = z_history[0];
  for (int k = 1; k <= k0; ++k) sum += z_history[k];
  return {k0, sum / static_cast<double>(k0 + 1)};
}

Objective objective_and_gradnorm(const Image& x, const Measurement& y, const DataFidelity& f, const Regularizer& g,
                                 double lambda) {
  Objective out;
  if (lambda == 0.0) {
    out.value = f.value(x, y);
    out.gradient = f.gradient(x, y);
  } else {
    const PotentialEval reg = g.evaluate(x);
    out.value = f.value(x, y) + lambda * reg.value;
    out.gradient = f.gradient(x, y) + lambda * reg.gradient;
  }
  out.grad_norm = norm(out.gradient);
  return out;
}

SolveResult ideq_solve(const Measurement& y, const DataFidelity& f, const Regularizer& g, const SolverConfig& config,
                       const Image& x0) {
  config.validate();
  const bool prox = config.scheme == Scheme::IdeqProx;
  if (!prox && config.scheme != Scheme::IdeqGrad) {
    throw ConfigError("ideq_solve: scheme must be ideq-grad or ideq-prox, got " + to_string(config.scheme));
  }
  if (prox && !f.has_closed_prox()) throw UnsupportedOperation(f.name() + " fidelity has no closed-form prox");
  if (!all_finite(x0)) throw DomainError("ideq_solve: non-finite initial iterate");

  const RestartRule rule = config.effective_restart_rule();
  const int cap = config.total_iter_cap();
  const auto start = Clock::now();
  SolveResult out;
  Trajectory& traj = out.trajectory;
  IterateState st(x0);
  bool converged = false;
  bool window_complete = false;

  for (long iter = 0; iter < cap; ++iter) {
    const Image z = momentum_extrapolate(st.x_curr, st.x_prev, config.alpha);
    const Image x_next = prox ? redp_step(z, y, f, g, config.lambda, config.tau)
                              : red_step(z, y, f, g, config.lambda, config.tau);
    require_finite(x_next, iter, traj);

    TrajectoryRecord rec;
    rec.iter = iter;
    rec.residual = norm(x_next - st.x_curr);
    rec.rel_residual = relative(rec.residual, norm(st.x_curr));
    if (config.record_objective) {
      fill_objective(rec, x_next, y, f, g, config.lambda);
      rec.grad_norm_z = objective_and_gradnorm(z, y, f, g, config.lambda).grad_norm;
    }
    st.advance(x_next, config.averaging ? &z : nullptr);

    converged = config.tolerance > 0.0 && rec.rel_residual < config.tolerance;
    if (!converged && restart_check(st, config.restart_budget)) {
      st.restart(rule);
      rec.restart = true;
    }
    rec.k_local = st.k_since_restart;
    rec.time_s = seconds_since(start);
    traj.records.push_back(rec);

    if (converged) break;
    if (st.k_since_restart >= config.max_iter) {
      window_complete = true;
      break;
    }
  }

  if (!converged && !window_complete) {
    traj.warnings.push_back("total iteration cap " + std::to_string(cap) + " reached before a full window of K=" +
                            std::to_string(config.max_iter) + " steps");
  }
  out.x = st.x_curr;
  if (config.averaging && window_complete) {
    AveragingResult avg = averaging_select(st.z_history, st.increment_norms, config.max_iter, st.x_curr);
    if (!avg.k0) {
      traj.warnings.push_back("averaging window empty for K=" + std::to_string(config.max_iter) +
                              "; using the last iterate");
    }
    out.averaging_index = avg.k0;
    out.x = std::move(avg.x_hat);
  }
  return out;
}

SolveResult red_solve(const Measurement& y, const DataFidelity& f, const Regularizer& g, const SolverConfig& config,
                      const Image& x0) {
  config.validate();
  const bool prox = config.scheme == Scheme::RedProx;
  if (!prox && config.scheme != Scheme::Red) {
    throw ConfigError("red_solve: scheme must be red or red-prox, got " + to_string(config.scheme));
  }
  const auto start = Clock::now();
  SolveResult out;
  Image x = x0;
  for (long iter = 0; iter < config.max_iter; ++iter) {
    Image x_next = prox ? redp_step(x, y, f, g, config.lambda, config.tau)
                        : red_step(x, y, f, g, config.lambda, config.tau);
    require_finite(x_next, iter, out.trajectory);
    TrajectoryRecord rec;
    rec.iter = iter;
    rec.k_local = static_cast<int>(iter + 1);
    rec.residual = norm(x_next - x);
    rec.rel_residual = relative(rec.residual, norm(x));
    if (config.record_objective) {
      fill_objective(rec, x_next, y, f, g, config.lambda);
      rec.grad_norm_z = rec.grad_norm;
    }
    x = std::move(x_next);
    rec.time_s = seconds_since(start);
    out.trajectory.records.push_back(rec);
    if (config.tolerance > 0.0 && rec.rel_residual < config.tolerance) break;
  }
  out.x = std::move(x);
  return out;
}

SolveResult deq_baseline_solve(const Measurement& y, const DataFidelity& f, const Regularizer& g,
                               const SolverConfig& config, const Image& x0, const BacktrackingParams& bt) {
  config.validate();
  const auto start = Clock::now();
  SolveResult out;
  Image x = x0;
  Objective cur = objective_and_gradnorm(x, y, f, g, config.lambda);
  if (!std::isfinite(cur.value)) throw Diverged("non-finite objective at the initial iterate", out.trajectory);
  double tau = config.tau;
  for (long iter = 0; iter < config.max_iter; ++iter) {
    const double decrease = bt.armijo * cur.grad_norm * cur.grad_norm;
    Image x_next;
    Objective next;
    for (;;) {
      x_next = x - tau * cur.gradient;
      if (all_finite(x_next)) {
        next = objective_and_gradnorm(x_next, y, f, g, config.lambda);
        if (std::isfinite(next.value) && next.value <= cur.value - tau * decrease) break;
        // Near a minimizer the decrease falls below the resolution of F. Then
        // use the derivative form of the same condition (exact for
        // quadratics) and only ask F not to grow beyond round-off.
        const double g2 = cur.grad_norm * cur.grad_norm;
        if (std::isfinite(next.value) && next.value <= cur.value + bt.roundoff * std::abs(cur.value) &&
            inner(next.gradient, cur.gradient) >= -(1.0 - 2.0 * bt.armijo) * g2) {
          break;
        }
      }
      tau *= bt.shrink;
      if (tau < bt.tau_floor) {
        throw Diverged("backtracking step size fell below " + std::to_string(bt.tau_floor) + " at step " +
                           std::to_string(iter),
                       out.trajectory);
      }
    }
    TrajectoryRecord rec;
    rec.iter = iter;
    rec.k_local = static_cast<int>(iter + 1);
    rec.residual = norm(x_next - x);
    rec.rel_residual = relative(rec.residual, norm(x));
    rec.objective = next.value;
    rec.grad_norm = next.grad_norm;
    rec.grad_norm_z = next.grad_norm;
    rec.step_size = tau;
    rec.time_s = seconds_since(start);
    out.trajectory.records.push_back(rec);
    x = std::move(x_next);
    cur = std::move(next);
    tau *= bt.growth;
    if (config.tolerance > 0.0 && rec.rel_residual < config.tolerance) break;
  }
  out.x = std::move(x);
  return out;
}

Image unrolled_step(Scheme kind, const Image& x, const Measurement& y, const DataFidelity& f,
                    const GradStepRegularizer& reg, double tau) {
  switch (kind) {
    case Scheme::Modl:
      if (!f.has_closed_prox()) throw UnsupportedOperation("modl: " + f.name() + " fidelity has no closed-form prox");
      return reg.net_output(f.prox(x, y, tau));
    case Scheme::Varnet:
      return x - tau * f.gradient(x, y) - reg.net_output(x);
    default:
      throw ConfigError("unrolled_step: scheme must be modl or varnet, got " + to_string(kind));
  }
}

SolveResult unrolled_solve(const Measurement& y, const DataFidelity& f, const GradStepRegularizer& reg,
                           const SolverConfig& config, const Image& x0) {
  config.validate();
  const auto start = Clock::now();
  SolveResult out;
  Image x = x0;
  for (long iter = 0; iter < kUnrolledSteps; ++iter) {
    Image x_next = unrolled_step(config.scheme, x, y, f, reg, config.tau);
    require_finite(x_next, iter, out.trajectory);
    TrajectoryRecord rec;
    rec.iter = iter;
    rec.k_local = static_cast<int>(iter + 1);
    rec.residual = norm(x_next - x);
    rec.rel_residual = relative(rec.residual, norm(x));
    if (config.record_objective) fill_objective(rec, x_next, y, f, reg, config.lambda);
    x = std::move(x_next);
    rec.time_s = seconds_since(start);
    out.trajectory.records.push_back(rec);
  }
  out.x = std::move(x);
  return out;
}

SolveResult solve(const Measurement& y, const DataFidelity& f, const Regularizer& g, const SolverConfig& config,
                  const Image& x0) {
  switch (config.scheme) {
    case Scheme::IdeqGrad:
    case Scheme::IdeqProx:
      return ideq_solve(y, f, g, config, x0);
    case Scheme::Red:
    case Scheme::RedProx:
      return red_solve(y, f, g, config, x0);
    case Scheme::DeqBacktracking:
      return deq_baseline_solve(y, f, g, config, x0);
    case Scheme::Modl:
    case Scheme::Varnet: {
      const auto* reg = dynamic_cast<const GradStepRegularizer*>(&g);
      if (reg == nullptr) throw ConfigError(to_string(config.scheme) + " requires a gradstep regularizer");
      return unrolled_solve(y, f, *reg, config, x0);
    }
  }
  throw ConfigError("unknown scheme");
}

}  // namespace ideq
