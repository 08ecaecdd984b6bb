#pragma once

#include "ideq/fidelity.hpp"
#include "ideq/regularizer.hpp"

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ideq {

enum class Scheme { IdeqGrad, IdeqProx, Red, RedProx, DeqBacktracking, Modl, Varnet };

// Full: x_prev, x_curr and k reset (gradient flavor). ShiftOnly: only
// x_prev <- x_curr, k keeps counting (prox flavor). Auto picks by scheme.
enum class RestartRule { Auto, Full, ShiftOnly };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& name);
std::string to_string(RestartRule r);
RestartRule parse_restart_rule(const std::string& name);

inline constexpr double kNoRestart = std::numeric_limits<double>::infinity();
inline constexpr int kUnrolledSteps = 6;

struct SolverConfig {
  double lambda = 0.65;
  double tau = 0.5;
  double alpha = 0.2;
  double restart_budget = 5000.0;  // B; kNoRestart disables restarts
  int max_iter = 100;              // K, steps per restart window
  double tolerance = 1e-4;         // relative residual stop; 0 disables
  bool averaging = false;
  Scheme scheme = Scheme::IdeqGrad;
  RestartRule restart_rule = RestartRule::Auto;
  // Cap on total steps across restart windows; 0 selects 4 * max_iter.
  int max_total_iter = 0;
  // Evaluate F and |grad F| at every iterate for the trajectory.
  bool record_objective = true;

  void validate() const;
  RestartRule effective_restart_rule() const;
  int total_iter_cap() const;
};

struct IterateState {
  Image x_prev;
  Image x_curr;
  int k_since_restart = 0;
  double increment_sq_sum = 0.0;
  std::vector<Image> z_history;       // z^0.. since the last restart
  std::vector<double> increment_norms;  // |x^{k+1} - x^k| since the last restart

  explicit IterateState(const Image& x0) : x_prev(x0), x_curr(x0) {}

  // Records x^{k+1} after a step from z^k.
  void advance(const Image& x_next, const Image* z);
  // Applies a restart event under the given semantics.
  void restart(RestartRule rule);
};

struct TrajectoryRecord {
  long iter = 0;
  int k_local = 0;
  double residual = 0.0;
  double rel_residual = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  double grad_norm_z = std::numeric_limits<double>::quiet_NaN();  // |grad F| at the extrapolated point
  bool restart = false;
  double step_size = std::numeric_limits<double>::quiet_NaN();  // accepted tau (backtracking only)
  double time_s = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  std::vector<std::string> warnings;

  std::size_t size() const { return records.size(); }
  int restarts() const;
  // Index of the first record with rel_residual < eps, if any.
  std::optional<long> iterations_to(double eps) const;

  static const char* csv_header();
  void write_csv(std::ostream& os) const;
  void write_csv(const std::string& path) const;
};

struct SolveResult {
  Image x;
  Trajectory trajectory;
  std::optional<int> averaging_index;  // K0 when averaging was applied
};

// A non-finite iterate; the trajectory up to the failure is preserved.
class Diverged : public Error {
 public:
  Diverged(const std::string& what, Trajectory partial) : Error(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

// z = x + (1 - alpha)(x - x_prev).
Image momentum_extrapolate(const Image& x_curr, const Image& x_prev, double alpha);

// z - tau (grad f(z) + lambda grad g(z)).
Image red_step(const Image& z, const Measurement& y, const DataFidelity& f, const Regularizer& g, double lambda,
               double tau);

// prox_{tau f}(z - tau lambda grad g(z)).
Image redp_step(const Image& z, const Measurement& y, const DataFidelity& f, const Regularizer& g, double lambda,
                double tau);

// k * sum |x^{t+1} - x^t|^2 > B^2.
bool restart_check(int k_since_restart, double increment_sq_sum, double restart_budget);
bool restart_check(const IterateState& state, double restart_budget);

struct AveragingResult {
  std::optional<int> k0;  // empty when the window was too short
  Image x_hat;
};

// K0 = argmin over floor(K/2) < k < K-1 of increments[k] (lowest k on ties),
// x_hat = mean of z^0..z^K0. Falls back to `last` when the range is empty.
AveragingResult averaging_select(const std::vector<Image>& z_history, const std::vector<double>& increments, int K,
                                 const Image& last);

struct Objective {
  double value = 0.0;
  double grad_norm = 0.0;
  Image gradient;
};

Objective objective_and_gradnorm(const Image& x, const Measurement& y, const DataFidelity& f, const Regularizer& g,
                                 double lambda);

// i-DEQ forward pass (ideq-grad / ideq-prox).
SolveResult ideq_solve(const Measurement& y, const DataFidelity& f, const Regularizer& g, const SolverConfig& config,
                       const Image& x0);

// Plain fixed-step RED (red) or RED-P (red-prox) iteration.
SolveResult red_solve(const Measurement& y, const DataFidelity& f, const Regularizer& g, const SolverConfig& config,
                      const Image& x0);

struct BacktrackingParams {
  double growth = 2.0;
  double shrink = 0.5;
  double armijo = 1e-4;
  double tau_floor = 1e-8;
  double roundoff = 1e-14;  // relative slack on F in the sufficient-decrease test
};

// RED with per-step Armijo backtracking on F = f + lambda g.
SolveResult deq_baseline_solve(const Measurement& y, const DataFidelity& f, const Regularizer& g,
                               const SolverConfig& config, const Image& x0, const BacktrackingParams& bt = {});

// MoDL: N(prox_{tau f}(x)); VarNet: x - tau grad f(x) - N(x).
Image unrolled_step(Scheme kind, const Image& x, const Measurement& y, const DataFidelity& f,
                    const GradStepRegularizer& reg, double tau);

// kUnrolledSteps unrolled updates.
SolveResult unrolled_solve(const Measurement& y, const DataFidelity& f, const GradStepRegularizer& reg,
                           const SolverConfig& config, const Image& x0);

// Dispatch on config.scheme.
SolveResult solve(const Measurement& y, const DataFidelity& f, const Regularizer& g, const SolverConfig& config,
                  const Image& x0);

}  // namespace ideq
