#pragma once

#include "ideq/solver.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace ideq {

// Non-finite loss or gradient during the backward pass.
struct TrainingInstability : Error {
  using Error::Error;
};

double mse_loss(const Image& x, const Image& ref);

struct LearnFlags {
  bool theta = true;
  bool lambda = true;
  bool tau = true;
  bool alpha = true;
  bool sigma = true;
};

// Learnable parameters Theta = {theta, lambda, tau, alpha, sigma}. The
// optimizer sees the raw vector [theta, log lambda, log tau, logit alpha,
// log sigma], so every Adam step keeps lambda, tau, sigma > 0 and alpha in (0, 1).
struct TrainableModel {
  GradStepRegularizer reg;
  double lambda = 0.83;
  double tau = 0.1;
  double alpha = 0.2;

  Eigen::Index num_theta() const { return reg.net().num_params(); }
  Eigen::Index size() const { return num_theta() + 4; }
  Eigen::Index lambda_index() const { return num_theta(); }
  Eigen::Index tau_index() const { return num_theta() + 1; }
  Eigen::Index alpha_index() const { return num_theta() + 2; }
  Eigen::Index sigma_index() const { return num_theta() + 3; }

  ParamVector raw() const;
  // Writes back only the entries selected by `flags`.
  void set_raw(const ParamVector& raw, const LearnFlags& flags);
  // Copies lambda, tau, alpha into a solver configuration.
  SolverConfig configure(SolverConfig base) const;
};

struct JfbResult {
  double loss = 0.0;
  Image output;        // T(x_hat, x_hat)
  ParamVector gradient;  // d loss / d raw parameters, zero where not learned
};

// Gradient of mse(T(x_hat, x_hat), x_star) with x_hat held fixed, where T is one
// step of the scheme's operator (gradient step for ideq-grad / red, prox step
// for ideq-prox / red-prox). The inertial term vanishes at (x_hat, x_hat), so
// the alpha entry is always zero.
JfbResult jfb_gradient(const TrainableModel& model, Scheme scheme, const Image& x_hat, const Measurement& y,
                       const DataFidelity& f, const Image& x_star, const LearnFlags& flags = {});

struct AdamState {
  ParamVector m;
  ParamVector v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(ParamVector::Zero(n)), v(ParamVector::Zero(n)) {}
};

// Bias-corrected Adam step, in place.
void adam_update(AdamState& state, ParamVector& params, const ParamVector& grad, double lr);

struct Sample {
  std::shared_ptr<const DataFidelity> fidelity;
  Measurement y;
  Image x_true;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

struct TrainConfig {
  double learning_rate = 1e-5;
  int max_epochs = 500;
  int patience = 25;
  LearnFlags learn;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Checkpoint {
  NetShape shape;
  ParamVector theta;
  double sigma = 0.0;
  double lambda = 0.0;
  double tau = 0.0;
  double alpha = 0.0;
  int epoch = 0;
  double val_psnr = 0.0;
  std::string rng_state;

  static Checkpoint from_model(const TrainableModel& model, int epoch, double val_psnr, std::string rng_state);
  TrainableModel model() const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

struct TrainLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  int diverged_count = 0;
  double wall_time_s = 0.0;
};

const char* train_log_header();
void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows);

struct EpochGradient {
  ParamVector gradient;  // compensated sum over samples
  double loss_sum = 0.0;
  int used = 0;
  int diverged = 0;
};

// Forward solve (fixed budget, no residual stop) plus JFB for each sample.
EpochGradient epoch_gradient(const std::vector<Sample>& samples, const TrainableModel& model,
                             const SolverConfig& solver, const LearnFlags& flags);

struct Validation {
  double psnr = 0.0;  // mean over non-diverged samples
  double ssim = 0.0;
  int diverged = 0;
};

Validation validate(const std::vector<Sample>& samples, const TrainableModel& model, const SolverConfig& solver);

// Forward settings used during training: residual stop off, no objective logging.
SolverConfig training_solver(const SolverConfig& solver);

struct TrainResult {
  Checkpoint best;
  TrainableModel final_model;
  std::vector<TrainLogRow> log;  // row 0 is the initialization
};

TrainResult train_loop(const Dataset& data, const TrainableModel& init, const SolverConfig& solver,
                       const TrainConfig& config);

}  // namespace ideq
