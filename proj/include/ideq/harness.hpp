#pragma once

#include "ideq/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace ideq {

enum class Problem { Mri, Inpainting, Rician };
enum class PhantomKind { PiecewiseConstant, SmoothBump, SheppLike };
enum class RegularizerKind { GradStep, Tikhonov, Tv };

std::string to_string(Problem p);
std::string to_string(PhantomKind k);
std::string to_string(RegularizerKind k);
Problem parse_problem(const std::string& s);
PhantomKind parse_phantom(const std::string& s);
RegularizerKind parse_regularizer(const std::string& s);

// Flat key=value experiment description. Unknown keys are rejected; every
// field has a default, and `problem` selects the per-problem defaults.
struct ExperimentConfig {
  Problem problem = Problem::Inpainting;
  // forward model
  double acceleration = 8.0;
  int center_band = 0;
  double keep_probability = 0.5;
  double noise_level = 1.0 / 255.0;
  // data
  PhantomKind data = PhantomKind::PiecewiseConstant;
  std::string data_dir;  // PGM directory; empty means synthetic
  int image_size = 16;
  int count = 4;
  int val_count = 4;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  // solver
  SolverConfig solver;
  // regularizer
  RegularizerKind regularizer = RegularizerKind::GradStep;
  double reg_param = 1.0;  // mu for tikhonov, delta for tv
  double sigma = 0.03;
  std::string checkpoint;
  std::uint64_t net_seed = 1;
  std::vector<int> net_channels{1, 8, 8, 1};
  // training
  TrainConfig train;
  // bench
  std::vector<Scheme> bench_schemes{Scheme::IdeqGrad, Scheme::Red};

  static ExperimentConfig defaults(Problem p);
  static ExperimentConfig parse(std::istream& is);
  static ExperimentConfig parse_file(const std::filesystem::path& path);
  void serialize(std::ostream& os) const;
  void set(const std::string& key, const std::string& value);
  void validate() const;
  bool operator==(const ExperimentConfig& other) const;
};

// Deterministic phantoms in [0, 1], quantized to multiples of 1/255.
Image generate_phantom(PhantomKind kind, int size, SeededRng& rng);
// Writes img_0000.pgm ... into `dir`; returns the written paths.
std::vector<std::filesystem::path> gen_data(PhantomKind kind, int count, int size, std::uint64_t seed,
                                            const std::filesystem::path& dir);
std::vector<Image> load_images(const std::filesystem::path& dir);

std::shared_ptr<DataFidelity> make_fidelity(const ExperimentConfig& cfg, int rows, int cols, SeededRng& rng);
// `count` instances (then `val_count` more when `with_val`), simulated from
// the configured images with the config seed.
Dataset build_dataset(const ExperimentConfig& cfg, bool with_val);
// GradStep from the checkpoint when given (which then also supplies lambda,
// tau, alpha), else a seeded random net; or an analytic potential.
std::unique_ptr<Regularizer> make_regularizer(const ExperimentConfig& cfg, SolverConfig* solver = nullptr);
TrainableModel make_trainable(const ExperimentConfig& cfg);

struct SolveSummary {
  int instance = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  long iterations = 0;
  int restarts = 0;
  double wall_time_s = 0.0;
  double final_grad_norm = 0.0;
  bool diverged = false;
};

const char* solve_summary_header();
std::string format_summary(const SolveSummary& s);

struct SolveRun {
  std::vector<SolveSummary> summaries;
  std::vector<Image> reconstructions;
  bool any_diverged = false;
};

// Writes recon_i.pgm, recon_i.f64, trajectory_i.csv and summary.csv under out_dir.
SolveRun cmd_solve(const ExperimentConfig& cfg);

// Writes best.ckpt and train_log.csv under out_dir.
TrainResult cmd_train(const ExperimentConfig& cfg);

struct BenchRow {
  std::string scheme;
  int instance = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  long iterations = 0;
  long iterations_to_eps = -1;  // -1 when the tolerance was never reached
  double wall_time_s = 0.0;
  bool diverged = false;
};

struct BenchSummary {
  std::string scheme;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_iterations_to_eps = 0.0;
  double mean_wall_time_s = 0.0;
  int diverged = 0;
  bool all_diverged = false;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<BenchSummary> summary;
};

const char* bench_header();
const char* bench_summary_header();
// Writes bench.csv and bench_summary.csv under out_dir.
BenchResult cmd_bench(const ExperimentConfig& cfg);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  long window_begin = 0;  // 1-based iteration counts, inclusive
  long window_end = 0;
};

// OLS of log(min_{k<=n} g_k) on log n for n in [begin, end] (1-based). The
// series is truncated at the first nonpositive or non-finite value; begin = 0
// selects the final decade [end/10, end].
RateFit rate_fit(const std::vector<double>& grad_norms, long window_begin = 0, long window_end = 0);
std::vector<double> read_trajectory_grad_norms(const std::filesystem::path& csv);

}  // namespace ideq
