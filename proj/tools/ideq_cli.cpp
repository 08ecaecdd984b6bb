#include "ideq/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace ideq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string scheme;
  std::vector<std::string> overrides;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "key = value experiment file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "override the data seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--scheme", o.scheme, "override the solver scheme");
  cmd->add_option("--set", o.overrides, "extra key=value override, repeatable");
}

// Overrides are appended as extra lines so a problem override still selects
// that problem's defaults.
ExperimentConfig load_config(const RunOptions& o) {
  std::stringstream text;
  if (!o.config.empty()) {
    std::ifstream is(o.config);
    if (!is) throw ConfigError("cannot read config " + o.config);
    text << is.rdbuf() << '\n';
  }
  for (const auto& kv : o.overrides) {
    if (kv.find('=') == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    text << kv << '\n';
  }
  if (o.seed) text << "seed = " << *o.seed << '\n';
  if (!o.out.empty()) text << "out_dir = " << o.out << '\n';
  if (!o.scheme.empty()) text << "scheme = " << o.scheme << '\n';
  return ExperimentConfig::parse(text);
}

int run_solve(const RunOptions& o) {
  const ExperimentConfig c = load_config(o);
  const SolveRun run = cmd_solve(c);
  for (const auto& s : run.summaries) std::cout << format_summary(s) << '\n';
  return run.any_diverged ? kExitDiverged : kExitOk;
}

int run_train(const RunOptions& o) {
  const ExperimentConfig c = load_config(o);
  const TrainResult r = cmd_train(c);
  for (const auto& row : r.log) {
    std::cout << "epoch=" << row.epoch << " loss=" << row.train_loss << " val_psnr=" << row.val_psnr
              << " val_ssim=" << row.val_ssim << " diverged=" << row.diverged_count << '\n';
  }
  std::cout << "best epoch " << r.best.epoch << " val_psnr=" << r.best.val_psnr << '\n';
  return kExitOk;
}

int run_bench(const RunOptions& o) {
  const ExperimentConfig c = load_config(o);
  const BenchResult r = cmd_bench(c);
  for (const auto& s : r.summary) {
    std::cout << s.scheme << ": psnr=" << s.mean_psnr << " ssim=" << s.mean_ssim
              << " iters_to_eps=" << s.mean_iterations_to_eps << " wall=" << s.mean_wall_time_s
              << " diverged=" << s.diverged << (s.all_diverged ? " (ALL DIVERGED)" : "") << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"implicit DEQ solvers for imaging inverse problems"};
  app.require_subcommand(1);

  std::string kind = "piecewise-constant";
  int count = 16;
  int size = 16;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "data";
  auto* gen = app.add_subcommand("gen-data", "write synthetic PGM phantoms");
  gen->add_option("--kind", kind, "piecewise-constant, smooth-bump or shepp-like");
  gen->add_option("--count", count, "number of images");
  gen->add_option("--size", size, "image side length");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory");

  RunOptions solve_opts, train_opts, bench_opts;
  auto* solve = app.add_subcommand("solve", "reconstruct each instance");
  add_run_options(solve, solve_opts);
  auto* train = app.add_subcommand("train", "fit the regularizer and step parameters");
  add_run_options(train, train_opts);
  auto* bench = app.add_subcommand("bench", "compare schemes on one dataset");
  add_run_options(bench, bench_opts);

  std::string trajectory;
  long begin = 0, end = 0;
  auto* rate = app.add_subcommand("rate-fit", "log-log slope of the running-min gradient norm");
  rate->add_option("trajectory", trajectory, "trajectory CSV")->required()->check(CLI::ExistingFile);
  rate->add_option("--begin", begin, "first iteration of the window (default: end/10)");
  rate->add_option("--end", end, "last iteration of the window (default: last)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      const auto paths = gen_data(parse_phantom(kind), count, size, gen_seed, gen_out);
      std::cout << "wrote " << paths.size() << " images to " << gen_out << '\n';
      return kExitOk;
    }
    if (*solve) return run_solve(solve_opts);
    if (*train) return run_train(train_opts);
    if (*bench) return run_bench(bench_opts);
    if (*rate) {
      const RateFit f = rate_fit(read_trajectory_grad_norms(trajectory), begin, end);
      std::cout << "slope=" << f.slope << " intercept=" << f.intercept << " r2=" << f.r2 << " window=["
                << f.window_begin << ", " << f.window_end << "]\n";
      return kExitOk;
    }
  } catch (const Diverged& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const TrainingInstability& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
