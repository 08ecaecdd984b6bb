#include "ideq/harness.hpp"

#include "ideq/io.hpp"
#include "ideq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ideq {
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return i;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  if (v.empty() || v[0] == '-') throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  const unsigned long long i = std::strtoull(v.c_str(), &end, 10);
  if (*end != '\0') throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define IDEQ_DOUBLE(name, member)                                                \
  Field {                                                                        \
    name, [](const ExperimentConfig& c) { return fmt(c.member); },               \
        [](ExperimentConfig& c, const std::string& v) { c.member = to_double(name, v); } \
  }
#define IDEQ_INT(name, member)                                                                 \
  Field {                                                                                      \
    name, [](const ExperimentConfig& c) { return std::to_string(c.member); },                  \
        [](ExperimentConfig& c, const std::string& v) { c.member = static_cast<int>(to_int(name, v)); } \
  }
#define IDEQ_BOOL(name, member)                                                 \
  Field {                                                                       \
    name, [](const ExperimentConfig& c) { return from_bool(c.member); },        \
        [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(name, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"problem", [](const ExperimentConfig& c) { return to_string(c.problem); },
       [](ExperimentConfig& c, const std::string& v) { c.problem = parse_problem(v); }},
      IDEQ_DOUBLE("acceleration", acceleration),
      IDEQ_INT("center_band", center_band),
      IDEQ_DOUBLE("keep_probability", keep_probability),
      IDEQ_DOUBLE("noise_level", noise_level),
      {"data", [](const ExperimentConfig& c) { return to_string(c.data); },
       [](ExperimentConfig& c, const std::string& v) { c.data = parse_phantom(v); }},
      {"data_dir", [](const ExperimentConfig& c) { return c.data_dir; },
       [](ExperimentConfig& c, const std::string& v) { c.data_dir = v; }},
      IDEQ_INT("image_size", image_size),
      IDEQ_INT("count", count),
      IDEQ_INT("val_count", val_count),
      {"seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
       [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }},
      {"out_dir", [](const ExperimentConfig& c) { return c.out_dir; },
       [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; }},
      {"scheme", [](const ExperimentConfig& c) { return to_string(c.solver.scheme); },
       [](ExperimentConfig& c, const std::string& v) { c.solver.scheme = parse_scheme(v); }},
      IDEQ_DOUBLE("lambda", solver.lambda),
      IDEQ_DOUBLE("tau", solver.tau),
      IDEQ_DOUBLE("alpha", solver.alpha),
      IDEQ_DOUBLE("restart_budget", solver.restart_budget),
      IDEQ_INT("max_iter", solver.max_iter),
      IDEQ_DOUBLE("tolerance", solver.tolerance),
      IDEQ_BOOL("averaging", solver.averaging),
      {"restart_rule", [](const ExperimentConfig& c) { return to_string(c.solver.restart_rule); },
       [](ExperimentConfig& c, const std::string& v) { c.solver.restart_rule = parse_restart_rule(v); }},
      IDEQ_INT("max_total_iter", solver.max_total_iter),
      IDEQ_BOOL("record_objective", solver.record_objective),
      {"regularizer", [](const ExperimentConfig& c) { return to_string(c.regularizer); },
       [](ExperimentConfig& c, const std::string& v) { c.regularizer = parse_regularizer(v); }},
      IDEQ_DOUBLE("reg_param", reg_param),
      IDEQ_DOUBLE("sigma", sigma),
      {"checkpoint", [](const ExperimentConfig& c) { return c.checkpoint; },
       [](ExperimentConfig& c, const std::string& v) { c.checkpoint = v; }},
      {"net_seed", [](const ExperimentConfig& c) { return std::to_string(c.net_seed); },
       [](ExperimentConfig& c, const std::string& v) { c.net_seed = to_u64("net_seed", v); }},
      {"net_channels",
       [](const ExperimentConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.net_channels.size(); ++i) s += (i ? "," : "") + std::to_string(c.net_channels[i]);
         return s;
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.net_channels.clear();
         for (const auto& item : split_list(v)) c.net_channels.push_back(static_cast<int>(to_int("net_channels", item)));
       }},
      IDEQ_DOUBLE("learning_rate", train.learning_rate),
      IDEQ_INT("max_epochs", train.max_epochs),
      IDEQ_INT("patience", train.patience),
      IDEQ_BOOL("learn_theta", train.learn.theta),
      IDEQ_BOOL("learn_lambda", train.learn.lambda),
      IDEQ_BOOL("learn_tau", train.learn.tau),
      IDEQ_BOOL("learn_alpha", train.learn.alpha),
      IDEQ_BOOL("learn_sigma", train.learn.sigma),
      {"bench_schemes",
       [](const ExperimentConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.bench_schemes.size(); ++i) s += (i ? "," : "") + to_string(c.bench_schemes[i]);
         return s;
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.bench_schemes.clear();
         for (const auto& item : split_list(v)) c.bench_schemes.push_back(parse_scheme(item));
       }},
  };
  return table;
}

#undef IDEQ_DOUBLE
#undef IDEQ_INT
#undef IDEQ_BOOL

Image quantize(const Image& x) { return (x.cwiseMax(0.0).cwiseMin(1.0) * 255.0).round() / 255.0; }

double mean_or_nan(double sum, int n) { return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN(); }

double ssim_or_nan(const Image& x, const Image& ref) {
  const SsimParams p;
  if (x.rows() < p.window || x.cols() < p.window) return std::numeric_limits<double>::quiet_NaN();
  return ssim(x, ref, p);
}

std::string index_name(const char* stem, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d%s", stem, i, ext);
  return buf;
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << std::setprecision(17);
  return os;
}

}  // namespace

std::string to_string(Problem p) {
  switch (p) {
    case Problem::Mri: return "mri";
    case Problem::Inpainting: return "inpainting";
    case Problem::Rician: return "rician";
  }
  return "?";
}

std::string to_string(PhantomKind k) {
  switch (k) {
    case PhantomKind::PiecewiseConstant: return "piecewise-constant";
    case PhantomKind::SmoothBump: return "smooth-bump";
    case PhantomKind::SheppLike: return "shepp-like";
  }
  return "?";
}

std::string to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::GradStep: return "gradstep";
    case RegularizerKind::Tikhonov: return "tikhonov";
    case RegularizerKind::Tv: return "tv";
  }
  return "?";
}

Problem parse_problem(const std::string& s) {
  for (Problem p : {Problem::Mri, Problem::Inpainting, Problem::Rician}) {
    if (to_string(p) == s) return p;
  }
  throw ConfigError("unknown problem '" + s + "'");
}

PhantomKind parse_phantom(const std::string& s) {
  for (PhantomKind k : {PhantomKind::PiecewiseConstant, PhantomKind::SmoothBump, PhantomKind::SheppLike}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown phantom kind '" + s + "'");
}

RegularizerKind parse_regularizer(const std::string& s) {
  for (RegularizerKind k : {RegularizerKind::GradStep, RegularizerKind::Tikhonov, RegularizerKind::Tv}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown regularizer '" + s + "'");
}

ExperimentConfig ExperimentConfig::defaults(Problem p) {
  ExperimentConfig c;
  c.problem = p;
  c.solver.max_iter = 100;
  c.solver.tolerance = 1e-4;
  c.solver.averaging = false;
  c.solver.alpha = 0.2;
  c.solver.restart_budget = 5000.0;
  c.sigma = 0.03;
  switch (p) {
    case Problem::Mri:
      c.noise_level = 1.0 / 255.0;
      c.acceleration = 8.0;
      c.solver.lambda = 0.65;
      c.solver.tau = 0.5;
      c.data = PhantomKind::SheppLike;
      break;
    case Problem::Inpainting:
      c.noise_level = 1.0 / 255.0;
      c.keep_probability = 0.5;
      c.solver.lambda = 0.83;
      c.solver.tau = 0.1;
      c.data = PhantomKind::PiecewiseConstant;
      break;
    case Problem::Rician:
      c.noise_level = 25.5 / 255.0;
      c.solver.lambda = 3.6;
      c.solver.tau = 0.03;
      c.solver.alpha = 0.01;
      c.solver.restart_budget = 100.0;
      c.data = PhantomKind::PiecewiseConstant;
      break;
  }
  return c;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig ExperimentConfig::parse(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  Problem problem = Problem::Inpainting;
  for (const auto& [k, v] : entries) {
    if (k == "problem") problem = parse_problem(v);
  }
  ExperimentConfig c = defaults(problem);
  for (const auto& [k, v] : entries) c.set(k, v);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::parse_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  return parse(is);
}

void ExperimentConfig::serialize(std::ostream& os) const {
  for (const Field& f : fields()) os << f.key << " = " << f.get(*this) << '\n';
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  for (const Field& f : fields()) {
    if (f.get(*this) != f.get(other)) return false;
  }
  return true;
}

void ExperimentConfig::validate() const {
  solver.validate();
  train.validate();
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (count < 0 || val_count < 0) throw ConfigError("count and val_count must be >= 0");
  if (!(acceleration >= 1.0)) throw ConfigError("acceleration must be >= 1");
  if (!(keep_probability > 0.0 && keep_probability <= 1.0)) throw ConfigError("keep_probability must lie in (0, 1]");
  if (!(noise_level >= 0.0)) throw ConfigError("noise_level must be >= 0");
  if (problem == Problem::Rician && !(noise_level > 0.0)) throw ConfigError("rician noise_level must be > 0");
  if (!(reg_param > 0.0)) throw ConfigError("reg_param must be > 0");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (net_channels.size() < 2 || net_channels.front() != 1 || net_channels.back() != 1) {
    throw ConfigError("net_channels must start and end with 1");
  }
  const bool prox = solver.scheme == Scheme::IdeqProx || solver.scheme == Scheme::RedProx ||
                    solver.scheme == Scheme::Modl;
  if (prox && problem == Problem::Rician) throw ConfigError(to_string(solver.scheme) + " needs a closed-form prox");
  if (bench_schemes.empty()) throw ConfigError("bench_schemes must list at least one scheme");
}

Image generate_phantom(PhantomKind kind, int size, SeededRng& rng) {
  if (size < 8) throw DomainError("generate_phantom: size must be >= 8");
  const double n = size;
  Image img = Image::Zero(size, size);
  switch (kind) {
    case PhantomKind::PiecewiseConstant: {
      const int n_levels = 2 + static_cast<int>(rng.below(5));
      std::vector<double> levels(n_levels);
      for (double& l : levels) l = static_cast<double>(rng.below(256)) / 255.0;
      img.setConstant(levels[0]);
      const int n_rect = 1 + static_cast<int>(rng.below(6));
      for (int r = 0; r < n_rect; ++r) {
        const int i0 = static_cast<int>(rng.below(size - 2));
        const int j0 = static_cast<int>(rng.below(size - 2));
        const int h = 2 + static_cast<int>(rng.below(size - i0 - 1));
        const int w = 2 + static_cast<int>(rng.below(size - j0 - 1));
        img.block(i0, j0, std::min(h, size - i0), std::min(w, size - j0))
            .setConstant(levels[rng.below(n_levels)]);
      }
      return img;
    }
    case PhantomKind::SmoothBump: {
      img.setConstant(0.1);
      for (int b = 0; b < 3; ++b) {
        const double ci = rng.uniform(0.0, n);
        const double cj = rng.uniform(0.0, n);
        const double width = rng.uniform(n / 8.0, n / 3.0);
        const double amp = rng.uniform(0.3, 0.8);
        for (int i = 0; i < size; ++i) {
          for (int j = 0; j < size; ++j) {
            const double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
            img(i, j) += amp * std::exp(-d2 / (2.0 * width * width));
          }
        }
      }
      return quantize(img);
    }
    case PhantomKind::SheppLike: {
      struct Ellipse {
        double ci, cj, a, b, theta, value;
      };
      std::vector<Ellipse> ellipses;
      const double a0 = rng.uniform(0.38, 0.46) * n;
      const double b0 = rng.uniform(0.30, 0.40) * n;
      ellipses.push_back({n / 2, n / 2, a0, b0, 0.0, 0.8});
      ellipses.push_back({n / 2, n / 2, 0.88 * a0, 0.88 * b0, 0.0, -0.55});
      for (int e = 0; e < 4; ++e) {
        ellipses.push_back({n / 2 + rng.uniform(-0.2, 0.2) * n, n / 2 + rng.uniform(-0.2, 0.2) * n,
                            rng.uniform(0.05, 0.16) * n, rng.uniform(0.05, 0.16) * n,
                            rng.uniform(0.0, 3.14159), rng.uniform(-0.15, 0.45)});
      }
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
          for (const auto& el : ellipses) {
            const double di = i + 0.5 - el.ci;
            const double dj = j + 0.5 - el.cj;
            const double u = std::cos(el.theta) * di + std::sin(el.theta) * dj;
            const double v = -std::sin(el.theta) * di + std::cos(el.theta) * dj;
            if ((u * u) / (el.a * el.a) + (v * v) / (el.b * el.b) <= 1.0) img(i, j) += el.value;
          }
        }
      }
      return quantize(img);
    }
  }
  throw DomainError("generate_phantom: unknown kind");
}

std::vector<fs::path> gen_data(PhantomKind kind, int count, int size, std::uint64_t seed, const fs::path& dir) {
  if (size < 8) throw ConfigError("gen-data: size must be >= 8");
  if (count < 0) throw ConfigError("gen-data: count must be >= 0");
  fs::create_directories(dir);
  SeededRng rng(seed);
  std::vector<fs::path> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(dir / index_name("img", i, ".pgm"));
    write_pgm(out.back(), generate_phantom(kind, size, rng));
  }
  return out;
}

std::vector<Image> load_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Image> out;
  for (const auto& p : paths) out.push_back(read_pgm(p));
  return out;
}

std::shared_ptr<DataFidelity> make_fidelity(const ExperimentConfig& cfg, int rows, int cols, SeededRng& rng) {
  switch (cfg.problem) {
    case Problem::Mri:
      return std::make_shared<MaskedFourierModel>(
          generate_mask(CartesianLineMask{cfg.acceleration, cfg.center_band}, rows, cols, rng), cfg.noise_level);
    case Problem::Inpainting:
      return std::make_shared<InpaintingModel>(generate_mask(RandomPixelMask{cfg.keep_probability}, rows, cols, rng),
                                               cfg.noise_level);
    case Problem::Rician:
      return std::make_shared<RicianModel>(cfg.noise_level);
  }
  throw ConfigError("unknown problem");
}

Dataset build_dataset(const ExperimentConfig& cfg, bool with_val) {
  SeededRng rng(cfg.seed);
  const int total = cfg.count + (with_val ? cfg.val_count : 0);
  std::vector<Image> images;
  if (!cfg.data_dir.empty()) {
    images = load_images(cfg.data_dir);
    if (static_cast<int>(images.size()) < total) {
      throw ConfigError("data_dir holds " + std::to_string(images.size()) + " images, need " + std::to_string(total));
    }
    images.resize(total);
  } else {
    for (int i = 0; i < total; ++i) images.push_back(generate_phantom(cfg.data, cfg.image_size, rng));
  }
  Dataset d;
  for (int i = 0; i < total; ++i) {
    Sample s;
    s.x_true = images[i];
    s.fidelity = make_fidelity(cfg, static_cast<int>(s.x_true.rows()), static_cast<int>(s.x_true.cols()), rng);
    s.y = s.fidelity->simulate(s.x_true, rng);
    (i < cfg.count ? d.train : d.val).push_back(std::move(s));
  }
  return d;
}

std::unique_ptr<Regularizer> make_regularizer(const ExperimentConfig& cfg, SolverConfig* solver) {
  switch (cfg.regularizer) {
    case RegularizerKind::Tikhonov:
      return std::make_unique<AnalyticRegularizer>(AnalyticRegularizer::tikhonov(cfg.reg_param));
    case RegularizerKind::Tv:
      return std::make_unique<AnalyticRegularizer>(AnalyticRegularizer::smoothed_tv(cfg.reg_param));
    case RegularizerKind::GradStep:
      break;
  }
  const TrainableModel m = make_trainable(cfg);
  if (solver != nullptr && !cfg.checkpoint.empty()) *solver = m.configure(*solver);
  return std::make_unique<GradStepRegularizer>(m.reg);
}

TrainableModel make_trainable(const ExperimentConfig& cfg) {
  if (!cfg.checkpoint.empty()) return Checkpoint::load(cfg.checkpoint).model();
  NetShape shape;
  shape.channels = cfg.net_channels;
  SeededRng rng(cfg.net_seed);
  return TrainableModel{GradStepRegularizer(SmoothPotentialNet::random(shape, rng), cfg.sigma), cfg.solver.lambda,
                        cfg.solver.tau, cfg.solver.alpha};
}

const char* solve_summary_header() {
  return "instance,psnr,ssim,iterations,restarts,wall_time_s,final_grad_norm,diverged";
}

std::string format_summary(const SolveSummary& s) {
  std::ostringstream os;
  os << std::setprecision(6) << "instance=" << s.instance << " psnr=" << s.psnr << " ssim=" << s.ssim
     << " iterations=" << s.iterations << " restarts=" << s.restarts << " wall_time_s=" << s.wall_time_s
     << " grad_norm=" << s.final_grad_norm << (s.diverged ? " DIVERGED" : "");
  return os.str();
}

SolveRun cmd_solve(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const Dataset data = build_dataset(cfg, false);
  SolverConfig solver = cfg.solver;
  const auto reg = make_regularizer(cfg, &solver);

  SolveRun run;
  auto summary = open_csv(out / "summary.csv");
  summary << solve_summary_header() << '\n';
  for (int i = 0; i < static_cast<int>(data.train.size()); ++i) {
    const Sample& s = data.train[i];
    SolveSummary sum;
    sum.instance = i;
    Image x;
    try {
      SolveResult r = solve(s.y, *s.fidelity, *reg, solver, s.fidelity->initial_guess(s.y));
      r.trajectory.write_csv((out / index_name("trajectory", i, ".csv")).string());
      x = std::move(r.x);
      sum.iterations = static_cast<long>(r.trajectory.size());
      sum.restarts = r.trajectory.restarts();
      sum.wall_time_s = r.trajectory.size() ? r.trajectory.records.back().time_s : 0.0;
      sum.final_grad_norm = objective_and_gradnorm(x, s.y, *s.fidelity, *reg, solver.lambda).grad_norm;
      sum.psnr = psnr(x, s.x_true);
      sum.ssim = ssim_or_nan(x, s.x_true);
      write_pgm(out / index_name("recon", i, ".pgm"), x);
      write_blob(out / index_name("recon", i, ".f64"), x);
    } catch (const Diverged& e) {
      e.partial().write_csv((out / index_name("trajectory", i, ".csv")).string());
      sum.diverged = true;
      sum.iterations = static_cast<long>(e.partial().size());
      sum.restarts = e.partial().restarts();
      sum.psnr = sum.ssim = sum.final_grad_norm = std::numeric_limits<double>::quiet_NaN();
      run.any_diverged = true;
    }
    summary << sum.instance << ',' << sum.psnr << ',' << sum.ssim << ',' << sum.iterations << ',' << sum.restarts
            << ',' << sum.wall_time_s << ',' << sum.final_grad_norm << ',' << (sum.diverged ? 1 : 0) << '\n';
    run.summaries.push_back(sum);
    run.reconstructions.push_back(std::move(x));
  }
  return run;
}

TrainResult cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const Dataset data = build_dataset(cfg, true);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainableModel init = make_trainable(cfg);
  TrainResult r = train_loop(data, init, cfg.solver, tc);
  r.best.save(out / "best.ckpt");
  auto log = open_csv(out / "train_log.csv");
  write_train_log(log, r.log);
  return r;
}

const char* bench_header() { return "scheme,instance,psnr,ssim,iterations,iterations_to_eps,wall_time_s,diverged"; }

const char* bench_summary_header() {
  return "scheme,mean_psnr,mean_ssim,mean_iterations_to_eps,mean_wall_time_s,diverged,all_diverged";
}

BenchResult cmd_bench(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const Dataset data = build_dataset(cfg, false);
  BenchResult res;
  for (Scheme scheme : cfg.bench_schemes) {
    ExperimentConfig sc = cfg;
    sc.solver.scheme = scheme;
    sc.validate();
    SolverConfig solver = sc.solver;
    solver.record_objective = false;
    const auto reg = make_regularizer(sc, &solver);
    BenchSummary sum;
    sum.scheme = to_string(scheme);
    double psnr_sum = 0.0, ssim_sum = 0.0, time_sum = 0.0, iters_sum = 0.0;
    int ok = 0, reached = 0;
    for (int i = 0; i < static_cast<int>(data.train.size()); ++i) {
      const Sample& s = data.train[i];
      BenchRow row;
      row.scheme = sum.scheme;
      row.instance = i;
      try {
        const SolveResult r = solve(s.y, *s.fidelity, *reg, solver, s.fidelity->initial_guess(s.y));
        row.psnr = psnr(r.x, s.x_true);
        row.ssim = ssim_or_nan(r.x, s.x_true);
        row.iterations = static_cast<long>(r.trajectory.size());
        const auto hit = r.trajectory.iterations_to(solver.tolerance);
        row.iterations_to_eps = hit ? *hit + 1 : -1;
        row.wall_time_s = r.trajectory.size() ? r.trajectory.records.back().time_s : 0.0;
        psnr_sum += row.psnr;
        ssim_sum += row.ssim;
        time_sum += row.wall_time_s;
        ++ok;
        if (hit) {
          iters_sum += static_cast<double>(row.iterations_to_eps);
          ++reached;
        }
      } catch (const Diverged& e) {
        row.diverged = true;
        row.iterations = static_cast<long>(e.partial().size());
        row.psnr = row.ssim = std::numeric_limits<double>::quiet_NaN();
        ++sum.diverged;
      }
      res.rows.push_back(row);
    }
    sum.mean_psnr = mean_or_nan(psnr_sum, ok);
    sum.mean_ssim = mean_or_nan(ssim_sum, ok);
    sum.mean_wall_time_s = mean_or_nan(time_sum, ok);
    sum.mean_iterations_to_eps = mean_or_nan(iters_sum, reached);
    sum.all_diverged = !data.train.empty() && ok == 0;
    res.summary.push_back(sum);
  }
  auto rows = open_csv(out / "bench.csv");
  rows << bench_header() << '\n';
  for (const auto& r : res.rows) {
    rows << r.scheme << ',' << r.instance << ',' << r.psnr << ',' << r.ssim << ',' << r.iterations << ','
         << r.iterations_to_eps << ',' << r.wall_time_s << ',' << (r.diverged ? 1 : 0) << '\n';
  }
  auto summary = open_csv(out / "bench_summary.csv");
  summary << bench_summary_header() << '\n';
  for (const auto& s : res.summary) {
    summary << s.scheme << ',' << s.mean_psnr << ',' << s.mean_ssim << ',' << s.mean_iterations_to_eps << ','
            << s.mean_wall_time_s << ',' << s.diverged << ',' << (s.all_diverged ? 1 : 0) << '\n';
  }
  return res;
}

RateFit rate_fit(const std::vector<double>& grad_norms, long window_begin, long window_end) {
  long usable = 0;
  while (usable < static_cast<long>(grad_norms.size()) && grad_norms[usable] > 0.0 &&
         std::isfinite(grad_norms[usable])) {
    ++usable;
  }
  RateFit fit;
  fit.window_end = window_end > 0 ? std::min(window_end, usable) : usable;
  fit.window_begin = window_begin > 0 ? window_begin : std::max(1L, fit.window_end / 10);
  const long n = fit.window_end - fit.window_begin + 1;
  if (fit.window_begin < 1 || n < 50) {
    throw DomainError("rate_fit: need at least 50 positive grad norms in the window, have " +
                      std::to_string(std::max(0L, n)));
  }
  std::vector<double> running(usable);
  for (long k = 0; k < usable; ++k) running[k] = k == 0 ? grad_norms[0] : std::min(running[k - 1], grad_norms[k]);

  double mx = 0.0, my = 0.0;
  for (long t = fit.window_begin; t <= fit.window_end; ++t) {
    mx += std::log(static_cast<double>(t));
    my += std::log(running[t - 1]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (long t = fit.window_begin; t <= fit.window_end; ++t) {
    const double dx = std::log(static_cast<double>(t)) - mx;
    const double dy = std::log(running[t - 1]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = std::max(0.0, syy - fit.slope * sxy);
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

std::vector<double> read_trajectory_grad_norms(const fs::path& csv) {
  std::ifstream is(csv);
  if (!is) throw IoError("cannot read " + csv.string());
  std::string line;
  if (!std::getline(is, line) || line != Trajectory::csv_header()) {
    throw IoError(csv.string() + ": not a trajectory CSV");
  }
  std::vector<double> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c <= 5; ++c) {
      if (!std::getline(ss, cell, ',')) throw IoError(csv.string() + ": short row");
    }
    out.push_back(std::strtod(cell.c_str(), nullptr));
  }
  return out;
}

}  // namespace ideq
