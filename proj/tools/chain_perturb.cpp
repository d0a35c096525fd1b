// chain_perturb: constants, bounds, simulation, verification, the two-state
// sharpness table and the GP low-rank sweep.
//
// Exit codes: 0 ok, 1 a verification failed, 2 usage/config/regime error,
// 3 numerical failure. Every run writes manifest.json into --out-dir.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chainperturb.hpp"

namespace fs = std::filesystem;
using namespace chainperturb;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kVerificationFailed = 1, kUsage = 2, kNumerical = 3 };

struct RunContext {
  std::string subcommand;
  fs::path out_dir = "out";
  Json config = Json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;

  fs::path output(const std::string& name) {
    fs::create_directories(out_dir);
    outputs.push_back(name);
    return out_dir / name;
  }
};

void write_manifest(RunContext& ctx, int exit_code, double seconds, const std::string& error) {
  Json m;
  m["subcommand"] = ctx.subcommand;
  m["config"] = ctx.config;
  m["seed"] = ctx.seed ? Json(*ctx.seed) : Json(nullptr);
  m["tool_version"] = kVersion;
  m["duration_seconds"] = seconds;
  m["outputs"] = ctx.outputs;
  m["exit_code"] = exit_code;
  if (!error.empty()) m["error"] = error;
  try {
    fs::create_directories(ctx.out_dir);
    std::ofstream(ctx.out_dir / "manifest.json") << m.dump(2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "warning: could not write manifest: " << e.what() << '\n';
  }
}

// constants

struct ConstantsArgs {
  std::string pair;
};

int run_constants(RunContext& ctx, const ConstantsArgs& args) {
  const KernelPair pair = pair_from_json(read_json_file(args.pair));
  ctx.config = {{"pair", args.pair}};
  const double a = doeblin_constant(pair.P);
  const double alpha = cross_doeblin_constant(pair.P_eps, pair.P);
  const double eps = local_epsilon(pair.P_eps, pair.P);
  std::ostringstream csv;
  csv << "a,alpha,epsilon\n"
      << format_real(a) << ',' << format_real(alpha) << ',' << format_real(eps) << '\n';
  std::cout << csv.str();
  std::ofstream(ctx.output("constants.csv")) << csv.str();
  return kOk;
}

// bounds

struct BoundsArgs {
  std::optional<double> a;
  double alpha = 0.0;
  double epsilon = 0.0;
  long long n = 1;
  double p0 = 0.0;
  double f_star = 0.0;
  double lambda = 1.0;
  std::string format = "csv";
};

std::string optional_cell(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

int run_bounds(RunContext& ctx, const BoundsArgs& args) {
  BoundParams p;
  p.a = args.a;
  p.alpha = args.alpha;
  p.epsilon = args.epsilon;
  p.n = args.n;
  p.p0 = args.p0;
  p.f_star = args.f_star;
  ctx.config = {{"alpha", args.alpha}, {"epsilon", args.epsilon}, {"n", args.n},
                {"p0", args.p0},       {"fstar", args.f_star},    {"lambda", args.lambda}};
  if (args.a) ctx.config["a"] = *args.a;
  const auto table = bound_table(p, args.lambda);

  std::ostringstream csv;
  csv << "name,value,raw_value,capped,threshold,regime_ok,message\n";
  for (const auto& r : table) {
    csv << r.name << ',' << optional_cell(r.value) << ',' << optional_cell(r.raw_value) << ','
        << (r.capped ? 1 : 0) << ',' << optional_cell(r.threshold) << ','
        << (r.regime_ok ? 1 : 0) << ",\"" << r.message << "\"\n";
  }
  std::ofstream(ctx.output("bounds.csv")) << csv.str();

  if (args.format == "csv") {
    std::cout << csv.str();
  } else {
    std::cout << std::left << std::setw(26) << "bound" << std::setw(24) << "value"
              << std::setw(24) << "threshold" << "note\n";
    for (const auto& r : table) {
      std::cout << std::setw(26) << r.name << std::setw(24) << optional_cell(r.value)
                << std::setw(24) << optional_cell(r.threshold)
                << (r.regime_ok ? (r.capped ? "capped at 1" : "") : r.message) << '\n';
    }
  }
  return kOk;
}

// simulate

struct SimulateArgs {
  std::string config;
};

int run_simulate(RunContext& ctx, const SimulateArgs& args) {
  const auto plans = experiments_from_file(args.config);
  ctx.config = read_json_file(args.config);
  for (const auto& plan : plans) {
    const ExperimentConfig& c = plan.config;
    ctx.seed = c.master_seed;
    const CoupledTrajectory t =
        simulate_coupled(c.P_eps, c.P, c.x0_eps, c.x0, c.n, c.master_seed, c.simulation);
    {
      std::ofstream out(ctx.output(c.name + "_trajectory.csv"));
      write_trajectory_csv(out, t);
    }
    {
      std::ofstream out(ctx.output(c.name + "_batch.csv"));
      write_batch_csv(out, c, simulate_batch(c));
    }
    long long disagree = 0;
    for (auto z : t.z_path) disagree += z;
    std::cout << c.name << ": " << t.length << " steps, disagreement fraction "
              << format_real(static_cast<double>(disagree) / static_cast<double>(t.z_path.size()))
              << '\n';
  }
  return kOk;
}

// verify

struct VerifyArgs {
  std::string config;
};

int run_verify(RunContext& ctx, const VerifyArgs& args) {
  const auto plans = experiments_from_file(args.config);
  ctx.config = read_json_file(args.config);
  std::ofstream csv(ctx.output("verify.csv"));
  csv << "name,estimate,std_error,bound,satisfied,replicates,reference,note\n";
  bool all_ok = true;
  for (const auto& plan : plans) {
    ctx.seed = plan.config.master_seed;
    for (const auto& r : run_checks(plan)) {
      csv << r.name << ',' << format_real(r.estimate) << ',' << format_real(r.std_error) << ','
          << format_real(r.bound) << ',' << (r.satisfied ? 1 : 0) << ',' << r.replicates_used
          << ',' << optional_cell(r.reference) << ",\"" << r.note << "\"\n";
      std::cout << r.name << ' ' << format_real(r.estimate) << ' ' << format_real(r.bound) << ' '
                << (r.satisfied ? "satisfied" : "VIOLATED") << '\n';
      all_ok = all_ok && r.satisfied;
    }
  }
  return all_ok ? kOk : kVerificationFailed;
}

// sharpness

struct SharpnessArgs {
  double beta = 0.3;
  double epsilon = 0.05;
  double gamma = 0.9;
  long long nmax = 100;
};

int run_sharpness(RunContext& ctx, const SharpnessArgs& args) {
  ctx.config = {{"beta", args.beta}, {"eps", args.epsilon}, {"gamma", args.gamma},
                {"nmax", args.nmax}};
  if (args.nmax < 1) throw InvalidInput("--nmax must be >= 1");
  std::ostringstream csv;
  csv << "n,exact_tv,bound,gap\n";
  bool all_ok = true;
  for (long long n = 1; n <= args.nmax; ++n) {
    const SharpnessInstance inst{args.beta, args.epsilon, args.gamma, n};
    const TightnessCertificate c = certify_tightness(inst);
    csv << n << ',' << format_real(c.exact) << ',' << format_real(c.bound) << ','
        << format_real(c.gap) << '\n';
    all_ok = all_ok && c.certified;
  }
  std::ofstream(ctx.output("sharpness.csv")) << csv.str();
  std::cout << csv.str();
  return all_ok ? kOk : kVerificationFailed;
}

// gp-sweep

struct SweepArgs {
  long long n = 100;
  long long m = 5;
  long long replicates = 20;
  long long qmax = 0;  // 0 = n
  double eps_threshold = 1e-10;
  std::uint64_t seed = 1;
  bool full_scale = false;
};

int run_gp_sweep(RunContext& ctx, SweepArgs args, const CLI::App& sub) {
  if (args.full_scale) {
    if (sub.count("--n") == 0) args.n = 1000;
    if (sub.count("--m") == 0) args.m = 10;
    if (sub.count("--replicates") == 0) args.replicates = 100;
  }
  if (args.qmax == 0) args.qmax = args.n;
  if (args.qmax < 1 || args.qmax > args.n) throw InvalidInput("--qmax must lie in [1, n]");
  const GPConfig config = GPConfig::standard(args.n, static_cast<Index>(args.m), args.seed);
  ctx.seed = args.seed;
  ctx.config = gp_config_to_json(config);
  ctx.config["replicates"] = args.replicates;
  ctx.config["qmax"] = args.qmax;
  ctx.config["eps_threshold"] = args.eps_threshold;
  std::ofstream(ctx.output("config.json")) << ctx.config.dump(2) << '\n';

  std::vector<Index> qs;
  for (Index q = 1; q <= args.qmax; ++q) qs.push_back(q);
  const SweepResult sweep = figure_sweep(config, args.replicates, qs, args.eps_threshold);
  {
    std::ofstream out(ctx.output("sweep.csv"));
    write_sweep_csv(out, sweep);
  }
  long long flagged = 0;
  for (const auto& row : sweep.rows) flagged += row.non_monotone ? 1 : 0;
  std::cout << "sweep: " << sweep.rows.size() << " rows, " << flagged
            << " rows where epsilon rose with q\n";
  for (const auto& f : sweep.failures) std::cerr << "error: " << f << '\n';
  if (!sweep.failures.empty()) throw NumericalFailure(sweep.failures.front());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbation bounds for finite Markov chains"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string out_dir = "out";
  app.add_option("--out-dir", out_dir, "Directory for all outputs")->capture_default_str();

  ConstantsArgs constants;
  auto* c_cmd = app.add_subcommand("constants", "Doeblin, cross-Doeblin and local constants of a pair");
  c_cmd->add_option("--pair", constants.pair, "Kernel pair JSON")->required();

  BoundsArgs bounds;
  auto* b_cmd = app.add_subcommand("bounds", "Evaluate every closed-form bound");
  b_cmd->add_option("--a", bounds.a, "Doeblin constant of P");
  b_cmd->add_option("--alpha", bounds.alpha, "Cross-Doeblin constant")->required();
  b_cmd->add_option("--epsilon", bounds.epsilon, "Local approximation constant")->required();
  b_cmd->add_option("--n", bounds.n, "Horizon")->required();
  b_cmd->add_option("--p0", bounds.p0, "Initial disagreement probability")->capture_default_str();
  b_cmd->add_option("--fstar", bounds.f_star, "Oscillation seminorm |f|_*")->capture_default_str();
  b_cmd->add_option("--lambda", bounds.lambda, "Deviation parameter")->capture_default_str();
  b_cmd->add_option("--format", bounds.format, "csv or text")
      ->check(CLI::IsMember({"csv", "text"}))
      ->capture_default_str();

  SimulateArgs simulate;
  auto* s_cmd = app.add_subcommand("simulate", "Simulate one coupled trajectory per experiment");
  s_cmd->add_option("--config", simulate.config, "Experiment JSON")->required();

  VerifyArgs verify;
  auto* v_cmd = app.add_subcommand("verify", "Run empirical checks against the bounds");
  v_cmd->add_option("--config", verify.config, "Experiment JSON")->required();

  SharpnessArgs sharp;
  auto* sh_cmd = app.add_subcommand("sharpness", "Exact TV vs bound for the two-state example");
  sh_cmd->add_option("--beta", sharp.beta, "Flip probability of P")->capture_default_str();
  sh_cmd->add_option("--eps", sharp.epsilon, "Perturbation size")->capture_default_str();
  sh_cmd->add_option("--gamma", sharp.gamma, "Initial law (gamma, 1-gamma)")->capture_default_str();
  sh_cmd->add_option("--nmax", sharp.nmax, "Largest horizon")->capture_default_str();

  SweepArgs sweep;
  auto* g_cmd = app.add_subcommand("gp-sweep", "epsilon and alpha of the low-rank GP Gibbs sampler");
  g_cmd->add_option("--n", sweep.n, "Number of sampling points")->capture_default_str();
  g_cmd->add_option("--m", sweep.m, "Grid atoms per hyperparameter")->capture_default_str();
  g_cmd->add_option("--replicates", sweep.replicates, "Datasets")->capture_default_str();
  g_cmd->add_option("--qmax", sweep.qmax, "Largest rank (default n)");
  g_cmd->add_option("--eps-threshold", sweep.eps_threshold, "Stop once epsilon drops below")
      ->capture_default_str();
  g_cmd->add_option("--seed", sweep.seed, "Master seed")->capture_default_str();
  g_cmd->add_flag("--full-scale", sweep.full_scale, "n = 1000, m = 10, 100 replicates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  RunContext ctx;
  ctx.out_dir = out_dir;
  ctx.subcommand = app.get_subcommands().front()->get_name();
  const auto start = std::chrono::steady_clock::now();
  int code = kOk;
  std::string error;
  try {
    if (*c_cmd) code = run_constants(ctx, constants);
    else if (*b_cmd) code = run_bounds(ctx, bounds);
    else if (*s_cmd) code = run_simulate(ctx, simulate);
    else if (*v_cmd) code = run_verify(ctx, verify);
    else if (*sh_cmd) code = run_sharpness(ctx, sharp);
    else if (*g_cmd) code = run_gp_sweep(ctx, sweep, *g_cmd);
  } catch (const NumericalFailure& e) {
    error = e.what();
    code = kNumerical;
  } catch (const Error& e) {
    error = e.what();
    code = kUsage;
  } catch (const fs::filesystem_error& e) {
    error = e.what();
    code = kUsage;
  } catch (const std::exception& e) {
    error = e.what();
    code = kNumerical;
  }
  if (!error.empty()) std::cerr << "error: " << error << '\n';
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(ctx, code, seconds, error);
  return code;
}
