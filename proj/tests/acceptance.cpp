// Acceptance gate: twelve criteria, one [PASS]/[FAIL] line each. A criterion
// fails when its numerical condition fails or when it exceeds its runtime
// budget. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "chainperturb.hpp"
#include "oracles.hpp"

using namespace chainperturb;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

FiniteKernel sharp_P() { return SharpnessInstance{0.25, 0.1, 1.0, 1}.base_kernel(); }
FiniteKernel sharp_P_eps() { return SharpnessInstance{0.25, 0.1, 1.0, 1}.perturbed_kernel(); }

StateFunction indicator_of_last(Index n) {
  Vector f = Vector::Zero(n);
  f(n - 1) = 1.0;
  return StateFunction(f);
}

// Random pair with eps < 1 - alpha, so the coupled machinery applies.
std::pair<FiniteKernel, FiniteKernel> random_pair(Index n, double t, std::mt19937_64& gen) {
  for (;;) {
    FiniteKernel P(oracle::random_kernel(n, gen));
    FiniteKernel Pe(oracle::random_perturbation(P.matrix(), t, gen));
    if (local_epsilon(Pe, P) < 1.0 - cross_doeblin_constant(Pe, P)) return {P, Pe};
  }
}

const std::vector<double> kBetas{0.1, 0.2, 0.3, 0.4, 0.5};

// 1. Averaged-law TV equals the bound on the two-state family.
Outcome sharpness_equality() {
  double worst = 0.0;
  int cases = 0;
  for (double b : kBetas)
    for (double e : {0.01, b / 2, 2 * b - 0.01})
      for (double g : {0.6, 0.9, 1.0})
        for (long long n : {1LL, 2LL, 5LL, 10LL, 100LL}) {
          const SharpnessInstance inst{b, e, g, n};
          const double gap = std::abs(exact_averaged_tv(inst) -
                                      averaged_tv_bound(sharpness_bound_params(inst)));
          worst = std::max(worst, gap);
          ++cases;
        }
  return {worst <= 1e-12, fmt("max |exact - bound| = %.3g over %d cases", worst, cases)};
}

// 2. Closed-form powers of P_eps against repeated multiplication.
Outcome closed_form_power() {
  double worst = 0.0;
  int instances = 0;
  for (double b : kBetas)
    for (double e : {0.01, b / 2, 2 * b - 0.01}) {
      const SharpnessInstance inst{b, e, 1.0, 1};
      const Eigen::Matrix2d Pe = inst.perturbed_matrix();
      Eigen::Matrix2d power = Eigen::Matrix2d::Identity();
      for (long long k = 0; k <= 200; ++k) {
        worst = std::max(worst,
                         (perturbed_power_closed_form(inst, k) - power).cwiseAbs().maxCoeff());
        power = power * Pe;
      }
      ++instances;
    }
  return {worst <= 1e-12,
          fmt("max-abs gap %.3g over %d instances, k = 0..200", worst, instances)};
}

// 3. Product-kernel marginals and diagonal mass.
Outcome coupling_marginals() {
  std::mt19937_64 gen(3003);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_marginal = 0.0, worst_diag = 0.0;
  int rows = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const Index n = 1 + pair % 6;
    // Mix of floors and perturbation sizes, including sparse rows and equal kernels.
    const FiniteKernel P(oracle::random_kernel(n, gen, pair % 3 == 0 ? 0.0 : 0.05));
    const double t = pair % 10 == 0 ? 0.0 : u(gen);
    RowMatrix pe = oracle::random_perturbation(P.matrix(), t, gen);
    if (pair % 7 == 0 && n > 1) {
      pe.setZero();
      for (Index x = 0; x < n; ++x) pe(x, (x + 1) % n) = 1.0;
    }
    const FiniteKernel Pe(pe);
    for (Index a = 0; a < n; ++a)
      for (Index b = 0; b < n; ++b) {
        const ProbDist joint = product_kernel_row(Pe, P, a, b);
        double diag = 0.0;
        for (Index x = 0; x < n; ++x) {
          double first = 0.0, second = 0.0;
          for (Index y = 0; y < n; ++y) {
            first += joint[x * n + y];
            second += joint[y * n + x];
          }
          worst_marginal = std::max({worst_marginal, std::abs(first - Pe.matrix()(a, x)),
                                     std::abs(second - P.matrix()(b, x))});
          diag += joint[x * n + x];
        }
        double rho = 0.0;
        for (Index x = 0; x < n; ++x) rho += std::min(Pe.matrix()(a, x), P.matrix()(b, x));
        worst_diag = std::max(worst_diag, std::abs(diag - rho));
        ++rows;
      }
  }
  return {worst_marginal <= 1e-12 && worst_diag <= 1e-12,
          fmt("%d joint rows; max marginal error %.3g, max |diag - rho| %.3g", rows,
              worst_marginal, worst_diag)};
}

// 4. Z_k <= Y_k pathwise.
Outcome stochastic_dominance() {
  SimulationOptions opts;
  opts.y0_one_probability = 0.5;
  const CoupledSimulator sim(sharp_P_eps(), sharp_P(), opts);
  const std::size_t runs = 100000;
  std::vector<long long> violations(runs, 0);
  parallel_for(runs, [&](std::size_t r) {
    RandomStream rng(4004, r);
    const Index x0 = static_cast<Index>(r % 2), x0_eps = static_cast<Index>((r / 2) % 2);
    sim.run(x0_eps, x0, 99, rng, [&](const StepRecord& s) {
      if (s.z > s.y) ++violations[r];
    });
  });
  long long total = 0;
  for (long long v : violations) total += v;
  return {total == 0, fmt("%zu trajectories x 100 states; %lld violations", runs, total)};
}

// 5. Disagreement bound, empirically and against the exact Y occupation.
Outcome disagreement_bound() {
  std::vector<ExperimentConfig> configs;
  ExperimentConfig sharp(sharp_P(), sharp_P_eps());
  sharp.name = "sharpness_pair";
  sharp.x0_eps = 1;
  configs.push_back(sharp);
  std::mt19937_64 gen(5005);
  for (int i = 0; i < 20; ++i) {
    auto [P, Pe] = random_pair(2 + i % 5, 0.05 + 0.01 * i, gen);
    ExperimentConfig c(P, Pe);
    c.name = "random_" + std::to_string(i);
    c.x0_eps = i % 2 == 0 ? 0 : 1;
    configs.push_back(c);
  }
  int ok = 0;
  double worst_margin = -1.0;
  std::string first_failure;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig& c = configs[i];
    c.n = 200;
    c.replicates = 2000;
    c.master_seed = 500 + i;
    const VerificationResult r = empirical_disagreement(c);
    worst_margin = std::max(worst_margin, (r.estimate - r.bound) / std::max(r.std_error, 1e-300));
    if (r.satisfied) {
      ++ok;
    } else if (first_failure.empty()) {
      first_failure = fmt("; %s: %.4g > %.4g + 3*%.2g", r.name.c_str(), r.estimate, r.bound,
                          r.std_error);
    }
  }
  // Exact Y occupation against the bound, on the constants of every pair.
  double worst_exact = 0.0;
  for (const auto& c : configs) {
    const double alpha = cross_doeblin_constant(c.P_eps, c.P), eps = local_epsilon(c.P_eps, c.P);
    for (double p0 : {0.0, 0.25, 1.0})
      for (long long n : {1LL, 10LL, 200LL, 100000LL}) {
        BoundParams p;
        p.alpha = alpha;
        p.epsilon = eps;
        p.n = n;
        p.p0 = p0;
        worst_exact =
            std::max(worst_exact, std::abs(bounding_chain_exact_occupation(
                                               BoundingChain(alpha, eps), p0, n) -
                                           avg_disagreement_bound(p)));
      }
  }
  const bool pass = ok == static_cast<int>(configs.size()) && worst_exact <= 1e-13;
  return {pass, fmt("%d/%zu within bound + 3 sigma (max (est - bound)/sigma = %.2f); "
                    "max |exact occupation - bound| = %.3g%s",
                    ok, configs.size(), worst_margin, worst_exact, first_failure.c_str())};
}

// 6. Stationary gap.
Outcome stationary_gap() {
  std::mt19937_64 gen(6006);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0, ok = 0;
  double worst = -1.0;
  while (checked < 100) {
    const Index n = 2 + checked % 7;
    const FiniteKernel P(oracle::random_kernel(n, gen, checked % 2 ? 0.05 : 0.5));
    const FiniteKernel Pe(oracle::random_perturbation(P.matrix(), 0.3 * u(gen), gen));
    const double a = doeblin_constant(P), eps = local_epsilon(Pe, P);
    if (!(a > eps)) continue;
    ++checked;
    const double tv = tv_distance(invariant_measure(P), invariant_measure(Pe));
    const double bound = stationary_gap_bound(eps, a);
    worst = std::max(worst, tv - bound);
    if (tv <= bound + 1e-10) ++ok;
  }
  return {ok == checked, fmt("%d/%d pairs satisfy TV <= eps/a + 1e-10 (max TV - eps/a = %.3g)",
                             ok, checked, worst)};
}

// 7. Poisson solver residual and norm bound.
Outcome poisson_solver() {
  std::mt19937_64 gen(7007);
  std::normal_distribution<double> g(0.0, 5.0);
  double worst_residual = 0.0, worst_ratio = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Index n = 2 + i % 9;
    const FiniteKernel P(oracle::random_kernel(n, gen, i % 3 == 0 ? 0.0 : 0.05));
    Vector fv(n);
    for (Index x = 0; x < n; ++x) fv(x) = g(gen);
    const StateFunction f(fv);
    const StateFunction psi = poisson_solve(P, f);
    const double mu_f = invariant_measure(P).weights().dot(fv);
    const Vector residual =
        (P.apply(psi.values()) - psi.values()) - (Vector::Constant(n, mu_f) - fv);
    worst_residual = std::max(worst_residual, residual.cwiseAbs().maxCoeff());
    worst_ratio =
        std::max(worst_ratio, psi.sup_norm() / (2.0 * f_star_norm(f) / doeblin_constant(P)));
  }
  return {worst_residual <= 1e-10 && worst_ratio <= 1.0,
          fmt("100 (P, f): max residual %.3g, max |psi| / (2|f|_*/a) = %.4f", worst_residual,
              worst_ratio)};
}

// 8. Decoupling times.
Outcome decoupling() {
  bool pass = true;
  std::string detail;
  for (long long N : {3LL, 10LL, 25LL}) {
    ExperimentConfig c(sharp_P(), sharp_P_eps());
    c.name = "deterministic_" + std::to_string(N);
    c.replicates = 20000;
    c.master_seed = 800 + N;
    c.stopping.kind = StoppingKind::deterministic;
    c.stopping.deterministic_n = N;
    const DecouplingReport d = empirical_decoupling(c);
    const double exact = *d.bounding_exact;
    const bool within = std::abs(d.bounding_estimate - exact) <= 3.0 * d.bounding_std_error;
    const bool below = d.bounding_estimate <= 0.1 * static_cast<double>(N);
    pass = pass && within && below;
    detail += fmt("N=%lld: P(sigma<=N) %.4f vs %.4f (se %.1e), eps*N %.2f; ", N,
                  d.bounding_estimate, exact, d.bounding_std_error, 0.1 * N);
  }
  std::mt19937_64 gen(8008);
  auto [P5, Pe5] = random_pair(5, 0.03, gen);
  std::vector<ExperimentConfig> hitting;
  hitting.emplace_back(sharp_P(), sharp_P_eps());
  hitting.back().name = "sharpness_pair";
  hitting.back().stopping.hitting_set = {1};
  hitting.emplace_back(P5, Pe5);
  hitting.back().name = "random_5";
  hitting.back().stopping.hitting_set = {4};
  for (std::size_t i = 0; i < hitting.size(); ++i) {
    ExperimentConfig& c = hitting[i];
    c.replicates = 20000;
    c.master_seed = 880 + i;
    c.stopping.kind = StoppingKind::hitting;
    const DecouplingReport d = empirical_decoupling(c);
    std::vector<bool> target(static_cast<std::size_t>(c.P.size()), false);
    for (Index s : c.stopping.hitting_set) target[static_cast<std::size_t>(s)] = true;
    const double iterated =
        oracle::hitting_times_by_iteration(oracle::to_mat(c.P.matrix()), target)[0];
    const bool tau_ok = std::abs(iterated - d.expected_tau) <= 1e-8 * std::max(1.0, iterated);
    pass = pass && d.coupled.satisfied && tau_ok;
    detail += fmt("%s hitting: P(S<=tau) %.4f vs eps*E tau %.4f (se %.1e, E tau %.4f)%s; ",
                  c.name.c_str(), d.coupled.estimate, d.coupled.bound, d.coupled.std_error,
                  d.expected_tau, tau_ok ? "" : " E tau mismatch");
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// 9. Hitting-time law distance.
Outcome path_laws() {
  std::vector<ExperimentConfig> configs;
  configs.emplace_back(sharp_P(), sharp_P_eps());
  configs.back().name = "sharpness_pair";
  configs.back().stopping.hitting_set = {1};
  std::mt19937_64 gen(9009);
  for (int i = 0; i < 2; ++i) {
    auto [P, Pe] = random_pair(5, 0.02, gen);
    configs.emplace_back(P, Pe);
    configs.back().name = "random_5_" + std::to_string(i);
    configs.back().stopping.hitting_set = {4};
  }
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig& c = configs[i];
    c.replicates = 50000;
    c.master_seed = 900 + i;
    c.stopping.kind = StoppingKind::hitting;
    const VerificationResult r = empirical_path_law_distance(c);
    pass = pass && r.satisfied;
    detail += fmt("%s: TV %.4f vs eps*E tau %.4f (se %.1e); ", c.name.c_str(), r.estimate,
                  r.bound, r.std_error);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// 10. Coupled and single-chain tails.
Outcome tails() {
  std::vector<ExperimentConfig> configs;
  configs.emplace_back(sharp_P(), sharp_P_eps());
  configs.back().name = "sharpness_pair";
  configs.back().x0_eps = 1;
  configs.back().f = indicator_of_last(2);
  std::mt19937_64 gen(10010);
  auto [P, Pe] = random_pair(4, 0.1, gen);
  configs.emplace_back(P, Pe);
  configs.back().name = "random_4";
  configs.back().f = indicator_of_last(4);
  int ok = 0, total = 0;
  std::string failures;
  double worst = -1e9;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig& c = configs[i];
    c.n = 200;
    c.replicates = 4000;
    c.master_seed = 1000 + i;
    for (double lambda : {0.5, 1.0, 2.0}) {
      for (const auto& r : {empirical_tail(c, lambda), empirical_base_tail(c, lambda)}) {
        ++total;
        worst = std::max(worst, r.estimate - r.bound);
        if (r.satisfied) {
          ++ok;
        } else {
          failures += "; " + r.name;
        }
      }
    }
  }
  return {ok == total,
          fmt("%d/%d tail checks within bound + 3 sigma (max estimate - bound = %.3g)%s", ok,
              total, worst, failures.c_str())};
}

// 11. GP application at desk scale.
Outcome gp_desk() {
  const GPConfig config = GPConfig::desk_scale(2024);
  const long long replicates = 20;
  std::vector<Index> qs(static_cast<std::size_t>(config.n));
  for (Index q = 1; q <= config.n; ++q) qs[static_cast<std::size_t>(q - 1)] = q;
  const auto start = std::chrono::steady_clock::now();
  const SweepResult sweep = figure_sweep(config, replicates, qs, 1e-10);
  const double sweep_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const Index third = config.n / 3;
  int good = 0;
  for (long long r = 0; r < replicates; ++r) {
    bool found = false;
    for (const auto& row : sweep.rows)
      if (row.replicate == r && row.q <= third && row.ratio < 1e-3) found = true;
    good += found ? 1 : 0;
  }

  const GramCache cache = build_gram_cache(config);
  double worst_full = 0.0;
  for (long long r = 0; r < replicates; ++r) {
    const Vector z = generate_data(config, static_cast<std::uint64_t>(r));
    const FiniteKernel P =
        gibbs_kernel_from_table(likelihood_table(config, cache, z, LikelihoodEngine::exact()));
    const FiniteKernel Pn = gibbs_kernel_from_table(
        likelihood_table(config, cache, z, LikelihoodEngine::low_rank(config.n)));
    worst_full = std::max(worst_full, epsilon_alpha_from_kernels(Pn, P, config.m()).ratio());
  }

  double worst_inverse = 0.0, worst_logdet = 0.0;
  for (std::size_t i = 0; i < cache.sigma.size(); ++i) {
    for (double x2 : config.grid_x2) {
      for (Index q : {Index{1}, Index{5}, third, static_cast<Index>(config.n)}) {
        const LowRankFactor f = low_rank_factor(cache.spectrum[i], q);
        DenseMatrix M = x2 * f.lambda * f.lambda.transpose();
        M.diagonal().array() += 1.0;
        const Eigen::PartialPivLU<DenseMatrix> lu(M);
        const DenseMatrix direct = lu.inverse();
        double logdet = 0.0;
        for (Index k = 0; k < M.rows(); ++k) logdet += std::log(std::abs(lu.matrixLU()(k, k)));
        worst_inverse = std::max(
            worst_inverse, (woodbury_inverse(f.lambda, x2) - direct).cwiseAbs().maxCoeff());
        worst_logdet = std::max(worst_logdet, std::abs(woodbury_logdet(f.lambda, x2) - logdet));
      }
    }
  }

  const bool pass = sweep.failures.empty() && sweep_seconds < 600.0 && worst_full <= 1e-8 &&
                    good >= 18 && worst_inverse <= 1e-10 && worst_logdet <= 1e-10;
  return {pass, fmt("sweep %.1f s, %zu rows, %zu failed replicates; max ratio at q=n %.3g; "
                    "%d/20 replicates reach ratio < 1e-3 with q <= %ld; Woodbury inverse %.3g, "
                    "logdet %.3g",
                    sweep_seconds, sweep.rows.size(), sweep.failures.size(), worst_full, good,
                    static_cast<long>(third), worst_inverse, worst_logdet)};
}

// 12. Mean-bias evaluator.
Outcome remark_bias() {
  ExperimentConfig c(sharp_P(), sharp_P_eps());
  c.name = "sharpness_pair";
  c.n = 200;
  c.replicates = 4000;
  c.master_seed = 1212;
  c.x0_eps = 1;
  c.f = indicator_of_last(2);
  const VerificationResult r = empirical_remark_bias(c);
  return {r.satisfied, fmt("|mu f - mean average| %.4f vs bound %.4f (se %.1e)", r.estimate,
                           r.bound, r.std_error)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "sharpness equality", 1.0, sharpness_equality},
      {2, "closed-form power", 1.0, closed_form_power},
      {3, "coupling marginals", 5.0, coupling_marginals},
      {4, "stochastic dominance Z <= Y", 30.0, stochastic_dominance},
      {5, "average disagreement bound", 120.0, disagreement_bound},
      {6, "stationary gap bound", 10.0, stationary_gap},
      {7, "Poisson solver", 10.0, poisson_solver},
      {8, "decoupling time", 60.0, decoupling},
      {9, "path-law distance", 60.0, path_laws},
      {10, "concentration tails", 120.0, tails},
      {11, "GP application (desk scale)", 600.0, gp_desk},
      {12, "closeness mean bias", 60.0, remark_bias},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.budget_seconds;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s (%.2f s, budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id,
                c.name, o.detail.c_str(), seconds, c.budget_seconds,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
