#pragma once

// Empirical verification: simulate coupled (or independent) chains, estimate
// the quantities the bounds control, and compare with the closed forms.
// Replicate r always draws from RandomStream(master_seed, r) and results are
// reduced in replicate order, so estimates are reproducible bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "chainperturb/bounds.hpp"
#include "chainperturb/coupling.hpp"
#include "chainperturb/csv.hpp"
#include "chainperturb/errors.hpp"
#include "chainperturb/kernel.hpp"
#include "chainperturb/parallel.hpp"
#include "chainperturb/rng.hpp"

namespace chainperturb {

enum class StoppingKind { none, hitting, deterministic };

struct StoppingRule {
  StoppingKind kind = StoppingKind::none;
  std::vector<Index> hitting_set;  // tau = inf{k >= 0 : X_k in set}
  long long deterministic_n = 0;   // tau = N
};

struct ExperimentConfig {
  ExperimentConfig(FiniteKernel P_, FiniteKernel P_eps_)
      : P(std::move(P_)), P_eps(std::move(P_eps_)) {
    require_same_size(P.size(), P_eps.size(), "ExperimentConfig");
  }

  std::string name = "experiment";
  FiniteKernel P;
  FiniteKernel P_eps;
  long long n = 100;          // horizon
  long long replicates = 1000;
  std::uint64_t master_seed = 1;
  Index x0 = 0;               // P chain start
  Index x0_eps = 0;           // P_eps chain start
  // Initial laws; when both are set they replace x0 / x0_eps and are drawn
  // from their maximal coupling.
  std::optional<ProbDist> nu;
  std::optional<ProbDist> nu_eps;
  std::optional<StateFunction> f;
  StoppingRule stopping;
  long long cap = 0;  // hard cap on stopping-time runs; 0 = 50 E tau
  SimulationOptions simulation;
  std::size_t threads = 0;  // 0 = worker_count()
};

struct VerificationResult {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double bound = 0.0;
  bool satisfied = false;  // estimate <= bound + 3 std_error
  long long replicates_used = 0;
  std::optional<double> reference;  // exact value when one is known
  std::string note;
};

inline constexpr double kSigmaSlack = 3.0;

namespace detail {

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MeanAndError mean_and_error(const std::vector<double>& xs) {
  MeanAndError out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double v : xs) sum += v;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double v : xs) ss += (v - out.mean) * (v - out.mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  out.std_error = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

inline VerificationResult finish(std::string name, double estimate, double se,
                                 double bound, long long replicates) {
  VerificationResult r;
  r.name = std::move(name);
  r.estimate = estimate;
  r.std_error = se;
  r.bound = bound;
  r.replicates_used = replicates;
  r.satisfied = estimate <= bound + kSigmaSlack * se;
  return r;
}

inline void validate(const ExperimentConfig& cfg) {
  if (cfg.n < 1) throw InvalidInput("experiment horizon must be >= 1");
  if (cfg.replicates < 1) throw InvalidInput("replicates must be >= 1");
  require_state(cfg.x0, cfg.P.size(), "experiment x0");
  require_state(cfg.x0_eps, cfg.P.size(), "experiment x0_eps");
  if (cfg.nu.has_value() != cfg.nu_eps.has_value()) {
    throw InvalidInput("initial laws must be given for both chains");
  }
  if (cfg.nu) {
    require_same_size(cfg.nu->size(), cfg.P.size(), "experiment nu");
    require_same_size(cfg.nu_eps->size(), cfg.P.size(), "experiment nu_eps");
  }
  if (cfg.f) require_same_size(cfg.f->size(), cfg.P.size(), "experiment f");
}

inline const StateFunction& require_f(const ExperimentConfig& cfg) {
  if (!cfg.f) throw InvalidInput(cfg.name + ": observable f is required");
  return *cfg.f;
}

inline double initial_disagreement(const ExperimentConfig& cfg) {
  if (cfg.nu) return tv_distance(*cfg.nu_eps, *cfg.nu);
  return cfg.x0 != cfg.x0_eps ? 1.0 : 0.0;
}

// Runs per_replicate(r, rng) for every replicate and returns the results in
// replicate order.
template <class T, class Fn>
std::vector<T> run_replicates(const ExperimentConfig& cfg, Fn&& per_replicate) {
  std::vector<T> out(static_cast<std::size_t>(cfg.replicates));
  parallel_for(
      out.size(),
      [&](std::size_t r) {
        RandomStream rng(cfg.master_seed, r);
        out[r] = per_replicate(r, rng);
      },
      cfg.threads ? cfg.threads : worker_count());
  return out;
}

template <class Visitor>
void run_coupled(const ExperimentConfig& cfg, const CoupledSimulator& sim,
                 long long steps, RandomStream& rng, Visitor&& visit) {
  if (cfg.nu) {
    sim.run(*cfg.nu_eps, *cfg.nu, steps, rng, visit);
  } else {
    sim.run(cfg.x0_eps, cfg.x0, steps, rng, visit);
  }
}

inline BoundParams coupled_params(const CoupledSimulator& sim, long long n,
                                  double p0) {
  BoundParams p;
  p.alpha = sim.alpha();
  p.epsilon = sim.epsilon();
  p.n = n;
  p.p0 = p0;
  return p;
}

inline std::vector<char> membership(Index size, const std::vector<Index>& set) {
  std::vector<char> in(static_cast<std::size_t>(size), 0);
  for (Index s : set) {
    require_state(s, size, "hitting set");
    in[static_cast<std::size_t>(s)] = 1;
  }
  return in;
}

}  // namespace detail

// Mean over replicates of (1/n) sum_{k<n} 1{X_k != X_k^eps}, against the
// average disagreement bound.
inline VerificationResult empirical_disagreement(const ExperimentConfig& cfg) {
  detail::validate(cfg);
  const CoupledSimulator sim(cfg.P_eps, cfg.P, cfg.simulation);
  const auto fractions = detail::run_replicates<double>(cfg, [&](std::size_t, RandomStream& rng) {
    long long count = 0;
    detail::run_coupled(cfg, sim, cfg.n - 1, rng, [&](const StepRecord& r) { count += r.z; });
    return static_cast<double>(count) / static_cast<double>(cfg.n);
  });
  const auto stats = detail::mean_and_error(fractions);
  const double p0 = detail::initial_disagreement(cfg);
  auto result = detail::finish(cfg.name + ":disagreement", stats.mean, stats.std_error,
                               avg_disagreement_bound(detail::coupled_params(sim, cfg.n, p0)),
                               cfg.replicates);
  return result;
}

// Occupation of state 1 by the bounding chain Y, checked two-sided against
// its exact expectation.
inline VerificationResult empirical_bounding_occupation(const ExperimentConfig& cfg) {
  detail::validate(cfg);
  const CoupledSimulator sim(cfg.P_eps, cfg.P, cfg.simulation);
  const auto fractions = detail::run_replicates<double>(cfg, [&](std::size_t, RandomStream& rng) {
    long long count = 0;
    detail::run_coupled(cfg, sim, cfg.n - 1, rng, [&](const StepRecord& r) { count += r.y; });
    return static_cast<double>(count) / static_cast<double>(cfg.n);
  });
  const auto stats = detail::mean_and_error(fractions);
  const double p0 = detail::initial_disagreement(cfg);
  const double p_one = p0 + (1.0 - p0) * cfg.simulation.y0_one_probability;
  const double exact = bounding_chain_exact_occupation(sim.bounding_chain(), p_one, cfg.n);
  auto result = detail::finish(cfg.name + ":bounding_occupation", stats.mean, stats.std_error,
                               exact, cfg.replicates);
  result.reference = exact;
  result.satisfied = std::abs(stats.mean - exact) <= kSigmaSlack * stats.std_error;
  result.note = "two-sided comparison with the exact occupation";
  return result;
}

// E[(time average of f(X) - time average of f(X^eps))^2] against the coupled
// variance bound.
inline VerificationResult empirical_average_difference(const ExperimentConfig& cfg) {
  detail::validate(cfg);
  const StateFunction& f = detail::require_f(cfg);
  const CoupledSimulator sim(cfg.P_eps, cfg.P, cfg.simulation);
  const auto squares = detail::run_replicates<double>(cfg, [&](std::size_t, RandomStream& rng) {
    double diff = 0.0;
    detail::run_coupled(cfg, sim, cfg.n - 1, rng, [&](const StepRecord& r) {
      diff += f[r.x] - f[r.x_eps];
    });
    diff /= static_cast<double>(cfg.n);
    return diff * diff;
  });
  const auto stats = detail::mean_and_error(squares);
  BoundParams p = detail::coupled_params(sim, cfg.n, detail::initial_disagreement(cfg));
  p.f_star = f_star_norm(f);
  return detail::finish(cfg.name + ":average_difference", stats.mean, stats.std_error,
                        coupled_variance_bound(p), cfg.replicates);
}

// P(disagreement fraction >= eps/(alpha+eps) + 1{X_0 != X_0^eps}/(n(alpha+eps))
// + lambda/sqrt(n)) against exp(-(alpha+eps)^2 lambda^2 / 2).
inline VerificationResult empirical_tail(const ExperimentConfig& cfg, double lambda) {
  detail::validate(cfg);
  const CoupledSimulator sim(cfg.P_eps, cfg.P, cfg.simulation);
  const BoundParams p = detail::coupled_params(sim, cfg.n, detail::initial_disagreement(cfg));
  const double bound = coupled_concentration_bound(lambda, p);
  const auto hits = detail::run_replicates<double>(cfg, [&](std::size_t, RandomStream& rng) {
    long long count = 0;
    int z0 = 0;
    detail::run_coupled(cfg, sim, cfg.n - 1, rng, [&](const StepRecord& r) {
      if (r.step == 0) z0 = r.z;
      count += r.z;
    });
    const double fraction = static_cast<double>(count) / static_cast<double>(cfg.n);
    return fraction >= coupled_concentration_threshold(lambda, p, z0) ? 1.0 : 0.0;
  });
  const auto stats = detail::mean_and_error(hits);
  return detail::finish(cfg.name + ":tail(lambda=" + short_real(lambda) + ")", stats.mean,
                        stats.std_error, bound, cfg.replicates);
}

// Single-chain analogue for P: P(|mu f - time average| >= 4|f|_*/(na) +
// lambda |f|_*/sqrt(n)) against 2 exp(-a^2 lambda^2 / 32).
inline VerificationResult empirical_base_tail(const ExperimentConfig& cfg, double lambda) {
  detail::validate(cfg);
  const StateFunction& f = detail::require_f(cfg);
  BoundParams p;
  p.a = doeblin_constant(cfg.P);
  p.n = cfg.n;
  p.f_star = f_star_norm(f);
  const double bound = base_concentration_bound(lambda, p);
  const double threshold = base_concentration_threshold(lambda, p);
  const double mean_f = invariant_measure(cfg.P).weights().dot(f.values());
  const auto hits = detail::run_replicates<double>(cfg, [&](std::size_t, RandomStream& rng) {
    double sum = 0.0;
    simulate_chain(cfg.P, cfg.x0, cfg.n - 1, rng, [&](long long, Index x) { sum += f[x]; });
    const double avg = sum / static_cast<double>(cfg.n);
    return std::abs(mean_f - avg) >= threshold ? 1.0 : 0.0;
  });
  const auto stats = detail::mean_and_error(hits);
  return detail::finish(cfg.name + ":base_tail(lambda=" + short_real(lambda) + ")",
                        stats.mean, stats.std_error, bound, cfg.replicates);
}

// |mu f - E (1/n) sum f(X_k^eps)| against the Poisson-equation mean-bias
// bound 4|f|/(an) + 4 eps |f|/a, with |f| the oscillation |f|_*.
inline VerificationResult empirical_remark_bias(const ExperimentConfig& cfg) {
  detail::validate(cfg);
  const StateFunction& f = detail::require_f(cfg);
  BoundParams p;
  p.a = doeblin_constant(cfg.P);
  p.epsilon = local_epsilon(cfg.P_eps, cfg.P);
  p.n = cfg.n;
  const auto reports = remark_perturbation_bounds(p, f_star_norm(f));
  if (!reports[0].regime_ok) throw InvalidRegime(reports[0].message);
  const double mean_f = invariant_measure(cfg.P).weights().dot(f.values());
  const auto averages = detail::run_replicates<double>(cfg, [&](std::size_t, RandomStream& rng) {
    double sum = 0.0;
    simulate_chain(cfg.P_eps, cfg.x0_eps, cfg.n - 1, rng, [&](long long, Index x) { sum += f[x]; });
    return sum / static_cast<double>(cfg.n);
  });
  const auto stats = detail::mean_and_error(averages);
  return detail::finish(cfg.name + ":remark_mean_bias", std::abs(mean_f - stats.mean),
                        stats.std_error, *reports[0].value, cfg.replicates);
}

struct DecouplingReport {
  VerificationResult coupled;  // P(S_eps <= tau) against eps E tau
  double expected_tau = 0.0;
  double bounding_estimate = 0.0;  // P(sigma_eps <= tau) for the Y chain
  double bounding_std_error = 0.0;
  std::optional<double> bounding_exact;  // 1 - (1 - eps)^N for deterministic tau
  long long truncated = 0;  // runs that hit the cap before tau
};

// Decoupling time S_eps = inf{k : X_k != X_k^eps} for chains started equal.
// Runs that reach the cap before tau count as decoupled.
inline DecouplingReport empirical_decoupling(const ExperimentConfig& cfg) {
  detail::validate(cfg);
  if (cfg.nu || cfg.x0 != cfg.x0_eps) {
    throw InvalidInput(cfg.name + ": decoupling needs equal initial states");
  }
  SimulationOptions opts = cfg.simulation;
  opts.y0_one_probability = 0.0;
  const CoupledSimulator sim(cfg.P_eps, cfg.P, opts);

  DecouplingReport report;
  long long horizon = 0;
  std::vector<char> in_set;
  switch (cfg.stopping.kind) {
    case StoppingKind::deterministic:
      if (cfg.stopping.deterministic_n < 0) throw InvalidInput("deterministic tau must be >= 0");
      horizon = cfg.stopping.deterministic_n;
      report.expected_tau = static_cast<double>(horizon);
      report.bounding_exact =
          1.0 - std::pow(1.0 - sim.epsilon(), static_cast<double>(horizon));
      break;
    case StoppingKind::hitting:
      in_set = detail::membership(cfg.P.size(), cfg.stopping.hitting_set);
      report.expected_tau = expected_hitting_times(cfg.P, cfg.stopping.hitting_set)(cfg.x0);
      horizon = cfg.cap > 0 ? cfg.cap
                            : std::max<long long>(100, static_cast<long long>(
                                                           std::ceil(50.0 * report.expected_tau)));
      break;
    case StoppingKind::none:
      throw InvalidInput(cfg.name + ": decoupling needs a stopping rule");
  }

  struct Outcome {
    double decoupled = 0.0;
    double bounding = 0.0;
    double truncated = 0.0;
  };
  const bool hitting = cfg.stopping.kind == StoppingKind::hitting;
  const auto outcomes = detail::run_replicates<Outcome>(cfg, [&](std::size_t, RandomStream& rng) {
    Outcome o;
    bool stopped = !hitting;
    sim.run(cfg.x0_eps, cfg.x0, horizon, rng, [&](const StepRecord& r) {
      if (r.z == 1) o.decoupled = 1.0;
      if (r.y == 1) o.bounding = 1.0;
      if (hitting && in_set[static_cast<std::size_t>(r.x)]) {
        stopped = true;
        return false;
      }
      return true;
    });
    if (!stopped) {
      o.truncated = 1.0;
      o.decoupled = 1.0;
      o.bounding = 1.0;
    }
    return o;
  });

  std::vector<double> decoupled, bounding;
  decoupled.reserve(outcomes.size());
  bounding.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    decoupled.push_back(o.decoupled);
    bounding.push_back(o.bounding);
    report.truncated += static_cast<long long>(o.truncated);
  }
  const auto s_stats = detail::mean_and_error(decoupled);
  const auto y_stats = detail::mean_and_error(bounding);
  report.coupled = detail::finish(cfg.name + ":decoupling", s_stats.mean, s_stats.std_error,
                                  decoupling_time_bound(sim.epsilon(), report.expected_tau),
                                  cfg.replicates);
  report.bounding_estimate = y_stats.mean;
  report.bounding_std_error = y_stats.std_error;
  if (report.truncated > 0) {
    report.coupled.note = std::to_string(report.truncated) +
                          " runs truncated at the cap and counted as decoupled";
  }
  return report;
}

// TV between the hitting-time laws of the two chains, each run independently
// from the same start. Bins beyond the cap are pooled and contribute their
// worst case. The reported error is the L1 sampling-error scale
// (1/2) sum_bins sqrt(var_bin), which bounds E|TV_hat - TV|.
inline VerificationResult empirical_path_law_distance(const ExperimentConfig& cfg) {
  detail::validate(cfg);
  if (cfg.stopping.kind != StoppingKind::hitting) {
    throw InvalidInput(cfg.name + ": path-law distance needs a hitting set");
  }
  if (cfg.nu ? (cfg.nu->weights() != cfg.nu_eps->weights()) : cfg.x0 != cfg.x0_eps) {
    throw InvalidInput(cfg.name + ": path-law distance needs equal initial laws");
  }
  const auto in_set = detail::membership(cfg.P.size(), cfg.stopping.hitting_set);
  const double expected_tau =
      cfg.nu ? cfg.nu->weights().dot(expected_hitting_times(cfg.P, cfg.stopping.hitting_set))
             : expected_hitting_times(cfg.P, cfg.stopping.hitting_set)(cfg.x0);
  const long long cap =
      cfg.cap > 0 ? cfg.cap
                  : std::max<long long>(10, static_cast<long long>(std::ceil(50.0 * expected_tau)));

  auto hitting_time = [&](const FiniteKernel& K, RandomStream& rng) {
    Index start = cfg.x0;
    if (cfg.nu) start = sample_index(*cfg.nu, rng.uniform());
    long long tau = cap + 1;  // overflow bin
    simulate_chain(K, start, cap, rng, [&](long long k, Index x) {
      if (in_set[static_cast<std::size_t>(x)]) {
        tau = k;
        return false;
      }
      return true;
    });
    return tau;
  };

  // Independent streams: 2r for the P chain, 2r + 1 for the P_eps chain.
  std::vector<std::pair<long long, long long>> taus(static_cast<std::size_t>(cfg.replicates));
  parallel_for(
      taus.size(),
      [&](std::size_t r) {
        RandomStream rng_p(cfg.master_seed, 2 * r);
        RandomStream rng_eps(cfg.master_seed, 2 * r + 1);
        taus[r] = {hitting_time(cfg.P, rng_p), hitting_time(cfg.P_eps, rng_eps)};
      },
      cfg.threads ? cfg.threads : worker_count());

  const auto bins = static_cast<std::size_t>(cap + 2);
  std::vector<double> h1(bins, 0.0), h2(bins, 0.0);
  for (const auto& [t1, t2] : taus) {
    h1[static_cast<std::size_t>(t1)] += 1.0;
    h2[static_cast<std::size_t>(t2)] += 1.0;
  }
  const double R = static_cast<double>(cfg.replicates);
  double tv = 0.0;
  double noise = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double p = h1[b] / R;
    const double q = h2[b] / R;
    tv += (b + 1 == bins) ? 0.5 * (p + q) : 0.5 * std::abs(p - q);
    noise += std::sqrt(p * (1.0 - p) / R + q * (1.0 - q) / R);
  }
  auto result = detail::finish(cfg.name + ":path_law", tv, 0.5 * noise,
                               path_law_bound(local_epsilon(cfg.P_eps, cfg.P), expected_tau),
                               cfg.replicates);
  const double overflow = h1.back() + h2.back();
  if (overflow > 0) {
    result.note = std::to_string(static_cast<long long>(overflow)) +
                  " runs exceeded the cap; counted at worst case";
  }
  return result;
}

struct TrajectoryEnvelope {
  std::vector<double> statistic;  // K_n on the grid
  double max_statistic = 0.0;
  bool stable = false;  // late-grid maximum does not exceed max(early maximum, 0)
};

struct EnvelopeReport {
  std::vector<long long> grid;
  std::vector<TrajectoryEnvelope> trajectories;
  bool all_stable() const {
    return std::all_of(trajectories.begin(), trajectories.end(),
                       [](const TrajectoryEnvelope& t) { return t.stable; });
  }
};

// Log-spaced horizons from `first` to `last`, `per_decade` points per decade.
inline std::vector<long long> log_grid(long long first, long long last, int per_decade = 4) {
  std::vector<long long> grid;
  const double lo = std::log10(static_cast<double>(first));
  const double hi = std::log10(static_cast<double>(last));
  const int steps = std::max(1, static_cast<int>(std::ceil((hi - lo) * per_decade)));
  for (int i = 0; i <= steps; ++i) {
    const auto v = static_cast<long long>(std::llround(std::pow(10.0, lo + (hi - lo) * i / steps)));
    if (grid.empty() || v > grid.back()) grid.push_back(v);
  }
  return grid;
}

// Empirical witness for the almost-sure envelope: per trajectory,
// K_n = n [(1/n) sum_{k<n} 1{X_k != X_k^eps} - eps/(alpha+eps) - 2 sqrt(log n / n)]
// on a log-spaced grid of n up to cfg.n. A heuristic, not a proof: the random
// constant has no known law. With `use_bounding_chain` the Y occupation is
// used instead of the disagreement count.
inline EnvelopeReport almost_sure_envelope_check(const ExperimentConfig& cfg,
                                                 bool use_bounding_chain = false,
                                                 long long first = 1000) {
  detail::validate(cfg);
  if (cfg.n < 10000) throw InvalidInput(cfg.name + ": envelope check needs n >= 10^4");
  const CoupledSimulator sim(cfg.P_eps, cfg.P, cfg.simulation);
  const double level = sim.epsilon() / (sim.alpha() + sim.epsilon());

  EnvelopeReport report;
  report.grid = log_grid(std::min(first, cfg.n), cfg.n);
  const auto& grid = report.grid;
  report.trajectories = detail::run_replicates<TrajectoryEnvelope>(
      cfg, [&](std::size_t, RandomStream& rng) {
        TrajectoryEnvelope env;
        long long count = 0;
        std::size_t next = 0;
        detail::run_coupled(cfg, sim, grid.back() - 1, rng, [&](const StepRecord& r) {
          count += use_bounding_chain ? r.y : r.z;
          const long long seen = r.step + 1;
          while (next < grid.size() && grid[next] == seen) {
            const double n = static_cast<double>(seen);
            env.statistic.push_back(static_cast<double>(count) - n * level -
                                    2.0 * std::sqrt(n * std::log(n)));
            ++next;
          }
        });
        const std::size_t half = env.statistic.size() / 2;
        double early = env.statistic.front();
        for (std::size_t i = 0; i < half; ++i) early = std::max(early, env.statistic[i]);
        double late = env.statistic[half];
        for (std::size_t i = half; i < env.statistic.size(); ++i) {
          late = std::max(late, env.statistic[i]);
        }
        env.max_statistic = std::max(early, late);
        env.stable = late <= std::max(early, 0.0);
        return env;
      });
  return report;
}

struct BatchRow {
  long long replicate = 0;
  double disagreement_fraction = 0.0;     // (1/(n+1)) sum_{k<=n} Z_k
  std::optional<long long> first_decoupling;  // first k with Z_k = 1
};

// One coupled trajectory of length n per replicate, summarized.
inline std::vector<BatchRow> simulate_batch(const ExperimentConfig& cfg) {
  detail::validate(cfg);
  const CoupledSimulator sim(cfg.P_eps, cfg.P, cfg.simulation);
  return detail::run_replicates<BatchRow>(cfg, [&](std::size_t r, RandomStream& rng) {
    BatchRow row;
    row.replicate = static_cast<long long>(r);
    long long count = 0;
    detail::run_coupled(cfg, sim, cfg.n, rng, [&](const StepRecord& rec) {
      count += rec.z;
      if (rec.z == 1 && !row.first_decoupling) row.first_decoupling = rec.step;
    });
    row.disagreement_fraction = static_cast<double>(count) / static_cast<double>(cfg.n + 1);
    return row;
  });
}

inline void write_batch_csv(std::ostream& out, const ExperimentConfig& cfg,
                            const std::vector<BatchRow>& rows) {
  out << "replicate,seed,n,disagreement_fraction,first_decoupling_step\n";
  for (const auto& r : rows) {
    out << r.replicate << ',' << cfg.master_seed << ',' << cfg.n << ','
        << format_real(r.disagreement_fraction) << ',';
    if (r.first_decoupling) out << *r.first_decoupling;
    out << '\n';
  }
}

struct TransitionCounts {
  RowMatrix p_counts;      // X chain transitions
  RowMatrix p_eps_counts;  // X^eps chain transitions
};

// Transition counts pooled over all coupled replicates.
inline TransitionCounts pooled_transition_counts(const ExperimentConfig& cfg) {
  detail::validate(cfg);
  const CoupledSimulator sim(cfg.P_eps, cfg.P, cfg.simulation);
  const Index n = cfg.P.size();
  const auto per = detail::run_replicates<TransitionCounts>(cfg, [&](std::size_t, RandomStream& rng) {
    TransitionCounts c{RowMatrix::Zero(n, n), RowMatrix::Zero(n, n)};
    Index px = 0, pe = 0;
    detail::run_coupled(cfg, sim, cfg.n, rng, [&](const StepRecord& r) {
      if (r.step > 0) {
        c.p_counts(px, r.x) += 1.0;
        c.p_eps_counts(pe, r.x_eps) += 1.0;
      }
      px = r.x;
      pe = r.x_eps;
    });
    return c;
  });
  TransitionCounts total{RowMatrix::Zero(n, n), RowMatrix::Zero(n, n)};
  for (const auto& c : per) {
    total.p_counts += c.p_counts;
    total.p_eps_counts += c.p_eps_counts;
  }
  return total;
}

// Largest multinomial z-score |N_xy - N_x P(x,y)| / sqrt(N_x P(x,y)(1-P(x,y)))
// over cells with 0 < P(x,y) < 1. Cells with P(x,y) = 0 must have no counts.
inline double max_transition_zscore(const RowMatrix& counts, const FiniteKernel& P) {
  require_same_size(counts.rows(), P.size(), "max_transition_zscore");
  double worst = 0.0;
  for (Index x = 0; x < P.size(); ++x) {
    const double total = counts.row(x).sum();
    if (total == 0.0) continue;
    for (Index y = 0; y < P.size(); ++y) {
      const double p = P.matrix()(x, y);
      if (p == 0.0) {
        if (counts(x, y) > 0.0) return std::numeric_limits<double>::infinity();
        continue;
      }
      if (p == 1.0) continue;
      const double z = std::abs(counts(x, y) - total * p) / std::sqrt(total * p * (1.0 - p));
      worst = std::max(worst, z);
    }
  }
  return worst;
}

}  // namespace chainperturb
