#pragma once

// Maximal (minimum-overlap) coupling of P_eps and P on the product space,
// the disagreement indicator Z_n, the dominating two-state chain Y_n, and
// their joint simulation.
//
// Sampling one step from the product kernel uses three uniforms
// (u_couple, u1, u2): if u_couple < rho both chains move to the same state
// drawn from Q by inverse CDF with u1, otherwise the P_eps chain draws from R
// with u1 and the P chain from R~ with u2. The same u_couple also drives the
// Y chain: Y_{k+1} = 0 iff u_couple < (1 - eps if Y_k = 0 else alpha). Since
// rho >= 1 - eps on the diagonal and rho >= alpha everywhere, Z_k <= Y_k holds
// on every path.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <type_traits>
#include <utility>
#include <vector>

#include "chainperturb/errors.hpp"
#include "chainperturb/kernel.hpp"
#include "chainperturb/numeric.hpp"
#include "chainperturb/rng.hpp"

namespace chainperturb {

enum class Degeneracy { none, fully_coupled, fully_decoupled };

// Decomposition of a pair of distributions (m1, m2) into the normalized
// common part Q = (m1 ^ m2) / rho and the normalized excesses
// R = [m1 - m2]^+ / (1 - rho), R~ = [m2 - m1]^+ / (1 - rho).
struct CouplingRecipe {
  double rho = 0.0;
  std::optional<ProbDist> q_dist;        // absent when fully decoupled
  std::optional<ProbDist> r_dist;        // absent when fully coupled
  std::optional<ProbDist> r_tilde_dist;  // absent when fully coupled
  Degeneracy degenerate_flag = Degeneracy::none;
};

template <class A, class B>
CouplingRecipe overlap_recipe(const Eigen::DenseBase<A>& first,
                              const Eigen::DenseBase<B>& second) {
  require_same_size(first.size(), second.size(), "overlap_recipe");
  const Index n = first.size();
  Vector common(n), excess_first(n), excess_second(n);
  for (Index i = 0; i < n; ++i) {
    const double p = first(i);
    const double q = second(i);
    common(i) = std::min(p, q);
    excess_first(i) = p > q ? p - q : 0.0;
    excess_second(i) = q > p ? q - p : 0.0;
  }
  const double common_mass = common.sum();
  const double mass_first = excess_first.sum();
  const double mass_second = excess_second.sum();

  CouplingRecipe recipe;
  if (mass_first == 0.0 || mass_second == 0.0) {
    recipe.rho = 1.0;
    recipe.degenerate_flag = Degeneracy::fully_coupled;
    recipe.q_dist = ProbDist(common / common_mass);
    return recipe;
  }
  recipe.r_dist = ProbDist(excess_first / mass_first);
  recipe.r_tilde_dist = ProbDist(excess_second / mass_second);
  if (common_mass == 0.0) {
    recipe.rho = 0.0;
    recipe.degenerate_flag = Degeneracy::fully_decoupled;
    return recipe;
  }
  recipe.rho = common_mass;
  recipe.q_dist = ProbDist(common / common_mass);
  return recipe;
}

// Recipe for the pair xi = (xi1, xi2): xi1 a state of the P_eps chain, xi2 a
// state of the P chain.
inline CouplingRecipe build_recipe(const FiniteKernel& P_eps,
                                   const FiniteKernel& P, Index xi1,
                                   Index xi2) {
  require_same_size(P_eps.size(), P.size(), "build_recipe");
  require_state(xi1, P.size(), "build_recipe");
  require_state(xi2, P.size(), "build_recipe");
  return overlap_recipe(P_eps.row(xi1), P.row(xi2));
}

// Maximal coupling of two initial laws.
inline CouplingRecipe maximal_coupling(const ProbDist& first,
                                       const ProbDist& second) {
  return overlap_recipe(first.weights(), second.weights());
}

// Joint law of the next pair under the product kernel, flattened with index
// x1 * n + x2 (x1 for the P_eps chain, x2 for the P chain).
inline ProbDist product_kernel_row(const FiniteKernel& P_eps,
                                   const FiniteKernel& P, Index xi1,
                                   Index xi2) {
  const CouplingRecipe recipe = build_recipe(P_eps, P, xi1, xi2);
  const Index n = P.size();
  Vector joint = Vector::Zero(n * n);
  if (recipe.q_dist) {
    for (Index x = 0; x < n; ++x) {
      joint(x * n + x) += recipe.rho * (*recipe.q_dist)[x];
    }
  }
  if (recipe.r_dist) {
    const double w = 1.0 - recipe.rho;
    for (Index x1 = 0; x1 < n; ++x1) {
      const double r1 = (*recipe.r_dist)[x1];
      if (r1 == 0.0) continue;
      for (Index x2 = 0; x2 < n; ++x2) {
        joint(x1 * n + x2) += w * r1 * (*recipe.r_tilde_dist)[x2];
      }
    }
  }
  return ProbDist(std::move(joint));
}

// Inverse-CDF draw: the state x with u in [F(x-), F(x)).
inline Index sample_index(const ProbDist& dist, double u) {
  const Vector& w = dist.weights();
  double cumulative = 0.0;
  Index last_positive = 0;
  for (Index x = 0; x < w.size(); ++x) {
    if (w(x) <= 0.0) continue;
    cumulative += w(x);
    last_positive = x;
    if (u < cumulative) return x;
  }
  return last_positive;  // u beyond a cumulative sum that fell short of 1
}

// One draw from the product kernel. Returns (P_eps-chain state, P-chain
// state). Draws that a degenerate recipe does not need are ignored.
inline std::pair<Index, Index> coupled_step(const CouplingRecipe& recipe,
                                            double u_couple, double u1,
                                            double u2) {
  if (u_couple < recipe.rho) {
    const Index x = sample_index(*recipe.q_dist, u1);
    return {x, x};
  }
  return {sample_index(*recipe.r_dist, u1),
          sample_index(*recipe.r_tilde_dist, u2)};
}

// Two-state chain on {0 = agree, 1 = disagree} with transition
// [[1 - eps, eps], [alpha, 1 - alpha]].
class BoundingChain {
 public:
  BoundingChain(double alpha, double epsilon) : alpha_(alpha), epsilon_(epsilon) {
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(epsilon >= 0.0 && epsilon <= 1.0)) {
      throw InvalidRegime("BoundingChain: alpha and epsilon must lie in [0,1]");
    }
    if (!(epsilon < 1.0 - alpha)) {
      throw InvalidRegime("BoundingChain: requires epsilon < 1 - alpha");
    }
  }

  double alpha() const { return alpha_; }
  double epsilon() const { return epsilon_; }

  Eigen::Matrix2d transition() const {
    Eigen::Matrix2d t;
    t << 1.0 - epsilon_, epsilon_, alpha_, 1.0 - alpha_;
    return t;
  }

  // (alpha, eps) / (alpha + eps)
  Eigen::Vector2d stationary() const {
    const double s = sum();
    return Eigen::Vector2d(alpha_ / s, epsilon_ / s);
  }

  double sum() const {
    const double s = alpha_ + epsilon_;
    if (!(s > 0.0)) throw InvalidRegime("BoundingChain: alpha + epsilon = 0");
    return s;
  }

 private:
  double alpha_;
  double epsilon_;
};

// Exact E[(1/n) sum_{k<n} 1{Y_k = 1}] when P(Y_0 = 1) = p_one.
inline double bounding_chain_exact_occupation(const BoundingChain& bc,
                                              double p_one, long long n) {
  if (n < 1) throw InvalidInput("bounding_chain_exact_occupation: n >= 1");
  if (!(p_one >= 0.0 && p_one <= 1.0)) {
    throw InvalidInput("bounding_chain_exact_occupation: p_one in [0,1]");
  }
  const double s = bc.sum();
  const double decay =
      (1.0 - contraction_power(1.0 - s, n)) / (static_cast<double>(n) * s * s);
  return bc.epsilon() / s +
         decay * (bc.alpha() * p_one - bc.epsilon() * (1.0 - p_one));
}

inline double bounding_chain_exact_occupation(const BoundingChain& bc, int y0,
                                              long long n) {
  if (y0 != 0 && y0 != 1) throw InvalidInput("y0 must be 0 or 1");
  return bounding_chain_exact_occupation(bc, static_cast<double>(y0), n);
}

// psi solving (P_Y - I) psi = -(phi - eps/(alpha+eps)), phi = 1{y = 1}.
inline StateFunction two_state_poisson(const BoundingChain& bc) {
  const double s = bc.sum();
  Vector psi(2);
  psi << -bc.epsilon() / (s * s), bc.alpha() / (s * s);
  return StateFunction(std::move(psi));
}

struct StepRecord {
  long long step = 0;
  Index x = 0;      // P chain
  Index x_eps = 0;  // P_eps chain
  int z = 0;        // 1 iff x != x_eps
  int y = 0;        // bounding chain
};

struct CoupledTrajectory {
  std::vector<Index> x_path;
  std::vector<Index> x_eps_path;
  std::vector<std::uint8_t> z_path;
  std::vector<std::uint8_t> y_path;
  long long length = 0;  // number of transitions; paths hold length + 1 entries
  std::uint64_t seed = 0;
};

struct SimulationOptions {
  // Replaces the recomputed cross-Doeblin constant in the Y chain. Must not
  // exceed it.
  std::optional<double> alpha_override;
  // P(Y_0 = 1) when the chains start equal (Y_0 = 1 whenever they differ).
  double y0_one_probability = 0.0;
};

// Product-kernel simulator for a fixed kernel pair. Recipes for all n^2
// state pairs are built once and shared read-only between trajectories.
class CoupledSimulator {
 public:
  CoupledSimulator(const FiniteKernel& P_eps, const FiniteKernel& P,
                   SimulationOptions options = {})
      : n_(P.size()), options_(options) {
    require_same_size(P_eps.size(), P.size(), "CoupledSimulator");
    epsilon_ = local_epsilon(P_eps, P);
    alpha_ = cross_doeblin_constant(P_eps, P);
    if (options_.alpha_override) {
      const double o = *options_.alpha_override;
      if (!(o >= 0.0 && o <= alpha_)) {
        throw InvalidRegime("alpha override must lie in [0, cross-Doeblin alpha]");
      }
      alpha_ = o;
    }
    if (!(epsilon_ < 1.0 - alpha_)) {
      throw InvalidRegime("coupled simulation requires epsilon < 1 - alpha");
    }
    if (!(options_.y0_one_probability >= 0.0 && options_.y0_one_probability <= 1.0)) {
      throw InvalidInput("y0_one_probability must lie in [0,1]");
    }
    recipes_.reserve(static_cast<std::size_t>(n_ * n_));
    stay_threshold_ = 1.0 - epsilon_;
    return_threshold_ = alpha_;
    for (Index a = 0; a < n_; ++a) {
      for (Index b = 0; b < n_; ++b) {
        recipes_.push_back(build_recipe(P_eps, P, a, b));
        const double rho = recipes_.back().rho;
        // Keep the Y thresholds below every rho they must dominate, so
        // rounding in rho can never break Z <= Y.
        if (a == b) stay_threshold_ = std::min(stay_threshold_, rho);
        return_threshold_ = std::min(return_threshold_, rho);
      }
    }
  }

  Index size() const { return n_; }
  double alpha() const { return alpha_; }
  double epsilon() const { return epsilon_; }
  BoundingChain bounding_chain() const { return BoundingChain(alpha_, epsilon_); }
  const CouplingRecipe& recipe(Index x_eps, Index x) const {
    return recipes_[static_cast<std::size_t>(x_eps * n_ + x)];
  }

  // Simulates n transitions from fixed initial states, calling
  // visit(const StepRecord&) at steps 0..n. A visitor returning bool stops
  // the run by returning false.
  template <class Visitor>
  void run(Index x0_eps, Index x0, long long n, RandomStream& rng,
           Visitor&& visit) const {
    require_state(x0_eps, n_, "simulate_coupled");
    require_state(x0, n_, "simulate_coupled");
    // Four initialization draws, consumed whatever the start mode.
    rng.uniform();
    rng.uniform();
    rng.uniform();
    const double uy = rng.uniform();
    iterate(x0_eps, x0, uy, n, rng, visit);
  }

  // As above with initial laws nu_eps, nu drawn from their maximal coupling,
  // so P(X_0 != X_0^eps) = TV(nu_eps, nu).
  template <class Visitor>
  void run(const ProbDist& nu_eps, const ProbDist& nu, long long n,
           RandomStream& rng, Visitor&& visit) const {
    require_same_size(nu_eps.size(), n_, "simulate_coupled");
    require_same_size(nu.size(), n_, "simulate_coupled");
    const double uc = rng.uniform();
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double uy = rng.uniform();
    const auto [x0_eps, x0] = coupled_step(maximal_coupling(nu_eps, nu), uc, u1, u2);
    iterate(x0_eps, x0, uy, n, rng, visit);
  }

 private:
  template <class Visitor>
  static bool call(Visitor& visit, const StepRecord& rec) {
    if constexpr (std::is_same_v<std::invoke_result_t<Visitor&, const StepRecord&>, bool>) {
      return visit(rec);
    } else {
      visit(rec);
      return true;
    }
  }

  template <class Visitor>
  void iterate(Index x_eps, Index x, double uy, long long n, RandomStream& rng,
               Visitor& visit) const {
    if (n < 0) throw InvalidInput("simulate_coupled: n must be >= 0");
    StepRecord rec;
    rec.x = x;
    rec.x_eps = x_eps;
    rec.z = x != x_eps ? 1 : 0;
    rec.y = rec.z == 1 || uy < options_.y0_one_probability ? 1 : 0;
    if (!call(visit, rec)) return;
    for (long long k = 1; k <= n; ++k) {
      const double uc = rng.uniform();
      const double u1 = rng.uniform();
      const double u2 = rng.uniform();
      const auto [next_eps, next] = coupled_step(recipe(rec.x_eps, rec.x), uc, u1, u2);
      const double threshold = rec.y == 0 ? stay_threshold_ : return_threshold_;
      rec.step = k;
      rec.x = next;
      rec.x_eps = next_eps;
      rec.z = next != next_eps ? 1 : 0;
      rec.y = uc < threshold ? 0 : 1;
      if (!call(visit, rec)) return;
    }
  }

  Index n_;
  SimulationOptions options_;
  double epsilon_ = 0.0;
  double alpha_ = 0.0;
  double stay_threshold_ = 1.0;
  double return_threshold_ = 0.0;
  std::vector<CouplingRecipe> recipes_;
};

inline CoupledTrajectory simulate_coupled(const FiniteKernel& P_eps,
                                          const FiniteKernel& P, Index x0_eps,
                                          Index x0, long long n,
                                          std::uint64_t seed,
                                          SimulationOptions options = {}) {
  if (n < 1) throw InvalidInput("simulate_coupled: n must be >= 1");
  const CoupledSimulator sim(P_eps, P, options);
  CoupledTrajectory traj;
  traj.length = n;
  traj.seed = seed;
  const auto reserve = static_cast<std::size_t>(n + 1);
  traj.x_path.reserve(reserve);
  traj.x_eps_path.reserve(reserve);
  traj.z_path.reserve(reserve);
  traj.y_path.reserve(reserve);
  RandomStream rng(seed, 0);
  sim.run(x0_eps, x0, n, rng, [&](const StepRecord& r) {
    traj.x_path.push_back(r.x);
    traj.x_eps_path.push_back(r.x_eps);
    traj.z_path.push_back(static_cast<std::uint8_t>(r.z));
    traj.y_path.push_back(static_cast<std::uint8_t>(r.y));
  });
  return traj;
}

// Single-chain simulation; one uniform per transition. visit(step, state),
// optionally returning bool to stop early.
template <class Visitor>
void simulate_chain(const FiniteKernel& P, Index x0, long long n,
                    RandomStream& rng, Visitor&& visit) {
  require_state(x0, P.size(), "simulate_chain");
  Index x = x0;
  auto call = [&](long long k) {
    if constexpr (std::is_same_v<std::invoke_result_t<Visitor&, long long, Index>, bool>) {
      return visit(k, x);
    } else {
      visit(k, x);
      return true;
    }
  };
  if (!call(0)) return;
  for (long long k = 1; k <= n; ++k) {
    const double u = rng.uniform();
    const auto row = P.row(x);
    double cumulative = 0.0;
    Index next = x;
    for (Index y = 0; y < P.size(); ++y) {
      if (row(y) <= 0.0) continue;
      cumulative += row(y);
      next = y;
      if (u < cumulative) break;
    }
    x = next;
    if (!call(k)) return;
  }
}

inline void write_trajectory_csv(std::ostream& out, const CoupledTrajectory& t) {
  out << "step,x,x_eps,z,y\n";
  for (std::size_t k = 0; k < t.x_path.size(); ++k) {
    out << k << ',' << t.x_path[k] << ',' << t.x_eps_path[k] << ','
        << int(t.z_path[k]) << ',' << int(t.y_path[k]) << '\n';
  }
}

}  // namespace chainperturb
