#pragma once

// Two-state example on which the averaged-law TV bound is attained:
//   P     = [[1-beta, beta], [beta, 1-beta]]
//   P_eps = [[1-(beta-eps), beta-eps], [beta+eps, 1-(beta+eps)]]
// with mu = (1/2, 1/2), a = 2 beta = alpha + eps, alpha = 2 beta - eps, and
// initial law nu_gamma = (gamma, 1 - gamma), gamma > 1/2.
//
// For eps > beta the matrix P_eps has a negative entry, so it is not a Markov
// kernel; the closed forms and the equality with the bound remain algebraic
// identities and are evaluated all the same. stochastic() tells the cases apart.

#include <cmath>

#include <Eigen/Dense>

#include "chainperturb/bounds.hpp"
#include "chainperturb/errors.hpp"
#include "chainperturb/kernel.hpp"
#include "chainperturb/numeric.hpp"

namespace chainperturb {

inline constexpr double kTightnessTolerance = 1e-12;

struct SharpnessInstance {
  double beta = 0.25;
  double epsilon = 0.1;
  double gamma = 1.0;
  long long n = 1;

  void validate() const {
    if (!(beta > 0.0 && beta <= 0.5)) throw InvalidInput("beta must lie in (0, 1/2]");
    if (!(epsilon >= 0.0 && epsilon < 2.0 * beta)) {
      throw InvalidInput("epsilon must lie in [0, 2 beta)");
    }
    if (!(gamma > 0.5 && gamma <= 1.0)) throw InvalidInput("gamma must lie in (1/2, 1]");
    if (n < 1) throw InvalidInput("horizon n must be >= 1");
  }

  double a() const { return 2.0 * beta; }
  double alpha() const { return 2.0 * beta - epsilon; }
  double initial_tv() const { return gamma - 0.5; }
  bool stochastic() const { return epsilon <= beta; }

  Eigen::Matrix2d base_matrix() const {
    Eigen::Matrix2d m;
    m << 1.0 - beta, beta, beta, 1.0 - beta;
    return m;
  }

  Eigen::Matrix2d perturbed_matrix() const {
    Eigen::Matrix2d m;
    m << 1.0 - (beta - epsilon), beta - epsilon, beta + epsilon, 1.0 - (beta + epsilon);
    return m;
  }

  FiniteKernel base_kernel() const { return FiniteKernel(RowMatrix(base_matrix())); }

  // Throws InvalidInput when eps > beta.
  FiniteKernel perturbed_kernel() const { return FiniteKernel(RowMatrix(perturbed_matrix())); }
};

struct Diagonalization {
  Eigen::Matrix2d Q;      // columns: eigenvectors for 1 and 1 - 2 beta
  Eigen::Matrix2d D;      // diag(1, 1 - 2 beta)
  Eigen::Matrix2d Q_inv;
};

// P_eps = Q D Q^{-1}.
inline Diagonalization perturbed_diagonalization(const SharpnessInstance& inst) {
  const double b = inst.beta, e = inst.epsilon;
  Diagonalization d;
  d.Q << 1.0, -(b - e), 1.0, b + e;
  d.D << 1.0, 0.0, 0.0, 1.0 - 2.0 * b;
  d.Q_inv << b + e, b - e, -1.0, 1.0;
  d.Q_inv /= 2.0 * b;
  return d;
}

// P_eps^k = (1/2beta) [[(b+e) + (b-e) r^k, (b-e) - (b-e) r^k],
//                      [(b+e) - (b+e) r^k, (b-e) + (b+e) r^k]],  r = 1 - 2 beta.
inline Eigen::Matrix2d perturbed_power_closed_form(const SharpnessInstance& inst, long long k) {
  if (k < 0) throw InvalidInput("power k must be >= 0");
  const double b = inst.beta, e = inst.epsilon;
  const double rk = contraction_power(1.0 - 2.0 * b, k);
  Eigen::Matrix2d m;
  m << (b + e) + (b - e) * rk, (b - e) - (b - e) * rk,
       (b + e) - (b + e) * rk, (b - e) + (b + e) * rk;
  return m / (2.0 * b);
}

// || mu - (1/n) sum_{k<n} nu_gamma P_eps^k ||_TV in closed form.
inline double exact_averaged_tv(const SharpnessInstance& inst) {
  inst.validate();
  const double a = inst.a();
  const double floor_level = inst.epsilon / a;
  const double S = (1.0 - contraction_power(1.0 - a, inst.n)) / (a * static_cast<double>(inst.n));
  return std::abs(floor_level * (1.0 - S) + inst.initial_tv() * S);
}

// The same distance by summing nu_gamma P_eps^k step by step.
inline double numeric_averaged_tv(const SharpnessInstance& inst) {
  inst.validate();
  const Eigen::Matrix2d Pe = inst.perturbed_matrix();
  Eigen::RowVector2d law(inst.gamma, 1.0 - inst.gamma);
  Eigen::RowVector2d sum = Eigen::RowVector2d::Zero();
  for (long long k = 0; k < inst.n; ++k) {
    sum += law;
    law = law * Pe;
  }
  sum /= static_cast<double>(inst.n);
  const Eigen::RowVector2d mu(0.5, 0.5);
  return 0.5 * (mu - sum).cwiseAbs().sum();
}

inline BoundParams sharpness_bound_params(const SharpnessInstance& inst) {
  BoundParams p;
  p.a = inst.a();
  p.alpha = inst.alpha();
  p.epsilon = inst.epsilon;
  p.n = inst.n;
  p.p0 = inst.initial_tv();
  return p;
}

struct TightnessCertificate {
  bool certified = false;
  double gap = 0.0;      // |exact - bound|
  double exact = 0.0;
  double bound = 0.0;
  double numeric = 0.0;  // step-by-step evaluation of the averaged law
};

// Exact distance vs the averaged-TV bound with nu1 = mu, nu2 = nu_gamma.
// Certified when both the bound and the step-by-step evaluation agree with
// the closed form to 1e-12.
inline TightnessCertificate certify_tightness(const SharpnessInstance& inst) {
  inst.validate();
  TightnessCertificate c;
  c.exact = exact_averaged_tv(inst);
  c.bound = averaged_tv_bound(sharpness_bound_params(inst));
  c.numeric = numeric_averaged_tv(inst);
  c.gap = std::abs(c.exact - c.bound);
  c.certified = c.gap <= kTightnessTolerance &&
                std::abs(c.numeric - c.exact) <= kTightnessTolerance;
  return c;
}

}  // namespace chainperturb
