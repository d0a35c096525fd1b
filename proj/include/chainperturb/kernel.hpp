#pragma once

// Finite-state Markov kernels, probability vectors, total-variation geometry,
// the closeness constants (a, alpha, epsilon), invariant measures, and the
// Poisson equation L psi = mu f - f.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "chainperturb/errors.hpp"

namespace chainperturb {

using Vector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

// Tolerance on probability-vector sums for values produced in-process.
inline constexpr double kSumTolerance = 1e-12;
// Tolerance accepted (then renormalized away) when loading external data.
inline constexpr double kLoadTolerance = 1e-9;

namespace detail {

template <class Derived>
void check_probability_vector(const Eigen::DenseBase<Derived>& w, double tol,
                              const char* what) {
  if (w.size() == 0) throw InvalidInput(std::string(what) + ": empty");
  double sum = 0.0;
  for (Index i = 0; i < w.size(); ++i) {
    const double v = w(i);
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidInput(std::string(what) + ": negative or non-finite weight");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw InvalidInput(std::string(what) + ": weights sum to " +
                       std::to_string(sum) + ", not 1");
  }
}

// Half L1 distance between two equally sized row or column expressions.
template <class A, class B>
double half_l1(const Eigen::DenseBase<A>& p, const Eigen::DenseBase<B>& q) {
  double acc = 0.0;
  for (Index i = 0; i < p.size(); ++i) acc += std::abs(p(i) - q(i));
  return 0.5 * acc;
}

}  // namespace detail

// Probability vector over states 0..n-1.
class ProbDist {
 public:
  explicit ProbDist(Vector weights) : w_(std::move(weights)) {
    detail::check_probability_vector(w_, kSumTolerance, "ProbDist");
  }

  // Accepts weights whose sum is within `tol` of one and rescales them.
  static ProbDist normalized(Vector weights, double tol = kLoadTolerance) {
    detail::check_probability_vector(weights, tol, "ProbDist");
    weights /= weights.sum();
    return ProbDist(std::move(weights));
  }

  static ProbDist point_mass(Index size, Index state) {
    if (state < 0 || state >= size) throw InvalidInput("point_mass: bad state");
    Vector w = Vector::Zero(size);
    w(state) = 1.0;
    return ProbDist(std::move(w));
  }

  static ProbDist uniform(Index size) {
    return ProbDist(Vector::Constant(size, 1.0 / static_cast<double>(size)));
  }

  Index size() const { return w_.size(); }
  const Vector& weights() const { return w_; }
  double operator[](Index i) const { return w_(i); }

 private:
  Vector w_;
};

// Real-valued function on the state space.
class StateFunction {
 public:
  explicit StateFunction(Vector values) : v_(std::move(values)) {
    if (!v_.allFinite()) throw InvalidInput("StateFunction: non-finite value");
  }

  Index size() const { return v_.size(); }
  const Vector& values() const { return v_; }
  double operator[](Index i) const { return v_(i); }
  double sup_norm() const { return v_.size() ? v_.cwiseAbs().maxCoeff() : 0.0; }

 private:
  Vector v_;
};

// Row-stochastic matrix; row x is the law of the next state from x.
class FiniteKernel {
 public:
  explicit FiniteKernel(RowMatrix rows, std::vector<std::string> labels = {})
      : rows_(std::move(rows)), labels_(std::move(labels)) {
    validate(kSumTolerance);
  }

  // Renormalizes rows whose sums are within `tol` of one.
  static FiniteKernel normalized(RowMatrix rows, double tol = kLoadTolerance,
                                 std::vector<std::string> labels = {}) {
    if (rows.rows() != rows.cols()) {
      throw DimensionMismatch("FiniteKernel: matrix is not square");
    }
    for (Index x = 0; x < rows.rows(); ++x) {
      detail::check_probability_vector(rows.row(x), tol, "FiniteKernel row");
      rows.row(x) /= rows.row(x).sum();
    }
    return FiniteKernel(std::move(rows), std::move(labels));
  }

  Index size() const { return rows_.rows(); }
  const RowMatrix& matrix() const { return rows_; }
  auto row(Index x) const { return rows_.row(x); }
  ProbDist row_dist(Index x) const { return ProbDist(rows_.row(x).transpose()); }
  const std::vector<std::string>& labels() const { return labels_; }

  // nu P
  Vector push_forward(const Vector& nu) const {
    return (nu.transpose() * rows_).transpose();
  }
  // P f
  Vector apply(const Vector& f) const { return rows_ * f; }

 private:
  void validate(double tol) const {
    if (rows_.rows() == 0) throw InvalidInput("FiniteKernel: empty");
    if (rows_.rows() != rows_.cols()) {
      throw DimensionMismatch("FiniteKernel: matrix is not square");
    }
    if (!labels_.empty() &&
        static_cast<Index>(labels_.size()) != rows_.rows()) {
      throw DimensionMismatch("FiniteKernel: label count differs from size");
    }
    for (Index x = 0; x < rows_.rows(); ++x) {
      detail::check_probability_vector(rows_.row(x), tol, "FiniteKernel row");
    }
  }

  RowMatrix rows_;
  std::vector<std::string> labels_;
};

inline void require_same_size(Index a, Index b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension mismatch (" +
                            std::to_string(a) + " vs " + std::to_string(b) +
                            ")");
  }
}

inline void require_state(Index x, Index size, const char* what) {
  if (x < 0 || x >= size) {
    throw InvalidInput(std::string(what) + ": state " + std::to_string(x) +
                       " out of range");
  }
}

inline double tv_distance(const ProbDist& p, const ProbDist& q) {
  require_same_size(p.size(), q.size(), "tv_distance");
  return detail::half_l1(p.weights(), q.weights());
}

// max over (x, y) of TV(first.row(x), second.row(y)), or over x == y only
// when `diagonal_only`. Row blocks may have
// fewer rows than columns (used for kernels with repeated rows).
inline double max_row_tv(const RowMatrix& first, const RowMatrix& second,
                         bool diagonal_only = false) {
  require_same_size(first.cols(), second.cols(), "max_row_tv");
  double worst = 0.0;
  if (diagonal_only) {
    require_same_size(first.rows(), second.rows(), "max_row_tv");
    for (Index x = 0; x < first.rows(); ++x) {
      worst = std::max(worst, detail::half_l1(first.row(x), second.row(x)));
    }
    return worst;
  }
  for (Index x = 0; x < first.rows(); ++x) {
    for (Index y = 0; y < second.rows(); ++y) {
      worst = std::max(worst, detail::half_l1(first.row(x), second.row(y)));
    }
  }
  return worst;
}

// a = 1 - max_{x,y} ||P(x,.) - P(y,.)||_TV.
inline double doeblin_constant(const FiniteKernel& P) {
  double worst = 0.0;
  const auto& m = P.matrix();
  for (Index x = 0; x < m.rows(); ++x) {
    for (Index y = x + 1; y < m.rows(); ++y) {
      worst = std::max(worst, detail::half_l1(m.row(x), m.row(y)));
    }
  }
  return 1.0 - worst;
}

// epsilon = max_x ||P_eps(x,.) - P(x,.)||_TV.
inline double local_epsilon(const FiniteKernel& P_eps, const FiniteKernel& P) {
  require_same_size(P_eps.size(), P.size(), "local_epsilon");
  return max_row_tv(P_eps.matrix(), P.matrix(), /*diagonal_only=*/true);
}

// alpha = 1 - max_{x,y} ||P_eps(x,.) - P(y,.)||_TV. Reports the attained
// maximum, so the sharpness pair gives alpha = 2 beta - epsilon exactly.
inline double cross_doeblin_constant(const FiniteKernel& P_eps,
                                     const FiniteKernel& P) {
  require_same_size(P_eps.size(), P.size(), "cross_doeblin_constant");
  return 1.0 - max_row_tv(P_eps.matrix(), P.matrix());
}

enum class TransferDirection { doeblin_to_cross, cross_to_doeblin };

// Either direction subtracts epsilon: alpha = a - eps, or a = alpha - eps.
inline double transfer_constants(TransferDirection /*direction*/, double given,
                                 double epsilon) {
  if (!(given > 0.0 && given < 1.0 + 1e-15) || epsilon < 0.0) {
    throw InvalidRegime("transfer_constants: need given in (0,1], epsilon >= 0");
  }
  if (epsilon >= given) {
    throw InvalidRegime("transfer_constants: epsilon must be below the constant");
  }
  return given - epsilon;
}

struct StationarySolution {
  ProbDist mu;
  double residual_l1;  // ||mu P - mu||_1
  bool unique;         // linear system had full rank
};

// Solves (P^T - I) mu = 0 with the normalization row sum(mu) = 1 appended.
inline StationarySolution solve_stationary(const FiniteKernel& P) {
  const Index n = P.size();
  Eigen::MatrixXd A(n + 1, n);
  A.topRows(n) = P.matrix().transpose();
  A.topRows(n).diagonal().array() -= 1.0;
  A.row(n).setOnes();
  Vector b = Vector::Zero(n + 1);
  b(n) = 1.0;

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  Vector mu = cod.solve(b);
  if (!mu.allFinite()) throw NumericalFailure("invariant_measure: solve failed");
  if (mu.minCoeff() < -1e-10) {
    throw NumericalFailure("invariant_measure: solution has negative mass");
  }
  mu = mu.cwiseMax(0.0);
  mu /= mu.sum();
  const double residual = (P.push_forward(mu) - mu).lpNorm<1>();
  if (residual > 1e-9) {
    throw NumericalFailure("invariant_measure: residual " +
                           std::to_string(residual) + " too large");
  }
  return StationarySolution{ProbDist(std::move(mu)), residual,
                            cod.rank() == n};
}

inline ProbDist invariant_measure(const FiniteKernel& P) {
  return solve_stationary(P).mu;
}

// |f|_* = inf_c sup_x |f(x) - c| = (max f - min f) / 2.
inline double f_star_norm(const StateFunction& f) {
  if (f.size() == 0) return 0.0;
  return 0.5 * (f.values().maxCoeff() - f.values().minCoeff());
}

// Solution of (P - I) psi = mu f - f normalized by mu psi = 0, i.e. the sum
// of the series sum_k P^k (f - mu f). Computed as Z (f - mu f) with the
// fundamental matrix Z = (I - P + 1 mu)^{-1}.
inline StateFunction poisson_solve(const FiniteKernel& P,
                                   const StateFunction& f) {
  require_same_size(P.size(), f.size(), "poisson_solve");
  const double a = doeblin_constant(P);
  if (!(a > 0.0)) throw NoSpectralGap("poisson_solve: Doeblin constant is 0");

  const Index n = P.size();
  const Vector mu = invariant_measure(P).weights();
  const double mean = mu.dot(f.values());
  const Vector centered = f.values().array() - mean;

  Eigen::MatrixXd Z = -Eigen::MatrixXd(P.matrix());
  Z.diagonal().array() += 1.0;
  Z += Vector::Ones(n) * mu.transpose();
  Vector psi = Z.partialPivLu().solve(centered);

  const double residual =
      (P.apply(psi) - psi + centered).lpNorm<Eigen::Infinity>();
  if (!psi.allFinite() || residual > 1e-10) {
    throw NumericalFailure("poisson_solve: residual " +
                           std::to_string(residual) + " too large");
  }
  const double cap = 2.0 * f_star_norm(f) / a;
  if (psi.lpNorm<Eigen::Infinity>() > cap * (1.0 + 1e-9) + 1e-12) {
    throw NumericalFailure("poisson_solve: solution violates 2|f|_*/a");
  }
  return StateFunction(std::move(psi));
}

// (1/n) sum_{k<n} nu P^k
inline ProbDist n_step_average_law(const ProbDist& nu, const FiniteKernel& P,
                                   long long n) {
  require_same_size(nu.size(), P.size(), "n_step_average_law");
  if (n < 1) throw InvalidInput("n_step_average_law: n must be >= 1");
  Vector current = nu.weights();
  Vector acc = Vector::Zero(nu.size());
  for (long long k = 0; k < n; ++k) {
    acc += current;
    current = P.push_forward(current);
  }
  acc /= static_cast<double>(n);
  return ProbDist::normalized(std::move(acc), kSumTolerance);
}

// Expected hitting time of `target` (tau = inf{n >= 0 : X_n in target}) from
// every state, by the fundamental matrix of the chain killed on `target`:
// h = (I - P_BB)^{-1} 1 on the complement B.
inline Vector expected_hitting_times(const FiniteKernel& P,
                                     const std::vector<Index>& target) {
  const Index n = P.size();
  std::vector<char> in_target(static_cast<std::size_t>(n), 0);
  for (Index t : target) {
    require_state(t, n, "expected_hitting_times");
    in_target[static_cast<std::size_t>(t)] = 1;
  }
  std::vector<Index> rest;
  for (Index x = 0; x < n; ++x) {
    if (!in_target[static_cast<std::size_t>(x)]) rest.push_back(x);
  }
  if (rest.size() == static_cast<std::size_t>(n)) {
    throw InvalidInput("expected_hitting_times: empty target set");
  }
  Vector h = Vector::Zero(n);
  if (rest.empty()) return h;

  const Index m = static_cast<Index>(rest.size());
  Eigen::MatrixXd F = Eigen::MatrixXd::Identity(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) F(i, j) -= P.matrix()(rest[i], rest[j]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(F);
  if (!lu.isInvertible()) {
    throw NumericalFailure(
        "expected_hitting_times: target not reachable from every state");
  }
  const Vector times = lu.solve(Vector::Ones(m));
  if (!times.allFinite() || times.minCoeff() < 0.0) {
    throw NumericalFailure("expected_hitting_times: ill-conditioned solve");
  }
  for (Index i = 0; i < m; ++i) h(rest[i]) = times(i);
  return h;
}

}  // namespace chainperturb
