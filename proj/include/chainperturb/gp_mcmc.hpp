#pragma once

// Gibbs sampler for the hyperparameters (x1, x2) of a Gaussian-process model
// on a discrete m x m grid, built exactly as a finite kernel. P uses the full
// Gram matrix; P_eps replaces Sigma by the rank-q eigen truncation Lambda
// Lambda' and inverts with the Woodbury identity.
//
// Model: z = x3 f + noise, f ~ N(0, x2 Sigma(x1, W)), noise ~ N(0, x3^2 I),
// Sigma_ij = exp(-x1 |w_i - w_j|^2). After integrating out x3^2 under an
// inverse-gamma(a/2, b/2) prior the likelihood is proportional to
//   |I + x2 Sigma|^{-1/2} (b + z'(I + x2 Sigma)^{-1} z)^{-(a+n)/2}.
// Everything is kept in log space.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "chainperturb/csv.hpp"
#include "chainperturb/errors.hpp"
#include "chainperturb/kernel.hpp"
#include "chainperturb/parallel.hpp"
#include "chainperturb/rng.hpp"

namespace chainperturb {

using DenseMatrix = Eigen::MatrixXd;

inline constexpr double kGramJitter = 1e-10;
inline constexpr double kCorrelationFloor = 0.01;

struct GPConfig {
  long long n = 100;
  Vector W;                     // sampling points, w_i = i/n by default
  std::vector<double> grid_x1;  // length-scale atoms
  std::vector<double> grid_x2;  // amplitude atoms
  double prior_a = 2.0;
  double prior_b = 2.0;
  double true_x1 = 0.0;
  double true_x2 = 0.9;
  double true_x3_sq = 0.2;
  std::uint64_t seed = 1;

  Index m() const { return static_cast<Index>(grid_x1.size()); }

  // Largest squared distance between sampling points.
  double max_sq_distance() const {
    return (W.maxCoeff() - W.minCoeff()) * (W.maxCoeff() - W.minCoeff());
  }

  // w_i = i/n; x1 atoms -log(0.01) / (d_j D^2) with d_j = (j - 1/2)/m and D^2
  // the largest squared distance, so correlation falls to 0.01 at the
  // fraction d_j of the range; x2 atoms at the midpoints of m equal cells
  // of [0.45, 1.45]; true x1 puts the 0.01 level at fraction 0.45.
  static GPConfig standard(long long n, Index m, std::uint64_t seed = 1) {
    if (n < 2) throw InvalidInput("GP config needs n >= 2");
    if (m < 2) throw InvalidInput("GP config needs m >= 2");
    GPConfig c;
    c.n = n;
    c.seed = seed;
    c.W.resize(n);
    for (long long i = 0; i < n; ++i) c.W(i) = static_cast<double>(i + 1) / static_cast<double>(n);
    const double D2 = c.max_sq_distance();
    const double level = -std::log(kCorrelationFloor);
    for (Index j = m; j >= 1; --j) {
      const double d = (static_cast<double>(j) - 0.5) / static_cast<double>(m);
      c.grid_x1.push_back(level / (d * D2));
    }
    for (Index j = 1; j <= m; ++j) {
      c.grid_x2.push_back(0.45 + (static_cast<double>(j) - 0.5) / static_cast<double>(m));
    }
    c.true_x1 = level / (0.45 * D2);
    return c;
  }

  static GPConfig desk_scale(std::uint64_t seed = 1) { return standard(100, 5, seed); }
  static GPConfig full_scale(std::uint64_t seed = 1) { return standard(1000, 10, seed); }

  void validate() const {
    if (n < 2 || W.size() != n) throw InvalidInput("GP config: need n >= 2 points");
    if (!W.allFinite()) throw InvalidInput("GP config: points must be finite");
    if (grid_x1.size() < 2 || grid_x1.size() != grid_x2.size()) {
      throw InvalidInput("GP config: grids need m >= 2 atoms each, of equal size");
    }
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!std::all_of(grid_x1.begin(), grid_x1.end(), positive) ||
        !std::all_of(grid_x2.begin(), grid_x2.end(), positive)) {
      throw InvalidInput("GP config: grid atoms must be positive");
    }
    if (!positive(prior_a) || !positive(prior_b)) {
      throw InvalidInput("GP config: prior parameters must be positive");
    }
    if (!(true_x1 > 0.0) || !(true_x2 >= 0.0) || !(true_x3_sq >= 0.0)) {
      throw InvalidInput("GP config: invalid true parameters");
    }
  }
};

inline nlohmann::json gp_config_to_json(const GPConfig& c) {
  nlohmann::json j;
  j["n"] = c.n;
  j["W"] = std::vector<double>(c.W.data(), c.W.data() + c.W.size());
  j["grid_x1"] = c.grid_x1;
  j["grid_x2"] = c.grid_x2;
  j["prior_a"] = c.prior_a;
  j["prior_b"] = c.prior_b;
  j["true_params"] = {{"x1", c.true_x1}, {"x2", c.true_x2}, {"x3_sq", c.true_x3_sq}};
  j["seed"] = c.seed;
  return j;
}

// Sigma_ij = exp(-x1 (w_i - w_j)^2).
inline DenseMatrix gram_matrix(double x1, const Vector& W) {
  if (!(x1 > 0.0) || !std::isfinite(x1)) throw InvalidInput("gram_matrix: x1 must be positive");
  const Index n = W.size();
  DenseMatrix S(n, n);
  for (Index i = 0; i < n; ++i) {
    S(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double d = W(i) - W(j);
      S(i, j) = S(j, i) = std::exp(-x1 * d * d);
    }
  }
  return S;
}

namespace detail {

// Standard normals by Box-Muller on the stream's uniforms, so draws are
// identical across standard libraries.
inline Vector standard_normals(Index count, RandomStream& rng) {
  Vector out(count);
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (Index i = 0; i < count; i += 2) {
    const double radius = std::sqrt(-2.0 * std::log(1.0 - rng.uniform()));
    const double angle = kTwoPi * rng.uniform();
    out(i) = radius * std::cos(angle);
    if (i + 1 < count) out(i + 1) = radius * std::sin(angle);
  }
  return out;
}

}  // namespace detail

// Draws f ~ N(0, x2 Sigma(x1, W)) and returns z = x3 f + N(0, x3^2 I), so
// Cov(z) = x3^2 (I + x2 Sigma). The replicate index selects the substream.
inline Vector generate_data(const GPConfig& config, std::uint64_t replicate = 0) {
  config.validate();
  RandomStream rng(config.seed, replicate);
  const Index n = config.n;
  DenseMatrix cov = config.true_x2 * gram_matrix(config.true_x1, config.W);
  Eigen::LLT<DenseMatrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += kGramJitter;
    llt.compute(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalFailure("generate_data: Cholesky failed after jitter");
    }
  }
  const Vector f = llt.matrixL() * detail::standard_normals(n, rng);
  const double x3 = std::sqrt(config.true_x3_sq);
  return x3 * f + x3 * detail::standard_normals(n, rng);
}

// Eigenpairs of a Gram matrix in descending order of eigenvalue, ties kept in
// solver order.
struct GramSpectrum {
  Vector values;
  DenseMatrix vectors;  // column j pairs with values(j)
};

inline GramSpectrum gram_spectrum(const DenseMatrix& sigma) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(sigma);
  if (solver.info() != Eigen::Success) throw NumericalFailure("eigensolver failed");
  const Index n = sigma.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Vector& ev = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return ev(i) > ev(j); });
  GramSpectrum s;
  s.values.resize(n);
  s.vectors.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    s.values(k) = ev(order[static_cast<std::size_t>(k)]);
    s.vectors.col(k) = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }
  return s;
}

struct LowRankFactor {
  DenseMatrix lambda;  // n x q
  Index q = 0;
};

// Lambda = U_q diag(sqrt(lambda_1..q)); eigenvalues below zero (rounding)
// contribute nothing.
inline LowRankFactor low_rank_factor(const GramSpectrum& spectrum, Index q) {
  const Index n = spectrum.values.size();
  if (q < 1 || q > n) throw InvalidInput("low_rank_factor: need 1 <= q <= n");
  LowRankFactor f;
  f.q = q;
  f.lambda = spectrum.vectors.leftCols(q);
  for (Index k = 0; k < q; ++k) f.lambda.col(k) *= std::sqrt(std::max(spectrum.values(k), 0.0));
  return f;
}

inline LowRankFactor low_rank_factor(const DenseMatrix& sigma, Index q) {
  return low_rank_factor(gram_spectrum(sigma), q);
}

// (I + c Lambda Lambda')^{-1} = I - Lambda (c^{-1} I_q + Lambda'Lambda)^{-1} Lambda'.
inline DenseMatrix woodbury_inverse(const DenseMatrix& lambda, double c) {
  DenseMatrix inner = lambda.transpose() * lambda;
  inner.diagonal().array() += 1.0 / c;
  Eigen::LLT<DenseMatrix> llt(inner);
  if (llt.info() != Eigen::Success) throw NumericalFailure("woodbury: inner matrix not PD");
  return DenseMatrix::Identity(lambda.rows(), lambda.rows()) -
         lambda * llt.solve(lambda.transpose());
}

// log |I + c Lambda Lambda'| computed as log |I_q + c Lambda'Lambda|.
inline double woodbury_logdet(const DenseMatrix& lambda, double c) {
  DenseMatrix small = c * (lambda.transpose() * lambda);
  small.diagonal().array() += 1.0;
  Eigen::LLT<DenseMatrix> llt(small);
  if (llt.info() != Eigen::Success) throw NumericalFailure("woodbury: determinant factor not PD");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

struct LikelihoodEngine {
  enum class Kind { exact, low_rank };
  Kind kind = Kind::exact;
  Index q = 0;

  static LikelihoodEngine exact() { return {}; }
  static LikelihoodEngine low_rank(Index q) { return {Kind::low_rank, q}; }
};

namespace detail {

inline double likelihood_from_parts(double logdet, double quad, double a, double b, Index n) {
  if (!(b + quad > 0.0)) throw NumericalFailure("likelihood: b + z'Mz must be positive");
  return -0.5 * logdet - 0.5 * (a + static_cast<double>(n)) * std::log(b + quad);
}

inline double exact_log_likelihood(const DenseMatrix& sigma, double x2, const Vector& z,
                                   double a, double b) {
  DenseMatrix M = x2 * sigma;
  M.diagonal().array() += 1.0;
  Eigen::LLT<DenseMatrix> llt(M);
  if (llt.info() != Eigen::Success) throw NumericalFailure("likelihood: I + x2 Sigma not PD");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double quad = z.dot(llt.solve(z));
  return likelihood_from_parts(logdet, quad, a, b, z.size());
}

inline double low_rank_log_likelihood(const DenseMatrix& lambda, double x2, const Vector& z,
                                      double a, double b) {
  DenseMatrix inner = lambda.transpose() * lambda;
  inner.diagonal().array() += 1.0 / x2;
  Eigen::LLT<DenseMatrix> llt(inner);
  if (llt.info() != Eigen::Success) throw NumericalFailure("likelihood: Woodbury inner solve not PD");
  const Vector lz = lambda.transpose() * z;
  const double quad = z.squaredNorm() - lz.dot(llt.solve(lz));
  // |I_q + x2 L'L| = x2^q |x2^{-1} I_q + L'L|
  const double logdet = static_cast<double>(lambda.cols()) * std::log(x2) +
                        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return likelihood_from_parts(logdet, quad, a, b, z.size());
}

}  // namespace detail

// Log of the unnormalized marginal likelihood of z at (x1, x2).
inline double marginal_log_likelihood(double x1, double x2, const Vector& z, const Vector& W,
                                      double prior_b, double prior_a,
                                      LikelihoodEngine engine = LikelihoodEngine::exact()) {
  require_same_size(z.size(), W.size(), "marginal_log_likelihood");
  if (!(x2 > 0.0) || !(prior_a > 0.0) || !(prior_b > 0.0)) {
    throw InvalidInput("marginal_log_likelihood: parameters must be positive");
  }
  const DenseMatrix sigma = gram_matrix(x1, W);
  if (engine.kind == LikelihoodEngine::Kind::exact) {
    return detail::exact_log_likelihood(sigma, x2, z, prior_a, prior_b);
  }
  const LowRankFactor f = low_rank_factor(sigma, engine.q);
  return detail::low_rank_log_likelihood(f.lambda, x2, z, prior_a, prior_b);
}

// Per-x1 Gram matrices and spectra for one configuration, shared by every
// engine and rank.
struct GramCache {
  std::vector<DenseMatrix> sigma;
  std::vector<GramSpectrum> spectrum;
};

inline GramCache build_gram_cache(const GPConfig& config) {
  config.validate();
  GramCache cache;
  const auto m = static_cast<std::size_t>(config.m());
  cache.sigma.resize(m);
  cache.spectrum.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    cache.sigma[i] = gram_matrix(config.grid_x1[i], config.W);
    cache.spectrum[i] = gram_spectrum(cache.sigma[i]);
  }
  return cache;
}

// table(i1, i2) = log L(z | x1 = grid_x1[i1], x2 = grid_x2[i2]).
inline DenseMatrix likelihood_table(const GPConfig& config, const GramCache& cache,
                                    const Vector& z, LikelihoodEngine engine,
                                    std::size_t threads = 1) {
  require_same_size(z.size(), config.n, "likelihood_table");
  const Index m = config.m();
  if (engine.kind == LikelihoodEngine::Kind::low_rank && (engine.q < 1 || engine.q > config.n)) {
    throw InvalidInput("likelihood_table: need 1 <= q <= n");
  }
  DenseMatrix table(m, m);
  parallel_for(
      static_cast<std::size_t>(m * m),
      [&](std::size_t cell) {
        const auto i1 = static_cast<Index>(cell) / m;
        const auto i2 = static_cast<Index>(cell) % m;
        const double x2 = config.grid_x2[static_cast<std::size_t>(i2)];
        const auto k = static_cast<std::size_t>(i1);
        if (engine.kind == LikelihoodEngine::Kind::exact) {
          table(i1, i2) =
              detail::exact_log_likelihood(cache.sigma[k], x2, z, config.prior_a, config.prior_b);
        } else {
          const LowRankFactor f = low_rank_factor(cache.spectrum[k], engine.q);
          table(i1, i2) =
              detail::low_rank_log_likelihood(f.lambda, x2, z, config.prior_a, config.prior_b);
        }
      },
      threads);
  return table;
}

namespace detail {

template <class Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& logs) {
  const double top = logs.maxCoeff();
  if (!std::isfinite(top)) throw NumericalFailure("gibbs: non-finite log-likelihood");
  Vector w = (logs.array() - top).exp().matrix();
  return w / w.sum();
}

}  // namespace detail

// Gibbs kernel on states (i1, i2) -> index i1 * m + i2:
//   P((x1, x2), (y1, y2)) = r(y2 | x1) s(y1 | y2)
// with r(. | x1) proportional to L(z | x1, .) and s(. | x2) to L(z | ., x2).
inline FiniteKernel gibbs_kernel_from_table(const DenseMatrix& log_table) {
  const Index m = log_table.rows();
  require_same_size(log_table.cols(), m, "gibbs_kernel_from_table");
  DenseMatrix r(m, m), s(m, m);  // r(i1, j2), s(j2, j1)
  for (Index i1 = 0; i1 < m; ++i1) r.row(i1) = detail::softmax(log_table.row(i1)).transpose();
  for (Index j2 = 0; j2 < m; ++j2) s.row(j2) = detail::softmax(log_table.col(j2)).transpose();

  RowMatrix P(m * m, m * m);
  for (Index i1 = 0; i1 < m; ++i1) {
    for (Index j1 = 0; j1 < m; ++j1) {
      for (Index j2 = 0; j2 < m; ++j2) P(i1 * m, j1 * m + j2) = r(i1, j2) * s(j2, j1);
    }
    const double total = P.row(i1 * m).sum();
    if (!(total > 0.0) || std::abs(total - 1.0) > 1e-10) {
      throw NumericalFailure("gibbs: transition row lost its mass");
    }
    for (Index i2 = 1; i2 < m; ++i2) P.row(i1 * m + i2) = P.row(i1 * m);
  }
  for (Index x = 0; x < m * m; ++x) {
    if (P.row(x) != P.row((x / m) * m)) throw NumericalFailure("gibbs: rows must not depend on x2");
  }
  return FiniteKernel(std::move(P));
}

inline FiniteKernel gibbs_transition_matrix(const GPConfig& config, const Vector& z,
                                            LikelihoodEngine engine) {
  const GramCache cache = build_gram_cache(config);
  return gibbs_kernel_from_table(likelihood_table(config, cache, z, engine));
}

struct EpsilonAlpha {
  double epsilon = 0.0;
  double alpha = 0.0;
  double ratio() const { return epsilon + alpha > 0.0 ? epsilon / (epsilon + alpha) : 0.0; }
};

// Rows depend on x1 only, so the suprema run over the m distinct rows.
inline EpsilonAlpha epsilon_alpha_from_kernels(const FiniteKernel& P_eps, const FiniteKernel& P,
                                               Index m) {
  require_same_size(P.size(), m * m, "epsilon_alpha_from_kernels");
  RowMatrix first(m, m * m), second(m, m * m);
  for (Index i1 = 0; i1 < m; ++i1) {
    first.row(i1) = P_eps.row(i1 * m);
    second.row(i1) = P.row(i1 * m);
  }
  EpsilonAlpha out;
  out.epsilon = max_row_tv(first, second, /*diagonal_only=*/true);
  out.alpha = 1.0 - max_row_tv(first, second);
  return out;
}

inline EpsilonAlpha epsilon_alpha_for_gp(const GPConfig& config, const Vector& z, Index q) {
  if (q < 1 || q > config.n) throw InvalidInput("epsilon_alpha_for_gp: need 1 <= q <= n");
  const GramCache cache = build_gram_cache(config);
  const FiniteKernel P =
      gibbs_kernel_from_table(likelihood_table(config, cache, z, LikelihoodEngine::exact()));
  const FiniteKernel P_eps =
      gibbs_kernel_from_table(likelihood_table(config, cache, z, LikelihoodEngine::low_rank(q)));
  return epsilon_alpha_from_kernels(P_eps, P, config.m());
}

struct SweepRow {
  long long replicate = 0;
  Index q = 0;
  double epsilon = 0.0;
  double alpha = 0.0;
  double ratio = 0.0;
  bool non_monotone = false;  // epsilon rose relative to the previous q
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> failures;  // replicates that could not be completed
};

// For each replicate dataset, epsilon and alpha for each q in q_list (taken
// in increasing order), stopping after the first q with epsilon < threshold.
// Replicates run in parallel; within one the Gram spectra are computed once
// and shared across q. A failing replicate is reported in `failures` and the
// others are kept.
inline SweepResult figure_sweep(const GPConfig& config, long long replicates,
                                std::vector<Index> q_list, double eps_threshold,
                                std::size_t threads = worker_count()) {
  config.validate();
  if (replicates < 1) throw InvalidInput("figure_sweep: replicates must be >= 1");
  std::sort(q_list.begin(), q_list.end());
  q_list.erase(std::unique(q_list.begin(), q_list.end()), q_list.end());
  for (Index q : q_list) {
    if (q < 1 || q > config.n) throw InvalidInput("figure_sweep: q outside [1, n]");
  }
  const GramCache cache = build_gram_cache(config);
  const Index m = config.m();

  std::vector<std::vector<SweepRow>> per(static_cast<std::size_t>(replicates));
  std::vector<std::string> errors(static_cast<std::size_t>(replicates));
  parallel_for(
      per.size(),
      [&](std::size_t r) {
        try {
          const Vector z = generate_data(config, r);
          const FiniteKernel P =
              gibbs_kernel_from_table(likelihood_table(config, cache, z, LikelihoodEngine::exact()));
          std::optional<double> previous;
          for (Index q : q_list) {
            const FiniteKernel P_eps = gibbs_kernel_from_table(
                likelihood_table(config, cache, z, LikelihoodEngine::low_rank(q)));
            const EpsilonAlpha ea = epsilon_alpha_from_kernels(P_eps, P, m);
            SweepRow row;
            row.replicate = static_cast<long long>(r);
            row.q = q;
            row.epsilon = ea.epsilon;
            row.alpha = ea.alpha;
            row.ratio = ea.ratio();
            row.non_monotone = previous && ea.epsilon > *previous;
            previous = ea.epsilon;
            per[r].push_back(row);
            if (ea.epsilon < eps_threshold) break;
          }
        } catch (const Error& e) {
          errors[r] = "replicate " + std::to_string(r) + ": " + e.what();
        }
      },
      threads);

  SweepResult result;
  for (std::size_t r = 0; r < per.size(); ++r) {
    result.rows.insert(result.rows.end(), per[r].begin(), per[r].end());
    if (!errors[r].empty()) result.failures.push_back(errors[r]);
  }
  return result;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "replicate,q,epsilon,alpha,ratio\n";
  for (const auto& row : sweep.rows) {
    out << row.replicate << ',' << row.q << ',' << format_real(row.epsilon) << ','
        << format_real(row.alpha) << ',' << format_real(row.ratio) << '\n';
  }
}

}  // namespace chainperturb
