#pragma once

// Closed-form evaluators for the perturbation bounds. Each takes the scalar
// constants (a, alpha, epsilon), a horizon n and, where relevant, the initial
// disagreement p0 and the oscillation |f|_*. Out-of-regime parameters raise
// InvalidRegime; nothing here returns NaN or infinity.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chainperturb/errors.hpp"
#include "chainperturb/numeric.hpp"

namespace chainperturb {

struct BoundParams {
  std::optional<double> a;  // Doeblin constant of P
  double alpha = 0.0;       // cross-Doeblin constant
  double epsilon = 0.0;     // local approximation constant
  long long n = 1;          // horizon
  double p0 = 0.0;          // P(X_0 != X_0^eps), or TV of the initial laws
  double f_star = 0.0;      // |f|_*
};

// Slack for alpha + epsilon landing a few ulps above one when epsilon = 1 - alpha.
inline constexpr double kRegimeSlack = 1e-12;

namespace detail {

inline void require_horizon(long long n) {
  if (n < 1) throw InvalidRegime("horizon n must be >= 1");
}

// alpha + epsilon in (0, 1], alpha, epsilon >= 0. Returns alpha + epsilon.
inline double coupling_rate(const BoundParams& p) {
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0) || !(p.epsilon >= 0.0 && p.epsilon <= 1.0)) {
    throw InvalidRegime("alpha and epsilon must lie in [0,1]");
  }
  const double s = p.alpha + p.epsilon;
  if (!(s > 0.0)) throw InvalidRegime("alpha + epsilon must be positive");
  if (s > 1.0 + kRegimeSlack) throw InvalidRegime("requires epsilon <= 1 - alpha");
  require_horizon(p.n);
  return std::min(s, 1.0);
}

inline double doeblin(const BoundParams& p) {
  if (!p.a) throw InvalidRegime("Doeblin constant a is required");
  const double a = *p.a;
  if (!(a > 0.0 && a <= 1.0)) throw InvalidRegime("Doeblin constant must lie in (0,1]");
  require_horizon(p.n);
  return a;
}

inline void require_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidRegime(std::string(what) + " must lie in [0,1]");
}

inline void require_nonneg(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw InvalidRegime(std::string(what) + " must be finite and >= 0");
  }
}

// (1 - (1 - s)^n) / (n s)
inline double averaging_factor(double s, long long n) {
  return (1.0 - contraction_power(1.0 - s, n)) / (static_cast<double>(n) * s);
}

}  // namespace detail

// eps/(alpha+eps) + (1 - (1-alpha-eps)^n)/(n(alpha+eps)) * (p0 - eps/(alpha+eps))
inline double avg_disagreement_bound(const BoundParams& p) {
  const double s = detail::coupling_rate(p);
  detail::require_unit(p.p0, "p0");
  const double floor = p.epsilon / s;
  return floor + detail::averaging_factor(s, p.n) * (p.p0 - floor);
}

// Bound on || (1/n) sum nu1 P^k - (1/n) sum nu2 P_eps^k ||_TV with
// p0 = ||nu1 - nu2||_TV. Same expression as the disagreement bound.
inline double averaged_tv_bound(const BoundParams& p) {
  return avg_disagreement_bound(p);
}

// Bound on E[(time average of f(X) - time average of f(X^eps))^2].
inline double coupled_variance_bound(const BoundParams& p) {
  const double s = detail::coupling_rate(p);
  detail::require_nonneg(p.f_star, "f_star");
  const double n = static_cast<double>(p.n);
  const double s2 = s * s;
  return 4.0 * p.f_star * p.f_star *
         (p.epsilon * p.epsilon / s2 + 2.0 / (n * n * s2) +
          (2.0 / n) * p.alpha * p.alpha / (s2 * s2));
}

// exp(-(alpha+eps)^2 lambda^2 / 2)
inline double coupled_concentration_bound(double lambda, const BoundParams& p) {
  const double s = detail::coupling_rate(p);
  if (!(lambda > 0.0)) throw InvalidRegime("lambda must be positive");
  return std::exp(-0.5 * s * s * lambda * lambda);
}

// Deviation level for the disagreement fraction matched with the bound above.
// `initial_disagreement` is the indicator 1{X_0 != X_0^eps}.
inline double coupled_concentration_threshold(double lambda, const BoundParams& p,
                                              double initial_disagreement) {
  const double s = detail::coupling_rate(p);
  if (!(lambda > 0.0)) throw InvalidRegime("lambda must be positive");
  const double n = static_cast<double>(p.n);
  return p.epsilon / s + initial_disagreement / (n * s) +
         lambda / std::sqrt(n);
}

// 4 |f|_*^2 / (a^2 n) * (2 + 8/n)
inline double variance_of_time_average_bound(const BoundParams& p) {
  const double a = detail::doeblin(p);
  detail::require_nonneg(p.f_star, "f_star");
  const double n = static_cast<double>(p.n);
  return 4.0 * p.f_star * p.f_star / (a * a * n) * (2.0 + 8.0 / n);
}

// 2 exp(-a^2 lambda^2 / 32)
inline double base_concentration_bound(double lambda, const BoundParams& p) {
  const double a = detail::doeblin(p);
  if (!(lambda > 0.0)) throw InvalidRegime("lambda must be positive");
  return 2.0 * std::exp(-a * a * lambda * lambda / 32.0);
}

// 4 |f|_* / (n a) + lambda |f|_* / sqrt(n)
inline double base_concentration_threshold(double lambda, const BoundParams& p) {
  const double a = detail::doeblin(p);
  if (!(lambda > 0.0)) throw InvalidRegime("lambda must be positive");
  detail::require_nonneg(p.f_star, "f_star");
  const double n = static_cast<double>(p.n);
  return 4.0 * p.f_star / (n * a) + lambda * p.f_star / std::sqrt(n);
}

// ||mu - mu_eps||_TV <= eps / a
inline double stationary_gap_bound(double epsilon, double a) {
  if (!(a > 0.0 && a <= 1.0)) throw InvalidRegime("Doeblin constant must lie in (0,1]");
  detail::require_nonneg(epsilon, "epsilon");
  return epsilon / a;
}

// P(S_eps <= tau) <= eps E tau, capped at one.
inline double decoupling_time_bound(double epsilon, double expected_tau) {
  detail::require_unit(epsilon, "epsilon");
  detail::require_nonneg(expected_tau, "expected tau");
  return std::min(1.0, epsilon * expected_tau);
}

// TV between the laws of an F_tau-measurable path functional under the two
// chains started from the same law. Measurability is the caller's job.
inline double path_law_bound(double epsilon, double expected_tau) {
  return decoupling_time_bound(epsilon, expected_tau);
}

struct BoundReport {
  std::string name;
  std::optional<double> value;      // capped at 1 for probability-valued bounds
  std::optional<double> raw_value;  // formula value before capping
  bool capped = false;
  std::optional<double> threshold;  // deviation level, for tail bounds
  BoundParams params;
  bool regime_ok = false;
  std::string message;  // reason when regime_ok is false
};

// Evaluates `eval` into a report. Regime errors become regime_ok = false.
inline BoundReport make_report(std::string name, const BoundParams& params,
                               bool probability_valued,
                               const std::function<double()>& eval,
                               const std::function<double()>& threshold = {}) {
  BoundReport r;
  r.name = std::move(name);
  r.params = params;
  try {
    const double raw = eval();
    if (!std::isfinite(raw)) throw InvalidRegime("bound is not finite");
    r.raw_value = raw;
    r.value = raw;
    if (probability_valued && raw > 1.0) {
      r.value = 1.0;
      r.capped = true;
    }
    if (threshold) r.threshold = threshold();
    r.regime_ok = true;
  } catch (const InvalidRegime& e) {
    r.value.reset();
    r.raw_value.reset();
    r.threshold.reset();
    r.regime_ok = false;
    r.message = e.what();
  }
  return r;
}

// Mean bias, second moment and tail of mu f - (time average of f(X^eps))
// from the Poisson-equation argument under the Doeblin constant a and the
// local constant eps. f_inf is |f|_inf (or |f|_* after recentering f).
inline std::array<BoundReport, 3> remark_perturbation_bounds(const BoundParams& p,
                                                             double f_inf,
                                                             double lambda = 1.0) {
  auto mean_bias = [&] {
    const double a = detail::doeblin(p);
    detail::require_nonneg(f_inf, "f_inf");
    detail::require_nonneg(p.epsilon, "epsilon");
    const double n = static_cast<double>(p.n);
    return 4.0 * f_inf / (a * n) + 4.0 * p.epsilon * f_inf / a;
  };
  auto second_moment = [&] {
    const double a = detail::doeblin(p);
    detail::require_nonneg(f_inf, "f_inf");
    detail::require_nonneg(p.epsilon, "epsilon");
    const double n = static_cast<double>(p.n);
    const double f2 = f_inf * f_inf;
    return 3.0 / (a * a) * (16.0 * p.epsilon * p.epsilon + 16.0 / (n * n)) * f2 +
           12.0 / (a * a * n) * f2;
  };
  auto tail = [&] {
    const double a = detail::doeblin(p);
    if (!(lambda > 0.0)) throw InvalidRegime("lambda must be positive");
    return 2.0 * std::exp(-a * a * lambda * lambda / 32.0);
  };
  auto tail_threshold = [&] {
    const double a = detail::doeblin(p);
    detail::require_nonneg(f_inf, "f_inf");
    const double n = static_cast<double>(p.n);
    return 4.0 / a * (p.epsilon + 1.0 / n) * f_inf + lambda * f_inf / std::sqrt(n);
  };
  return {make_report("remark_mean_bias", p, false, mean_bias),
          make_report("remark_second_moment", p, false, second_moment),
          make_report("remark_tail", p, true, tail, tail_threshold)};
}

// Every evaluator applicable to `p`, in a fixed order. Bounds that need an
// expected stopping time are omitted.
inline std::vector<BoundReport> bound_table(const BoundParams& p, double lambda) {
  std::vector<BoundReport> out;
  out.push_back(make_report("avg_disagreement", p, true,
                            [&] { return avg_disagreement_bound(p); }));
  out.push_back(make_report("averaged_tv", p, true,
                            [&] { return averaged_tv_bound(p); }));
  out.push_back(make_report("coupled_variance", p, false,
                            [&] { return coupled_variance_bound(p); }));
  out.push_back(make_report(
      "coupled_concentration", p, true,
      [&] { return coupled_concentration_bound(lambda, p); },
      [&] { return coupled_concentration_threshold(lambda, p, p.p0); }));
  out.push_back(make_report("variance_of_time_average", p, false,
                            [&] { return variance_of_time_average_bound(p); }));
  out.push_back(make_report(
      "base_concentration", p, true,
      [&] { return base_concentration_bound(lambda, p); },
      [&] { return base_concentration_threshold(lambda, p); }));
  out.push_back(make_report("stationary_gap", p, true, [&] {
    if (!p.a) throw InvalidRegime("Doeblin constant a is required");
    return stationary_gap_bound(p.epsilon, *p.a);
  }));
  for (auto& r : remark_perturbation_bounds(p, p.f_star, lambda)) out.push_back(std::move(r));
  return out;
}

}  // namespace chainperturb
