#pragma once

// JSON experiment descriptions for the simulate and verify commands.
//
//   {
//     "name": "two_state",
//     "pair": {"P": {...}, "P_eps": {...}},      or "pair_file": "pair.json"
//     "n": 200, "replicates": 2000, "seed": 7,
//     "x0": 0, "x0_eps": 0,                     or "nu": {...}, "nu_eps": {...}
//     "f": [0, 1],
//     "stopping": {"hitting_set": [1]}          or {"deterministic": 20}
//     "cap": 0,
//     "alpha_override": 0.3, "y0_one_probability": 0.0,
//     "checks": ["disagreement", "tail", ...],
//     "lambdas": [0.5, 1, 2],
//     "envelope_first": 1000
//   }
//
// A verify file is either one such object or {"experiments": [...]}.
// Relative "pair_file" paths resolve against the directory of the file.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "chainperturb/errors.hpp"
#include "chainperturb/kernel_io.hpp"
#include "chainperturb/montecarlo.hpp"

namespace chainperturb {

struct ExperimentPlan {
  ExperimentConfig config;
  std::vector<std::string> checks;
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  long long envelope_first = 1000;
};

inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{
      "disagreement", "bounding_occupation", "average_difference", "tail",
      "base_tail",    "decoupling",          "path_law",           "remark_bias",
      "envelope"};
  return names;
}

namespace detail {

template <class T>
T get_or(const Json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("\"") + key + "\": " + e.what());
  }
}

}  // namespace detail

inline ExperimentPlan experiment_from_json(const Json& doc,
                                           const std::filesystem::path& base_dir = {}) {
  if (!doc.is_object()) throw InvalidInput("experiment must be a JSON object");
  KernelPair pair = [&] {
    if (doc.contains("pair")) return pair_from_json(doc.at("pair"));
    if (doc.contains("pair_file")) {
      std::filesystem::path p = detail::get_or<std::string>(doc, "pair_file", "");
      if (p.is_relative()) p = base_dir / p;
      return pair_from_json(read_json_file(p.string()));
    }
    throw InvalidInput("experiment needs \"pair\" or \"pair_file\"");
  }();

  ExperimentPlan plan{ExperimentConfig(std::move(pair.P), std::move(pair.P_eps)), {}};
  ExperimentConfig& c = plan.config;
  c.name = detail::get_or<std::string>(doc, "name", "experiment");
  c.n = detail::get_or<long long>(doc, "n", c.n);
  c.replicates = detail::get_or<long long>(doc, "replicates", c.replicates);
  c.master_seed = detail::get_or<std::uint64_t>(doc, "seed", c.master_seed);
  c.x0 = detail::get_or<Index>(doc, "x0", 0);
  c.x0_eps = detail::get_or<Index>(doc, "x0_eps", c.x0);
  if (doc.contains("nu")) c.nu = dist_from_json(doc.at("nu"));
  if (doc.contains("nu_eps")) c.nu_eps = dist_from_json(doc.at("nu_eps"));
  if (doc.contains("f")) c.f = StateFunction(detail::read_real_array(doc.at("f"), "f"));
  if (doc.contains("stopping")) {
    const Json& s = doc.at("stopping");
    if (s.contains("hitting_set")) {
      c.stopping.kind = StoppingKind::hitting;
      c.stopping.hitting_set = detail::get_or<std::vector<Index>>(s, "hitting_set", {});
      if (c.stopping.hitting_set.empty()) throw InvalidInput("hitting set must be non-empty");
    } else if (s.contains("deterministic")) {
      c.stopping.kind = StoppingKind::deterministic;
      c.stopping.deterministic_n = detail::get_or<long long>(s, "deterministic", 0);
    } else {
      throw InvalidInput("\"stopping\" needs \"hitting_set\" or \"deterministic\"");
    }
  }
  c.cap = detail::get_or<long long>(doc, "cap", 0);
  if (doc.contains("alpha_override")) {
    c.simulation.alpha_override = detail::get_or<double>(doc, "alpha_override", 0.0);
  }
  c.simulation.y0_one_probability = detail::get_or<double>(doc, "y0_one_probability", 0.0);

  plan.checks = detail::get_or<std::vector<std::string>>(doc, "checks", {"disagreement"});
  for (const auto& name : plan.checks) {
    const auto& known = known_checks();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw InvalidInput("unknown check \"" + name + "\"");
    }
  }
  plan.lambdas = detail::get_or<std::vector<double>>(doc, "lambdas", plan.lambdas);
  plan.envelope_first = detail::get_or<long long>(doc, "envelope_first", plan.envelope_first);
  detail::validate(c);
  return plan;
}

inline std::vector<ExperimentPlan> experiments_from_file(const std::string& path) {
  const Json doc = read_json_file(path);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<ExperimentPlan> out;
  if (doc.is_object() && doc.contains("experiments")) {
    const Json& list = doc.at("experiments");
    if (!list.is_array() || list.empty()) {
      throw InvalidInput("\"experiments\" must be a non-empty array");
    }
    for (const auto& e : list) out.push_back(experiment_from_json(e, base));
  } else {
    out.push_back(experiment_from_json(doc, base));
  }
  return out;
}

// Runs every check named in the plan, in order.
inline std::vector<VerificationResult> run_checks(const ExperimentPlan& plan) {
  std::vector<VerificationResult> out;
  const ExperimentConfig& c = plan.config;
  for (const auto& check : plan.checks) {
    if (check == "disagreement") {
      out.push_back(empirical_disagreement(c));
    } else if (check == "bounding_occupation") {
      out.push_back(empirical_bounding_occupation(c));
    } else if (check == "average_difference") {
      out.push_back(empirical_average_difference(c));
    } else if (check == "tail") {
      for (double l : plan.lambdas) out.push_back(empirical_tail(c, l));
    } else if (check == "base_tail") {
      for (double l : plan.lambdas) out.push_back(empirical_base_tail(c, l));
    } else if (check == "decoupling") {
      const DecouplingReport d = empirical_decoupling(c);
      out.push_back(d.coupled);
      if (d.bounding_exact) {
        VerificationResult y;
        y.name = c.name + ":bounding_decoupling";
        y.estimate = d.bounding_estimate;
        y.std_error = d.bounding_std_error;
        y.bound = *d.bounding_exact;
        y.reference = *d.bounding_exact;
        y.replicates_used = c.replicates;
        y.satisfied = std::abs(y.estimate - y.bound) <= kSigmaSlack * y.std_error &&
                      y.estimate <= d.coupled.bound + kSigmaSlack * y.std_error;
        y.note = "two-sided comparison with 1-(1-eps)^N";
        out.push_back(y);
      }
    } else if (check == "path_law") {
      out.push_back(empirical_path_law_distance(c));
    } else if (check == "remark_bias") {
      out.push_back(empirical_remark_bias(c));
    } else if (check == "envelope") {
      const EnvelopeReport env = almost_sure_envelope_check(c, false, plan.envelope_first);
      long long stable = 0;
      for (const auto& t : env.trajectories) stable += t.stable ? 1 : 0;
      VerificationResult r;
      r.name = c.name + ":envelope";
      r.estimate = static_cast<double>(stable) / static_cast<double>(env.trajectories.size());
      r.bound = 1.0;
      r.replicates_used = static_cast<long long>(env.trajectories.size());
      r.satisfied = env.all_stable();
      r.note = "fraction of trajectories with a stable envelope statistic (heuristic)";
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace chainperturb
