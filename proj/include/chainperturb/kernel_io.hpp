#pragma once

// JSON documents for kernels, distributions and kernel pairs.
//
//   kernel:       {"states": [labels...], "rows": [[...], ...]}
//   distribution: {"states": [labels...], "weights": [...]}
//   pair:         {"P": <kernel>, "P_eps": <kernel>}
//
// "states" is optional. Rows and weights may be off from summing to one by
// at most 1e-9; they are renormalized on load.

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chainperturb/errors.hpp"
#include "chainperturb/kernel.hpp"

namespace chainperturb {

using Json = nlohmann::json;

struct KernelPair {
  FiniteKernel P;
  FiniteKernel P_eps;
};

namespace detail {

inline std::vector<std::string> read_labels(const Json& doc) {
  std::vector<std::string> labels;
  if (!doc.contains("states")) return labels;
  const auto& states = doc.at("states");
  if (!states.is_array()) throw InvalidInput("\"states\" must be an array");
  for (const auto& s : states) {
    labels.push_back(s.is_string() ? s.get<std::string>() : s.dump());
  }
  return labels;
}

inline Vector read_real_array(const Json& arr, const char* what) {
  if (!arr.is_array()) throw InvalidInput(std::string(what) + " must be an array");
  Vector v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) {
      throw InvalidInput(std::string(what) + " holds a non-numeric entry");
    }
    v(static_cast<Index>(i)) = arr[i].get<double>();
  }
  return v;
}

}  // namespace detail

inline FiniteKernel kernel_from_json(const Json& doc) {
  try {
    if (!doc.is_object() || !doc.contains("rows")) {
      throw InvalidInput("kernel document needs a \"rows\" array");
    }
    const auto& rows = doc.at("rows");
    if (!rows.is_array() || rows.empty()) {
      throw InvalidInput("\"rows\" must be a non-empty array");
    }
    const auto n = static_cast<Index>(rows.size());
    RowMatrix m(n, n);
    for (Index x = 0; x < n; ++x) {
      const Vector r = detail::read_real_array(rows[static_cast<std::size_t>(x)], "row");
      if (r.size() != n) throw DimensionMismatch("kernel row length differs from row count");
      m.row(x) = r.transpose();
    }
    return FiniteKernel::normalized(std::move(m), kLoadTolerance,
                                    detail::read_labels(doc));
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("kernel JSON: ") + e.what());
  }
}

inline Json kernel_to_json(const FiniteKernel& P) {
  Json doc;
  if (!P.labels().empty()) doc["states"] = P.labels();
  Json rows = Json::array();
  for (Index x = 0; x < P.size(); ++x) {
    Json row = Json::array();
    for (Index y = 0; y < P.size(); ++y) row.push_back(P.matrix()(x, y));
    rows.push_back(std::move(row));
  }
  doc["rows"] = std::move(rows);
  return doc;
}

inline ProbDist dist_from_json(const Json& doc) {
  try {
    if (!doc.is_object() || !doc.contains("weights")) {
      throw InvalidInput("distribution document needs a \"weights\" array");
    }
    return ProbDist::normalized(detail::read_real_array(doc.at("weights"), "weights"));
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("distribution JSON: ") + e.what());
  }
}

inline Json dist_to_json(const ProbDist& p,
                         const std::vector<std::string>& labels = {}) {
  Json doc;
  if (!labels.empty()) doc["states"] = labels;
  doc["weights"] = std::vector<double>(p.weights().data(),
                                       p.weights().data() + p.size());
  return doc;
}

inline KernelPair pair_from_json(const Json& doc) {
  if (!doc.is_object() || !doc.contains("P") || !doc.contains("P_eps")) {
    throw InvalidInput("pair document needs \"P\" and \"P_eps\"");
  }
  KernelPair pair{kernel_from_json(doc.at("P")), kernel_from_json(doc.at("P_eps"))};
  require_same_size(pair.P.size(), pair.P_eps.size(), "kernel pair");
  return pair;
}

inline Json pair_to_json(const KernelPair& pair) {
  return Json{{"P", kernel_to_json(pair.P)}, {"P_eps", kernel_to_json(pair.P_eps)}};
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

}  // namespace chainperturb
