#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dilemma/backend.hpp"
#include "dilemma/scenario.hpp"
#include "dilemma/version.hpp"

namespace dilemma {

inline constexpr int kNumDimensions = 9;
inline constexpr int kNumCoefficients = kNumDimensions + 1;  // + intercept

// One conjoint alternative: y = 1 when this side is struck, 0 when spared;
// D_s = 1 when the side carries dimension s's focal level.
struct ConjointRow {
  double y = 0.0;
  std::array<double, kNumDimensions> d{};
  std::string cluster_id;
  std::string scenario_id;
};

enum class ClusterMode { scenario, run };

struct DesignResult {
  std::vector<ConjointRow> rows;
  std::vector<std::string> tie_scenario_ids;  // excluded pairs
};

// Hard-choice resolution by argmax keeps the AMCE deterministic given the
// records; exact ties are excluded and reported.
inline DesignResult build_design(const std::vector<Scenario>& scenarios,
                                 const std::vector<ChoiceRecord>& records,
                                 ClusterMode mode = ClusterMode::scenario,
                                 const std::string& run_id = "run") {
  std::map<std::string, const Scenario*> by_id;
  for (const auto& s : scenarios) by_id[s.id] = &s;
  DesignResult out;
  out.rows.reserve(records.size() * 2);
  for (const auto& r : records) {
    auto it = by_id.find(r.scenario_id);
    if (it == by_id.end())
      throw std::invalid_argument("build_design: unknown scenario " +
                                  r.scenario_id);
    const Scenario& s = *it->second;
    if (r.p1 == r.p2) {
      out.tie_scenario_ids.push_back(s.id);
      continue;
    }
    int chosen_case = r.p1 > r.p2 ? 1 : 2;
    int victim = s.case_victim(chosen_case);
    for (int side = 0; side < 2; ++side) {
      ConjointRow row;
      row.y = side == victim ? 1.0 : 0.0;
      for (int k = 0; k < kNumDimensions; ++k)
        row.d[static_cast<std::size_t>(k)] =
            s.focal_side(kAllDimensions[static_cast<std::size_t>(k)]) == side
                ? 1.0
                : 0.0;
      row.cluster_id = mode == ClusterMode::scenario ? s.id : run_id;
      row.scenario_id = s.id;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

struct OlsFit {
  Eigen::VectorXd beta;      // intercept + 9 dummies
  Eigen::MatrixXd xtx_inv;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

inline const char* coefficient_name(int idx) {
  if (idx == 0) return "intercept";
  return dimension_name(kAllDimensions[static_cast<std::size_t>(idx - 1)]);
}

inline OlsFit ols_fit(const std::vector<ConjointRow>& rows) {
  if (rows.size() < kNumCoefficients)
    throw std::invalid_argument("ols_fit: fewer rows than coefficients");
  Eigen::MatrixXd x(rows.size(), kNumCoefficients);
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (int k = 0; k < kNumDimensions; ++k)
      x(static_cast<Eigen::Index>(i), k + 1) =
          rows[i].d[static_cast<std::size_t>(k)];
    y(static_cast<Eigen::Index>(i)) = rows[i].y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < kNumCoefficients) {
    // Columns permuted past the numerical rank are the dependent ones.
    std::string names;
    auto perm = qr.colsPermutation().indices();
    for (Eigen::Index pos = qr.rank(); pos < kNumCoefficients; ++pos) {
      if (!names.empty()) names += ", ";
      names += coefficient_name(static_cast<int>(perm(pos)));
    }
    throw std::invalid_argument("ols_fit: rank-deficient design; collinear: " +
                                names);
  }
  OlsFit fit;
  fit.beta = qr.solve(y);
  fit.residuals = y - x * fit.beta;
  fit.xtx_inv = (x.transpose() * x).inverse();
  fit.x = std::move(x);
  fit.y = std::move(y);
  return fit;
}

// Cluster-robust sandwich: (X'X)^-1 (sum_g X_g' e_g e_g' X_g) (X'X)^-1.
inline std::array<double, kNumCoefficients> cluster_se(
    const std::vector<ConjointRow>& rows, const OlsFit& fit) {
  if (static_cast<Eigen::Index>(rows.size()) != fit.x.rows())
    throw std::invalid_argument("cluster_se: rows do not match the fit");
  std::map<std::string, Eigen::VectorXd> scores;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto ins = scores.try_emplace(rows[i].cluster_id,
                                  Eigen::VectorXd::Zero(kNumCoefficients));
    ins.first->second +=
        fit.x.row(static_cast<Eigen::Index>(i)).transpose() *
        fit.residuals(static_cast<Eigen::Index>(i));
  }
  if (scores.size() < 2)
    throw std::invalid_argument(
        "cluster_se: need at least 2 clusters (variance undefined)");
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(kNumCoefficients, kNumCoefficients);
  for (const auto& [id, g] : scores) meat += g * g.transpose();
  Eigen::MatrixXd cov = fit.xtx_inv * meat * fit.xtx_inv;
  std::array<double, kNumCoefficients> se{};
  for (int k = 0; k < kNumCoefficients; ++k)
    se[static_cast<std::size_t>(k)] = std::sqrt(cov(k, k));
  return se;
}

// ---------------------------------------------------------------------------
// AMCE vectors and alignment scores.
// ---------------------------------------------------------------------------

struct AmceVector {
  std::array<double, kNumDimensions> delta{};
  std::array<double, kNumDimensions> se{};
  std::size_t n_obs = 0;
  std::string source;  // "human-reference" | "model-run"
  std::string model;
  double dropout_rate = 0.0;
  std::string coding = kAmceCodingVersion;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["v"] = kSchemaVersion;
    j["source"] = source;
    j["model"] = model;
    j["dropout_rate"] = dropout_rate;
    j["coding"] = coding;
    j["n_obs"] = n_obs;
    j["labels"] = nlohmann::ordered_json::array();
    for (Dimension d : kAllDimensions) j["labels"].push_back(dimension_name(d));
    j["delta"] = delta;
    j["se"] = se;
    return j;
  }

  static AmceVector from_json(const nlohmann::ordered_json& j) {
    AmceVector v;
    v.source = j.value("source", "");
    v.model = j.value("model", "");
    v.dropout_rate = j.value("dropout_rate", 0.0);
    v.coding = j.value("coding", "");
    v.n_obs = j.value("n_obs", std::size_t{0});
    if (j.contains("labels")) {
      const auto& labels = j.at("labels");
      if (labels.size() != kNumDimensions)
        throw std::invalid_argument("AmceVector: expected 9 labels");
      for (int k = 0; k < kNumDimensions; ++k)
        if (labels[static_cast<std::size_t>(k)].get<std::string>() !=
            dimension_name(kAllDimensions[static_cast<std::size_t>(k)]))
          throw std::invalid_argument(
              "AmceVector: dimension order mismatch at index " +
              std::to_string(k));
    }
    const auto& delta = j.at("delta");
    if (delta.size() != kNumDimensions)
      throw std::invalid_argument("AmceVector: expected 9 coordinates");
    for (int k = 0; k < kNumDimensions; ++k)
      v.delta[static_cast<std::size_t>(k)] =
          delta[static_cast<std::size_t>(k)].get<double>();
    if (j.contains("se"))
      for (int k = 0; k < kNumDimensions; ++k)
        v.se[static_cast<std::size_t>(k)] =
            j.at("se")[static_cast<std::size_t>(k)].get<double>();
    return v;
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write AMCE vector: " + path);
    out << to_json().dump(2) << "\n";
  }

  static AmceVector read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read AMCE vector: " + path);
    nlohmann::ordered_json j;
    in >> j;
    return from_json(j);
  }
};

// Fit + clustered SEs in one step.
inline AmceVector estimate_amce(const std::vector<ConjointRow>& rows,
                                const std::string& model, double dropout_rate) {
  OlsFit fit = ols_fit(rows);
  auto se = cluster_se(rows, fit);
  AmceVector v;
  v.source = "model-run";
  v.model = model;
  v.dropout_rate = dropout_rate;
  v.n_obs = rows.size();
  for (int k = 0; k < kNumDimensions; ++k) {
    v.delta[static_cast<std::size_t>(k)] = fit.beta(k + 1);
    v.se[static_cast<std::size_t>(k)] = se[static_cast<std::size_t>(k + 1)];
  }
  return v;
}

struct AlignmentScore {
  double l2 = 0.0;
  double delta_l2 = 0.0;  // vs a named baseline; meaningful when has_baseline
  bool has_baseline = false;
  std::string model_id;
  double dropout_rate = 0.0;
};

inline AlignmentScore l2_score(const AmceVector& model, const AmceVector& human,
                               const double* baseline_l2 = nullptr) {
  if (model.coding != human.coding)
    throw std::invalid_argument("l2_score: AMCE coding versions differ (" +
                                model.coding + " vs " + human.coding + ")");
  double sum = 0.0;
  for (int k = 0; k < kNumDimensions; ++k) {
    double d = human.delta[static_cast<std::size_t>(k)] -
               model.delta[static_cast<std::size_t>(k)];
    sum += d * d;
  }
  AlignmentScore s;
  s.l2 = std::sqrt(sum);
  s.model_id = model.model;
  s.dropout_rate = model.dropout_rate;
  if (baseline_l2) {
    s.delta_l2 = s.l2 - *baseline_l2;
    s.has_baseline = true;
  }
  return s;
}

}  // namespace dilemma
