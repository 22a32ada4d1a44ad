#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dilemma/backend.hpp"
#include "dilemma/scenario.hpp"
#include "dilemma/uncertainty.hpp"

namespace dilemma {

// Per-scenario probabilities of the focal choice, grouped by dimension.
// Only scenarios with a focal dimension (uncertainty corpora) participate.
inline std::map<Dimension, std::vector<double>> focal_probabilities(
    const std::vector<Scenario>& scenarios,
    const std::vector<ChoiceRecord>& records) {
  std::map<std::string, const Scenario*> by_id;
  for (const auto& s : scenarios) by_id[s.id] = &s;
  std::map<Dimension, std::vector<double>> out;
  for (const auto& r : records) {
    auto it = by_id.find(r.scenario_id);
    if (it == by_id.end())
      throw std::invalid_argument("record references unknown scenario " +
                                  r.scenario_id);
    const Scenario& s = *it->second;
    if (!s.dimension) continue;
    out[*s.dimension].push_back(
        focal_choice_probability(s, *s.dimension, r.p1));
  }
  return out;
}

// One UncertaintySummary per dimension plus a pooled "all" row.
inline std::vector<UncertaintySummary> summarize_records(
    const std::vector<Scenario>& scenarios,
    const std::vector<ChoiceRecord>& records, const std::string& model,
    double dropout_rate) {
  auto grouped = focal_probabilities(scenarios, records);
  std::vector<UncertaintySummary> out;
  std::vector<double> pooled;
  for (Dimension d : kAllDimensions) {
    auto it = grouped.find(d);
    if (it == grouped.end()) continue;
    UncertaintySummary s = decompose(it->second);
    s.model = model;
    s.dimension = dimension_name(d);
    s.dropout_rate = dropout_rate;
    out.push_back(std::move(s));
    pooled.insert(pooled.end(), it->second.begin(), it->second.end());
  }
  if (!pooled.empty()) {
    UncertaintySummary all = decompose(pooled);
    all.model = model;
    all.dimension = "all";
    all.dropout_rate = dropout_rate;
    out.push_back(std::move(all));
  }
  return out;
}

}  // namespace dilemma
