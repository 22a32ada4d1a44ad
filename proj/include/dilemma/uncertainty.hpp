#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dilemma {

// All entropies are in bits (base-2 logs), with 0*log2(0) == 0 by continuity.

inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("binary_entropy: p outside [0,1]");
  double h = 0.0;
  if (p > 0.0) h -= p * std::log2(p);
  if (p < 1.0) h -= (1.0 - p) * std::log2(1.0 - p);
  return h;
}

// Squared probability margin (2p-1)^2 == (p1-p2)^2; high when the model
// strongly prefers one case.
inline double confidence(double p1, double p2) {
  if (!(std::isfinite(p1) && std::isfinite(p2)))
    throw std::invalid_argument("confidence: non-finite probability");
  if (std::fabs(p1 + p2 - 1.0) > 1e-9)
    throw std::invalid_argument("confidence: probabilities do not sum to 1");
  double d = p1 - p2;
  return d * d;
}

// Second-order expansion of binary_entropy around p = 1/2. Accurate near
// maximum uncertainty, diverges from the exact value toward the endpoints.
inline double taylor_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("taylor_entropy: p outside [0,1]");
  double d = p - 0.5;
  return 1.0 - (2.0 / std::numbers::ln2) * d * d;
}

struct UncertaintySummary {
  double total_entropy = 0.0;        // H of the mean probability
  double conditional_entropy = 0.0;  // mean of per-sample H
  double mutual_information = 0.0;   // total - conditional, >= 0
  double mean_confidence = 0.0;
  std::size_t n = 0;

  // Grouping keys, filled by the caller.
  std::string model;
  std::string dimension;
  double dropout_rate = 0.0;
};

// Samples are probabilities of one fixed target event (the dimension's focal
// choice), not max(p1,p2); using the max would bias the total entropy.
inline UncertaintySummary decompose(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("decompose: empty sample set");
  // Extended-precision accumulation keeps the mean of a constant sample set
  // exact, so Jensen-equality cases report MI of exactly zero.
  long double sum_p = 0.0L, sum_h = 0.0L, sum_c = 0.0L;
  for (double p : samples) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("decompose: sample outside [0,1]");
    sum_p += p;
    sum_h += binary_entropy(p);
    double d = 2.0 * p - 1.0;
    sum_c += d * d;
  }
  long double n = static_cast<long double>(samples.size());
  UncertaintySummary s;
  s.n = samples.size();
  s.total_entropy = binary_entropy(static_cast<double>(sum_p / n));
  s.conditional_entropy = static_cast<double>(sum_h / n);
  // Non-negative by Jensen's inequality; clamp the sub-epsilon roundoff that
  // appears when the sample set is (nearly) constant.
  s.mutual_information = std::max(0.0, s.total_entropy - s.conditional_entropy);
  s.mean_confidence = static_cast<double>(sum_c / n);
  return s;
}

// Jensen-Shannon divergence in bits between two distributions on the same
// support. Bounded by [0,1] in base 2.
inline double jsd(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("jsd: support mismatch");
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0)
      throw std::invalid_argument("jsd: negative probability");
    sa += a[i];
    sb += b[i];
  }
  if (std::fabs(sa - 1.0) > 1e-9 || std::fabs(sb - 1.0) > 1e-9)
    throw std::invalid_argument("jsd: distributions not normalized");
  double kl_am = 0.0, kl_bm = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double m = 0.5 * (a[i] + b[i]);
    if (a[i] > 0.0) kl_am += a[i] * std::log2(a[i] / m);
    if (b[i] > 0.0) kl_bm += b[i] * std::log2(b[i] / m);
  }
  return 0.5 * kl_am + 0.5 * kl_bm;
}

// Histogram of probabilities on [0,1] as a discrete distribution, used to
// compare response distributions across dropout rates.
inline std::vector<double> prob_histogram(const std::vector<double>& ps,
                                          std::size_t bins = 20) {
  if (bins == 0) throw std::invalid_argument("prob_histogram: zero bins");
  std::vector<double> h(bins, 0.0);
  if (ps.empty()) return h;
  for (double p : ps) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("prob_histogram: sample outside [0,1]");
    std::size_t k = std::min(bins - 1, static_cast<std::size_t>(p * bins));
    h[k] += 1.0;
  }
  for (double& v : h) v /= static_cast<double>(ps.size());
  return h;
}

}  // namespace dilemma
