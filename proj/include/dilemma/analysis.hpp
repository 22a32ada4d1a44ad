#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dilemma {

namespace detail {

// Continued fraction for the regularized incomplete beta (Lentz's method).
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("betacf: no convergence");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double ibeta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("ibeta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log(1.0 - x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided tail probability of Student's t.
inline double student_t_p_two_sided(double t, double df) {
  if (df <= 0.0) throw std::invalid_argument("student_t: df <= 0");
  double x = df / (df + t * t);
  return ibeta(df / 2.0, 0.5, x);
}

struct PairedSamples {
  std::vector<double> baseline;
  std::vector<double> treated;
  std::vector<std::string> labels;  // unit labels, unique
};

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  std::size_t n = 0;
};

// Paired t on treated - baseline. Zero-variance differences are a defined
// failure: a non-significant outcome must come from real variance, not 0/0.
inline TTestResult paired_ttest(const PairedSamples& samples) {
  std::size_t n = samples.baseline.size();
  if (n != samples.treated.size())
    throw std::invalid_argument("paired_ttest: length mismatch");
  if (n < 2) throw std::invalid_argument("paired_ttest: need n >= 2");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i)
    d[i] = samples.treated[i] - samples.baseline[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  double var = ss / static_cast<double>(n - 1);
  if (var <= 0.0)
    throw std::domain_error("paired_ttest: degenerate-pairs (zero variance)");
  double sd = std::sqrt(var);
  TTestResult r;
  r.n = n;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.df = static_cast<double>(n - 1);
  r.p_two_sided = student_t_p_two_sided(r.t, r.df);
  return r;
}

inline std::vector<double> bonferroni(const std::vector<double>& p_values,
                                      std::size_t m) {
  if (m < p_values.size())
    throw std::invalid_argument("bonferroni: m smaller than family size");
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("bonferroni: p outside [0,1]");
    out.push_back(std::min(1.0, static_cast<double>(m) * p));
  }
  return out;
}

// Significance marker convention used in the reports.
inline std::string significance_stars(double p) {
  return p < 0.05 ? "*" : "ns";
}

struct CorrelationResult {
  double r = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  std::size_t n = 0;
};

inline CorrelationResult pearson(const std::vector<double>& x,
                                 const std::vector<double>& y,
                                 std::size_t m_tests = 1) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("pearson: need n >= 3");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw std::invalid_argument("pearson: zero variance");
  CorrelationResult res;
  res.n = n;
  res.r = sxy / std::sqrt(sxx * syy);
  res.r = std::clamp(res.r, -1.0, 1.0);
  double df = static_cast<double>(n - 2);
  if (std::fabs(res.r) >= 1.0) {
    res.p_raw = 0.0;
  } else {
    double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
    res.p_raw = student_t_p_two_sided(t, df);
  }
  res.p_adjusted =
      std::min(1.0, static_cast<double>(std::max<std::size_t>(m_tests, 1)) *
                        res.p_raw);
  return res;
}

// One model's change from the dropout-0 baseline to a treated rate.
struct TrajectoryRow {
  std::string model;
  double rate_from = 0.0;
  double rate_to = 0.0;
  double d_total_entropy = 0.0;
  double d_conditional_entropy = 0.0;
  double d_mutual_information = 0.0;
  double d_l2 = 0.0;
};

struct MetricPoint {
  std::string model;
  double dropout_rate = 0.0;
  double total_entropy = 0.0;
  double conditional_entropy = 0.0;
  double mutual_information = 0.0;
  double l2 = 0.0;
};

struct TrajectoryTable {
  std::vector<TrajectoryRow> rows;
  std::vector<std::string> excluded_models;  // no dropout-0 baseline present
};

// Joins per-(model, rate) metric points into baseline-relative rows. Models
// without a dropout-0 entry are excluded and reported.
inline TrajectoryTable trajectory_table(const std::vector<MetricPoint>& points) {
  std::map<std::string, std::map<double, MetricPoint>> by_model;
  for (const auto& p : points) by_model[p.model][p.dropout_rate] = p;
  TrajectoryTable out;
  for (const auto& [model, rates] : by_model) {
    auto base = rates.find(0.0);
    if (base == rates.end()) {
      out.excluded_models.push_back(model);
      continue;
    }
    for (const auto& [rate, pt] : rates) {
      if (rate == 0.0) continue;
      TrajectoryRow row;
      row.model = model;
      row.rate_from = 0.0;
      row.rate_to = rate;
      row.d_total_entropy = pt.total_entropy - base->second.total_entropy;
      row.d_conditional_entropy =
          pt.conditional_entropy - base->second.conditional_entropy;
      row.d_mutual_information =
          pt.mutual_information - base->second.mutual_information;
      row.d_l2 = pt.l2 - base->second.l2;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace dilemma
