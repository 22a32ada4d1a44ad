#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include "dilemma/alignment.hpp"
#include "dilemma/backend.hpp"
#include "dilemma/rng.hpp"
#include "golden_scenarios.hpp"

using namespace dilemma;

namespace {

// Test-local dense solver, independent of Eigen: Gaussian elimination with
// partial pivoting on the normal equations.
std::vector<double> solve_normal_equations(
    const std::vector<std::array<double, kNumCoefficients>>& x,
    const std::vector<double>& y) {
  constexpr int p = kNumCoefficients;
  double a[p][p] = {};
  double b[p] = {};
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int r = 0; r < p; ++r) {
      b[r] += x[i][static_cast<std::size_t>(r)] * y[i];
      for (int c = 0; c < p; ++c)
        a[r][c] += x[i][static_cast<std::size_t>(r)] *
                   x[i][static_cast<std::size_t>(c)];
    }
  }
  int perm[p];
  for (int i = 0; i < p; ++i) perm[i] = i;
  for (int col = 0; col < p; ++col) {
    int pivot = col;
    for (int r = col + 1; r < p; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (int r = col + 1; r < p; ++r) {
      double f = a[r][col] / a[col][col];
      for (int c = col; c < p; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> beta(p);
  for (int r = p - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < p; ++c) s -= a[r][c] * beta[static_cast<std::size_t>(c)];
    beta[static_cast<std::size_t>(r)] = s / a[r][r];
  }
  return beta;
}

// Dense inverse by Gauss-Jordan, for the 10x10 oracle sandwich.
std::vector<std::vector<double>> invert(std::vector<std::vector<double>> a) {
  std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    double d = a[col][col];
    for (std::size_t c = 0; c < n; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = a[r][col];
      for (std::size_t c = 0; c < n; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

// Full sandwich computed with the test-local matrix routines.
std::vector<double> oracle_cluster_se(const std::vector<ConjointRow>& rows,
                                      const std::vector<double>& beta) {
  constexpr int p = kNumCoefficients;
  std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
  std::map<std::string, std::vector<double>> scores;
  for (const auto& row : rows) {
    std::array<double, p> xi{};
    xi[0] = 1.0;
    for (int k = 0; k < kNumDimensions; ++k)
      xi[static_cast<std::size_t>(k + 1)] = row.d[static_cast<std::size_t>(k)];
    double fitted = 0.0;
    for (int k = 0; k < p; ++k)
      fitted += xi[static_cast<std::size_t>(k)] * beta[static_cast<std::size_t>(k)];
    double e = row.y - fitted;
    auto& g = scores.try_emplace(row.cluster_id, std::vector<double>(p, 0.0))
                  .first->second;
    for (int r = 0; r < p; ++r) {
      g[static_cast<std::size_t>(r)] += xi[static_cast<std::size_t>(r)] * e;
      for (int c = 0; c < p; ++c)
        xtx[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] +=
            xi[static_cast<std::size_t>(r)] * xi[static_cast<std::size_t>(c)];
    }
  }
  auto xtx_inv = invert(xtx);
  std::vector<std::vector<double>> meat(p, std::vector<double>(p, 0.0));
  for (const auto& [id, g] : scores)
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c)
        meat[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] +=
            g[static_cast<std::size_t>(r)] * g[static_cast<std::size_t>(c)];
  // V = inv * meat * inv
  std::vector<double> se(p, 0.0);
  for (int i = 0; i < p; ++i) {
    double v = 0.0;
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c)
        v += xtx_inv[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] *
             meat[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] *
             xtx_inv[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
    se[static_cast<std::size_t>(i)] = std::sqrt(v);
  }
  return se;
}

std::vector<ConjointRow> random_design(std::size_t n, std::uint64_t seed,
                                       const std::array<double, 10>& beta,
                                       double noise_sd,
                                       std::size_t cluster_size = 1) {
  SplitMix64 rng(seed);
  std::vector<ConjointRow> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ConjointRow row;
    double y = beta[0];
    for (int k = 0; k < kNumDimensions; ++k) {
      row.d[static_cast<std::size_t>(k)] = rng.below(2) ? 1.0 : 0.0;
      y += beta[static_cast<std::size_t>(k + 1)] *
           row.d[static_cast<std::size_t>(k)];
    }
    row.y = y + rng.normal(0.0, noise_sd);
    row.cluster_id = "c" + std::to_string(i / cluster_size);
    row.scenario_id = "s" + std::to_string(i);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

TEST_CASE("build_design structure") {
  Scenario s = testing::golden_scenario(Dimension::age);
  ChoiceRecord rec;
  rec.scenario_id = s.id;
  // Case 1 kills the younger side; p2 > p1 means the model picks case 2,
  // sparing the younger group.
  rec.p1 = 0.3;
  rec.p2 = 0.7;
  auto design = build_design({s}, {rec});
  REQUIRE(design.rows.size() == 2);
  CHECK(design.rows[0].y + design.rows[1].y == 1.0);

  const ConjointRow& younger = design.rows[0];  // side_a
  CHECK(younger.scenario_id == s.id);
  CHECK(younger.y == 0.0);  // spared
  CHECK(younger.d[1] == 1.0);  // carries the age focal level ("younger")
  const ConjointRow& older = design.rows[1];
  CHECK(older.y == 1.0);
  CHECK(older.d[1] == 0.0);
}

TEST_CASE("build_design excludes exact ties into the ledger") {
  auto scenarios = generate_alignment_set(21, 50);
  BackendConfig cfg;
  ToyBackend backend(cfg);
  RunOptions opts;
  auto res = run_corpus(scenarios, backend, cfg, opts);
  REQUIRE(res.records.size() == 50);
  // Force one exact tie.
  res.records[7].p1 = 0.5;
  res.records[7].p2 = 0.5;
  auto design = build_design(scenarios, res.records);
  CHECK(design.rows.size() == 2 * 50 - 2);
  REQUIRE(design.tie_scenario_ids.size() == 1);
  CHECK(design.tie_scenario_ids[0] == res.records[7].scenario_id);

  ChoiceRecord orphan;
  orphan.scenario_id = "missing";
  orphan.p1 = 0.6;
  orphan.p2 = 0.4;
  CHECK_THROWS_AS(build_design(scenarios, {orphan}), std::invalid_argument);
}

TEST_CASE("dummy columns split dimension sub-corpora in half") {
  auto scenarios = generate_uncertainty_set(13, 40);
  BackendConfig cfg;
  ToyBackend backend(cfg);
  auto res = run_corpus(scenarios, backend, cfg, RunOptions{});
  auto design = build_design(scenarios, res.records);
  std::map<std::string, const Scenario*> by_id;
  for (const auto& s : scenarios) by_id[s.id] = &s;
  for (int k = 0; k < kNumDimensions; ++k) {
    Dimension d = kAllDimensions[static_cast<std::size_t>(k)];
    double col_sum = 0.0;
    std::size_t rows_of_dim = 0;
    for (const auto& row : design.rows) {
      if (*by_id.at(row.scenario_id)->dimension != d) continue;
      ++rows_of_dim;
      col_sum += row.d[static_cast<std::size_t>(k)];
    }
    INFO(dimension_name(d));
    CHECK(rows_of_dim == 80);
    CHECK(std::fabs(col_sum - rows_of_dim / 2.0) <= 1.0);
  }
}

TEST_CASE("OLS matches the normal-equations oracle to 1e-10") {
  std::array<double, 10> beta = {0.4,  -0.3, 0.2, 0.05, -0.1,
                                 0.15, 0.0,  0.3, -0.2, 0.1};
  auto rows = random_design(2000, 31, beta, 0.3);
  OlsFit fit = ols_fit(rows);

  std::vector<std::array<double, kNumCoefficients>> x;
  std::vector<double> y;
  for (const auto& row : rows) {
    std::array<double, kNumCoefficients> xi{};
    xi[0] = 1.0;
    for (int k = 0; k < kNumDimensions; ++k)
      xi[static_cast<std::size_t>(k + 1)] = row.d[static_cast<std::size_t>(k)];
    x.push_back(xi);
    y.push_back(row.y);
  }
  auto oracle = solve_normal_equations(x, y);
  for (int k = 0; k < kNumCoefficients; ++k)
    CHECK_THAT(fit.beta(k),
               Catch::Matchers::WithinAbs(oracle[static_cast<std::size_t>(k)],
                                          1e-10));

  // Residual orthogonality: X'e = 0.
  Eigen::VectorXd xte = fit.x.transpose() * fit.residuals;
  CHECK(xte.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("degenerate response gives all-zero coefficients") {
  auto rows = random_design(500, 5, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 0.0);
  for (auto& row : rows) row.y = 0.0;
  OlsFit fit = ols_fit(rows);
  CHECK(fit.beta.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("balanced factorial design recovers group-mean differences") {
  // 512 rows enumerate every dummy pattern once: columns are mutually
  // orthogonal after centering, so each coefficient equals the difference
  // of group means along its dummy.
  SplitMix64 rng(77);
  std::vector<ConjointRow> rows;
  std::vector<double> y;
  for (int pattern = 0; pattern < 512; ++pattern) {
    ConjointRow row;
    for (int k = 0; k < kNumDimensions; ++k)
      row.d[static_cast<std::size_t>(k)] = (pattern >> k) & 1 ? 1.0 : 0.0;
    row.y = rng.uniform01();
    row.cluster_id = "c" + std::to_string(pattern % 7);
    rows.push_back(row);
    y.push_back(rows.back().y);
  }
  OlsFit fit = ols_fit(rows);
  for (int k = 0; k < kNumDimensions; ++k) {
    double mean1 = 0.0, mean0 = 0.0;
    for (const auto& row : rows)
      (row.d[static_cast<std::size_t>(k)] > 0.5 ? mean1 : mean0) += row.y;
    mean1 /= 256.0;
    mean0 /= 256.0;
    CHECK_THAT(fit.beta(k + 1),
               Catch::Matchers::WithinAbs(mean1 - mean0, 1e-10));
  }
}

TEST_CASE("rank deficiency names the collinear columns") {
  auto rows = random_design(300, 9, {0.2, 0.1, 0, 0, 0, 0, 0, 0, 0, 0}, 0.1);
  for (auto& row : rows) row.d[8] = 0.0;  // social-status never varies
  try {
    ols_fit(rows);
    FAIL("expected rank-deficiency error");
  } catch (const std::invalid_argument& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("collinear"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("social-status"));
  }
}

TEST_CASE("cluster SEs with singleton clusters match the HC0 oracle") {
  std::array<double, 10> beta = {0.3, -0.2, 0.1, 0, 0.25, -0.05, 0.4, 0, 0.1, -0.3};
  auto rows = random_design(600, 13, beta, 0.4, 1);
  OlsFit fit = ols_fit(rows);
  auto se = cluster_se(rows, fit);
  std::vector<double> beta_vec(fit.beta.data(), fit.beta.data() + 10);
  auto oracle = oracle_cluster_se(rows, beta_vec);
  for (int k = 0; k < kNumCoefficients; ++k)
    CHECK_THAT(se[static_cast<std::size_t>(k)],
               Catch::Matchers::WithinAbs(oracle[static_cast<std::size_t>(k)],
                                          1e-10));
}

TEST_CASE("hand-sized 3-cluster fixture matches direct matrix arithmetic") {
  std::array<double, 10> beta = {0.5, -0.4, 0.3, -0.2, 0.1, 0, 0.2, -0.1, 0.05, 0.15};
  auto rows = random_design(12, 1234, beta, 0.5, 4);  // 3 clusters of 4
  OlsFit fit = ols_fit(rows);
  auto se = cluster_se(rows, fit);
  std::vector<double> beta_vec(fit.beta.data(), fit.beta.data() + 10);
  auto oracle = oracle_cluster_se(rows, beta_vec);
  for (int k = 0; k < kNumCoefficients; ++k)
    CHECK_THAT(se[static_cast<std::size_t>(k)],
               Catch::Matchers::WithinAbs(oracle[static_cast<std::size_t>(k)],
                                          1e-10));
  CHECK_THROWS_AS(
      [&] {
        auto single = rows;
        for (auto& row : single) row.cluster_id = "only";
        cluster_se(single, ols_fit(single));
      }(),
      std::invalid_argument);
}

TEST_CASE("duplicating every cluster leaves the point estimates unchanged") {
  std::array<double, 10> beta = {0.2, 0.1, -0.1, 0.3, 0, -0.2, 0.1, 0.05, 0, -0.05};
  auto rows = random_design(400, 55, beta, 0.3, 8);
  OlsFit fit = ols_fit(rows);
  std::vector<ConjointRow> doubled = rows;
  for (auto& row : rows) {
    ConjointRow copy = row;
    copy.cluster_id = row.cluster_id + "-dup";
    doubled.push_back(copy);
  }
  OlsFit fit2 = ols_fit(doubled);
  CHECK((fit.beta - fit2.beta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("coefficient recovery within 3 SEs on >= 95% of trials") {
  std::array<double, 10> truth = {0.45, -0.25, 0.15, 0.05, -0.1,
                                  0.2,  0.0,   0.3,  -0.15, 0.1};
  int good_trials = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto rows = random_design(5000, 1000 + trial, truth, 0.05, 1);
    OlsFit fit = ols_fit(rows);
    auto se = cluster_se(rows, fit);
    bool all_within = true;
    for (int k = 0; k < kNumCoefficients; ++k)
      if (std::fabs(fit.beta(k) - truth[static_cast<std::size_t>(k)]) >
          3.0 * se[static_cast<std::size_t>(k)])
        all_within = false;
    if (all_within) ++good_trials;
  }
  CHECK(good_trials >= 95);
}

TEST_CASE("a policy that spares the young shows up in the AMCE sign") {
  auto scenarios = generate_uncertainty_set(3, 60);
  std::vector<ChoiceRecord> records;
  for (const auto& s : scenarios) {
    ChoiceRecord rec;
    rec.scenario_id = s.id;
    double p_case1;
    if (*s.dimension == Dimension::age) {
      // Choose the case that spares the younger (focal) side.
      int focal = s.focal_side(Dimension::age);
      p_case1 = s.case_victim(1) == focal ? 0.1 : 0.9;
    } else {
      // Deterministic but scenario-dependent, roughly balanced elsewhere.
      p_case1 = derive_seed(1, s.id) % 2 ? 0.8 : 0.2;
    }
    rec.p1 = p_case1;
    rec.p2 = 1.0 - p_case1;
    records.push_back(rec);
  }
  auto design = build_design(scenarios, records);
  AmceVector v = estimate_amce(design.rows, "policy", 0.0);
  // y = 1 when struck, so consistently sparing the focal side pushes the
  // age coefficient strongly negative.
  CHECK(v.delta[1] < -0.5);
  for (int k : {2, 3, 7, 8})
    CHECK(std::fabs(v.delta[static_cast<std::size_t>(k)]) <
          std::fabs(v.delta[1]));
}

TEST_CASE("l2 score") {
  AmceVector human;
  human.source = "human-reference";
  AmceVector same = human;
  CHECK(l2_score(same, human).l2 == 0.0);

  AmceVector shifted = human;
  shifted.delta[3] = human.delta[3] + 0.3;
  CHECK_THAT(l2_score(shifted, human).l2,
             Catch::Matchers::WithinAbs(0.3, 1e-12));
  // Symmetry in the arguments.
  CHECK(l2_score(shifted, human).l2 == l2_score(human, shifted).l2);

  // Triangle inequality across three vectors.
  AmceVector a = human, b = human, c = human;
  a.delta = {0.1, -0.2, 0.3, 0, 0.05, -0.1, 0.2, 0, 0.15};
  b.delta = {-0.1, 0.1, 0.1, 0.2, 0, 0.05, -0.2, 0.1, 0};
  c.delta = {0.3, 0, -0.1, 0.1, -0.05, 0.2, 0, -0.1, 0.05};
  CHECK(l2_score(a, c).l2 <= l2_score(a, b).l2 + l2_score(b, c).l2 + 1e-12);

  AmceVector wrong_coding = human;
  wrong_coding.coding = "amce-coding-v0";
  CHECK_THROWS_AS(l2_score(wrong_coding, human), std::invalid_argument);
}

TEST_CASE("table-1 fixture arithmetic") {
  AmceVector human;
  human.source = "human-reference";
  AmceVector base = human, treated = human;
  base.delta[0] = 0.703;
  treated.delta[0] = 0.550;
  AlignmentScore s0 = l2_score(base, human);
  CHECK_THAT(s0.l2, Catch::Matchers::WithinAbs(0.703, 1e-12));
  AlignmentScore s1 = l2_score(treated, human, &s0.l2);
  CHECK_THAT(s1.l2, Catch::Matchers::WithinAbs(0.550, 1e-12));
  REQUIRE(s1.has_baseline);
  CHECK_THAT(s1.delta_l2, Catch::Matchers::WithinAbs(-0.153, 1e-12));
}

TEST_CASE("amce vector file round trip and order checking") {
  AmceVector v;
  v.source = "model-run";
  v.model = "toy";
  v.dropout_rate = 0.05;
  v.n_obs = 123;
  for (int k = 0; k < kNumDimensions; ++k) {
    v.delta[static_cast<std::size_t>(k)] = 0.01 * k;
    v.se[static_cast<std::size_t>(k)] = 0.001 * (k + 1);
  }
  auto path = std::filesystem::temp_directory_path() / "dilemma_amce.json";
  v.write(path.string());
  AmceVector loaded = AmceVector::read(path.string());
  std::filesystem::remove(path);
  CHECK(loaded.to_json().dump() == v.to_json().dump());

  auto j = v.to_json();
  j["labels"][0] = "age";  // wrong order
  CHECK_THROWS_AS(AmceVector::from_json(j), std::invalid_argument);
}
