#include <cmath>
#include <numeric>
#include <vector>

#include "cist/analysis.hpp"
#include "cist/numerics.hpp"
#include "cist/rng.hpp"
#include "doctest.h"

using namespace cist;

namespace {

Matrix dominated_rows(Rng& rng, std::size_t n, std::size_t c, double max_lo, double max_hi,
                      double background_std) {
  Matrix m(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = m.row(i);
    const double top = rng.uniform(max_lo, max_hi);
    for (double& x : row) x = rng.normal(0.0, background_std * top);
    row[rng.below(c)] = top;
  }
  return m;
}

}  // namespace

TEST_CASE("entropy_report on uniform rows") {
  Matrix uniform(8, 5, 1.0);
  EntropyReport r = entropy_report(uniform, TemperaturePolicy::fixed(4.0));
  CHECK(r.mean == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(r.stddev == doctest::Approx(0.0));
  CHECK(r.min == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(r.max == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(std::accumulate(r.hist_counts.begin(), r.hist_counts.end(), std::size_t{0}) == 8);
}

TEST_CASE("entropy_report: adaptive std beats fixed std on spanning rows") {
  Rng rng(61);
  Matrix rows = dominated_rows(rng, 256, 16, 5.0, 30.0, 0.05);
  EntropyReport adaptive = entropy_report(rows, TemperaturePolicy::adaptive(3.0));
  EntropyReport fixed = entropy_report(rows, TemperaturePolicy::fixed(4.0));
  CHECK(adaptive.stddev < fixed.stddev);
  // Quantiles are ordered and inside [0, ln C].
  CHECK(adaptive.q05 <= adaptive.q25);
  CHECK(adaptive.q25 <= adaptive.q50);
  CHECK(adaptive.q50 <= adaptive.q75);
  CHECK(adaptive.q75 <= adaptive.q95);
  CHECK(adaptive.min >= 0.0);
  CHECK(adaptive.max <= std::log(16.0) + 1e-12);
}

TEST_CASE("entropy_report streaming stats match a two-pass recomputation") {
  Rng rng(67);
  Matrix rows(200, 12);
  for (double& x : rows.data()) x = rng.normal(0.0, 4.0);
  EntropyReport r = entropy_report(rows, TemperaturePolicy::fixed(2.0));

  double mean = 0.0;
  for (double h : r.per_sample_entropy) mean += h;
  mean /= static_cast<double>(r.per_sample_entropy.size());
  double var = 0.0;
  for (double h : r.per_sample_entropy) var += (h - mean) * (h - mean);
  var /= static_cast<double>(r.per_sample_entropy.size());
  CHECK(std::abs(mean - r.mean) < 1e-10);
  CHECK(std::abs(std::sqrt(var) - r.stddev) < 1e-10);
}

TEST_CASE("entropy_report concentrates ImageNet-like dominated rows away from extremes") {
  Rng rng(71);
  // C = 1000 rows whose background scales with the dominant logit.
  Matrix rows = dominated_rows(rng, 200, 1000, 5.0, 30.0, 0.35);
  EntropyReport r = entropy_report(rows, TemperaturePolicy::adaptive(3.0));
  CHECK(r.q05 > 4.0);
  CHECK(r.q95 < 6.65);  // bounded away from ln(1000) = 6.9078
  CHECK(r.q95 - r.q05 < 1.0);
  // Histogram mass lives in interior bins.
  CHECK(r.hist_counts.front() == 0);
  CHECK(r.hist_counts.back() == 0);
}

TEST_CASE("entropy_report rejects an empty matrix") {
  CHECK_THROWS_AS(entropy_report(Matrix(), TemperaturePolicy::fixed(4.0)),
                  InvalidArgumentError);
}

TEST_CASE("entropy gap decomposition: identical vectors give zero gap") {
  std::vector<double> v{9.0, 1.0, 0.5, -2.0};
  EntropyGapDecomposition d = decompose_entropy_gap(v, 3.0, v, 3.0);
  CHECK(d.gap == 0.0);
  CHECK(d.term_a == 0.0);
  CHECK(d.term_b == 0.0);
  CHECK(d.residual == 0.0);
}

TEST_CASE("entropy gap decomposition reconstructs the exact difference") {
  Rng rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(8), b(8);
    for (double& x : a) x = rng.uniform(-5.0, 10.0);
    for (double& x : b) x = rng.uniform(-5.0, 10.0);
    const double tau_a = rng.uniform(0.5, 5.0);
    const double tau_b = rng.uniform(0.5, 5.0);
    EntropyGapDecomposition d = decompose_entropy_gap(a, tau_a, b, tau_b);
    const double exact =
        entropy_from_logits(a, tau_a) - entropy_from_logits(b, tau_b);
    CHECK(std::abs(d.signed_diff - exact) < 1e-12);
    CHECK(d.gap == doctest::Approx(std::abs(exact)).epsilon(1e-12));
    // A + B + residual-signed piece reconstructs the difference:
    // residual is |signed_diff - (A + B)| by definition.
    CHECK(d.residual >= 0.0);
  }
}

TEST_CASE("verify_proposition1: gap shrinks with margin, fixed tau stays larger") {
  const double rho = 3.0;
  double prev_gap = std::numeric_limits<double>::infinity();
  double prev_residual = std::numeric_limits<double>::infinity();
  for (double margin : {2.0 * rho, 3.0 * rho, 4.0 * rho, 5.0 * rho}) {
    Prop1Result r = verify_proposition1(500, 50, margin, rho, 4242);
    CHECK(r.max_gap_equal_ratio < prev_gap);
    CHECK(r.max_residual < prev_residual);
    CHECK(r.max_gap_equal_ratio < r.max_gap_fixed_tau);
    CHECK(r.max_abs_term_a < 1e-12);
    for (const auto& pair : r.pairs) {
      CHECK(pair.margin_i == doctest::Approx(margin).epsilon(1e-9));
      CHECK(pair.margin_j == doctest::Approx(margin).epsilon(1e-9));
    }
    prev_gap = r.max_gap_equal_ratio;
    prev_residual = r.max_residual;
  }
}

TEST_CASE("verify_proposition1 rejects degenerate parameters") {
  CHECK_THROWS_AS(verify_proposition1(10, 5, 0.0, 3.0, 1), InvalidArgumentError);
  CHECK_THROWS_AS(verify_proposition1(10, 5, 6.0, -1.0, 1), InvalidArgumentError);
  CHECK_THROWS_AS(verify_proposition1(0, 5, 6.0, 3.0, 1), InvalidArgumentError);
}

TEST_CASE("verify_high_temp_approx: zero deviation for matched logits") {
  // z == v makes both the exact and approximate gradients vanish.
  const double taus[] = {10.0, 20.0};
  HighTempResult r = verify_high_temp_approx(6, 0.0, taus, 5, 9);
  for (const auto& row : r.rows) CHECK(row.max_rel_deviation == 0.0);
}

TEST_CASE("verify_high_temp_approx: strictly decreasing deviation on random pairs") {
  const double taus[] = {10.0, 20.0, 40.0, 80.0};
  HighTempResult r = verify_high_temp_approx(10, 2.0, taus, 100, 31337);
  CHECK(r.per_pair_strictly_decreasing);
  for (std::size_t t = 1; t < r.rows.size(); ++t) {
    CHECK(r.rows[t].max_rel_deviation < r.rows[t - 1].max_rel_deviation);
  }
}

TEST_CASE("grad_check_suite passes, is deterministic, and catches injected faults") {
  GradCheckReport a = grad_check_suite(5);
  CHECK(a.all_pass);
  for (const auto& e : a.entries) {
    CHECK(e.worst_rel_error < 1e-5);
  }

  GradCheckReport b = grad_check_suite(5);
  CHECK(grad_check_report_text(a) == grad_check_report_text(b));

  GradCheckReport faulted = grad_check_suite(5, true);
  CHECK(!faulted.all_pass);
}

TEST_CASE("run_verification aggregates every suite and reacts to faults") {
  VerificationReport report = run_verification(12);
  CHECK(report.all_pass);
  // Every declared suite contributes checks.
  for (const char* suite : {"numerics", "temperature", "losses", "model", "analysis",
                            "gradcheck"}) {
    bool found = false;
    for (const auto& c : report.checks) {
      if (c.suite == suite) found = true;
    }
    CHECK_MESSAGE(found, suite);
  }
  CHECK(report.prop1_rows.size() == 4);
  CHECK(report.hightemp_rows.size() == 4);

  VerificationReport faulted = run_verification(12, true);
  CHECK(!faulted.all_pass);
}

TEST_CASE("report CSV tables carry the declared headers") {
  VerificationReport report = run_verification(15);
  const std::string prop1 = prop1_table_csv(report.prop1_rows);
  CHECK(prop1.rfind("margin,max_gap_equal_ratio,max_gap_fixed_tau,max_residual,max_abs_term_a",
                    0) == 0);
  const std::string ht = hightemp_table_csv(report.hightemp_rows);
  CHECK(ht.rfind("tau,max_rel_deviation", 0) == 0);
}
