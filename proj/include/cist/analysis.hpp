#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cist/matrix.hpp"
#include "cist/temperature.hpp"

namespace cist {

struct EntropyReport {
  std::vector<double> per_sample_entropy;  // nats, one per row
  double mean = 0.0, stddev = 0.0;         // streaming (Welford), population std
  double min = 0.0, max = 0.0;
  double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
  std::vector<std::size_t> outlier_indices;  // lowest floor(q*N) entropies
  std::vector<double> hist_edges;            // bins+1 edges over [0, ln C]
  std::vector<std::size_t> hist_counts;      // counts sum to N
};

EntropyReport entropy_report(const LogitMatrix& logits, const TemperaturePolicy& policy,
                             double outlier_quantile = 0.05, std::size_t hist_bins = 40);

std::string entropy_report_summary_json(const EntropyReport& report);
std::string entropy_report_histogram_csv(const EntropyReport& report);

// Appendix-style split of a signed entropy difference H_i - H_j into the
// dominant-logit term A = v_im/tau_i - v_jm'/tau_j and the expectation term
// B; the residual is what the dominance approximation discards.
struct EntropyGapDecomposition {
  double gap = 0.0;  // |H_i - H_j|, exact
  double term_a = 0.0;
  double term_b = 0.0;
  double signed_diff = 0.0;
  double residual = 0.0;  // |signed_diff - (term_a + term_b)|
  double margin_i = 0.0;  // (top - second) / tau, per sample
  double margin_j = 0.0;
};

EntropyGapDecomposition decompose_entropy_gap(std::span<const double> logits_i, double tau_i,
                                              std::span<const double> logits_j, double tau_j);

struct Prop1Result {
  double max_gap_equal_ratio = 0.0;  // tau = v_max / rho on both sides
  double max_gap_fixed_tau = 0.0;    // same pairs under a shared fixed tau
  double max_abs_term_a = 0.0;
  double max_residual = 0.0;
  std::vector<EntropyGapDecomposition> pairs;
};

// Samples `num_pairs` pairs of dominated logit vectors whose scaled
// top-minus-second margin equals `margin`, assigns tau = v_max / rho, and
// measures entropy gaps against a shared fixed-tau baseline.
Prop1Result verify_proposition1(std::size_t num_pairs, std::size_t num_classes, double margin,
                                double rho, std::uint64_t seed,
                                double fixed_tau_baseline = 4.0);

struct HighTempRow {
  double tau = 0.0;
  double max_rel_deviation = 0.0;  // ||exact - approx|| / ||approx||, worst pair
};

struct HighTempResult {
  std::vector<HighTempRow> rows;
  bool per_pair_strictly_decreasing = false;  // deviation shrinks along the grid
};

HighTempResult verify_high_temp_approx(std::size_t num_classes, double logit_scale,
                                       std::span<const double> tau_grid,
                                       std::size_t num_pairs, std::uint64_t seed);

struct GradCheckEntry {
  std::string name;
  double worst_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass = false;
};

// Central finite differences (step 1e-6, temperatures frozen) against the
// analytic student-logit and parameter gradients of every loss method.
// `inject_fault` corrupts one analytic gradient as a negative control.
GradCheckReport grad_check_suite(std::uint64_t seed, bool inject_fault = false,
                                 int instances_per_method = 10);

std::string grad_check_report_text(const GradCheckReport& report);

struct VerificationCheck {
  std::string suite;
  std::string name;
  bool pass = false;
  double metric = 0.0;  // worst observed value for the check
  std::string detail;
};

struct Prop1MarginRow {
  double margin = 0.0;
  double max_gap_equal_ratio = 0.0;
  double max_gap_fixed_tau = 0.0;
  double max_residual = 0.0;
  double max_abs_term_a = 0.0;
};

struct VerificationReport {
  std::vector<VerificationCheck> checks;
  std::vector<Prop1MarginRow> prop1_rows;
  std::vector<HighTempRow> hightemp_rows;
  bool all_pass = false;
};

// Every invariant suite declared across numerics, temperature, losses, model
// and analysis, run on seeded random instances.
VerificationReport run_verification(std::uint64_t seed, bool inject_fault = false);

std::string verification_report_text(const VerificationReport& report);
std::string prop1_table_csv(const std::vector<Prop1MarginRow>& rows);
std::string hightemp_table_csv(const std::vector<HighTempRow>& rows);

}  // namespace cist
