#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cist/matrix.hpp"

namespace cist {

enum class PolicyKind { fixed, adaptive };

// Either a shared fixed temperature or the sample-wise adaptive rule
// tau = max(max_c(centered logits) / rho, 1).
struct TemperaturePolicy {
  PolicyKind kind = PolicyKind::fixed;
  double fixed_tau = 1.0;  // used when kind == fixed
  double rho = 3.0;        // used when kind == adaptive

  static TemperaturePolicy fixed(double tau);
  static TemperaturePolicy adaptive(double rho);
};

// Per-sample teacher and student temperatures for one batch.
struct TemperatureAssignment {
  std::vector<double> teacher_tau;
  std::vector<double> student_tau;
};

// v - mean(v). Softmax output is unchanged by centering.
std::vector<double> center(std::span<const double> v);

// max(max_c(v_centered) / rho, 1) for a zero-mean vector. The clamp floor
// keeps tau >= 1 so low-confidence samples keep their original sharpness.
double adaptive_tau(std::span<const double> v_centered, double rho);

// Fixed policy: every entry equals fixed_tau for both roles. Adaptive policy:
// per-sample tau from the centered teacher and student rows independently.
TemperatureAssignment assign_temperatures(const LogitMatrix& teacher_logits,
                                          const LogitMatrix& student_logits,
                                          const TemperaturePolicy& policy);

// Entropy of softmax(center(row) / tau) with tau chosen by the policy.
double policy_entropy(std::span<const double> logits, const TemperaturePolicy& policy);

struct RhoCalibrationRow {
  double rho;
  double mean_entropy;
  double std_entropy;
  double min_entropy;
  double max_entropy;
};

// Sweeps candidate rho values over a calibration subset of teacher logits.
// Rows come back sorted ascending in rho; mean entropy is nonincreasing in rho.
std::vector<RhoCalibrationRow> calibrate_rho(const LogitMatrix& teacher_logits_subset,
                                             std::span<const double> candidate_rhos);

void write_calibration_csv(const std::filesystem::path& path,
                           const std::vector<RhoCalibrationRow>& rows);

}  // namespace cist
