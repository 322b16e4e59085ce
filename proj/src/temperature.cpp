#include "cist/temperature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cist/numerics.hpp"

namespace cist {

TemperaturePolicy TemperaturePolicy::fixed(double tau) {
  if (!(tau > 0.0)) throw InvalidArgumentError("TemperaturePolicy: fixed_tau must be > 0");
  TemperaturePolicy p;
  p.kind = PolicyKind::fixed;
  p.fixed_tau = tau;
  return p;
}

TemperaturePolicy TemperaturePolicy::adaptive(double rho) {
  if (!(rho > 0.0)) throw InvalidArgumentError("TemperaturePolicy: rho must be > 0");
  TemperaturePolicy p;
  p.kind = PolicyKind::adaptive;
  p.rho = rho;
  return p;
}

std::vector<double> center(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidArgumentError("center: non-finite logit");
    mean += x;
  }
  mean /= static_cast<double>(v.size());
  std::vector<double> out(v.size());
  for (std::size_t c = 0; c < v.size(); ++c) out[c] = v[c] - mean;
  return out;
}

double adaptive_tau(std::span<const double> v_centered, double rho) {
  if (!(rho > 0.0)) throw InvalidArgumentError("adaptive_tau: rho must be > 0");
  double mean = 0.0;
  double max = v_centered.empty() ? 0.0 : v_centered[0];
  double scale = 1.0;
  for (double x : v_centered) {
    mean += x;
    max = std::max(max, x);
    scale = std::max(scale, std::abs(x));
  }
  mean /= static_cast<double>(v_centered.size());
  // Scale-aware zero-mean check: centering large logits leaves a residual
  // mean of order eps * max|v|.
  if (std::abs(mean) > 1e-8 * scale) {
    throw InvalidArgumentError("adaptive_tau: input is not zero-mean");
  }
  return std::max(max / rho, 1.0);
}

TemperatureAssignment assign_temperatures(const LogitMatrix& teacher_logits,
                                          const LogitMatrix& student_logits,
                                          const TemperaturePolicy& policy) {
  if (!teacher_logits.same_shape(student_logits)) {
    throw ShapeError("assign_temperatures: teacher/student shape mismatch");
  }
  const std::size_t n = teacher_logits.rows();
  TemperatureAssignment out;
  out.teacher_tau.resize(n);
  out.student_tau.resize(n);
  if (policy.kind == PolicyKind::fixed) {
    std::fill(out.teacher_tau.begin(), out.teacher_tau.end(), policy.fixed_tau);
    std::fill(out.student_tau.begin(), out.student_tau.end(), policy.fixed_tau);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.teacher_tau[i] = adaptive_tau(center(teacher_logits.row(i)), policy.rho);
    out.student_tau[i] = adaptive_tau(center(student_logits.row(i)), policy.rho);
  }
  return out;
}

double policy_entropy(std::span<const double> logits, const TemperaturePolicy& policy) {
  std::vector<double> c = center(logits);
  double tau = policy.kind == PolicyKind::fixed ? policy.fixed_tau : adaptive_tau(c, policy.rho);
  return entropy_from_logits(c, tau);
}

std::vector<RhoCalibrationRow> calibrate_rho(const LogitMatrix& teacher_logits_subset,
                                             std::span<const double> candidate_rhos) {
  if (candidate_rhos.empty()) {
    throw InvalidArgumentError("calibrate_rho: empty candidate list");
  }
  if (teacher_logits_subset.rows() == 0) {
    throw InvalidArgumentError("calibrate_rho: empty calibration subset");
  }
  std::vector<double> rhos(candidate_rhos.begin(), candidate_rhos.end());
  for (double r : rhos) {
    if (!(r > 0.0)) throw InvalidArgumentError("calibrate_rho: rho candidates must be > 0");
  }
  std::sort(rhos.begin(), rhos.end());

  const std::size_t n = teacher_logits_subset.rows();
  std::vector<std::vector<double>> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = center(teacher_logits_subset.row(i));

  std::vector<RhoCalibrationRow> table;
  table.reserve(rhos.size());
  for (double rho : rhos) {
    RhoCalibrationRow row{rho, 0.0, 0.0, 0.0, 0.0};
    double sum = 0.0, sum_sq = 0.0;
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double h = entropy_from_logits(centered[i], adaptive_tau(centered[i], rho));
      sum += h;
      sum_sq += h * h;
      if (i == 0 || h < lo) lo = h;
      if (i == 0 || h > hi) hi = h;
    }
    row.mean_entropy = sum / static_cast<double>(n);
    double var = sum_sq / static_cast<double>(n) - row.mean_entropy * row.mean_entropy;
    row.std_entropy = std::sqrt(std::max(var, 0.0));
    row.min_entropy = lo;
    row.max_entropy = hi;
    table.push_back(row);
  }
  return table;
}

void write_calibration_csv(const std::filesystem::path& path,
                           const std::vector<RhoCalibrationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("write_calibration_csv: cannot open " + path.string());
  out << "rho,mean_entropy,std_entropy,min_entropy,max_entropy\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.rho, r.mean_entropy,
                  r.std_entropy, r.min_entropy, r.max_entropy);
    out << buf;
  }
}

}  // namespace cist
