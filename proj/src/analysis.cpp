#include "cist/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "cist/datasets.hpp"
#include "cist/distill.hpp"
#include "cist/losses.hpp"
#include "cist/model.hpp"
#include "cist/numerics.hpp"
#include "cist/rng.hpp"
#include "json.hpp"

namespace cist {

namespace {

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

EntropyReport entropy_report(const LogitMatrix& logits, const TemperaturePolicy& policy,
                             double outlier_quantile, std::size_t hist_bins) {
  const std::size_t n = logits.rows();
  if (n == 0) throw InvalidArgumentError("entropy_report: empty logit matrix");
  if (!(outlier_quantile > 0.0) || !(outlier_quantile < 1.0)) {
    throw InvalidArgumentError("entropy_report: outlier quantile must lie in (0, 1)");
  }
  if (hist_bins == 0) throw InvalidArgumentError("entropy_report: need >= 1 histogram bin");

  EntropyReport report;
  report.per_sample_entropy.resize(n);
  // Welford streaming moments.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = policy_entropy(logits.row(i), policy);
    report.per_sample_entropy[i] = h;
    const double delta = h - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (h - mean);
    if (i == 0 || h < report.min) report.min = h;
    if (i == 0 || h > report.max) report.max = h;
  }
  report.mean = mean;
  report.stddev = std::sqrt(std::max(m2 / static_cast<double>(n), 0.0));

  std::vector<double> sorted = report.per_sample_entropy;
  std::sort(sorted.begin(), sorted.end());
  report.q05 = quantile_sorted(sorted, 0.05);
  report.q25 = quantile_sorted(sorted, 0.25);
  report.q50 = quantile_sorted(sorted, 0.50);
  report.q75 = quantile_sorted(sorted, 0.75);
  report.q95 = quantile_sorted(sorted, 0.95);

  // Outliers: the floor(q*N) lowest entropies, ties toward the lower index.
  std::vector<std::pair<double, std::size_t>> ranked(n);
  for (std::size_t i = 0; i < n; ++i) ranked[i] = {report.per_sample_entropy[i], i};
  std::sort(ranked.begin(), ranked.end());
  const std::size_t k =
      static_cast<std::size_t>(outlier_quantile * static_cast<double>(n));
  for (std::size_t r = 0; r < k; ++r) report.outlier_indices.push_back(ranked[r].second);
  std::sort(report.outlier_indices.begin(), report.outlier_indices.end());

  const double h_max = std::log(static_cast<double>(logits.cols()));
  report.hist_edges.resize(hist_bins + 1);
  for (std::size_t b = 0; b <= hist_bins; ++b) {
    report.hist_edges[b] = h_max * static_cast<double>(b) / static_cast<double>(hist_bins);
  }
  report.hist_counts.assign(hist_bins, 0);
  for (double h : report.per_sample_entropy) {
    std::size_t bin = h >= h_max ? hist_bins - 1
                                 : static_cast<std::size_t>(h / h_max *
                                                            static_cast<double>(hist_bins));
    if (bin >= hist_bins) bin = hist_bins - 1;
    ++report.hist_counts[bin];
  }
  return report;
}

std::string entropy_report_summary_json(const EntropyReport& report) {
  nlohmann::json j;
  j["n"] = report.per_sample_entropy.size();
  j["mean"] = report.mean;
  j["std"] = report.stddev;
  j["min"] = report.min;
  j["max"] = report.max;
  j["q05"] = report.q05;
  j["q25"] = report.q25;
  j["q50"] = report.q50;
  j["q75"] = report.q75;
  j["q95"] = report.q95;
  j["outlier_count"] = report.outlier_indices.size();
  return j.dump(2) + "\n";
}

std::string entropy_report_histogram_csv(const EntropyReport& report) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < report.hist_counts.size(); ++b) {
    out += fmt(report.hist_edges[b]) + "," + fmt(report.hist_edges[b + 1]) + "," +
           std::to_string(report.hist_counts[b]) + "\n";
  }
  return out;
}

EntropyGapDecomposition decompose_entropy_gap(std::span<const double> logits_i, double tau_i,
                                              std::span<const double> logits_j, double tau_j) {
  if (!(tau_i > 0.0) || !(tau_j > 0.0)) {
    throw InvalidArgumentError("decompose_entropy_gap: temperatures must be > 0");
  }
  EntropyGapDecomposition d;
  const double h_i = entropy_from_logits(logits_i, tau_i);
  const double h_j = entropy_from_logits(logits_j, tau_j);
  d.signed_diff = h_i - h_j;
  d.gap = std::abs(d.signed_diff);

  auto scaled_stats = [](std::span<const double> v, double tau, double* top, double* second,
                         double* expectation) {
    std::vector<double> s(v.size());
    for (std::size_t c = 0; c < v.size(); ++c) s[c] = v[c] / tau;
    std::size_t m = 0;
    for (std::size_t c = 1; c < s.size(); ++c) {
      if (s[c] > s[m]) m = c;
    }
    *top = s[m];
    double runner = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < s.size(); ++c) {
      if (c != m && s[c] > runner) runner = s[c];
    }
    *second = runner;
    const double lse = log_sum_exp(s);
    double e = 0.0;
    for (double x : s) e += std::exp(x - lse) * x;
    *expectation = e;
  };

  double top_i, second_i, exp_i, top_j, second_j, exp_j;
  scaled_stats(logits_i, tau_i, &top_i, &second_i, &exp_i);
  scaled_stats(logits_j, tau_j, &top_j, &second_j, &exp_j);
  d.term_a = top_i - top_j;
  d.term_b = exp_j - exp_i;
  d.residual = std::abs(d.signed_diff - (d.term_a + d.term_b));
  d.margin_i = top_i - second_i;
  d.margin_j = top_j - second_j;
  return d;
}

Prop1Result verify_proposition1(std::size_t num_pairs, std::size_t num_classes, double margin,
                                double rho, std::uint64_t seed, double fixed_tau_baseline) {
  if (num_pairs == 0) throw InvalidArgumentError("verify_proposition1: need >= 1 pair");
  if (num_classes < 2) throw InvalidArgumentError("verify_proposition1: need >= 2 classes");
  if (!(margin > 0.0)) throw InvalidArgumentError("verify_proposition1: degenerate margin");
  if (!(rho > 0.0)) throw InvalidArgumentError("verify_proposition1: rho must be > 0");

  Rng rng = Rng::substream(seed, "prop1-pairs");
  Prop1Result result;
  result.pairs.reserve(num_pairs);

  // One dominated vector: scaled top is exactly rho, scaled runner-up sits
  // `margin` below, the rest spread over a window under the runner-up.
  auto sample_vector = [&](double* tau_out) {
    const double v_max = rng.uniform(5.0, 30.0);
    const double tau = v_max / rho;
    std::vector<double> scaled(num_classes);
    const std::size_t top = rng.below(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
      scaled[c] = rho - margin - rng.uniform(0.0, 4.0);
    }
    std::size_t runner = top == 0 ? 1 : 0;
    scaled[runner] = rho - margin;
    scaled[top] = rho;
    std::vector<double> raw(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) raw[c] = scaled[c] * tau;
    *tau_out = tau;
    return raw;
  };

  for (std::size_t p = 0; p < num_pairs; ++p) {
    double tau_i, tau_j;
    std::vector<double> vi = sample_vector(&tau_i);
    std::vector<double> vj = sample_vector(&tau_j);

    EntropyGapDecomposition d = decompose_entropy_gap(vi, tau_i, vj, tau_j);
    result.max_gap_equal_ratio = std::max(result.max_gap_equal_ratio, d.gap);
    result.max_abs_term_a = std::max(result.max_abs_term_a, std::abs(d.term_a));
    result.max_residual = std::max(result.max_residual, d.residual);

    const double gap_fixed = std::abs(entropy_from_logits(vi, fixed_tau_baseline) -
                                      entropy_from_logits(vj, fixed_tau_baseline));
    result.max_gap_fixed_tau = std::max(result.max_gap_fixed_tau, gap_fixed);
    result.pairs.push_back(d);
  }
  return result;
}

HighTempResult verify_high_temp_approx(std::size_t num_classes, double logit_scale,
                                       std::span<const double> tau_grid,
                                       std::size_t num_pairs, std::uint64_t seed) {
  if (num_classes < 2) throw InvalidArgumentError("verify_high_temp_approx: need >= 2 classes");
  if (tau_grid.empty()) throw InvalidArgumentError("verify_high_temp_approx: empty tau grid");

  Rng rng = Rng::substream(seed, "hightemp-pairs");
  auto zero_mean_vector = [&]() {
    std::vector<double> v(num_classes);
    for (double& x : v) x = rng.uniform(-logit_scale, logit_scale);
    return center(v);
  };

  HighTempResult result;
  result.rows.resize(tau_grid.size());
  for (std::size_t t = 0; t < tau_grid.size(); ++t) result.rows[t].tau = tau_grid[t];
  result.per_pair_strictly_decreasing = true;

  for (std::size_t p = 0; p < num_pairs; ++p) {
    std::vector<double> v = zero_mean_vector();
    std::vector<double> z = zero_mean_vector();
    Matrix teacher = Matrix::from_rows({v});
    Matrix student = Matrix::from_rows({z});

    double prev = 0.0;
    for (std::size_t t = 0; t < tau_grid.size(); ++t) {
      const double tau = tau_grid[t];
      TemperatureAssignment assign{{tau}, {tau}};
      KdLossResult exact = kd_loss_and_grad(teacher, student, assign, false);
      std::vector<double> approx = approx_kd_grad(v, z, tau, tau);
      double num = 0.0, den = 0.0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double diff = exact.grad(0, c) - approx[c];
        num += diff * diff;
        den += approx[c] * approx[c];
      }
      const double dev = den > 0.0 ? std::sqrt(num / den) : 0.0;
      result.rows[t].max_rel_deviation = std::max(result.rows[t].max_rel_deviation, dev);
      if (t > 0 && !(dev < prev)) result.per_pair_strictly_decreasing = false;
      prev = dev;
    }
  }
  return result;
}

namespace {

// Per-component relative error with a unit floor, as is conventional for
// gradient checking: |a - f| / max(1, |a|, |f|).
double rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckInstance {
  Matrix teacher_logits;
  Matrix features;
  std::vector<int> labels;
  MlpParams student;
};

GradCheckInstance random_instance(Rng& rng) {
  GradCheckInstance inst;
  const std::size_t n = 2 + rng.below(7);   // 2..8
  const std::size_t c = 2 + rng.below(9);   // 2..10
  const std::size_t d = 3;
  const double scale = rng.uniform(0.5, 6.0);
  inst.teacher_logits = Matrix(n, c);
  for (double& x : inst.teacher_logits.data()) x = rng.normal(0.0, scale);
  inst.features = Matrix(n, d);
  for (double& x : inst.features.data()) x = rng.normal(0.0, 1.0);
  inst.labels.resize(n);
  for (auto& y : inst.labels) y = static_cast<int>(rng.below(c));
  const std::size_t dims[] = {d, 5, c};
  inst.student = init_mlp(dims, rng);
  return inst;
}

LossParams grad_check_params(Method m) {
  LossParams p;
  p.method = m;
  p.lambda_ce = 0.3;
  p.lambda_kl = m == Method::ce_only ? 0.0 : 1.7;
  if (method_is_cist_family(m)) p.rho = 2.0;
  if (m != Method::cist && m != Method::cist_no_reweight && m != Method::ce_only) {
    p.fixed_tau = 3.0;
  }
  p.entout_fraction = 0.4;  // small batches: keep at least one outlier
  return p;
}

}  // namespace

GradCheckReport grad_check_suite(std::uint64_t seed, bool inject_fault,
                                 int instances_per_method) {
  constexpr double kStep = 1e-6;
  constexpr double kTol = 1e-5;

  GradCheckReport report;
  const Method methods[] = {Method::ce_only,      Method::kd,
                            Method::kd_entout_ce, Method::kd_entout_ht,
                            Method::cist,         Method::cist_no_reweight,
                            Method::cist_no_temp};

  for (Method m : methods) {
    Rng rng = Rng::substream(seed, std::string("gradcheck-") + method_name(m));
    double worst_logit = 0.0;
    double worst_param = 0.0;

    for (int inst_idx = 0; inst_idx < instances_per_method; ++inst_idx) {
      GradCheckInstance inst = random_instance(rng);
      const LossParams params = grad_check_params(m);

      Matrix student_logits = mlp_forward(inst.student, inst.features);
      const LossContext ctx =
          make_loss_context(inst.teacher_logits, student_logits, params, nullptr);

      // Student-logit gradient vs central differences on the frozen context.
      auto [breakdown, grad] =
          eval_loss(inst.teacher_logits, student_logits, inst.labels, params, ctx);
      if (inject_fault && inst_idx == 0) grad(0, 0) += 1e-3;
      Matrix probe = student_logits;
      for (std::size_t i = 0; i < probe.rows(); ++i) {
        for (std::size_t j = 0; j < probe.cols(); ++j) {
          const double orig = probe(i, j);
          probe(i, j) = orig + kStep;
          const double up =
              eval_loss(inst.teacher_logits, probe, inst.labels, params, ctx).first.total;
          probe(i, j) = orig - kStep;
          const double dn =
              eval_loss(inst.teacher_logits, probe, inst.labels, params, ctx).first.total;
          probe(i, j) = orig;
          worst_logit = std::max(worst_logit, rel_err(grad(i, j), (up - dn) / (2.0 * kStep)));
        }
      }

      // Parameter gradient through the student net, same frozen context.
      ForwardCache cache;
      Matrix logits2 = mlp_forward(inst.student, inst.features, &cache);
      auto [bd2, logit_grad] =
          eval_loss(inst.teacher_logits, logits2, inst.labels, params, ctx);
      MlpGrads analytic = mlp_backward(inst.student, cache, logit_grad);

      auto loss_at = [&]() {
        Matrix l = mlp_forward(inst.student, inst.features);
        return eval_loss(inst.teacher_logits, l, inst.labels, params, ctx).first.total;
      };
      for (std::size_t k = 0; k < inst.student.layers.size(); ++k) {
        auto check_span = [&](std::vector<double>& values, std::vector<double>& grads_vec) {
          for (std::size_t idx = 0; idx < values.size(); ++idx) {
            const double orig = values[idx];
            values[idx] = orig + kStep;
            const double up = loss_at();
            values[idx] = orig - kStep;
            const double dn = loss_at();
            values[idx] = orig;
            worst_param =
                std::max(worst_param, rel_err(grads_vec[idx], (up - dn) / (2.0 * kStep)));
          }
        };
        check_span(inst.student.layers[k].weight.data(), analytic.layers[k].weight.data());
        check_span(inst.student.layers[k].bias, analytic.layers[k].bias);
      }
    }

    report.entries.push_back({std::string("logit-grad/") + method_name(m), worst_logit, kTol,
                              worst_logit < kTol});
    report.entries.push_back({std::string("param-grad/") + method_name(m), worst_param, kTol,
                              worst_param < kTol});
  }

  report.all_pass = std::all_of(report.entries.begin(), report.entries.end(),
                                [](const GradCheckEntry& e) { return e.pass; });
  return report;
}

std::string grad_check_report_text(const GradCheckReport& report) {
  std::string out;
  char buf[192];
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof(buf), "%-32s worst_rel_err %.6e (tol %.1e) %s\n", e.name.c_str(),
                  e.worst_rel_error, e.tolerance, e.pass ? "ok" : "FAIL");
    out += buf;
  }
  out += report.all_pass ? "all gradient checks passed\n" : "GRADIENT CHECK FAILURES\n";
  return out;
}

namespace {

void add_check(VerificationReport* report, const char* suite, const char* name, bool pass,
               double metric, std::string detail = "") {
  report->checks.push_back({suite, name, pass, metric, std::move(detail)});
}

void verify_numerics(VerificationReport* report, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "verify-numerics");
  double worst_sum = 0.0, worst_shift = 0.0, worst_bound = 0.0;
  bool monotone = true;
  double worst_kl_self = 0.0;
  bool kl_nonneg = true;

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.below(40);
    std::vector<double> v(c);
    for (double& x : v) x = rng.uniform(-50.0, 50.0);
    const double tau = std::exp(rng.uniform(std::log(0.1), std::log(100.0)));

    SoftDistribution p = softmax(v, tau);
    double sum = 0.0;
    for (double x : p.probs()) sum += x;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

    const double shift = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted(v);
    for (double& x : shifted) x += shift;
    SoftDistribution p2 = softmax(shifted, tau);
    for (std::size_t j = 0; j < c; ++j) {
      worst_shift = std::max(worst_shift, std::abs(p[j] - p2[j]));
    }

    const double h = entropy(p);
    const double hi = std::log(static_cast<double>(c)) + 1e-12;
    worst_bound = std::max(worst_bound, std::max(-h, h - hi));

    double prev = -1.0;
    for (double tg : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      const double ht = entropy_from_logits(v, tg);
      if (ht < prev - 1e-12) monotone = false;
      prev = ht;
    }

    worst_kl_self = std::max(worst_kl_self, std::abs(kl_divergence(p, p)));
    SoftDistribution q = softmax(shifted, tau * rng.uniform(0.5, 2.0));
    if (kl_divergence(p, q) < -1e-15) kl_nonneg = false;
  }

  add_check(report, "numerics", "softmax-sums-to-one", worst_sum < 1e-12, worst_sum);
  add_check(report, "numerics", "softmax-shift-invariance", worst_shift < 1e-12, worst_shift);
  add_check(report, "numerics", "entropy-bounds", worst_bound <= 0.0, worst_bound);
  add_check(report, "numerics", "entropy-monotone-in-tau", monotone, monotone ? 1.0 : 0.0);
  add_check(report, "numerics", "kl-self-zero", worst_kl_self < 1e-12, worst_kl_self);
  add_check(report, "numerics", "kl-nonnegative", kl_nonneg, kl_nonneg ? 1.0 : 0.0);
}

void verify_temperature(VerificationReport* report, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "verify-temperature");
  const std::size_t n = 256, c = 20;
  const double rho = 3.0;

  // Dominated rows with max logits spanning [5, 30].
  Matrix logits(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = logits.row(i);
    for (double& x : row) x = rng.normal(0.0, 1.0);
    row[rng.below(c)] = rng.uniform(5.0, 30.0);
  }

  TemperatureAssignment assign =
      assign_temperatures(logits, logits, TemperaturePolicy::adaptive(rho));
  double min_tau = assign.teacher_tau[0];
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    min_tau = std::min(min_tau, assign.teacher_tau[i]);
    std::vector<double> cent = center(logits.row(i));
    const double top = *std::max_element(cent.begin(), cent.end());
    if (top > rho) {
      worst_ratio = std::max(worst_ratio, std::abs(top / assign.teacher_tau[i] - rho));
    }
  }
  add_check(report, "temperature", "clamp-floor", min_tau >= 1.0, min_tau);
  add_check(report, "temperature", "ratio-normalization", worst_ratio < 1e-12, worst_ratio);

  EntropyReport adaptive = entropy_report(logits, TemperaturePolicy::adaptive(rho));
  bool tightening = true;
  double worst_gap = 0.0;
  for (double tau : {2.0, 4.0, 6.0}) {
    EntropyReport fixed = entropy_report(logits, TemperaturePolicy::fixed(tau));
    if (!(adaptive.stddev < fixed.stddev)) tightening = false;
    worst_gap = std::max(worst_gap, adaptive.stddev / fixed.stddev);
  }
  add_check(report, "temperature", "entropy-tightening", tightening, worst_gap);

  double worst_center = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(c);
    for (double& x : v) x = rng.uniform(-30.0, 30.0);
    const double tau = rng.uniform(0.5, 8.0);
    SoftDistribution a = softmax(v, tau);
    SoftDistribution b = softmax(center(v), tau);
    for (std::size_t j = 0; j < c; ++j) {
      worst_center = std::max(worst_center, std::abs(a[j] - b[j]));
    }
  }
  add_check(report, "temperature", "centering-preserves-softmax", worst_center < 1e-12,
            worst_center);

  std::vector<double> rhos = {2.0, 3.0, 4.0, 5.0};
  auto table = calibrate_rho(logits, rhos);
  bool calib_monotone = true;
  for (std::size_t r = 1; r < table.size(); ++r) {
    if (table[r].mean_entropy > table[r - 1].mean_entropy + 1e-12) calib_monotone = false;
  }
  add_check(report, "temperature", "calibration-monotone-in-rho", calib_monotone,
            calib_monotone ? 1.0 : 0.0);
}

void verify_losses(VerificationReport* report, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "verify-losses");

  // KL gradient rows lie on the simplex tangent.
  double worst_row_sum = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(7), c = 2 + rng.below(9);
    Matrix teacher(n, c), student(n, c);
    for (double& x : teacher.data()) x = rng.normal(0.0, 3.0);
    for (double& x : student.data()) x = rng.normal(0.0, 3.0);
    TemperatureAssignment assign =
        assign_temperatures(teacher, student, TemperaturePolicy::adaptive(2.5));
    KdLossResult kd = kd_loss_and_grad(teacher, student, assign, true);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += kd.grad(i, j);
      worst_row_sum = std::max(worst_row_sum, std::abs(s));
    }
  }
  add_check(report, "losses", "kl-grad-rows-sum-zero", worst_row_sum < 1e-10, worst_row_sum);

  // cist with every temperature clamped to 1 degenerates to kd at tau = 1.
  double worst_degeneracy = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(7), c = 2 + rng.below(9);
    Matrix teacher(n, c), student(n, c);
    for (double& x : teacher.data()) x = rng.normal(0.0, 2.0);
    for (double& x : student.data()) x = rng.normal(0.0, 2.0);
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.below(c));

    LossParams cist_params;
    cist_params.method = Method::cist;
    cist_params.rho = 1e12;
    cist_params.lambda_ce = 0.1;
    cist_params.lambda_kl = 0.9;
    LossParams kd_params;
    kd_params.method = Method::kd;
    kd_params.fixed_tau = 1.0;
    kd_params.lambda_ce = 0.1;
    kd_params.lambda_kl = 0.9;

    auto [bd_c, g_c] = assemble_loss(teacher, student, labels, cist_params);
    auto [bd_k, g_k] = assemble_loss(teacher, student, labels, kd_params);
    worst_degeneracy = std::max(worst_degeneracy, std::abs(bd_c.total - bd_k.total));
    for (std::size_t idx = 0; idx < g_c.data().size(); ++idx) {
      worst_degeneracy =
          std::max(worst_degeneracy, std::abs(g_c.data()[idx] - g_k.data()[idx]));
    }
  }
  add_check(report, "losses", "cist-clamped-equals-kd-tau1", worst_degeneracy < 1e-10,
            worst_degeneracy);

  // Partition sizes are exact and deterministic under the tie-break.
  bool entout_ok = true;
  {
    Matrix teacher(100, 6);
    for (double& x : teacher.data()) x = rng.normal(0.0, 4.0);
    EntOutPartition a = entout_partition(teacher, 4.0, 0.05);
    EntOutPartition b = entout_partition(teacher, 4.0, 0.05);
    entout_ok = a.outliers.size() == 5 && a.outliers == b.outliers &&
                a.regular.size() == 95;
  }
  add_check(report, "losses", "entout-partition-exact", entout_ok, entout_ok ? 1.0 : 0.0);
}

void verify_model(VerificationReport* report, std::uint64_t seed) {
  // Same seed and config twice must give bitwise-identical parameters.
  GaussianMixtureDataset gm = gen_gaussian_mixture(3, 2, 40, 4.0, 0.8, seed);
  TeacherConfig cfg;
  cfg.hidden = {8};
  cfg.epochs = 15;
  cfg.batch_size = 16;
  cfg.seed = seed;
  TrainResult a = train_teacher(gm.data, cfg);
  TrainResult b = train_teacher(gm.data, cfg);
  bool identical = a.params.layers.size() == b.params.layers.size();
  for (std::size_t k = 0; identical && k < a.params.layers.size(); ++k) {
    identical = a.params.layers[k].weight.data() == b.params.layers[k].weight.data() &&
                a.params.layers[k].bias == b.params.layers[k].bias;
  }
  add_check(report, "model", "training-determinism", identical, identical ? 1.0 : 0.0);

  LrSchedule sched{0.05, 0.1, {150, 180, 210}};
  const bool sched_ok = std::abs(sched.at(151) - 0.005) < 1e-15 &&
                        std::abs(sched.at(149) - 0.05) < 1e-15 &&
                        std::abs(sched.at(181) - 0.0005) < 1e-15;
  add_check(report, "model", "lr-schedule-decay", sched_ok, sched.at(151));
}

void verify_analysis(VerificationReport* report, std::uint64_t seed) {
  const double rho = 3.0;
  const double margins[] = {2.0 * rho, 3.0 * rho, 4.0 * rho, 5.0 * rho};
  double prev_gap = std::numeric_limits<double>::infinity();
  double prev_residual = std::numeric_limits<double>::infinity();
  bool gap_monotone = true, residual_monotone = true, fixed_larger = true;
  double worst_term_a = 0.0;

  for (double margin : margins) {
    Prop1Result r = verify_proposition1(1000, 100, margin, rho, seed);
    report->prop1_rows.push_back({margin, r.max_gap_equal_ratio, r.max_gap_fixed_tau,
                                  r.max_residual, r.max_abs_term_a});
    if (!(r.max_gap_equal_ratio < prev_gap)) gap_monotone = false;
    if (!(r.max_residual < prev_residual)) residual_monotone = false;
    if (!(r.max_gap_equal_ratio < r.max_gap_fixed_tau)) fixed_larger = false;
    worst_term_a = std::max(worst_term_a, r.max_abs_term_a);
    prev_gap = r.max_gap_equal_ratio;
    prev_residual = r.max_residual;
  }
  add_check(report, "analysis", "prop1-gap-monotone-in-margin", gap_monotone,
            gap_monotone ? 1.0 : 0.0);
  add_check(report, "analysis", "prop1-fixed-tau-gap-larger", fixed_larger,
            fixed_larger ? 1.0 : 0.0);
  add_check(report, "analysis", "prop1-term-a-exact", worst_term_a < 1e-12, worst_term_a);
  add_check(report, "analysis", "prop1-residual-monotone", residual_monotone,
            residual_monotone ? 1.0 : 0.0);

  const double taus[] = {10.0, 20.0, 40.0, 80.0};
  HighTempResult ht = verify_high_temp_approx(10, 2.0, taus, 100, seed);
  report->hightemp_rows = ht.rows;
  add_check(report, "analysis", "hightemp-deviation-decreasing",
            ht.per_pair_strictly_decreasing, ht.per_pair_strictly_decreasing ? 1.0 : 0.0);

  // Streaming statistics agree with an independent two-pass computation.
  Rng rng = Rng::substream(seed, "verify-entropy-stats");
  Matrix logits(128, 12);
  for (double& x : logits.data()) x = rng.normal(0.0, 3.0);
  EntropyReport er = entropy_report(logits, TemperaturePolicy::fixed(4.0));
  double mean = 0.0;
  for (double h : er.per_sample_entropy) mean += h;
  mean /= static_cast<double>(er.per_sample_entropy.size());
  double var = 0.0;
  for (double h : er.per_sample_entropy) var += (h - mean) * (h - mean);
  var /= static_cast<double>(er.per_sample_entropy.size());
  const double diff =
      std::max(std::abs(mean - er.mean), std::abs(std::sqrt(var) - er.stddev));
  add_check(report, "analysis", "entropy-stats-two-pass", diff < 1e-10, diff);
}

}  // namespace

VerificationReport run_verification(std::uint64_t seed, bool inject_fault) {
  VerificationReport report;
  verify_numerics(&report, seed);
  verify_temperature(&report, seed);
  verify_losses(&report, seed);
  verify_model(&report, seed);
  verify_analysis(&report, seed);

  GradCheckReport grad = grad_check_suite(seed, inject_fault);
  for (const auto& e : grad.entries) {
    add_check(&report, "gradcheck", e.name.c_str(), e.pass, e.worst_rel_error);
  }

  report.all_pass = std::all_of(report.checks.begin(), report.checks.end(),
                                [](const VerificationCheck& c) { return c.pass; });
  return report;
}

std::string verification_report_text(const VerificationReport& report) {
  std::string out;
  char buf[224];
  for (const auto& c : report.checks) {
    std::snprintf(buf, sizeof(buf), "[%s] %-12s %-36s metric %.6e\n",
                  c.pass ? "PASS" : "FAIL", c.suite.c_str(), c.name.c_str(), c.metric);
    out += buf;
  }
  out += report.all_pass ? "verification: all checks passed\n"
                         : "verification: FAILURES present\n";
  return out;
}

std::string prop1_table_csv(const std::vector<Prop1MarginRow>& rows) {
  std::string out = "margin,max_gap_equal_ratio,max_gap_fixed_tau,max_residual,max_abs_term_a\n";
  for (const auto& r : rows) {
    out += fmt(r.margin) + "," + fmt(r.max_gap_equal_ratio) + "," + fmt(r.max_gap_fixed_tau) +
           "," + fmt(r.max_residual) + "," + fmt(r.max_abs_term_a) + "\n";
  }
  return out;
}

std::string hightemp_table_csv(const std::vector<HighTempRow>& rows) {
  std::string out = "tau,max_rel_deviation\n";
  for (const auto& r : rows) {
    out += fmt(r.tau) + "," + fmt(r.max_rel_deviation) + "\n";
  }
  return out;
}

}  // namespace cist
